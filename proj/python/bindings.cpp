#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ecfleet/io.hpp"
#include "ecfleet/oracle.hpp"
#include "ecfleet/report.hpp"
#include "ecfleet/scenario.hpp"

namespace py = pybind11;
using namespace ecfleet;

namespace {

ScenarioConfig make_config(const std::string& scenario,
                           const std::map<std::string, std::string>& overrides) {
    std::map<std::string, std::string> kv = overrides;
    kv["scenario"] = scenario;
    return resolve_scenario_config(kv, "<python>");
}

}  // namespace

PYBIND11_MODULE(_ecfleet, m) {
    m.doc() = "EV fleet and charging-station planning inside a renewable energy community";

    py::class_<SyntheticCaseParams>(m, "SyntheticCaseParams")
        .def(py::init<>())
        .def_readwrite("member_count", &SyntheticCaseParams::member_count)
        .def_readwrite("prosumer_count", &SyntheticCaseParams::prosumer_count)
        .def_readwrite("ride_count", &SyntheticCaseParams::ride_count)
        .def_readwrite("weeks", &SyntheticCaseParams::weeks)
        .def_readwrite("days_per_block", &SyntheticCaseParams::days_per_block)
        .def_readwrite("seed", &SyntheticCaseParams::seed)
        .def_readwrite("fleet_slots", &SyntheticCaseParams::fleet_slots)
        .def_readwrite("cs_slots", &SyntheticCaseParams::cs_slots);

    py::class_<CaseBundle>(m, "CaseBundle")
        .def_property_readonly("num_periods",
                               [](const CaseBundle& c) { return c.grid.num_periods; })
        .def_property_readonly("num_buses",
                               [](const CaseBundle& c) { return c.network.buses.size(); })
        .def_property_readonly("num_rides", [](const CaseBundle& c) { return c.rides.size(); })
        .def_property_readonly(
            "transformer_rating_kw",
            [](const CaseBundle& c) { return c.network.transformer_rating_kw; })
        .def_property_readonly("annualization_factor",
                               [](const CaseBundle& c) { return c.grid.annualization_factor; })
        .def("validate",
             [](const CaseBundle& c) {
                 std::vector<std::string> out;
                 for (const auto& i : validate_case(c).issues)
                     out.push_back(std::string(i.severity == Severity::error ? "error" : "warning") +
                                   " [" + i.code + "] " + i.message);
                 return out;
             })
        .def("save", [](const CaseBundle& c, const std::string& dir) { save_case(c, dir); })
        .def("content_hash", &case_content_hash);

    py::class_<ScenarioConfig>(m, "ScenarioConfig")
        .def_property_readonly("scenario_id", [](const ScenarioConfig& c) { return c.scenario_id; })
        .def_property_readonly("v2g_enabled", [](const ScenarioConfig& c) { return c.v2g_enabled; })
        .def_property_readonly("label", &ScenarioConfig::label);

    m.def("generate_synthetic_case", &generate_synthetic_case, py::arg("params"));
    m.def("load_case", [](const std::string& dir) { return load_case(dir); }, py::arg("dir"));
    m.def("scenario_config", &make_config, py::arg("scenario"),
          py::arg("overrides") = std::map<std::string, std::string>{});
    m.def("capital_recovery_factor", &capital_recovery_factor, py::arg("rho"), py::arg("years"));
    m.def(
        "overlapping_pairs",
        [](const std::vector<std::tuple<int, int, int>>& rides) {
            std::vector<RideRequest> rr;
            for (const auto& [id, dep, ret] : rides) rr.push_back({id, dep, ret, 0.0, 0.0});
            return overlapping_pairs(rr);
        },
        py::arg("rides"), "rides as (id, dep_period, ret_period) tuples");
    m.def(
        "ac_power_flow",
        [](const CaseBundle& c, const std::vector<double>& p_kw, const std::vector<double>& q_kvar) {
            PowerFlowResult r = ac_power_flow(c.network, p_kw, q_kvar);
            py::dict out;
            out["converged"] = r.converged;
            out["iterations"] = r.iterations;
            out["v_sqr"] = r.v_sqr;
            out["i_sqr"] = r.i_sqr;
            out["slack_p_kw"] = r.slack_p_kw;
            out["losses_kw"] = r.losses_kw;
            return out;
        },
        py::arg("case"), py::arg("p_inj_kw"), py::arg("q_inj_kvar"));
    m.def(
        "run_scenario",
        [](const CaseBundle& c, const ScenarioConfig& cfg, const std::string& out_dir) {
            ConicMilpEngine engine(cfg.solver.backend);
            ScenarioResult res = run_scenario(c, cfg, engine);
            if (!out_dir.empty()) save_scenario_result(res, c, out_dir);
            return kpi_to_json(res.combined);
        },
        py::arg("case"), py::arg("config"), py::arg("out_dir") = std::string{},
        py::call_guard<py::gil_scoped_release>(),
        "solve the scenario pipeline; returns the combined KPI record as JSON");

#ifdef VERSION_INFO
    m.attr("__version__") = VERSION_INFO;
#else
    m.attr("__version__") = "dev";
#endif
}

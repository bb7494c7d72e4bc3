#include "ecfleet/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace ecfleet {

using nlohmann::json;

namespace {

std::string dtos(double v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, end);
}

std::string fixed2(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

json kpi_json(const KpiRecord& k) {
    json j;
    j["scenario"] = k.scenario_label;
    j["scenario_id"] = k.scenario_id;
    j["config_hash"] = k.config_hash;
    j["case_hash"] = k.case_hash;
    j["economics"] = {{"total_cost_eur", k.total_cost},
                      {"annuity_eur", k.annuity},
                      {"fixed_om_eur", k.fixed_om},
                      {"supplier_cost_eur", k.supplier_cost},
                      {"supplier_revenue_eur", k.supplier_revenue},
                      {"away_cost_eur", k.away_cost},
                      {"unserved_cost_eur", k.unserved_cost},
                      {"peak_cost_eur", k.peak_cost}};
    j["energy"] = {{"pv_dispatched_mwh", k.pv_dispatched_mwh},
                   {"imports_mwh", k.imports_mwh},
                   {"exports_mwh", k.exports_mwh},
                   {"household_consumption_mwh", k.household_consumption_mwh},
                   {"ev_charge_mwh", k.ev_charge_mwh},
                   {"total_consumption_mwh", k.total_consumption_mwh},
                   {"local_consumption_mwh", k.local_consumption_mwh},
                   {"self_sufficiency", k.self_sufficiency},
                   {"local_pv_share", k.local_pv_share}};
    j["grid"] = {{"max_import_kw", k.max_import_kw},
                 {"max_export_kw", k.max_export_kw},
                 {"losses_kwh", k.losses_kwh}};
    j["mobility"] = {{"served_mwh", k.served_mwh},
                     {"unserved_kwh", k.unserved_kwh},
                     {"away_kwh", k.away_kwh}};
    j["investments"] = {{"ev", k.ev_invested}, {"cs", k.cs_invested}};
    j["solver"] = {{"objective_eur", k.objective},
                   {"bound_eur", k.bound},
                   {"status", k.status},
                   {"cone_violation", k.cone_violation},
                   {"oa_iterations", k.oa_iterations}};
    j["assumptions"] = {{"discount_rate", k.discount_rate}, {"away_rating_kw", k.away_rating_kw}};
    return j;
}

KpiRecord kpi_from_json(const json& j) {
    KpiRecord k;
    k.scenario_label = j.value("scenario", "");
    k.scenario_id = j.value("scenario_id", 0);
    k.config_hash = j.value("config_hash", 0ULL);
    k.case_hash = j.value("case_hash", 0ULL);
    const auto& e = j.at("economics");
    k.total_cost = e.value("total_cost_eur", 0.0);
    k.annuity = e.value("annuity_eur", 0.0);
    k.fixed_om = e.value("fixed_om_eur", 0.0);
    k.supplier_cost = e.value("supplier_cost_eur", 0.0);
    k.supplier_revenue = e.value("supplier_revenue_eur", 0.0);
    k.away_cost = e.value("away_cost_eur", 0.0);
    k.unserved_cost = e.value("unserved_cost_eur", 0.0);
    k.peak_cost = e.value("peak_cost_eur", 0.0);
    const auto& en = j.at("energy");
    k.pv_dispatched_mwh = en.value("pv_dispatched_mwh", 0.0);
    k.imports_mwh = en.value("imports_mwh", 0.0);
    k.exports_mwh = en.value("exports_mwh", 0.0);
    k.household_consumption_mwh = en.value("household_consumption_mwh", 0.0);
    k.ev_charge_mwh = en.value("ev_charge_mwh", 0.0);
    k.total_consumption_mwh = en.value("total_consumption_mwh", 0.0);
    k.local_consumption_mwh = en.value("local_consumption_mwh", 0.0);
    k.self_sufficiency = en.value("self_sufficiency", 0.0);
    k.local_pv_share = en.value("local_pv_share", 0.0);
    const auto& g = j.at("grid");
    k.max_import_kw = g.value("max_import_kw", 0.0);
    k.max_export_kw = g.value("max_export_kw", 0.0);
    k.losses_kwh = g.value("losses_kwh", 0.0);
    const auto& mo = j.at("mobility");
    k.served_mwh = mo.value("served_mwh", 0.0);
    k.unserved_kwh = mo.value("unserved_kwh", 0.0);
    k.away_kwh = mo.value("away_kwh", 0.0);
    k.ev_invested = j.at("investments").value("ev", std::vector<std::string>{});
    k.cs_invested = j.at("investments").value("cs", std::vector<std::string>{});
    const auto& s = j.at("solver");
    k.objective = s.value("objective_eur", 0.0);
    k.bound = s.value("bound_eur", 0.0);
    k.status = s.value("status", "");
    k.cone_violation = s.value("cone_violation", 0.0);
    k.oa_iterations = s.value("oa_iterations", 0);
    k.discount_rate = j.at("assumptions").value("discount_rate", 0.0);
    k.away_rating_kw = j.at("assumptions").value("away_rating_kw", 0.0);
    return k;
}

json config_json(const ScenarioConfig& cfg) {
    return json{{"scenario", cfg.scenario_id == 0 ? "custom" : std::to_string(cfg.scenario_id)},
                {"v2g", cfg.v2g_enabled},
                {"cs_location", to_string(cfg.cs_location)},
                {"peak_mode", to_string(cfg.peak_mode)},
                {"backend", cfg.solver.backend},
                {"mip_gap", cfg.solver.mip_gap},
                {"time_limit_s", cfg.solver.time_limit_s},
                {"cone_tol", cfg.solver.cone_tol},
                {"max_oa_iters", cfg.solver.max_oa_iters},
                {"case_dir", cfg.case_dir},
                {"seed", cfg.seed}};
}

ScenarioConfig config_from_json(const json& j) {
    std::map<std::string, std::string> kv;
    kv["scenario"] = j.value("scenario", "custom");
    kv["v2g"] = j.value("v2g", false) ? "true" : "false";
    kv["cs_location"] = j.value("cs_location", "slack_only");
    kv["peak_mode"] = j.value("peak_mode", "none_fixed");
    kv["backend"] = j.value("backend", "highs");
    kv["mip_gap"] = dtos(j.value("mip_gap", 1e-4));
    kv["time_limit_s"] = dtos(j.value("time_limit_s", 0.0));
    kv["cone_tol"] = dtos(j.value("cone_tol", 1e-6));
    kv["max_oa_iters"] = std::to_string(j.value("max_oa_iters", 50));
    kv["case_dir"] = j.value("case_dir", "");
    kv["seed"] = std::to_string(j.value("seed", 0ULL));
    return resolve_scenario_config(kv, "<result json>");
}

const char* mode_name(BuildMode m) {
    switch (m) {
        case BuildMode::coordinated: return "coordinated";
        case BuildMode::ec_only: return "ec_only";
        case BuildMode::msp_only: return "msp_only";
    }
    return "?";
}

BuildMode mode_from_name(const std::string& s) {
    if (s == "ec_only") return BuildMode::ec_only;
    if (s == "msp_only") return BuildMode::msp_only;
    return BuildMode::coordinated;
}

}  // namespace

ComparisonTable kpi_table(const std::vector<KpiRecord>& records) {
    if (records.empty()) throw std::invalid_argument("no records to report");
    if (records.size() == 1) {
        std::vector<KpiRecord> two{records[0], records[0]};
        ComparisonTable t = compare_scenarios(two);
        t.columns.pop_back();
        for (auto& row : t.rows) {
            row.values.pop_back();
            if (!row.text.empty()) row.text.pop_back();
        }
        return t;
    }
    return compare_scenarios(records);
}

std::string emit_report(const std::vector<KpiRecord>& records, const std::string& format,
                        bool with_deltas) {
    ComparisonTable t = kpi_table(records);
    std::ostringstream os;
    if (format == "csv") {
        os << "section,kpi,unit";
        for (const auto& cname : t.columns) os << "," << cname;
        os << "\n";
        for (const auto& row : t.rows) {
            os << row.section << "," << row.label << "," << row.unit;
            for (size_t i = 0; i < t.columns.size(); ++i) {
                os << ",";
                if (!row.text.empty())
                    os << row.text[i];
                else
                    os << dtos(row.values[i]);
            }
            os << "\n";
        }
        return os.str();
    }
    if (format != "md") throw std::invalid_argument("unknown report format '" + format + "'");

    os << "| KPI |";
    for (const auto& cname : t.columns) os << " " << cname << " |";
    os << "\n|---|";
    for (size_t i = 0; i < t.columns.size(); ++i) os << "---|";
    os << "\n";
    std::string section;
    for (const auto& row : t.rows) {
        if (row.section != section) {
            section = row.section;
            os << "| **" << section << "** |";
            for (size_t i = 0; i < t.columns.size(); ++i) os << " |";
            os << "\n";
        }
        os << "| " << row.label;
        if (!row.unit.empty() && row.unit != "-") os << " (" << row.unit << ")";
        os << " |";
        for (size_t i = 0; i < t.columns.size(); ++i) {
            if (!row.text.empty()) {
                os << " " << row.text[i] << " |";
                continue;
            }
            os << " " << fixed2(row.values[i]);
            if (with_deltas && i > 0 && std::abs(row.values[0]) > 1e-12) {
                const double pct = 100.0 * (row.values[i] - row.values[0]) / row.values[0];
                os << " (" << (pct >= 0 ? "+" : "") << fixed2(pct) << "%)";
            }
            os << " |";
        }
        os << "\n";
    }
    os << "\nAssumptions: discount rate " << records.front().discount_rate
       << ", on-trip charger rating " << records.front().away_rating_kw << " kW.\n";
    os << "Config hashes:";
    for (const auto& r : records) os << " " << r.scenario_label << "=" << std::hex << r.config_hash;
    os << std::dec << "\n";
    return os.str();
}

std::string kpi_to_json(const KpiRecord& k) { return kpi_json(k).dump(2); }

void save_scenario_result(const ScenarioResult& result, const CaseBundle& c,
                          const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    const std::string label = result.cfg.label();

    json j;
    j["config"] = config_json(result.cfg);
    j["config_hash"] = config_hash(result.cfg);
    j["case_hash"] = case_content_hash(c);
    j["kpis"] = kpi_json(result.combined);
    j["runs"] = json::array();
    for (const auto& run : result.runs) {
        json jr;
        jr["name"] = run.name;
        jr["mode"] = mode_name(run.build.mode);
        if (!run.build.residual_import_kw.empty())
            jr["residual_import_kw"] = run.build.residual_import_kw;
        jr["kpis"] = kpi_json(run.kpis);
        jr["solution"] = {{"status", to_string(run.solution.status)},
                          {"objective_eur", run.solution.objective},
                          {"bound_eur", run.solution.bound},
                          {"cone_violation", run.solution.cone_violation},
                          {"oa_iterations", run.solution.oa_iterations}};
        json values = json::object();
        for (VarFamily f :
             {VarFamily::invest_ev, VarFamily::invest_cs, VarFamily::use_ride, VarFamily::ev_state,
              VarFamily::link, VarFamily::ev_power, VarFamily::ev_soc, VarFamily::cs_power,
              VarFamily::away_energy, VarFamily::pv_dispatch, VarFamily::grid_import,
              VarFamily::grid_export, VarFamily::p_inj, VarFamily::q_inj, VarFamily::p_line,
              VarFamily::q_line, VarFamily::v_sqr, VarFamily::i_sqr, VarFamily::import_pos,
              VarFamily::peak_import, VarFamily::peak_coll, VarFamily::ev_discharge}) {
            if (!run.model.registry.has(f)) continue;
            const auto& fam = run.model.registry.family(f);
            std::vector<double> vals(run.solution.x.begin() + fam.offset,
                                     run.solution.x.begin() + fam.offset + fam.size);
            values[to_string(f)] = vals;
        }
        jr["values"] = values;
        j["runs"].push_back(std::move(jr));
    }
    std::ofstream out(out_dir / ("scenario_" + label + ".json"));
    out << j.dump() << "\n";

    // time series: slack exchange, per-slot SoC, per-slot station power
    for (const auto& run : result.runs) {
        const auto& reg = run.model.registry;
        const int T = reg.family(VarFamily::grid_import).size;
        std::ofstream ts(out_dir / ("scenario_" + label + "_" + run.name + "_timeseries.csv"));
        ts << "period,import_kw,export_kw";
        const int nev = reg.has(VarFamily::ev_soc) ? reg.family(VarFamily::ev_soc).dims[0] : 0;
        const int ncs = reg.has(VarFamily::cs_power) ? reg.family(VarFamily::cs_power).dims[0] : 0;
        for (int n = 0; n < nev; ++n) ts << ",soc_kwh_" << n;
        for (int s = 0; s < ncs; ++s) ts << ",cs_power_kw_" << s;
        ts << "\n";
        const int B = reg.has(VarFamily::cs_power) ? reg.family(VarFamily::cs_power).dims[1] : 0;
        for (int t = 0; t < T; ++t) {
            ts << t << "," << dtos(run.solution.x[reg.col(VarFamily::grid_import, {t})]) << ","
               << dtos(run.solution.x[reg.col(VarFamily::grid_export, {t})]);
            for (int n = 0; n < nev; ++n)
                ts << "," << dtos(run.solution.x[reg.col(VarFamily::ev_soc, {n, t})]);
            for (int s = 0; s < ncs; ++s) {
                double p = 0.0;
                for (int b = 0; b < B; ++b)
                    p += run.solution.x[reg.col(VarFamily::cs_power, {s, b, t})];
                ts << "," << dtos(p);
            }
            ts << "\n";
        }
    }
}

StoredResult load_scenario_result(const std::filesystem::path& json_path) {
    std::ifstream in(json_path);
    if (!in) throw IoError("cannot open " + json_path.string());
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw IoError(json_path.string() + ": " + e.what());
    }
    StoredResult res;
    res.cfg = config_from_json(j.at("config"));
    res.combined = kpi_from_json(j.at("kpis"));
    for (const auto& jr : j.value("runs", json::array())) {
        StoredRun run;
        run.name = jr.value("name", "");
        run.cfg = res.cfg;
        run.mode = mode_from_name(jr.value("mode", "coordinated"));
        run.residual_import_kw = jr.value("residual_import_kw", std::vector<double>{});
        const auto& js = jr.at("solution");
        run.solution.objective = js.value("objective_eur", 0.0);
        run.solution.bound = js.value("bound_eur", 0.0);
        run.solution.cone_violation = js.value("cone_violation", 0.0);
        run.solution.oa_iterations = js.value("oa_iterations", 0);
        const std::string st = js.value("status", "error");
        for (SolveStatus s : {SolveStatus::optimal, SolveStatus::gap_reached,
                              SolveStatus::infeasible, SolveStatus::time_limit, SolveStatus::error})
            if (st == to_string(s)) run.solution.status = s;
        for (const auto& [fname, vals] : jr.at("values").items())
            run.values.emplace_back(fname, vals.get<std::vector<double>>());
        res.runs.push_back(std::move(run));
    }
    return res;
}

RebuiltRun rebuild_run(const CaseBundle& c, const StoredRun& run) {
    RebuiltRun out;
    out.build.mode = run.mode;
    out.build.residual_import_kw = run.residual_import_kw;
    out.model = build_model(c, run.cfg, out.build);
    out.solution = run.solution;
    out.solution.x.assign(out.model.num_cols(), 0.0);
    for (const auto& [fname, vals] : run.values) {
        bool found = false;
        for (VarFamily f :
             {VarFamily::invest_ev, VarFamily::invest_cs, VarFamily::use_ride, VarFamily::ev_state,
              VarFamily::link, VarFamily::ev_power, VarFamily::ev_soc, VarFamily::cs_power,
              VarFamily::away_energy, VarFamily::pv_dispatch, VarFamily::grid_import,
              VarFamily::grid_export, VarFamily::p_inj, VarFamily::q_inj, VarFamily::p_line,
              VarFamily::q_line, VarFamily::v_sqr, VarFamily::i_sqr, VarFamily::import_pos,
              VarFamily::peak_import, VarFamily::peak_coll, VarFamily::ev_discharge}) {
            if (fname != to_string(f)) continue;
            found = true;
            if (!out.model.registry.has(f)) break;
            const auto& fam = out.model.registry.family(f);
            if (static_cast<int>(vals.size()) != fam.size)
                throw IoError("stored values for " + fname + " do not match the rebuilt model");
            std::copy(vals.begin(), vals.end(), out.solution.x.begin() + fam.offset);
            break;
        }
        if (!found) throw IoError("unknown variable family '" + fname + "' in stored result");
    }
    return out;
}

}  // namespace ecfleet

#include "ecfleet/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace ecfleet {

namespace {

double family_sum(const VariableRegistry& reg, const std::vector<double>& x, VarFamily f) {
    if (!reg.has(f)) return 0.0;
    const auto& fam = reg.family(f);
    double s = 0.0;
    for (int j = fam.offset; j < fam.offset + fam.size; ++j) s += x[j];
    return s;
}

}  // namespace

KpiRecord compute_kpis(const CaseBundle& c, const ScenarioConfig& cfg, const BuildOptions& opts,
                       const ModelInstance& model, const Solution& sol) {
    KpiRecord k;
    k.scenario_label = cfg.label();
    k.scenario_id = cfg.scenario_id;
    k.config_hash = config_hash(cfg);
    k.case_hash = case_content_hash(c);
    k.status = to_string(sol.status);
    k.objective = sol.objective;
    k.bound = sol.bound;
    k.cone_violation = sol.cone_violation;
    k.oa_iterations = sol.oa_iterations;
    k.discount_rate = c.finance.discount_rate;
    k.away_rating_kw = c.away_rating_kw;
    if (sol.x.empty()) return k;

    const auto& reg = model.registry;
    const auto& x = sol.x;
    const int T = c.grid.num_periods;
    const double af = c.grid.annualization_factor;
    const double dt = c.grid.step_hours;
    const double S = c.network.base_power_kva;
    const double crf = capital_recovery_factor(c.finance.discount_rate, c.finance.horizon_years);
    const bool ev = opts.mode != BuildMode::ec_only;
    const bool net = opts.mode != BuildMode::msp_only;

    if (ev) {
        for (int n = 0; n < c.fleet_slots; ++n)
            for (size_t kk = 0; kk < c.ev_catalog.size(); ++kk) {
                const double d = x[reg.col(VarFamily::invest_ev, {n, static_cast<int>(kk)})];
                if (std::lround(d) == 1) {
                    k.annuity += crf * c.ev_catalog[kk].price_eur;
                    k.fixed_om += c.ev_catalog[kk].fixed_cost_eur_per_year;
                    k.ev_invested.push_back(c.ev_catalog[kk].name);
                }
            }
        const int B = static_cast<int>(c.network.buses.size());
        for (int s = 0; s < c.cs_slots; ++s)
            for (int b = 0; b < B; ++b)
                for (size_t kk = 0; kk < c.cs_catalog.size(); ++kk) {
                    const double d =
                        x[reg.col(VarFamily::invest_cs, {s, b, static_cast<int>(kk)})];
                    if (std::lround(d) == 1) {
                        k.annuity += crf * c.cs_catalog[kk].price_eur;
                        k.cs_invested.push_back(c.cs_catalog[kk].name + " @ bus " +
                                                std::to_string(c.network.buses[b]));
                    }
                }
        for (size_t r = 0; r < c.rides.size(); ++r) {
            double served = 0.0;
            for (int n = 0; n < c.fleet_slots; ++n)
                served += x[reg.col(VarFamily::use_ride, {n, static_cast<int>(r)})];
            served = std::clamp(served, 0.0, 1.0);
            k.served_mwh += af * c.rides[r].energy_kwh * served / 1000.0;
            k.unserved_kwh += af * c.rides[r].energy_kwh * (1.0 - served);
        }
        k.away_kwh = af * family_sum(reg, x, VarFamily::away_energy);
        k.away_cost = c.tariffs.away_price * k.away_kwh;
        k.unserved_cost = c.tariffs.unserved_price * k.unserved_kwh;
    }

    const auto price = effective_import_price(c, cfg.peak_mode);
    for (int t = 0; t < T; ++t) {
        const double imp = x[reg.col(VarFamily::grid_import, {t})];
        const double exp = x[reg.col(VarFamily::grid_export, {t})];
        k.supplier_cost += af * price[t] * imp * dt;
        k.supplier_revenue += af * c.tariffs.export_price[t] * exp * dt;
        k.imports_mwh += af * imp * dt / 1000.0;
        k.exports_mwh += af * exp * dt / 1000.0;
        k.max_import_kw = std::max(k.max_import_kw, imp);
        k.max_export_kw = std::max(k.max_export_kw, exp);
        double charge = 0.0;
        if (ev) {
            const int B = static_cast<int>(c.network.buses.size());
            for (int s = 0; s < c.cs_slots; ++s)
                for (int b = 0; b < B; ++b) charge += x[reg.col(VarFamily::cs_power, {s, b, t})];
        }
        k.ev_charge_mwh += af * std::max(0.0, charge) * dt / 1000.0;
        for (const auto& mem : c.members) k.household_consumption_mwh += af * mem.load_kw[t] * dt / 1000.0;
    }

    if (net) {
        k.pv_dispatched_mwh = af * dt *
                              family_sum(reg, x, VarFamily::pv_dispatch) / 1000.0;
        for (size_t l = 0; l < c.network.lines.size(); ++l) {
            const double r = c.network.r_pu(c.network.lines[l]);
            for (int t = 0; t < T; ++t)
                k.losses_kwh +=
                    af * r * x[reg.col(VarFamily::i_sqr, {static_cast<int>(l), t})] * S * dt;
        }
    } else {
        k.household_consumption_mwh = 0.0;  // the stand-alone fleet serves no household
    }

    switch (cfg.peak_mode) {
        case PeakTariffMode::none_fixed:
            k.peak_cost = opts.mode == BuildMode::msp_only ? 0.0 : c.tariffs.fixed_peak_charge;
            break;
        case PeakTariffMode::collective:
            k.peak_cost = c.tariffs.peak_fee * x[reg.col(VarFamily::peak_coll)];
            break;
        case PeakTariffMode::individual:
            k.peak_cost = c.tariffs.peak_fee * family_sum(reg, x, VarFamily::peak_import);
            break;
    }

    k.total_cost = k.annuity + k.fixed_om + k.away_cost + k.unserved_cost + k.supplier_cost -
                   k.supplier_revenue;
    k.total_consumption_mwh = k.household_consumption_mwh + k.ev_charge_mwh + k.losses_kwh / 1000.0;
    k.local_consumption_mwh = std::max(0.0, k.total_consumption_mwh - k.imports_mwh);
    k.self_sufficiency =
        k.total_consumption_mwh > 0.0 ? k.local_consumption_mwh / k.total_consumption_mwh : 0.0;
    k.local_pv_share = k.pv_dispatched_mwh > 0.0
                           ? std::clamp((k.pv_dispatched_mwh - k.exports_mwh) / k.pv_dispatched_mwh,
                                        0.0, 1.0)
                           : 0.0;
    return k;
}

ScenarioRun run_ec_standalone(const CaseBundle& c, const ScenarioConfig& cfg,
                              ConicMilpEngine& engine) {
    ScenarioRun run;
    run.name = "ec";
    run.cfg = cfg;
    run.build.mode = BuildMode::ec_only;
    run.model = build_model(c, cfg, run.build);
    run.solution = engine.solve(run.model, cfg.solver);
    if (run.solution.x.empty())
        throw std::runtime_error("community dispatch failed: " + run.solution.message);
    run.kpis = compute_kpis(c, cfg, run.build, run.model, run.solution);
    return run;
}

std::vector<double> slack_draw_kw(const ScenarioRun& run) {
    const auto& reg = run.model.registry;
    const int T = reg.family(VarFamily::grid_import).size;
    std::vector<double> out(T);
    for (int t = 0; t < T; ++t)
        out[t] = run.solution.x[reg.col(VarFamily::grid_import, {t})] -
                 run.solution.x[reg.col(VarFamily::grid_export, {t})];
    return out;
}

ScenarioRun run_msp_standalone(const CaseBundle& c, const ScenarioConfig& cfg,
                               ConicMilpEngine& engine,
                               const std::vector<double>& ec_slack_draw_kw) {
    ScenarioRun run;
    run.name = "msp";
    run.cfg = cfg;
    run.build.mode = BuildMode::msp_only;
    run.build.residual_import_kw.resize(ec_slack_draw_kw.size());
    int shortfall = 0;
    for (size_t t = 0; t < ec_slack_draw_kw.size(); ++t) {
        const double headroom = c.network.transformer_rating_kw - ec_slack_draw_kw[t];
        if (headroom < -1e-6) ++shortfall;
        run.build.residual_import_kw[t] = std::max(0.0, headroom);
    }
    if (shortfall > 0)
        throw std::runtime_error("residual transformer capacity is negative in " +
                                 std::to_string(shortfall) +
                                 " periods; the community dispatch violates the rating");
    run.model = build_model(c, cfg, run.build);
    run.solution = engine.solve(run.model, cfg.solver);
    if (run.solution.x.empty())
        throw std::runtime_error("stand-alone fleet plan failed: " + run.solution.message);
    run.kpis = compute_kpis(c, cfg, run.build, run.model, run.solution);
    return run;
}

ScenarioRun run_coordinated(const CaseBundle& c, const ScenarioConfig& cfg,
                            ConicMilpEngine& engine) {
    ScenarioRun run;
    run.name = "coordinated";
    run.cfg = cfg;
    run.build.mode = BuildMode::coordinated;
    run.model = build_model(c, cfg, run.build);
    run.solution = engine.solve(run.model, cfg.solver);
    if (run.solution.x.empty())
        throw std::runtime_error("coordinated plan failed: " + run.solution.message);
    run.kpis = compute_kpis(c, cfg, run.build, run.model, run.solution);
    return run;
}

KpiRecord combine_standalone_kpis(const CaseBundle& c, const ScenarioRun& ec,
                                  const ScenarioRun& msp) {
    KpiRecord k = ec.kpis;
    const KpiRecord& m = msp.kpis;
    k.scenario_label = ec.cfg.label();
    k.total_cost += m.total_cost;
    k.annuity += m.annuity;
    k.fixed_om += m.fixed_om;
    k.supplier_cost += m.supplier_cost;
    k.supplier_revenue += m.supplier_revenue;
    k.away_cost += m.away_cost;
    k.unserved_cost += m.unserved_cost;
    k.peak_cost += m.peak_cost;
    k.imports_mwh += m.imports_mwh;
    k.exports_mwh += m.exports_mwh;
    k.ev_charge_mwh += m.ev_charge_mwh;
    k.served_mwh = m.served_mwh;
    k.unserved_kwh = m.unserved_kwh;
    k.away_kwh = m.away_kwh;
    k.ev_invested = m.ev_invested;
    k.cs_invested = m.cs_invested;
    k.objective = ec.solution.objective + msp.solution.objective;
    k.bound = ec.solution.bound + msp.solution.bound;
    k.cone_violation = std::max(ec.kpis.cone_violation, msp.kpis.cone_violation);
    k.oa_iterations = ec.kpis.oa_iterations + msp.kpis.oa_iterations;

    // the two actors share one transformer: grid peaks come from the combined flow
    const auto ec_draw = slack_draw_kw(ec);
    const auto& mreg = msp.model.registry;
    k.max_import_kw = 0.0;
    k.max_export_kw = 0.0;
    for (size_t t = 0; t < ec_draw.size(); ++t) {
        const double flow =
            ec_draw[t] + msp.solution.x[mreg.col(VarFamily::grid_import, {static_cast<int>(t)})];
        k.max_import_kw = std::max(k.max_import_kw, flow);
        k.max_export_kw = std::max(k.max_export_kw, -flow);
    }

    k.total_consumption_mwh = k.household_consumption_mwh + k.ev_charge_mwh + k.losses_kwh / 1000.0;
    k.local_consumption_mwh = std::max(0.0, k.total_consumption_mwh - k.imports_mwh);
    k.self_sufficiency =
        k.total_consumption_mwh > 0.0 ? k.local_consumption_mwh / k.total_consumption_mwh : 0.0;
    k.local_pv_share = k.pv_dispatched_mwh > 0.0
                           ? std::clamp((k.pv_dispatched_mwh - k.exports_mwh) / k.pv_dispatched_mwh,
                                        0.0, 1.0)
                           : 0.0;
    return k;
}

ScenarioResult run_scenario(const CaseBundle& c, const ScenarioConfig& cfg,
                            ConicMilpEngine& engine) {
    ScenarioResult res;
    res.cfg = cfg;
    if (cfg.standalone_pipeline()) {
        res.runs.push_back(run_ec_standalone(c, cfg, engine));
        const auto draw = slack_draw_kw(res.runs.front());
        res.runs.push_back(run_msp_standalone(c, cfg, engine, draw));
        res.combined = combine_standalone_kpis(c, res.runs[0], res.runs[1]);
    } else {
        res.runs.push_back(run_coordinated(c, cfg, engine));
        res.combined = res.runs.front().kpis;
    }
    return res;
}

ComparisonTable compare_scenarios(const std::vector<KpiRecord>& records) {
    if (records.size() < 2) throw std::invalid_argument("comparison needs at least two records");
    for (const auto& r : records)
        if (r.case_hash != records.front().case_hash)
            throw std::invalid_argument("records were produced from different cases");

    ComparisonTable t;
    for (const auto& r : records) t.columns.push_back(r.scenario_label);
    const double nan = std::numeric_limits<double>::quiet_NaN();

    auto num = [&](const std::string& section, const std::string& label, const std::string& unit,
                   auto getter) {
        ComparisonTable::Row row{section, label, unit, {}, {}};
        for (const auto& r : records) row.values.push_back(getter(r));
        t.rows.push_back(std::move(row));
    };
    auto txt = [&](const std::string& section, const std::string& label, auto getter) {
        ComparisonTable::Row row{section, label, "", {}, {}};
        for (const auto& r : records) {
            row.text.push_back(getter(r));
            row.values.push_back(nan);
        }
        t.rows.push_back(std::move(row));
    };

    num("Economic Indicators", "C_EC+C_MSP", "EUR/year", [](const KpiRecord& r) { return r.total_cost; });
    num("Economic Indicators", "A", "EUR/year", [](const KpiRecord& r) { return r.annuity; });
    num("Economic Indicators", "C_sup", "EUR/year", [](const KpiRecord& r) { return r.supplier_cost; });
    num("Economic Indicators", "R_sup", "EUR/year",
        [](const KpiRecord& r) { return r.supplier_revenue; });
    num("Energy Performances", "p_pv", "MWh/year",
        [](const KpiRecord& r) { return r.pv_dispatched_mwh; });
    num("Energy Performances", "i_sup", "MWh/year", [](const KpiRecord& r) { return r.imports_mwh; });
    num("Energy Performances", "e_sup", "MWh/year", [](const KpiRecord& r) { return r.exports_mwh; });
    num("Energy Performances", "p_loc", "MWh/year",
        [](const KpiRecord& r) { return r.local_consumption_mwh; });
    num("Energy Performances", "self-sufficiency", "-",
        [](const KpiRecord& r) { return r.self_sufficiency; });
    num("Energy Performances", "local PV share", "-",
        [](const KpiRecord& r) { return r.local_pv_share; });
    num("Grid Performances", "max(i_sup)", "kW", [](const KpiRecord& r) { return r.max_import_kw; });
    num("Grid Performances", "max(e_sup)", "kW", [](const KpiRecord& r) { return r.max_export_kw; });
    num("Grid Performances", "p_loss", "kWh/year", [](const KpiRecord& r) { return r.losses_kwh; });
    txt("Long-term decisions", "EV fleet", [](const KpiRecord& r) {
        if (r.ev_invested.empty()) return std::string("none");
        std::string s;
        for (const auto& e : r.ev_invested) s += (s.empty() ? "" : " + ") + e;
        return s;
    });
    txt("Long-term decisions", "Charging stations", [](const KpiRecord& r) {
        if (r.cs_invested.empty()) return std::string("none");
        std::string s;
        for (const auto& e : r.cs_invested) s += (s.empty() ? "" : " + ") + e;
        return s;
    });
    num("Short-term decisions", "e_use", "MWh", [](const KpiRecord& r) { return r.served_mwh; });
    num("Short-term decisions", "e_uns", "kWh", [](const KpiRecord& r) { return r.unserved_kwh; });
    num("Short-term decisions", "e_away", "kWh", [](const KpiRecord& r) { return r.away_kwh; });

    const bool any_peak_mode = std::any_of(records.begin(), records.end(), [](const KpiRecord& r) {
        return r.scenario_id == 4 || r.scenario_id == 5;
    });
    if (any_peak_mode)
        num("Peak tariffs", "C_peak", "EUR/year", [](const KpiRecord& r) { return r.peak_cost; });
    return t;
}

}  // namespace ecfleet

#pragma once

#include <string>
#include <vector>

#include "ecfleet/model.hpp"
#include "ecfleet/solver.hpp"

namespace ecfleet {

/// One scenario's reportable quantities (EUR/year unless noted). total_cost
/// excludes the peak charge, which is reported separately.
struct KpiRecord {
    std::string scenario_label;
    int scenario_id = 0;
    uint64_t config_hash = 0;
    uint64_t case_hash = 0;

    // economics
    double total_cost = 0.0;  // annuity + O&M + away + unserved + supplier - revenue
    double annuity = 0.0;
    double fixed_om = 0.0;
    double supplier_cost = 0.0;
    double supplier_revenue = 0.0;
    double away_cost = 0.0;
    double unserved_cost = 0.0;
    double peak_cost = 0.0;

    // energy, annualized
    double pv_dispatched_mwh = 0.0;
    double imports_mwh = 0.0;
    double exports_mwh = 0.0;
    double household_consumption_mwh = 0.0;
    double ev_charge_mwh = 0.0;      // gross community-level EV draw
    double total_consumption_mwh = 0.0;  // households + EV charging + losses
    double local_consumption_mwh = 0.0;  // total consumption - imports
    double self_sufficiency = 0.0;
    double local_pv_share = 0.0;

    // grid
    double max_import_kw = 0.0;
    double max_export_kw = 0.0;
    double losses_kwh = 0.0;

    // mobility
    double served_mwh = 0.0;
    double unserved_kwh = 0.0;
    double away_kwh = 0.0;
    std::vector<std::string> ev_invested;
    std::vector<std::string> cs_invested;

    // solver stats + assumptions echo
    double objective = 0.0;
    double bound = 0.0;
    std::string status;
    double cone_violation = 0.0;
    int oa_iterations = 0;
    double discount_rate = 0.0;
    double away_rating_kw = 0.0;
};

/// One solved model inside a scenario (the coordinated problem, or one leg of
/// the stand-alone pipeline).
struct ScenarioRun {
    std::string name;  // "coordinated", "ec", "msp"
    ScenarioConfig cfg;
    BuildOptions build;
    ModelInstance model;
    Solution solution;
    KpiRecord kpis;
};

struct ScenarioResult {
    ScenarioConfig cfg;
    std::vector<ScenarioRun> runs;
    KpiRecord combined;
};

/// Community dispatch alone, problem over the network without any fleet
/// variables. The slack draw (import - export per period) feeds the
/// stand-alone fleet problem.
ScenarioRun run_ec_standalone(const CaseBundle& c, const ScenarioConfig& cfg,
                              ConicMilpEngine& engine);
std::vector<double> slack_draw_kw(const ScenarioRun& run);

/// Stand-alone fleet planning under the residual transformer headroom left by
/// the community dispatch; the deposit sits at the slack node and buys at the
/// retail import curve.
ScenarioRun run_msp_standalone(const CaseBundle& c, const ScenarioConfig& cfg,
                               ConicMilpEngine& engine,
                               const std::vector<double>& ec_slack_draw_kw);

ScenarioRun run_coordinated(const CaseBundle& c, const ScenarioConfig& cfg,
                            ConicMilpEngine& engine);

/// Full pipeline per the scenario id: 1 solves the two stand-alone legs and
/// combines them, 2-5 solve the coordinated problem with the preset flags.
ScenarioResult run_scenario(const CaseBundle& c, const ScenarioConfig& cfg,
                            ConicMilpEngine& engine);

KpiRecord compute_kpis(const CaseBundle& c, const ScenarioConfig& cfg, const BuildOptions& opts,
                       const ModelInstance& model, const Solution& sol);
KpiRecord combine_standalone_kpis(const CaseBundle& c, const ScenarioRun& ec,
                                  const ScenarioRun& msp);

/// Side-by-side comparison, deltas in percent against the first record.
struct ComparisonTable {
    struct Row {
        std::string section;
        std::string label;
        std::string unit;
        std::vector<double> values;   // one per record; NaN = not applicable
        std::vector<std::string> text;  // used instead of values when non-empty
    };
    std::vector<std::string> columns;
    std::vector<Row> rows;
};

ComparisonTable compare_scenarios(const std::vector<KpiRecord>& records);

}  // namespace ecfleet

#pragma once

#include <map>
#include <string>
#include <vector>

#include "ecfleet/model.hpp"
#include "ecfleet/solver.hpp"

namespace ecfleet {

/// Exact AC state of a radial network for fixed nodal injections, computed by
/// backward/forward sweeps to a fixed point. Everything indexed by position in
/// network.buses / network.lines; the slack entry of the injections is ignored
/// (the sweep computes the slack exchange itself).
struct PowerFlowResult {
    bool converged = false;
    int iterations = 0;
    std::vector<double> v_sqr;   // per bus position, p.u.^2
    std::vector<double> i_sqr;   // per line, p.u.^2
    std::vector<double> p_send;  // per line, p.u., sending end
    std::vector<double> q_send;
    double slack_p_kw = 0.0;  // injection the upstream grid must provide
    double slack_q_kvar = 0.0;
    double losses_kw = 0.0;
};

PowerFlowResult ac_power_flow(const RadialNetwork& net, const std::vector<double>& p_inj_kw,
                              const std::vector<double>& q_inj_kvar, double tol_pu = 1e-10,
                              int max_sweeps = 100);

/// Constraint-family audit recomputed from raw variable values, independent of
/// the ModelInstance rows. Keys are equation tags; "25" is the cone violation,
/// "25-slack" the (informational) tightness gap.
struct AuditReport {
    double tolerance = 1e-6;
    std::map<std::string, double> max_residual;
    std::vector<std::string> notes;

    std::vector<std::string> violated_families() const;
    bool ok() const { return violated_families().empty(); }
    std::string to_json() const;
};

AuditReport verify_solution(const CaseBundle& c, const ScenarioConfig& cfg,
                            const BuildOptions& opts, const VariableRegistry& reg,
                            const Solution& sol, double tol = 1e-6);

/// Exhaustive enumeration of the investment/assignment binaries with the
/// continuous remainder solved through the engine; exact up to the continuous
/// solver tolerance. Supports one charging-station slot (the station state of
/// an idle invested EV is then fixed without loss of optimality). Throws
/// std::invalid_argument when the instance exceeds 24 enumerated binaries.
struct BruteForceResult {
    Solution solution;       // best found (status infeasible if none feasible)
    ModelInstance model;     // shared base model (registry view for solution.x)
    long combos_tried = 0;
    long combos_feasible = 0;
};

BruteForceResult brute_force_plan(const CaseBundle& c, const ScenarioConfig& cfg,
                                  ConicMilpEngine& engine, const SolverOptions& opts = {},
                                  const BuildOptions& build = {});

}  // namespace ecfleet

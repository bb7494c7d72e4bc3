#include <cmath>

#include "doctest.h"
#include "ecfleet/io.hpp"
#include "ecfleet/oracle.hpp"

using namespace ecfleet;

namespace {

CaseBundle small_case(int T = 8, double load_kw = 5.0, double pv_kw = 0.0, int buses = 2) {
    CaseBundle c;
    c.grid = TimeGrid::make(0.25, T, {0});
    c.network.buses.push_back(0);
    for (int b = 1; b < buses; ++b) {
        c.network.buses.push_back(b);
        c.network.lines.push_back({b, b - 1, 0.1, 0.0, 200.0 * 200.0});
    }
    c.network.transformer_rating_kw = 60.0;
    MemberProfile m;
    m.bus = buses > 1 ? 1 : 0;
    m.power_factor = 1.0;
    m.load_kw.assign(T, load_kw);
    m.pv_potential_kw.assign(T, pv_kw);
    c.members.push_back(m);
    c.tariffs.import_price.assign(T, 0.151);
    c.tariffs.export_price.assign(T, 0.05);
    c.ev_catalog = {{"Nissan Leaf", 40.0, 11.0, 9784.0, 1814.0},
                    {"Renault Megane", 60.0, 22.0, 32149.0, 2237.0}};
    c.cs_catalog = {{"Medium AC", 11.0, 1800.0}};
    c.fleet_slots = 1;
    c.cs_slots = 1;
    c.finance.discount_rate = 0.0;
    return c;
}

}  // namespace

TEST_CASE("ac_power_flow: zero injections give a flat profile") {
    CaseBundle c = small_case(4, 0.0, 0.0, 5);
    PowerFlowResult r = ac_power_flow(c.network, std::vector<double>(5, 0.0),
                                      std::vector<double>(5, 0.0));
    REQUIRE(r.converged);
    for (double v : r.v_sqr) CHECK(v == doctest::Approx(1.0));
    for (double i : r.i_sqr) CHECK(i == doctest::Approx(0.0));
    CHECK(r.losses_kw == doctest::Approx(0.0));
}

TEST_CASE("ac_power_flow: single 5 kW load behind 0.1 ohm matches the hand quadratic") {
    CaseBundle c = small_case();
    PowerFlowResult r =
        ac_power_flow(c.network, {0.0, -5.0}, {0.0, 0.0}, 1e-12, 200);
    REQUIRE(r.converged);

    const double S = c.network.base_power_kva;
    const double r_pu = 0.1 / c.network.z_base_ohm();
    const double load_pu = 5.0 / S;
    const double b = 1.0 - 2.0 * r_pu * load_pu;
    const double i2 =
        (b - std::sqrt(b * b - 4.0 * r_pu * r_pu * load_pu * load_pu)) / (2.0 * r_pu * r_pu);
    CHECK(r.i_sqr[0] == doctest::Approx(i2).epsilon(1e-8));
    CHECK(r.losses_kw == doctest::Approx(r_pu * i2 * S).epsilon(1e-8));
    CHECK(r.slack_p_kw == doctest::Approx(5.0 + r_pu * i2 * S).epsilon(1e-8));
    CHECK(r.v_sqr[1] == doctest::Approx(1.0 - 2.0 * r_pu * r.p_send[0] + r_pu * r_pu * i2)
                            .epsilon(1e-10));
}

TEST_CASE("ac_power_flow agrees with a tight conic dispatch on the same injections") {
    CaseBundle c = small_case(6, 4.0, 0.0, 4);
    BuildOptions opts;
    opts.mode = BuildMode::ec_only;
    ScenarioConfig cfg = ScenarioConfig::preset(1);
    ModelInstance model = build_model(c, cfg, opts);
    ConicMilpEngine engine("highs");
    SolverOptions so;
    so.cone_tol = 1e-9;
    Solution s = engine.solve(model, so);
    REQUIRE(s.status == SolveStatus::optimal);

    const double S = c.network.base_power_kva;
    const int B = 4;
    for (int t = 0; t < 6; ++t) {
        std::vector<double> p(B), q(B);
        for (int b = 0; b < B; ++b) {
            p[b] = s.value(model.registry, VarFamily::p_inj, {b, t}) * S;
            q[b] = s.value(model.registry, VarFamily::q_inj, {b, t}) * S;
        }
        PowerFlowResult pf = ac_power_flow(c.network, p, q);
        REQUIRE(pf.converged);
        for (int b = 1; b < B; ++b)
            CHECK(std::abs(pf.v_sqr[b] - s.value(model.registry, VarFamily::v_sqr, {b, t})) <=
                  1e-5);
        for (int l = 0; l < B - 1; ++l)
            CHECK(std::abs(pf.i_sqr[l] - s.value(model.registry, VarFamily::i_sqr, {l, t})) <=
                  1e-5);
    }
}

TEST_CASE("ac_power_flow rejects non-tree networks and refuses to diverge silently") {
    CaseBundle c = small_case();
    c.network.lines[0].parent = 1;  // self-loop
    CHECK_THROWS_AS(ac_power_flow(c.network, {0.0, 0.0}, {0.0, 0.0}), std::invalid_argument);

    CaseBundle big = small_case();
    // a load far beyond the line's deliverable power: the sweep must not converge
    PowerFlowResult r = ac_power_flow(big.network, {0.0, -4000.0}, {0.0, 0.0}, 1e-10, 50);
    CHECK(!r.converged);
}

TEST_CASE("verify_solution: engine output audits clean, perturbations are flagged") {
    CaseBundle c = small_case(8, 3.0);
    c.rides = {{0, 2, 4, 9.7, 0.0}};
    ScenarioConfig cfg = ScenarioConfig::preset(2);
    cfg.solver.mip_gap = 1e-7;
    ModelInstance model = build_model(c, cfg);
    ConicMilpEngine engine("highs");
    SolverOptions so = cfg.solver;
    so.cone_tol = 1e-8;
    Solution s = engine.solve(model, so);
    REQUIRE(s.status == SolveStatus::optimal);

    BuildOptions opts;
    AuditReport rep = verify_solution(c, cfg, opts, model.registry, s, 1e-6);
    CAPTURE(rep.to_json());
    CHECK(rep.ok());

    SUBCASE("SoC perturbation breaks the recursion replay") {
        Solution bad = s;
        bad.x[model.registry.col(VarFamily::ev_soc, {0, 5})] += 1.0;
        AuditReport r2 = verify_solution(c, cfg, opts, model.registry, bad, 1e-6);
        CHECK(!r2.ok());
        CHECK(r2.max_residual.at("16") >= 1.0 - 1e-9);
    }
    SUBCASE("fractional binaries are flagged as an integrality violation") {
        Solution bad = s;
        bad.x[model.registry.col(VarFamily::invest_ev, {0, 0})] = 0.5;
        AuditReport r2 = verify_solution(c, cfg, opts, model.registry, bad, 1e-6);
        CHECK(!r2.ok());
        CHECK(r2.max_residual.at("integrality") == doctest::Approx(0.5));
    }
    SUBCASE("objective tampering is caught by the recomputation") {
        Solution bad = s;
        bad.objective += 5.0;
        AuditReport r2 = verify_solution(c, cfg, opts, model.registry, bad, 1e-6);
        CHECK(!r2.ok());
        CHECK(r2.max_residual.at("objective") == doctest::Approx(5.0));
    }
}

TEST_CASE("unserved-energy identity holds exactly on an audited solution") {
    CaseBundle c = small_case(8, 3.0);
    c.rides = {{0, 2, 4, 9.7, 0.0}, {1, 5, 6, 6.0, 0.0}};
    ScenarioConfig cfg = ScenarioConfig::preset(2);
    ModelInstance model = build_model(c, cfg);
    ConicMilpEngine engine("highs");
    Solution s = engine.solve(model, cfg.solver);
    REQUIRE(s.status == SolveStatus::optimal);
    const double af = c.grid.annualization_factor;
    for (size_t r = 0; r < c.rides.size(); ++r) {
        double served = 0.0;
        for (int n = 0; n < c.fleet_slots; ++n)
            served += s.value(model.registry, VarFamily::use_ride, {n, static_cast<int>(r)});
        const double e_uns = c.rides[r].energy_kwh * (1.0 - served);
        CHECK(e_uns >= -1e-9);
        // identity: the objective's unserved term is exactly pi_uns * e_uns
        CHECK(af * c.tariffs.unserved_price * e_uns ==
              doctest::Approx(af * 2.0 * c.rides[r].energy_kwh * (1.0 - served)));
    }
}

TEST_CASE("brute force matches the engine on a tiny instance") {
    CaseBundle c = small_case(16, 2.0, 0.0, 3);
    c.rides = {{0, 2, 5, 8.0, 0.0}, {1, 8, 11, 7.0, 0.0}};  // non-overlapping
    ScenarioConfig cfg = ScenarioConfig::preset(2);
    cfg.solver.mip_gap = 1e-7;

    ConicMilpEngine engine("highs");
    SolverOptions so = cfg.solver;
    ModelInstance model = build_model(c, cfg);
    Solution milp = engine.solve(model, so);
    REQUIRE(milp.status == SolveStatus::optimal);

    ConicMilpEngine oracle_engine("clarabel");
    BruteForceResult bf = brute_force_plan(c, cfg, oracle_engine, so);
    REQUIRE(bf.solution.status == SolveStatus::optimal);
    CHECK(bf.combos_tried > 4);
    CHECK(bf.solution.objective ==
          doctest::Approx(milp.objective).epsilon(1e-5));
}

TEST_CASE("brute force: unprofitable rides leave the fleet empty") {
    CaseBundle c = small_case(8, 1.0, 0.0, 2);
    c.rides = {{0, 2, 3, 0.01, 0.0}};          // almost no revenue at stake
    c.tariffs.unserved_price = 0.001;          // and refusing is nearly free
    ScenarioConfig cfg = ScenarioConfig::preset(2);
    ConicMilpEngine oracle_engine("clarabel");
    BruteForceResult bf = brute_force_plan(c, cfg, oracle_engine);
    REQUIRE(bf.solution.status == SolveStatus::optimal);
    const auto& reg = bf.model.registry;
    for (size_t k = 0; k < c.ev_catalog.size(); ++k)
        CHECK(bf.solution.value(reg, VarFamily::invest_ev, {0, static_cast<int>(k)}) == 0.0);
}

TEST_CASE("brute force: overlapping rides never share the one car") {
    CaseBundle c = small_case(12, 1.0, 0.0, 2);
    c.rides = {{0, 2, 6, 8.0, 0.0}, {1, 4, 9, 8.0, 0.0}};  // overlap
    c.tariffs.unserved_price = 5.0;  // serving is very attractive
    ScenarioConfig cfg = ScenarioConfig::preset(2);
    ConicMilpEngine oracle_engine("clarabel");
    BruteForceResult bf = brute_force_plan(c, cfg, oracle_engine);
    REQUIRE(bf.solution.status == SolveStatus::optimal);
    const auto& reg = bf.model.registry;
    const double u0 = bf.solution.value(reg, VarFamily::use_ride, {0, 0});
    const double u1 = bf.solution.value(reg, VarFamily::use_ride, {0, 1});
    CHECK(u0 + u1 <= 1.0 + 1e-9);
    CHECK(u0 + u1 >= 1.0 - 1e-9);  // one of them is worth serving
}

TEST_CASE("brute force refuses oversized instances") {
    CaseBundle c = small_case();
    c.fleet_slots = 4;
    c.rides.clear();
    for (int r = 0; r < 10; ++r) c.rides.push_back({r, 1, 2, 1.0, 0.0});
    ScenarioConfig cfg = ScenarioConfig::preset(2);
    ConicMilpEngine engine("clarabel");
    CHECK_THROWS_WITH_AS(brute_force_plan(c, cfg, engine), doctest::Contains("too large"),
                         std::invalid_argument);

    CaseBundle c2 = small_case();
    c2.cs_slots = 2;
    CHECK_THROWS_AS(brute_force_plan(c2, cfg, engine), std::invalid_argument);
}

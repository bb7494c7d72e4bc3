#include <cmath>

#include "doctest.h"
#include "ecfleet/model.hpp"
#include "ecfleet/solver.hpp"

using namespace ecfleet;

namespace {

/// Minimal instance with one cone over four raw columns.
ModelInstance cone_fixture() {
    ModelInstance m;
    m.registry.add_family(VarFamily::i_sqr, {1, 1});
    m.registry.add_family(VarFamily::v_sqr, {1, 1});
    m.registry.add_family(VarFamily::p_line, {1, 1});
    m.registry.add_family(VarFamily::q_line, {1, 1});
    m.init_columns();
    m.cones.push_back({0, 1, 2, 3});
    return m;
}

// x laid out as {i, v, p, q} like cone_fixture
double eval_cut(const CutRow& cut, const std::vector<double>& x) {
    return cut.c_i * x[0] + cut.c_v * x[1] + cut.c_p * x[2] + cut.c_q * x[3] - cut.rhs;
}

struct Lcg {
    uint64_t s = 20240811;
    uint64_t next() { return s = s * 6364136223846793005ULL + 1442695040888963407ULL; }
    double uniform() { return (next() >> 11) * 0x1.0p-53; }
    double uniform(double a, double b) { return a + (b - a) * uniform(); }
};

class CountingBackend final : public SolverBackend {
public:
    explicit CountingBackend(std::unique_ptr<SolverBackend> inner) : inner_(std::move(inner)) {}
    BackendCaps caps() const override { return inner_->caps(); }
    std::string name() const override { return inner_->name(); }
    BackendResult solve(const ModelInstance& model, const std::vector<CutRow>& cuts,
                        bool relax_integrality, bool send_cones,
                        const SolverOptions& opts) override {
        ++calls;
        return inner_->solve(model, cuts, relax_integrality, send_cones, opts);
    }
    int calls = 0;

private:
    std::unique_ptr<SolverBackend> inner_;
};

CaseBundle two_bus_case(int T = 4, double load_kw = 5.0, double pv_kw = 0.0) {
    CaseBundle c;
    c.grid = TimeGrid::make(0.25, T, {0});
    c.network.buses = {0, 1};
    c.network.lines.push_back({1, 0, 0.1, 0.0, 200.0 * 200.0});
    c.network.transformer_rating_kw = 60.0;
    MemberProfile m;
    m.bus = 1;
    m.power_factor = 1.0;  // keep the hand calculation purely active
    m.load_kw.assign(T, load_kw);
    m.pv_potential_kw.assign(T, pv_kw);
    c.members.push_back(m);
    c.tariffs.import_price.assign(T, 0.151);
    c.tariffs.export_price.assign(T, 0.05);
    c.ev_catalog = {{"Nissan Leaf", 40.0, 11.0, 9784.0, 1814.0}};
    c.cs_catalog = {{"Medium AC", 11.0, 1800.0}};
    c.fleet_slots = 1;
    c.cs_slots = 1;
    c.finance.discount_rate = 0.0;
    return c;
}

/// Exact single-line losses for a pure load L (per unit, X = 0): the smaller
/// root of R^2 y^2 - (1 - 2 R L) y + L^2 = 0 where y is the squared current.
double single_line_i_sqr(double load_pu, double r_pu) {
    const double b = 1.0 - 2.0 * r_pu * load_pu;
    return (b - std::sqrt(b * b - 4.0 * r_pu * r_pu * load_pu * load_pu)) /
           (2.0 * r_pu * r_pu);
}

}  // namespace

TEST_CASE("cone_violations arithmetic on the 3-4-5 example") {
    ModelInstance m = cone_fixture();

    // tight point: i*v = 25 = p^2 + q^2
    CHECK(cone_violations({25.0, 1.0, 3.0, 4.0}, m, 1e-9).empty());
    // short by 5: relative violation (25 - 20) / 25 = 0.2
    auto v = cone_violations({20.0, 1.0, 3.0, 4.0}, m, 1e-9);
    REQUIRE(v.size() == 1);
    CHECK(v[0].relative_violation == doctest::Approx(0.2));
    // strictly feasible interior point is not listed
    CHECK(cone_violations({30.0, 1.0, 3.0, 4.0}, m, 1e-9).empty());
    CHECK(max_cone_violation({30.0, 1.0, 3.0, 4.0}, m) <= 0.0);
}

TEST_CASE("cuts separate their generating point and keep the cone") {
    ModelInstance m = cone_fixture();
    const std::vector<double> violated{20.0, 1.0, 3.0, 4.0};  // i, v, p, q
    CutRow cut = cut_for_cone(m, 0, violated);

    CHECK(eval_cut(cut, violated) > 1e-6);              // separation
    CHECK(eval_cut(cut, {25.0, 1.0, 3.0, 4.0}) <= 1e-9);  // boundary point stays
    CHECK(eval_cut(cut, {30.0, 1.0, 3.0, 4.0}) <= 1e-9);  // interior point stays
}

TEST_CASE("Monte-Carlo validity: cuts hold on 1000 cone-feasible samples") {
    ModelInstance m = cone_fixture();
    Lcg rng;
    std::vector<CutRow> cuts;
    for (int i = 0; i < 25; ++i) {
        // violated points: i*v strictly below p^2+q^2
        const double p = rng.uniform(-2.0, 2.0), q = rng.uniform(-2.0, 2.0);
        const double v = rng.uniform(0.8, 1.2);
        const double need = (p * p + q * q) / v;
        cuts.push_back(cut_for_cone(m, 0, {need * rng.uniform(0.0, 0.95), v, p, q}));
    }
    for (int s = 0; s < 1000; ++s) {
        const double p = rng.uniform(-2.0, 2.0), q = rng.uniform(-2.0, 2.0);
        const double v = rng.uniform(0.8, 1.2);
        const double i = (p * p + q * q) / v * (1.0 + rng.uniform());
        for (const auto& cut : cuts) CHECK(eval_cut(cut, {i, v, p, q}) <= 1e-9);
    }
}

TEST_CASE("degenerate axis point still yields a finite cut") {
    ModelInstance m = cone_fixture();
    CutRow cut = cut_for_cone(m, 0, {0.5, 0.5, 0.0, 0.0});
    for (double v : {cut.c_p, cut.c_q, cut.c_i, cut.c_v}) CHECK(std::isfinite(v));
    CHECK((cut.c_p != 0.0 || cut.c_q != 0.0 || cut.c_i != 0.0 || cut.c_v != 0.0));
}

TEST_CASE("a model without cone rows takes exactly one backend call") {
    ModelInstance m;
    m.registry.add_family(VarFamily::grid_import, {3});
    m.init_columns();
    for (int j = 0; j < 3; ++j) {
        m.set_bounds(j, 0.0, 10.0);
        m.add_obj(j, 1.0);
    }
    m.add_row(RowTag::eq21, 6.0, {{0, 1.0}, {1, 1.0}, {2, 1.0}}, kInfinity);

    auto counting = std::make_unique<CountingBackend>(make_backend("highs"));
    CountingBackend* probe = counting.get();
    ConicMilpEngine engine(std::move(counting));
    Solution s = engine.solve(m);
    CHECK(s.status == SolveStatus::optimal);
    CHECK(s.objective == doctest::Approx(6.0));
    CHECK(probe->calls == 1);
    CHECK(s.cone_violation == 0.0);
}

TEST_CASE("two-bus dispatch matches the closed-form loss solution on both backends") {
    CaseBundle c = two_bus_case();
    ScenarioConfig cfg = ScenarioConfig::preset(1);
    BuildOptions opts;
    opts.mode = BuildMode::ec_only;
    ModelInstance model = build_model(c, cfg, opts);

    const double S = c.network.base_power_kva;
    const double r_pu = 0.1 / c.network.z_base_ohm();
    const double i2 = single_line_i_sqr(5.0 / S, r_pu);
    const double import_kw = (5.0 / S + r_pu * i2) * S;
    const double expected_obj = c.grid.annualization_factor * (0.151 + 0.099) * import_kw * 0.25 * 4 +
                                c.tariffs.fixed_peak_charge;

    for (const char* backend : {"highs", "clarabel"}) {
        CAPTURE(backend);
        ConicMilpEngine engine(backend);
        SolverOptions so;
        so.cone_tol = 1e-8;
        Solution s = engine.solve(model, so);
        REQUIRE(s.status == SolveStatus::optimal);
        CHECK(s.objective == doctest::Approx(expected_obj).epsilon(1e-5));
        CHECK(s.cone_violation <= 1e-8);
        const auto& reg = model.registry;
        CHECK(s.value(reg, VarFamily::i_sqr, {0, 0}) == doctest::Approx(i2).epsilon(1e-5));
        CHECK(s.value(reg, VarFamily::grid_import, {0}) ==
              doctest::Approx(import_kw).epsilon(1e-5));
        CHECK(s.value(reg, VarFamily::v_sqr, {1, 0}) ==
              doctest::Approx(1.0 - 2.0 * r_pu * (5.0 / S + r_pu * i2) + r_pu * r_pu * i2)
                  .epsilon(1e-6));
    }
}

TEST_CASE("zero-load network solves to a flat voltage profile") {
    CaseBundle c = two_bus_case(2, 0.0);
    BuildOptions opts;
    opts.mode = BuildMode::ec_only;
    ModelInstance model = build_model(c, ScenarioConfig::preset(1), opts);
    ConicMilpEngine engine("highs");
    Solution s = engine.solve(model);
    REQUIRE(s.status == SolveStatus::optimal);
    for (int t = 0; t < 2; ++t) {
        CHECK(s.value(model.registry, VarFamily::v_sqr, {1, t}) == doctest::Approx(1.0));
        CHECK(s.value(model.registry, VarFamily::i_sqr, {0, t}) == doctest::Approx(0.0));
    }
}

TEST_CASE("cut loop: objectives are monotone and the pool makes re-solves idempotent") {
    CaseBundle c = two_bus_case(6, 8.0);
    BuildOptions opts;
    opts.mode = BuildMode::ec_only;
    ModelInstance model = build_model(c, ScenarioConfig::preset(1), opts);
    ConicMilpEngine engine("highs");
    SolverOptions so;
    so.cone_tol = 1e-8;

    Solution first = engine.solve(model, so);
    REQUIRE(first.status == SolveStatus::optimal);
    CHECK(first.oa_iterations >= 2);  // the box relaxation is loss-free, cuts must bite
    for (size_t i = 1; i < first.iteration_log.size(); ++i)
        CHECK(first.iteration_log[i].objective >=
              first.iteration_log[i - 1].objective - 1e-9 * std::abs(first.objective));

    Solution second = engine.solve(model, so);
    CHECK(second.oa_iterations == 1);
    CHECK(second.objective == doctest::Approx(first.objective).epsilon(1e-8));
}

TEST_CASE("backend equivalence on a small community dispatch") {
    CaseBundle c = two_bus_case(8, 6.0, 4.0);
    BuildOptions opts;
    opts.mode = BuildMode::ec_only;
    ModelInstance model = build_model(c, ScenarioConfig::preset(1), opts);
    SolverOptions so;
    so.cone_tol = 1e-8;
    ConicMilpEngine oa("highs"), native("clarabel");
    Solution a = oa.solve(model, so);
    Solution b = native.solve(model, so);
    REQUIRE(a.status == SolveStatus::optimal);
    REQUIRE(b.status == SolveStatus::optimal);
    CHECK(a.objective == doctest::Approx(b.objective).epsilon(1e-4));
}

TEST_CASE("relaxation bounds the integer optimum; fixed binaries close the gap") {
    CaseBundle c = two_bus_case(8, 2.0);
    c.rides = {{0, 2, 5, 9.7, 0.0}};
    ScenarioConfig cfg = ScenarioConfig::preset(2);
    ModelInstance model = build_model(c, cfg);
    ConicMilpEngine engine("highs");
    SolverOptions so;
    so.mip_gap = 1e-6;

    Solution integral = engine.solve(model, so);
    REQUIRE(integral.status == SolveStatus::optimal);
    Solution relaxed = engine.solve_relaxation(model, so);
    REQUIRE(relaxed.status == SolveStatus::optimal);
    CHECK(relaxed.objective <= integral.objective + 1e-6 * std::abs(integral.objective) + 1e-6);

    // freeze the binaries at the integer optimum: relaxation becomes exact
    ModelInstance fixed = model;
    for (int j = 0; j < model.num_cols(); ++j)
        if (model.integer_col[j]) fixed.fix(j, std::round(integral.x[j]));
    Solution refixed = engine.solve_relaxation(fixed, so);
    REQUIRE(refixed.status == SolveStatus::optimal);
    CHECK(refixed.objective == doctest::Approx(integral.objective).epsilon(1e-6));
}

TEST_CASE("infeasible models are reported as such") {
    ModelInstance m;
    m.registry.add_family(VarFamily::grid_import, {1});
    m.init_columns();
    m.set_bounds(0, 0.0, 1.0);
    m.add_row(RowTag::eq21, 2.0, {{0, 1.0}}, kInfinity);  // x >= 2 vs x <= 1
    ConicMilpEngine engine("highs");
    CHECK(engine.solve(m).status == SolveStatus::infeasible);
}

TEST_CASE("clarabel backend refuses free integer columns") {
    CaseBundle c = two_bus_case(4, 2.0);
    c.rides = {{0, 1, 2, 5.0, 0.0}};
    ModelInstance model = build_model(c, ScenarioConfig::preset(2));
    ConicMilpEngine engine("clarabel");
    Solution s = engine.solve(model);
    CHECK(s.status == SolveStatus::error);
    CHECK(s.message.find("MILP") != std::string::npos);
}

TEST_CASE("unknown backend names are rejected up front") {
    CHECK_THROWS_AS(SubprocessBackend("gurobi"), std::invalid_argument);
}

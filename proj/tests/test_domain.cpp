#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "ecfleet/domain.hpp"
#include "ecfleet/io.hpp"

using namespace ecfleet;

namespace {

RideRequest ride(int id, int dep, int ret, double kwh = 10.0) {
    return RideRequest{id, dep, ret, kwh, 0.0};
}

// independent O(n^2) oracle for the overlap set
std::set<std::pair<int, int>> overlap_oracle(const std::vector<RideRequest>& rides) {
    std::set<std::pair<int, int>> out;
    for (const auto& a : rides)
        for (const auto& b : rides) {
            if (a.id >= b.id) continue;
            if (a.dep_period <= b.ret_period && b.dep_period <= a.ret_period)
                out.insert({a.id, b.id});
        }
    return out;
}

struct Lcg {
    uint64_t s = 42;
    uint64_t next() { return s = s * 6364136223846793005ULL + 1442695040888963407ULL; }
    int uniform(int a, int b) { return a + static_cast<int>(next() % (b - a + 1)); }
};

}  // namespace

TEST_CASE("overlapping_pairs basic intervals") {
    auto pairs = overlapping_pairs({ride(1, 10, 14), ride(2, 12, 16)});
    CHECK(pairs == std::vector<std::pair<int, int>>{{1, 2}});

    // a shared boundary period is a conflict: the same car cannot do both
    pairs = overlapping_pairs({ride(1, 10, 14), ride(2, 14, 18)});
    CHECK(pairs == std::vector<std::pair<int, int>>{{1, 2}});

    pairs = overlapping_pairs({ride(1, 10, 14), ride(2, 15, 18)});
    CHECK(pairs.empty());
}

TEST_CASE("overlapping_pairs matches the double-loop oracle on the bundled case") {
    SyntheticCaseParams p;
    CaseBundle c = generate_synthetic_case(p);
    REQUIRE(c.rides.size() == 88);
    auto pairs = overlapping_pairs(c.rides);
    std::set<std::pair<int, int>> got(pairs.begin(), pairs.end());
    CHECK(got == overlap_oracle(c.rides));
    CHECK(got.size() == pairs.size());  // no duplicates
    CHECK(!got.empty());                // the case does contain conflicts
}

TEST_CASE("overlapping_pairs property: random ride sets") {
    Lcg rng;
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<RideRequest> rides;
        const int n = rng.uniform(0, 200);
        for (int i = 0; i < n; ++i) {
            int dep = rng.uniform(0, 400);
            rides.push_back(ride(i, dep, dep + rng.uniform(0, 40)));
        }
        auto pairs = overlapping_pairs(rides);
        std::set<std::pair<int, int>> got(pairs.begin(), pairs.end());
        CHECK(got == overlap_oracle(rides));
        for (const auto& [a, b] : got) CHECK(a < b);  // no self pairs, canonical order
    }
}

TEST_CASE("rides_active_at and rides_returning_at") {
    std::vector<RideRequest> rides{ride(7, 10, 14)};
    CHECK(rides_active_at(rides, 12) == std::vector<int>{7});
    CHECK(rides_active_at(rides, 10) == std::vector<int>{7});
    CHECK(rides_active_at(rides, 14) == std::vector<int>{7});
    CHECK(rides_active_at(rides, 15).empty());
    CHECK(rides_returning_at(rides, 14) == std::vector<int>{7});
    CHECK(rides_returning_at(rides, 13).empty());
}

TEST_CASE("active/returning sets agree with a per-period scan on the bundled case") {
    CaseBundle c = generate_synthetic_case(SyntheticCaseParams{});
    size_t returned_total = 0;
    for (int t = 0; t < c.grid.num_periods; ++t) {
        std::vector<int> active, returning;
        for (const auto& r : c.rides) {
            if (r.dep_period <= t && t <= r.ret_period) active.push_back(r.id);
            if (r.ret_period == t) returning.push_back(r.id);
        }
        CHECK(rides_active_at(c.rides, t) == active);
        CHECK(rides_returning_at(c.rides, t) == returning);
        returned_total += returning.size();
    }
    // every ride returns in exactly one period
    CHECK(returned_total == c.rides.size());
}

TEST_CASE("capital_recovery_factor") {
    CHECK(capital_recovery_factor(0.0, 7) == 1.0 / 7.0);  // exact at zero rate

    // amortization oracle: paying U*C per year on debt compounding at 5%
    // clears the loan after exactly 7 payments
    const double u = capital_recovery_factor(0.05, 7);
    double debt = 1.0;
    for (int y = 0; y < 7; ++y) debt = debt * 1.05 - u;
    CHECK(std::abs(debt) < 1e-10);

    // very large rates: the factor approaches the rate itself
    CHECK(capital_recovery_factor(10.0, 7) == doctest::Approx(10.0).epsilon(1e-6));

    CHECK_THROWS_AS(capital_recovery_factor(-0.01, 7), std::invalid_argument);
    CHECK_THROWS_AS(capital_recovery_factor(0.05, 0), std::invalid_argument);
}

TEST_CASE("capital_recovery_factor monotonicity grids") {
    for (int n = 1; n <= 30; n += 3) {
        double prev = capital_recovery_factor(0.0, n);
        for (double rho = 0.01; rho < 0.5; rho += 0.01) {
            const double u = capital_recovery_factor(rho, n);
            CHECK(u > prev);  // strictly increasing in rho
            prev = u;
        }
    }
    for (double rho : {0.0, 0.03, 0.08, 0.2}) {
        double prev = capital_recovery_factor(rho, 1);
        for (int n = 2; n <= 40; ++n) {
            const double u = capital_recovery_factor(rho, n);
            CHECK(u < prev);  // strictly decreasing in the horizon
            prev = u;
        }
    }
}

TEST_CASE("away_energy_cap") {
    CHECK(away_energy_cap(ride(0, 100, 108), 11.0, 0.25) == doctest::Approx(22.0));
    CHECK(away_energy_cap(ride(0, 100, 100), 11.0, 0.25) == 0.0);

    CaseBundle c = generate_synthetic_case(SyntheticCaseParams{});
    for (const auto& r : c.rides) CHECK(away_energy_cap(r, c.ride_away_rating(r), 0.25) >= 0.0);
}

TEST_CASE("TimeGrid annualization identity") {
    for (int weeks : {1, 2, 4, 8}) {
        const int T = weeks * 7 * 96;
        std::vector<int> blocks;
        for (int w = 0; w < weeks; ++w) blocks.push_back(w * 7 * 96);
        TimeGrid g = TimeGrid::make(0.25, T, blocks);
        CHECK(std::abs(g.annualization_factor * (T * 0.25) - 8760.0) < 1e-9);
    }
}

TEST_CASE("validate_case: bundled default case is clean") {
    CaseBundle c = generate_synthetic_case(SyntheticCaseParams{});
    ValidationReport rep = validate_case(c);
    for (const auto& i : rep.issues) MESSAGE(i.code, ": ", i.message);
    CHECK(rep.empty());
}

TEST_CASE("validate_case: injected defects are reported") {
    CaseBundle c = generate_synthetic_case(SyntheticCaseParams{});

    SUBCASE("cycle in the network") {
        c.network.lines[0].parent = c.network.lines[0].bus;
        ValidationReport rep = validate_case(c);
        CHECK(!rep.ok());
        bool found = false;
        for (const auto& i : rep.issues) found = found || i.code == "network.tree";
        CHECK(found);
    }
    SUBCASE("negative load") {
        c.members[3].load_kw[17] = -0.5;
        ValidationReport rep = validate_case(c);
        CHECK(!rep.ok());
        bool found = false;
        for (const auto& i : rep.issues) found = found || i.code == "member.load";
        CHECK(found);
    }
    SUBCASE("ride crossing a block boundary") {
        c.rides[0].dep_period = c.grid.block_boundaries[1] - 4;
        c.rides[0].ret_period = c.grid.block_boundaries[1] + 4;
        ValidationReport rep = validate_case(c);
        CHECK(!rep.ok());
    }
    SUBCASE("import price below export price is only a warning") {
        c.tariffs.export_price[5] = c.tariffs.import_price[5] + 0.01;
        ValidationReport rep = validate_case(c);
        CHECK(rep.ok());
        CHECK(!rep.empty());
    }
}

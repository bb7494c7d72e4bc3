#include <cmath>
#include <map>
#include <sstream>

#include "doctest.h"
#include "ecfleet/model.hpp"

using namespace ecfleet;

namespace {

CaseBundle tiny_case(int T = 8, double load_kw = 5.0, double pv_kw = 0.0, int buses = 2,
                     int fleet_slots = 1, int cs_slots = 1) {
    CaseBundle c;
    c.grid = TimeGrid::make(0.25, T, {0});
    c.network.buses.push_back(0);
    for (int b = 1; b < buses; ++b) {
        c.network.buses.push_back(b);
        c.network.lines.push_back({b, b - 1, 0.1, 0.05, 200.0 * 200.0});
    }
    c.network.transformer_rating_kw = 60.0;
    MemberProfile m;
    m.bus = buses > 1 ? 1 : 0;
    m.load_kw.assign(T, load_kw);
    m.pv_potential_kw.assign(T, pv_kw);
    c.members.push_back(m);
    c.tariffs.import_price.assign(T, 0.151);
    c.tariffs.export_price.assign(T, 0.05);
    c.ev_catalog = {{"Nissan Leaf", 40.0, 11.0, 9784.0, 1814.0},
                    {"Renault Megane", 60.0, 22.0, 32149.0, 2237.0}};
    c.cs_catalog = {{"Low AC", 3.7, 760.0}, {"Medium AC", 11.0, 1800.0}, {"High AC", 22.0, 2300.0}};
    c.fleet_slots = fleet_slots;
    c.cs_slots = cs_slots;
    c.finance.discount_rate = 0.0;
    return c;
}

int count(const ModelInstance& m, RowTag t) {
    auto counts = m.row_counts_by_tag();
    auto it = counts.find(t);
    return it == counts.end() ? 0 : it->second;
}

}  // namespace

TEST_CASE("row and cone counts match the index-set cardinalities") {
    CaseBundle c = tiny_case(/*T=*/8, 5.0, 3.0, /*buses=*/3, /*fleet=*/2, /*cs=*/1);
    c.rides = {{0, 1, 3, 9.7, 0.0}, {1, 2, 4, 8.0, 0.0}, {2, 5, 6, 7.0, 0.0}};
    ScenarioConfig cfg = ScenarioConfig::preset(3);
    ModelInstance m = build_model(c, cfg);

    const int T = 8, B = 3, L = 2, NEV = 2, NCS = 1, R = 3;
    const int pairs = 1;  // rides 0 and 1 overlap, ride 2 is clear
    CHECK(m.cones.size() == L * T);
    CHECK(count(m, RowTag::eq5) == NEV);
    CHECK(count(m, RowTag::eq6) == NCS);
    CHECK(count(m, RowTag::eq7) == R);
    CHECK(count(m, RowTag::eq8) == NEV * R);
    CHECK(count(m, RowTag::eq9) == NEV * pairs);
    CHECK(count(m, RowTag::eq10) == NEV * T);
    CHECK(count(m, RowTag::eq11) == NEV * NCS * T);
    CHECK(count(m, RowTag::eq12) == NEV * T);
    CHECK(count(m, RowTag::eq13) == 4 * NEV * NCS * T);  // V2G on: both signs
    CHECK(count(m, RowTag::eq14) == NCS * T);
    CHECK(count(m, RowTag::eq15) == 2 * NCS * B * T);
    CHECK(count(m, RowTag::eq16) == NEV * T);
    CHECK(count(m, RowTag::eq17) == 2 * NEV * T);
    CHECK(count(m, RowTag::eq18) == NEV * R);
    CHECK(count(m, RowTag::eq19) == NEV * R);
    CHECK(count(m, RowTag::eq20) == (B - 1) * T);
    CHECK(count(m, RowTag::eq21) == T);
    CHECK(count(m, RowTag::eq22) == B * T);
    CHECK(count(m, RowTag::eq23) == B * T);
    CHECK(count(m, RowTag::eq24) == L * T);
    CHECK(count(m, RowTag::eq28) == T);
    CHECK(count(m, RowTag::v2g_cap) == NEV * NCS * T + T);
    CHECK(count(m, RowTag::peak) == 0);

    // scenario 2: no V2G, one-sided power rows, no discharge machinery
    ModelInstance m2 = build_model(c, ScenarioConfig::preset(2));
    CHECK(count(m2, RowTag::eq13) == 2 * NEV * NCS * T);
    CHECK(count(m2, RowTag::v2g_cap) == 0);
    CHECK(!m2.registry.has(VarFamily::ev_discharge));
}

TEST_CASE("scenario flags: V2G bounds and EC-only variable set") {
    CaseBundle c = tiny_case();
    c.rides = {{0, 1, 3, 9.7, 0.0}};

    ModelInstance no_v2g = build_model(c, ScenarioConfig::preset(2));
    const auto& fam = no_v2g.registry.family(VarFamily::ev_power);
    for (int j = fam.offset; j < fam.offset + fam.size; ++j) CHECK(no_v2g.col_lb[j] == 0.0);

    ModelInstance v2g = build_model(c, ScenarioConfig::preset(3));
    const auto& fam3 = v2g.registry.family(VarFamily::ev_power);
    for (int j = fam3.offset; j < fam3.offset + fam3.size; ++j)
        CHECK(v2g.col_lb[j] == doctest::Approx(-22.0));

    BuildOptions ec;
    ec.mode = BuildMode::ec_only;
    ModelInstance m = build_model(c, ScenarioConfig::preset(1), ec);
    CHECK(!m.registry.has(VarFamily::invest_ev));
    CHECK(!m.registry.has(VarFamily::use_ride));
    CHECK(!m.registry.has(VarFamily::ev_power));
    CHECK(m.registry.has(VarFamily::p_inj));
}

TEST_CASE("slack-only mode pins the station location binaries") {
    CaseBundle c = tiny_case(8, 5.0, 0.0, /*buses=*/4);
    ScenarioConfig cfg = ScenarioConfig::preset(3);
    ModelInstance m = build_model(c, cfg);
    int fixed = 0, free = 0;
    const auto& fam = m.registry.family(VarFamily::invest_cs);
    for (int j = fam.offset; j < fam.offset + fam.size; ++j) {
        if (m.col_ub[j] == 0.0) ++fixed;
        else ++free;
    }
    CHECK(free == 3);        // one bus x three devices
    CHECK(fixed == 3 * 3);   // three other buses barred

    cfg.cs_location = CsLocationMode::free_location;
    ModelInstance mf = build_model(c, cfg);
    const auto& famf = mf.registry.family(VarFamily::invest_cs);
    for (int j = famf.offset; j < famf.offset + famf.size; ++j) CHECK(mf.col_ub[j] == 1.0);
}

TEST_CASE("power-rating linearization is exact for every binary combination") {
    // implied |p| interval from the rows must equal the bilinear interval
    // P_k * invest * state for all four {0,1}^2 assignments and each candidate
    CaseBundle c = tiny_case();
    c.rides = {{0, 1, 3, 9.7, 0.0}};
    ScenarioConfig cfg = ScenarioConfig::preset(3);

    for (auto lin : {LinearizationMode::decoupled, LinearizationMode::product}) {
        BuildOptions opts;
        opts.linearization = lin;
        ModelInstance m = build_model(c, cfg, opts);
        const auto& reg = m.registry;
        const int t = 2;
        const int p_col = reg.col(VarFamily::ev_power, {0, 0, t});

        for (size_t k = 0; k < c.ev_catalog.size(); ++k) {
            for (int inv : {0, 1})
                for (int st : {0, 1}) {
                    std::vector<double> x(m.num_cols(), 0.0);
                    x[reg.col(VarFamily::invest_ev, {0, static_cast<int>(k)})] = inv;
                    x[reg.col(VarFamily::ev_state, {0, 0, t})] = st;
                    if (reg.has(VarFamily::link))
                        x[reg.col(VarFamily::link, {0, static_cast<int>(k), 0, t})] = inv * st;

                    double ub = m.col_ub[p_col], lb = m.col_lb[p_col];
                    for (int r = 0; r < m.num_rows(); ++r) {
                        if (m.row_tag[r] != RowTag::eq13) continue;
                        double coef_p = 0.0, rest = 0.0;
                        for (int kk = m.row_ptr[r]; kk < m.row_ptr[r + 1]; ++kk) {
                            if (m.col_idx[kk] == p_col) coef_p = m.vals[kk];
                            else rest += m.vals[kk] * x[m.col_idx[kk]];
                        }
                        if (coef_p == 0.0) continue;
                        if (m.row_hi[r] < kInfinity)
                            ub = std::min(ub, (m.row_hi[r] - rest) / coef_p);
                        if (m.row_lo[r] > -kInfinity)
                            lb = std::max(lb, (m.row_lo[r] - rest) / coef_p);
                    }
                    const double want = c.ev_catalog[k].power_kw * inv * st;
                    CHECK(ub == doctest::Approx(want));
                    CHECK(lb == doctest::Approx(-want));
                }
        }
    }
}

TEST_CASE("reactive injections are fixed at tan(phi) of the load") {
    CaseBundle c = tiny_case(4, 2.0);
    c.members[0].power_factor = 0.8;
    ModelInstance m = build_model(c, ScenarioConfig::preset(2));
    const double S = c.network.base_power_kva;
    for (int t = 0; t < 4; ++t) {
        const int q = m.registry.col(VarFamily::q_inj, {1, t});
        CHECK(m.col_lb[q] == m.col_ub[q]);
        CHECK(m.col_lb[q] * S == doctest::Approx(-0.75 * 2.0));  // tan(acos 0.8) = 0.75
    }
}

TEST_CASE("transformer rating caps the upstream exchange once per period") {
    CaseBundle c = tiny_case();
    ModelInstance m = build_model(c, ScenarioConfig::preset(2));
    int found = 0;
    for (int r = 0; r < m.num_rows(); ++r) {
        if (m.row_tag[r] != RowTag::eq28) continue;
        ++found;
        CHECK(m.row_lo[r] == doctest::Approx(-60.0));
        CHECK(m.row_hi[r] == doctest::Approx(60.0));
        REQUIRE(m.row_ptr[r + 1] - m.row_ptr[r] == 2);  // import minus export
    }
    CHECK(found == c.grid.num_periods);
}

TEST_CASE("objective pieces: annuity, fixed O&M, unserved constant") {
    CaseBundle c = tiny_case();
    c.rides = {{0, 1, 3, 9.7, 0.0}, {1, 5, 6, 5.3, 0.0}};
    ScenarioConfig cfg = ScenarioConfig::preset(2);
    ModelInstance m = build_model(c, cfg);
    const auto& reg = m.registry;
    const double af = c.grid.annualization_factor;

    // leaf at rho=0 over 7 years plus yearly O&M
    CHECK(m.obj[reg.col(VarFamily::invest_ev, {0, 0})] ==
          doctest::Approx(9784.0 / 7.0 + 1814.0));
    CHECK(m.obj[reg.col(VarFamily::invest_cs, {0, 0, 1})] == doctest::Approx(1800.0 / 7.0));

    // refusing everything costs af * pi_uns * total demand (plus the fixed charge)
    CHECK(m.obj_constant ==
          doctest::Approx(af * 2.0 * (9.7 + 5.3) + c.tariffs.fixed_peak_charge));
    // serving ride r removes its unserved cost
    CHECK(m.obj[reg.col(VarFamily::use_ride, {0, 0})] == doctest::Approx(-af * 2.0 * 9.7));
    // effective import price carries the flat volumetric fee
    CHECK(m.obj[reg.col(VarFamily::grid_import, {2})] ==
          doctest::Approx(af * (0.151 + 0.099) * 0.25));
}

TEST_CASE("peak modes create exactly their machinery") {
    CaseBundle c = tiny_case(6, 10.0);

    ModelInstance none = build_model(c, ScenarioConfig::preset(3));
    CHECK(!none.registry.has(VarFamily::peak_coll));
    CHECK(!none.registry.has(VarFamily::import_pos));
    CHECK(count(none, RowTag::peak) == 0);

    ModelInstance coll = build_model(c, ScenarioConfig::preset(5));
    CHECK(coll.registry.has(VarFamily::peak_coll));
    CHECK(count(coll, RowTag::peak) == 6);
    CHECK(coll.obj[coll.registry.col(VarFamily::peak_coll)] == doctest::Approx(59.0));
    // capacity regime drops the volumetric fee to its reduced value
    CHECK(coll.obj[coll.registry.col(VarFamily::grid_import, {0})] ==
          doctest::Approx(c.grid.annualization_factor * (0.151 + 0.064) * 0.25));
    CHECK(coll.obj_constant == doctest::Approx(0.0));  // no analog fixed charge

    ModelInstance ind = build_model(c, ScenarioConfig::preset(4));
    CHECK(ind.registry.has(VarFamily::peak_import));
    CHECK(count(ind, RowTag::peak) == 2 * 2 * 6);  // split + epigraph per bus/period
}

TEST_CASE("SoC recursion starts each block from the invested capacity") {
    CaseBundle c = tiny_case(8);
    c.grid = TimeGrid::make(0.25, 8, {0, 4});  // two blocks
    ModelInstance m = build_model(c, ScenarioConfig::preset(2));
    const auto& reg = m.registry;
    int block_start_rows = 0;
    for (int r = 0; r < m.num_rows(); ++r) {
        if (m.row_tag[r] != RowTag::eq16) continue;
        bool has_capacity_coef = false;
        for (int k = m.row_ptr[r]; k < m.row_ptr[r + 1]; ++k) {
            auto [fam, idx] = reg.locate(m.col_idx[k]);
            if (fam == VarFamily::invest_ev &&
                std::abs(m.vals[k]) == doctest::Approx(c.ev_catalog[idx[1]].capacity_kwh))
                has_capacity_coef = true;
        }
        if (has_capacity_coef) ++block_start_rows;
    }
    CHECK(block_start_rows == 2);  // one per block for the single slot
}

TEST_CASE("stand-alone fleet build needs a residual profile and honors it") {
    CaseBundle c = tiny_case();
    c.rides = {{0, 1, 3, 9.7, 0.0}};
    ScenarioConfig cfg = ScenarioConfig::preset(1);
    BuildOptions opts;
    opts.mode = BuildMode::msp_only;
    CHECK_THROWS_AS(build_model(c, cfg, opts), std::invalid_argument);

    opts.residual_import_kw.assign(c.grid.num_periods, 12.5);
    ModelInstance m = build_model(c, cfg, opts);
    CHECK(!m.registry.has(VarFamily::p_inj));
    CHECK(!m.registry.has(VarFamily::pv_dispatch));
    for (int t = 0; t < c.grid.num_periods; ++t) {
        CHECK(m.col_ub[m.registry.col(VarFamily::grid_import, {t})] == 12.5);
        CHECK(m.col_ub[m.registry.col(VarFamily::grid_export, {t})] == 0.0);
    }
    CHECK(count(m, RowTag::eq21) == c.grid.num_periods);
    CHECK(count(m, RowTag::eq22) == 0);
    CHECK(m.cones.empty());
}

TEST_CASE("model dump lists every row with its tag") {
    CaseBundle c = tiny_case(2);
    ModelInstance m = build_model(c, ScenarioConfig::preset(2));
    std::ostringstream os;
    m.dump(os);
    std::string text = os.str();
    CHECK(text.find("[22]") != std::string::npos);
    CHECK(text.find("[25] cone:") != std::string::npos);
    CHECK(text.find("p_inj[0,0]") != std::string::npos);
    size_t lines = std::count(text.begin(), text.end(), '\n');
    CHECK(lines == static_cast<size_t>(m.num_rows()) + m.cones.size());
}

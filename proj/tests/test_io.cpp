#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "ecfleet/io.hpp"

using namespace ecfleet;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
    fs::path dir = fs::temp_directory_path() / ("ecfleet_io_" + tag + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void patch_file(const fs::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << content;
}

}  // namespace

TEST_CASE("synthetic defaults mirror the bundled study setup") {
    CaseBundle c = generate_synthetic_case(SyntheticCaseParams{});
    CHECK(c.network.buses.size() == 21);
    CHECK(c.grid.num_periods == 2688);  // four weeks of quarter-hours
    CHECK(c.grid.block_boundaries.size() == 4);
    CHECK(c.network.transformer_rating_kw == doctest::Approx(60.0));
    CHECK(c.rides.size() == 88);

    // candidate catalogs, verbatim
    REQUIRE(c.ev_catalog.size() == 2);
    CHECK(c.ev_catalog[0].capacity_kwh == 40.0);
    CHECK(c.ev_catalog[0].power_kw == 11.0);
    CHECK(c.ev_catalog[0].price_eur == 9784.0);
    CHECK(c.ev_catalog[0].fixed_cost_eur_per_year == 1814.0);
    CHECK(c.ev_catalog[1].capacity_kwh == 60.0);
    CHECK(c.ev_catalog[1].power_kw == 22.0);
    CHECK(c.ev_catalog[1].price_eur == 32149.0);
    CHECK(c.ev_catalog[1].fixed_cost_eur_per_year == 2237.0);
    REQUIRE(c.cs_catalog.size() == 3);
    CHECK(c.cs_catalog[0].power_kw == 3.7);
    CHECK(c.cs_catalog[0].price_eur == 760.0);
    CHECK(c.cs_catalog[1].power_kw == 11.0);
    CHECK(c.cs_catalog[1].price_eur == 1800.0);
    CHECK(c.cs_catalog[2].power_kw == 22.0);
    CHECK(c.cs_catalog[2].price_eur == 2300.0);

    CHECK(c.tariffs.away_price == 0.45);
    CHECK(c.tariffs.unserved_price == 2.0);
    CHECK(c.tariffs.volumetric_fee == 0.099);
}

TEST_CASE("synthetic invariants: peak scaling, price level, prosumer count") {
    SyntheticCaseParams p;
    CaseBundle c = generate_synthetic_case(p);

    double peak = 0.0;
    for (int t = 0; t < c.grid.num_periods; ++t) peak = std::max(peak, c.total_load_kw(t));
    CHECK(peak <= p.member_count * p.member_peak_kw * 1.05);
    CHECK(peak >= p.member_count * p.member_peak_kw * 0.95);

    double mean_import = 0.0;
    for (double v : c.tariffs.import_price) mean_import += v + c.tariffs.volumetric_fee;
    mean_import /= c.tariffs.import_price.size();
    CHECK(std::abs(mean_import - 0.25) < 0.02);
    for (int t = 0; t < c.grid.num_periods; ++t)
        CHECK(c.tariffs.import_price[t] >= c.tariffs.export_price[t]);

    int prosumers = 0;
    for (const auto& m : c.members) prosumers += m.is_prosumer() ? 1 : 0;
    CHECK(prosumers == p.prosumer_count);

    // feeder must be able to hit the export cap on sunny days
    double pv_peak = 0.0;
    for (int t = 0; t < c.grid.num_periods; ++t) {
        double s = 0.0;
        for (const auto& m : c.members) s += m.pv_potential_kw[t];
        pv_peak = std::max(pv_peak, s);
    }
    CHECK(pv_peak > c.network.transformer_rating_kw);
}

TEST_CASE("same seed twice gives byte-identical bundles") {
    SyntheticCaseParams p;
    p.seed = 777;
    CaseBundle a = generate_synthetic_case(p);
    CaseBundle b = generate_synthetic_case(p);
    CHECK(case_content_hash(a) == case_content_hash(b));
    CHECK(case_equal(a, b));

    auto da = temp_dir("det_a"), db = temp_dir("det_b");
    save_case(a, da);
    save_case(b, db);
    for (const char* f : {"profiles.csv", "prices.csv", "rides.csv", "network.csv", "case.json"})
        CHECK(slurp(da / f) == slurp(db / f));

    p.seed = 778;
    CHECK(case_content_hash(generate_synthetic_case(p)) != case_content_hash(a));
    fs::remove_all(da);
    fs::remove_all(db);
}

TEST_CASE("save/load round trip is field-for-field") {
    SyntheticCaseParams p;
    p.weeks = 1;
    p.ride_count = 12;
    CaseBundle c = generate_synthetic_case(p);
    auto dir = temp_dir("roundtrip");
    save_case(c, dir);
    CaseBundle back = load_case(dir);
    CHECK(case_equal(c, back));
    CHECK(back.grid.num_periods == c.grid.num_periods);
    CHECK(back.members.size() == c.members.size());
    fs::remove_all(dir);
}

TEST_CASE("loader errors carry file and line context") {
    SyntheticCaseParams p;
    p.weeks = 1;
    p.ride_count = 6;
    CaseBundle c = generate_synthetic_case(p);
    auto dir = temp_dir("errors");
    save_case(c, dir);

    SUBCASE("ride beyond the horizon") {
        patch_file(dir / "rides.csv",
                   "ride_id,dep_period,ret_period,energy_kwh\n0,10,999999,9.5\n");
        CHECK_THROWS_WITH_AS(load_case(dir),
                             doctest::Contains("rides.csv:2"), IoError);
    }
    SUBCASE("price file with a missing row") {
        std::string prices = slurp(dir / "prices.csv");
        prices.erase(prices.rfind('\n', prices.size() - 2) + 1);  // drop the last row
        patch_file(dir / "prices.csv", prices);
        CHECK_THROWS_AS(load_case(dir), IoError);  // profile series no longer match
    }
    SUBCASE("unknown bus in profiles") {
        patch_file(dir / "profiles.csv",
                   "bus_id,period,load_kw,pv_potential_kw\n99,0,1.0,0\n");
        CHECK_THROWS_WITH_AS(load_case(dir), doctest::Contains("unknown bus"), IoError);
    }
    SUBCASE("bad header") {
        patch_file(dir / "network.csv", "a,b,c\n");
        CHECK_THROWS_WITH_AS(load_case(dir), doctest::Contains("expected header"), IoError);
    }
    fs::remove_all(dir);
}

TEST_CASE("scenario presets pin the flags") {
    ScenarioConfig s1 = ScenarioConfig::preset(1);
    CHECK(s1.standalone_pipeline());
    CHECK(!s1.v2g_enabled);
    CHECK(s1.peak_mode == PeakTariffMode::none_fixed);

    ScenarioConfig s3 = ScenarioConfig::preset(3);
    CHECK(s3.v2g_enabled);
    CHECK(s3.cs_location == CsLocationMode::slack_only);
    CHECK(s3.peak_mode == PeakTariffMode::none_fixed);

    CHECK(ScenarioConfig::preset(4).peak_mode == PeakTariffMode::individual);
    ScenarioConfig s5 = ScenarioConfig::preset(5);
    CHECK(s5.peak_mode == PeakTariffMode::collective);
    CHECK(s5.v2g_enabled);
    CHECK_THROWS_AS(ScenarioConfig::preset(9), IoError);
}

TEST_CASE("scenario config parsing and contradictions") {
    auto dir = temp_dir("cfg");

    patch_file(dir / "s3.cfg", "# coordinated with V2G\nscenario=3\nmip_gap=1e-5\nseed=42\n");
    ScenarioConfig c = parse_scenario_config(dir / "s3.cfg");
    CHECK(c.scenario_id == 3);
    CHECK(c.v2g_enabled);
    CHECK(c.solver.mip_gap == 1e-5);
    CHECK(c.seed == 42);

    patch_file(dir / "bad.cfg", "scenario=2\nv2g=true\n");
    CHECK_THROWS_WITH_AS(parse_scenario_config(dir / "bad.cfg"),
                         doctest::Contains("pins v2g"), IoError);

    patch_file(dir / "bad2.cfg", "scenario=1\npeak_mode=individual\n");
    CHECK_THROWS_WITH_AS(parse_scenario_config(dir / "bad2.cfg"),
                         doctest::Contains("pins peak_mode"), IoError);

    patch_file(dir / "bad3.cfg", "scenario=9\n");
    CHECK_THROWS_WITH_AS(parse_scenario_config(dir / "bad3.cfg"),
                         doctest::Contains("unknown scenario"), IoError);

    patch_file(dir / "custom.cfg", "scenario=custom\nv2g=true\ncs_location=free\npeak_mode=collective\n");
    ScenarioConfig cc = parse_scenario_config(dir / "custom.cfg");
    CHECK(cc.scenario_id == 0);
    CHECK(cc.cs_location == CsLocationMode::free_location);

    patch_file(dir / "incomplete.cfg", "scenario=custom\nv2g=true\n");
    CHECK_THROWS_AS(parse_scenario_config(dir / "incomplete.cfg"), IoError);

    // overrides win over file values
    ScenarioConfig o = parse_scenario_config(dir / "s3.cfg", {{"mip_gap", "1e-3"}});
    CHECK(o.solver.mip_gap == 1e-3);

    // free-location variant of scenario 3 is allowed, of scenario 1 is not
    ScenarioConfig f = parse_scenario_config(dir / "s3.cfg", {{"cs_location", "free"}});
    CHECK(f.cs_location == CsLocationMode::free_location);
    CHECK_THROWS_AS(parse_scenario_config(dir / "s3.cfg", {{"scenario", "1"},
                                                           {"cs_location", "free"}}),
                    IoError);
    fs::remove_all(dir);
}

TEST_CASE("rides never cross representative-block boundaries") {
    for (uint64_t seed : {1ULL, 5ULL, 99ULL}) {
        SyntheticCaseParams p;
        p.seed = seed;
        p.weeks = 3;
        p.days_per_block = 2;
        p.ride_count = 40;
        CaseBundle c = generate_synthetic_case(p);
        for (const auto& r : c.rides)
            CHECK(c.grid.block_of(r.dep_period) == c.grid.block_of(r.ret_period));
    }
}

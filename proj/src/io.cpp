#include "ecfleet/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

namespace ecfleet {

namespace {

using nlohmann::json;

// ---- formatting ----------------------------------------------------------

std::string dtos(double v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, end);
}

double parse_double(const std::string& s, const std::string& where) {
    try {
        size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw IoError(where + ": cannot parse number '" + s + "'");
    }
}

long parse_long(const std::string& s, const std::string& where) {
    try {
        size_t pos = 0;
        long v = std::stol(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw IoError(where + ": cannot parse integer '" + s + "'");
    }
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

// ---- tiny CSV reader -------------------------------------------------------

struct CsvFile {
    std::string path;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;  // trimmed cells
    std::vector<int> line_numbers;

    std::string where(size_t row) const {
        return path + ":" + std::to_string(line_numbers[row]);
    }
};

CsvFile read_csv(const std::filesystem::path& path, const std::vector<std::string>& expected_header) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    CsvFile f;
    f.path = path.string();
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::vector<std::string> cells;
        std::stringstream ss(t);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
        if (!t.empty() && t.back() == ',') cells.push_back("");
        if (f.header.empty()) {
            f.header = cells;
            if (f.header != expected_header) {
                std::string want;
                for (const auto& h : expected_header) want += (want.empty() ? "" : ",") + h;
                throw IoError(f.path + ":" + std::to_string(lineno) + ": expected header '" + want +
                              "'");
            }
            continue;
        }
        if (cells.size() != expected_header.size())
            throw IoError(f.path + ":" + std::to_string(lineno) + ": expected " +
                          std::to_string(expected_header.size()) + " columns, found " +
                          std::to_string(cells.size()));
        f.rows.push_back(std::move(cells));
        f.line_numbers.push_back(lineno);
    }
    if (f.header.empty()) throw IoError(path.string() + ": file is empty");
    return f;
}

// ---- defaults (bundled candidate catalogs and study parameters) ------------

std::vector<EvCandidate> default_ev_catalog() {
    return {
        {"Nissan Leaf", 40.0, 11.0, 9784.0, 1814.0},
        {"Renault Megane", 60.0, 22.0, 32149.0, 2237.0},
    };
}

std::vector<CsCandidate> default_cs_catalog() {
    return {
        {"Low AC", 3.7, 760.0},
        {"Medium AC", 11.0, 1800.0},
        {"High AC", 22.0, 2300.0},
    };
}

// ---- deterministic RNG (kept library-free so bundles are portable) ---------

struct Rng {
    uint64_t state;

    explicit Rng(uint64_t seed) : state(seed ^ 0x9e3779b97f4a7c15ULL) {}

    uint64_t next() {  // splitmix64
        uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    double uniform() { return std::ldexp(static_cast<double>(next() >> 11), -53); }
    double uniform(double a, double b) { return a + (b - a) * uniform(); }
    double normal() {
        // Box-Muller, no cache so the stream stays position-independent
        double u1 = std::max(uniform(), 1e-16);
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }
    int uniform_int(int a, int b) {  // inclusive
        return a + static_cast<int>(next() % static_cast<uint64_t>(b - a + 1));
    }
};

double gauss_bump(double x, double mu, double sigma) {
    double d = (x - mu) / sigma;
    return std::exp(-d * d);
}

// ---- scenario config helpers -----------------------------------------------

struct PresetFlags {
    bool v2g;
    PeakTariffMode peak;
};

PresetFlags preset_flags(int id) {
    switch (id) {
        case 1: return {false, PeakTariffMode::none_fixed};
        case 2: return {false, PeakTariffMode::none_fixed};
        case 3: return {true, PeakTariffMode::none_fixed};
        case 4: return {true, PeakTariffMode::individual};
        case 5: return {true, PeakTariffMode::collective};
        default: throw IoError("unknown scenario id " + std::to_string(id));
    }
}

bool parse_bool(const std::string& v, const std::string& where) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw IoError(where + ": expected a boolean, got '" + v + "'");
}

PeakTariffMode parse_peak_mode(const std::string& v, const std::string& where) {
    if (v == "none_fixed") return PeakTariffMode::none_fixed;
    if (v == "individual") return PeakTariffMode::individual;
    if (v == "collective") return PeakTariffMode::collective;
    throw IoError(where + ": unknown peak mode '" + v + "'");
}

CsLocationMode parse_cs_location(const std::string& v, const std::string& where) {
    if (v == "slack_only") return CsLocationMode::slack_only;
    if (v == "free") return CsLocationMode::free_location;
    throw IoError(where + ": unknown cs location mode '" + v + "'");
}

// ---- hashing ----------------------------------------------------------------

uint64_t fnv1a(const std::string& s, uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

std::string to_string(CsLocationMode m) {
    return m == CsLocationMode::slack_only ? "slack_only" : "free";
}

std::string to_string(PeakTariffMode m) {
    switch (m) {
        case PeakTariffMode::none_fixed: return "none_fixed";
        case PeakTariffMode::individual: return "individual";
        default: return "collective";
    }
}

ScenarioConfig ScenarioConfig::preset(int scenario_id) {
    PresetFlags f = preset_flags(scenario_id);
    ScenarioConfig c;
    c.scenario_id = scenario_id;
    c.v2g_enabled = f.v2g;
    c.peak_mode = f.peak;
    c.cs_location = CsLocationMode::slack_only;
    return c;
}

std::string ScenarioConfig::label() const {
    std::string s = scenario_id == 0 ? "custom" : "S" + std::to_string(scenario_id);
    if (cs_location == CsLocationMode::free_location) s += "+free";
    return s;
}

ScenarioConfig resolve_scenario_config(const std::map<std::string, std::string>& values,
                                       const std::string& origin) {
    auto get = [&](const std::string& key) -> std::optional<std::string> {
        auto it = values.find(key);
        if (it == values.end()) return std::nullopt;
        return it->second;
    };
    static const std::set<std::string> known = {
        "scenario", "v2g",        "cs_location",  "peak_mode", "backend", "mip_gap",
        "time_limit_s", "cone_tol", "max_oa_iters", "case_dir",  "seed"};
    for (const auto& [k, _] : values) {
        if (!known.count(k)) throw IoError(origin + ": unknown key '" + k + "'");
    }

    ScenarioConfig cfg;
    auto scen = get("scenario");
    if (!scen) throw IoError(origin + ": missing 'scenario'");
    if (*scen == "custom") {
        cfg.scenario_id = 0;
        auto v2g = get("v2g");
        auto loc = get("cs_location");
        auto peak = get("peak_mode");
        if (!v2g || !loc || !peak)
            throw IoError(origin + ": custom scenario requires v2g, cs_location and peak_mode");
        cfg.v2g_enabled = parse_bool(*v2g, origin);
        cfg.cs_location = parse_cs_location(*loc, origin);
        cfg.peak_mode = parse_peak_mode(*peak, origin);
    } else {
        long id = parse_long(*scen, origin);
        if (id < 1 || id > 5) throw IoError(origin + ": unknown scenario id " + *scen);
        cfg = ScenarioConfig::preset(static_cast<int>(id));
        if (auto v2g = get("v2g")) {
            bool v = parse_bool(*v2g, origin);
            if (v != cfg.v2g_enabled)
                throw IoError(origin + ": scenario " + *scen + " pins v2g=" +
                              (cfg.v2g_enabled ? "true" : "false") + ", conflicting override");
        }
        if (auto peak = get("peak_mode")) {
            PeakTariffMode m = parse_peak_mode(*peak, origin);
            if (m != cfg.peak_mode)
                throw IoError(origin + ": scenario " + *scen + " pins peak_mode=" +
                              to_string(cfg.peak_mode) + ", conflicting override");
        }
        if (auto loc = get("cs_location")) {
            CsLocationMode m = parse_cs_location(*loc, origin);
            if (cfg.scenario_id == 1 && m == CsLocationMode::free_location)
                throw IoError(origin +
                              ": scenario 1 fixes the stand-alone stations at the slack node");
            cfg.cs_location = m;
        }
    }
    if (auto v = get("backend")) cfg.solver.backend = *v;
    if (auto v = get("mip_gap")) cfg.solver.mip_gap = parse_double(*v, origin);
    if (auto v = get("time_limit_s")) cfg.solver.time_limit_s = parse_double(*v, origin);
    if (auto v = get("cone_tol")) cfg.solver.cone_tol = parse_double(*v, origin);
    if (auto v = get("max_oa_iters"))
        cfg.solver.max_oa_iters = static_cast<int>(parse_long(*v, origin));
    if (auto v = get("case_dir")) cfg.case_dir = *v;
    if (auto v = get("seed")) cfg.seed = static_cast<uint64_t>(parse_long(*v, origin));
    return cfg;
}

ScenarioConfig parse_scenario_config(const std::filesystem::path& path,
                                     const std::map<std::string, std::string>& overrides) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::map<std::string, std::string> values;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        auto eq = t.find('=');
        if (eq == std::string::npos)
            throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected key=value");
        values[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
    }
    for (const auto& [k, v] : overrides) values[k] = v;
    return resolve_scenario_config(values, path.string());
}

// ---- synthetic case ----------------------------------------------------------

CaseBundle generate_synthetic_case(const SyntheticCaseParams& p) {
    if (p.member_count < 1) throw std::invalid_argument("member_count must be >= 1");
    if (p.prosumer_count > p.member_count)
        throw std::invalid_argument("prosumer_count must be <= member_count");
    CaseBundle c;

    const int periods_per_day = 96;
    const int T = p.weeks * p.days_per_block * periods_per_day;
    std::vector<Period> blocks;
    for (int w = 0; w < p.weeks; ++w) blocks.push_back(w * p.days_per_block * periods_per_day);
    c.grid = TimeGrid::make(0.25, T, blocks);

    // radial feeder: up to 4 chains hanging off the slack, 40 m spans of
    // 150 mm^2 Al cable (0.206 ohm/km, 0.080 ohm/km, 230 A)
    const int branches = std::min(4, p.member_count);
    c.network.buses.push_back(0);
    for (int b = 1; b <= p.member_count; ++b) {
        c.network.buses.push_back(b);
        Line l;
        l.bus = b;
        l.parent = (b - branches >= 1) ? b - branches : 0;
        l.r_ohm = 0.206 * 0.040;
        l.x_ohm = 0.080 * 0.040;
        l.amp_limit_sqr = 230.0 * 230.0;
        c.network.lines.push_back(l);
    }
    c.network.transformer_rating_kw = 1.2 * p.member_count * p.member_peak_kw;
    c.network.base_voltage_v = 400.0;
    c.network.base_power_kva = 100.0;

    Rng rng(p.seed);

    // household loads: diurnal shape, per-member scale, quarter-hour noise,
    // then a global rescale pinning the coordinated peak
    std::vector<double> member_scale(p.member_count);
    for (auto& s : member_scale) s = rng.uniform(0.6, 1.4);
    std::vector<double> block_load_factor(p.weeks);
    for (auto& f : block_load_factor) f = rng.uniform(0.85, 1.15);

    c.members.resize(p.member_count);
    for (int m = 0; m < p.member_count; ++m) {
        auto& mem = c.members[m];
        mem.bus = m + 1;
        mem.power_factor = 0.8;
        mem.load_kw.resize(T);
        mem.pv_potential_kw.assign(T, 0.0);
        for (int t = 0; t < T; ++t) {
            double h = (t % periods_per_day) / 4.0;
            double shape = 0.22 + 0.38 * gauss_bump(h, 7.8, 1.8) + 0.95 * gauss_bump(h, 19.0, 2.6);
            double noise = std::max(0.08, 1.0 + 0.28 * rng.normal());
            mem.load_kw[t] = shape * member_scale[m] * block_load_factor[c.grid.block_of(t)] * noise;
        }
    }
    double peak = 0.0;
    for (int t = 0; t < T; ++t) {
        double s = 0.0;
        for (const auto& mem : c.members) s += mem.load_kw[t];
        peak = std::max(peak, s);
    }
    const double load_scale = p.member_count * p.member_peak_kw / peak;
    for (auto& mem : c.members)
        for (auto& v : mem.load_kw) v *= load_scale;

    // PV on the first prosumer_count buses (round-robin over branches by id)
    std::vector<double> kwp(p.prosumer_count);
    for (auto& k : kwp) k = rng.uniform(9.5, 12.5);
    std::vector<double> block_sun(p.weeks);
    for (auto& f : block_sun) f = rng.uniform(0.8, 1.05);
    const int days = p.weeks * p.days_per_block;
    std::vector<double> day_clearness(days);
    for (auto& f : day_clearness) f = std::pow(rng.uniform(0.45, 1.0), 0.6);
    for (int m = 0; m < p.prosumer_count; ++m) {
        auto& mem = c.members[m];
        for (int t = 0; t < T; ++t) {
            double h = (t % periods_per_day) / 4.0;
            double bell = 0.0;
            if (std::abs(h - 13.0) < 6.5)
                bell = std::pow(std::cos((h - 13.0) / 6.5 * 1.5707963267948966), 1.3);
            double noise = 1.0 - 0.15 * rng.uniform();
            mem.pv_potential_kw[t] =
                kwp[m] * bell * block_sun[c.grid.block_of(t)] * day_clearness[t / periods_per_day] * noise;
        }
    }

    // day-ahead style hourly prices: reflected random walk plus diurnal bumps,
    // shifted so the mean effective import (energy + flat grid fee) is 0.25
    const int hours = T / 4;
    std::vector<double> base(hours);
    double walk = 0.10;
    for (int hh = 0; hh < hours; ++hh) {
        walk += p.price_volatility * rng.normal();
        walk = std::clamp(walk, 0.015, 0.26);
        double hod = hh % 24;
        base[hh] = walk + 0.035 * gauss_bump(hod, 19.0, 2.5) + 0.02 * gauss_bump(hod, 8.0, 2.0) -
                   0.025 * gauss_bump(hod, 13.5, 2.5);
    }
    double mean = 0.0;
    for (double b : base) mean += b;
    mean /= hours;
    const double target_energy_mean = 0.25 - 0.099 - 0.045;
    for (double& b : base) b = std::clamp(b + (target_energy_mean - mean), 0.02, 0.27);
    c.tariffs.import_price.resize(T);
    c.tariffs.export_price.resize(T);
    for (int t = 0; t < T; ++t) {
        double b = base[t / 4];
        c.tariffs.import_price[t] = b + 0.045;
        c.tariffs.export_price[t] = std::max(0.005, b - 0.015);
    }

    // commute-style rides, never crossing a block boundary
    struct Template {
        double dep_h, dep_jitter_h, dur_h, dur_jitter_h;
    };
    const Template templates[] = {
        {7.5, 1.5, 2.0, 2.0},    // morning
        {12.5, 1.5, 2.0, 2.5},   // afternoon
        {17.0, 1.5, 2.5, 3.0},   // evening
    };
    c.rides.reserve(p.ride_count);
    for (int r = 0; r < p.ride_count; ++r) {
        int day = r % days;
        const Template& tp = templates[(r / days + r) % 3];
        int dep = day * periods_per_day +
                  static_cast<int>(std::lround((tp.dep_h + rng.uniform(0.0, tp.dep_jitter_h)) * 4.0));
        int dur = std::max(1, static_cast<int>(std::lround(
                                  (tp.dur_h + rng.uniform(0.0, tp.dur_jitter_h)) * 4.0)));
        int block = c.grid.block_of(dep);
        int block_end = (block + 1 < static_cast<int>(blocks.size())) ? blocks[block + 1] - 1 : T - 1;
        int ret = std::min(dep + dur, block_end);
        RideRequest ride;
        ride.id = r;
        ride.dep_period = dep;
        ride.ret_period = ret;
        ride.energy_kwh = std::clamp(9.7 + 3.2 * rng.normal(), 3.0, 18.0);
        c.rides.push_back(ride);
    }
    std::sort(c.rides.begin(), c.rides.end(), [](const RideRequest& a, const RideRequest& b) {
        return a.dep_period < b.dep_period || (a.dep_period == b.dep_period && a.id < b.id);
    });

    c.ev_catalog = default_ev_catalog();
    c.cs_catalog = default_cs_catalog();
    c.fleet_slots = p.fleet_slots;
    c.cs_slots = p.cs_slots;
    c.away_rating_kw = 11.0;
    c.finance = FinanceParams{};
    return c;
}

// ---- save / load ---------------------------------------------------------------

namespace {

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << content;
}

std::string profiles_csv(const CaseBundle& c) {
    std::string s = "bus_id,period,load_kw,pv_potential_kw\n";
    for (const auto& m : c.members)
        for (int t = 0; t < c.grid.num_periods; ++t)
            s += std::to_string(m.bus) + "," + std::to_string(t) + "," + dtos(m.load_kw[t]) + "," +
                 dtos(m.pv_potential_kw[t]) + "\n";
    return s;
}

std::string prices_csv(const CaseBundle& c) {
    std::string s = "period,import_eur_per_kwh,export_eur_per_kwh\n";
    for (int t = 0; t < c.grid.num_periods; ++t)
        s += std::to_string(t) + "," + dtos(c.tariffs.import_price[t]) + "," +
             dtos(c.tariffs.export_price[t]) + "\n";
    return s;
}

std::string rides_csv(const CaseBundle& c) {
    std::string s = "ride_id,dep_period,ret_period,energy_kwh\n";
    for (const auto& r : c.rides)
        s += std::to_string(r.id) + "," + std::to_string(r.dep_period) + "," +
             std::to_string(r.ret_period) + "," + dtos(r.energy_kwh) + "\n";
    return s;
}

std::string network_csv(const CaseBundle& c) {
    std::string s = "bus_id,parent_id,r_ohm,x_ohm,amp_limit\n";
    s += "0,,,,\n";
    for (const auto& l : c.network.lines)
        s += std::to_string(l.bus) + "," + std::to_string(l.parent) + "," + dtos(l.r_ohm) + "," +
             dtos(l.x_ohm) + "," + dtos(std::sqrt(l.amp_limit_sqr)) + "\n";
    return s;
}

json meta_json(const CaseBundle& c) {
    json j;
    j["grid"] = {{"step_hours", c.grid.step_hours},
                 {"block_boundaries", c.grid.block_boundaries}};
    j["network"] = {{"v_min_sqr", c.network.v_min_sqr},
                    {"v_max_sqr", c.network.v_max_sqr},
                    {"transformer_rating_kw", c.network.transformer_rating_kw},
                    {"base_voltage_v", c.network.base_voltage_v},
                    {"base_power_kva", c.network.base_power_kva}};
    j["tariffs"] = {{"away_price", c.tariffs.away_price},
                    {"unserved_price", c.tariffs.unserved_price},
                    {"grid_fee_mode",
                     c.tariffs.grid_fee_mode == GridFeeMode::volumetric_flat ? "volumetric_flat"
                                                                             : "capacity_based"},
                    {"volumetric_fee", c.tariffs.volumetric_fee},
                    {"capacity_volumetric_fee", c.tariffs.capacity_volumetric_fee},
                    {"peak_fee", c.tariffs.peak_fee},
                    {"fixed_peak_charge", c.tariffs.fixed_peak_charge}};
    j["ev_catalog"] = json::array();
    for (const auto& k : c.ev_catalog)
        j["ev_catalog"].push_back({{"name", k.name},
                                   {"capacity_kwh", k.capacity_kwh},
                                   {"power_kw", k.power_kw},
                                   {"price_eur", k.price_eur},
                                   {"fixed_cost_eur_per_year", k.fixed_cost_eur_per_year}});
    j["cs_catalog"] = json::array();
    for (const auto& k : c.cs_catalog)
        j["cs_catalog"].push_back(
            {{"name", k.name}, {"power_kw", k.power_kw}, {"price_eur", k.price_eur}});
    j["fleet_slots"] = c.fleet_slots;
    j["cs_slots"] = c.cs_slots;
    j["away_rating_kw"] = c.away_rating_kw;
    j["finance"] = {{"discount_rate", c.finance.discount_rate},
                    {"horizon_years", c.finance.horizon_years},
                    {"soc_floor", c.finance.soc_floor},
                    {"soc_departure", c.finance.soc_departure}};
    json pf = json::object();
    for (const auto& m : c.members)
        if (m.power_factor != 0.8) pf[std::to_string(m.bus)] = m.power_factor;
    j["power_factor_overrides"] = pf;
    return j;
}

}  // namespace

void save_case(const CaseBundle& c, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_file(dir / "profiles.csv", profiles_csv(c));
    write_file(dir / "prices.csv", prices_csv(c));
    write_file(dir / "rides.csv", rides_csv(c));
    write_file(dir / "network.csv", network_csv(c));
    write_file(dir / "case.json", meta_json(c).dump(2) + "\n");
}

CaseBundle load_case(const std::filesystem::path& dir) {
    return load_case(dir / "profiles.csv", dir / "prices.csv", dir / "rides.csv",
                     dir / "network.csv", dir / "case.json");
}

CaseBundle load_case(const std::filesystem::path& profiles, const std::filesystem::path& prices,
                     const std::filesystem::path& rides, const std::filesystem::path& network,
                     const std::filesystem::path& meta) {
    CaseBundle c;

    // meta first: defaults apply when the file is absent
    json j = json::object();
    if (!meta.empty() && std::filesystem::exists(meta)) {
        std::ifstream in(meta);
        try {
            in >> j;
        } catch (const std::exception& e) {
            throw IoError(meta.string() + ": " + e.what());
        }
    }
    double step_hours = j.value("grid", json::object()).value("step_hours", 0.25);
    std::vector<Period> blocks =
        j.value("grid", json::object()).value("block_boundaries", std::vector<Period>{0});

    auto jn = j.value("network", json::object());
    c.network.v_min_sqr = jn.value("v_min_sqr", 0.81);
    c.network.v_max_sqr = jn.value("v_max_sqr", 1.21);
    c.network.transformer_rating_kw = jn.value("transformer_rating_kw", 60.0);
    c.network.base_voltage_v = jn.value("base_voltage_v", 400.0);
    c.network.base_power_kva = jn.value("base_power_kva", 100.0);

    auto jt = j.value("tariffs", json::object());
    c.tariffs.away_price = jt.value("away_price", 0.45);
    c.tariffs.unserved_price = jt.value("unserved_price", 2.0);
    c.tariffs.grid_fee_mode = jt.value("grid_fee_mode", std::string("volumetric_flat")) ==
                                      std::string("capacity_based")
                                  ? GridFeeMode::capacity_based
                                  : GridFeeMode::volumetric_flat;
    c.tariffs.volumetric_fee = jt.value("volumetric_fee", 0.099);
    c.tariffs.capacity_volumetric_fee = jt.value("capacity_volumetric_fee", 0.064);
    c.tariffs.peak_fee = jt.value("peak_fee", 59.0);
    c.tariffs.fixed_peak_charge = jt.value("fixed_peak_charge", 3108.0);

    if (j.contains("ev_catalog")) {
        for (const auto& e : j["ev_catalog"])
            c.ev_catalog.push_back({e.value("name", std::string("EV")), e.value("capacity_kwh", 0.0),
                                    e.value("power_kw", 0.0), e.value("price_eur", 0.0),
                                    e.value("fixed_cost_eur_per_year", 0.0)});
    } else {
        c.ev_catalog = default_ev_catalog();
    }
    if (j.contains("cs_catalog")) {
        for (const auto& e : j["cs_catalog"])
            c.cs_catalog.push_back({e.value("name", std::string("CS")), e.value("power_kw", 0.0),
                                    e.value("price_eur", 0.0)});
    } else {
        c.cs_catalog = default_cs_catalog();
    }
    c.fleet_slots = j.value("fleet_slots", 3);
    c.cs_slots = j.value("cs_slots", 2);
    c.away_rating_kw = j.value("away_rating_kw", 11.0);
    auto jf = j.value("finance", json::object());
    c.finance.discount_rate = jf.value("discount_rate", 0.05);
    c.finance.horizon_years = jf.value("horizon_years", 7);
    c.finance.soc_floor = jf.value("soc_floor", 0.10);
    c.finance.soc_departure = jf.value("soc_departure", 0.80);

    // network.csv
    CsvFile nf = read_csv(network, {"bus_id", "parent_id", "r_ohm", "x_ohm", "amp_limit"});
    for (size_t i = 0; i < nf.rows.size(); ++i) {
        const auto& row = nf.rows[i];
        BusId bus = static_cast<BusId>(parse_long(row[0], nf.where(i)));
        c.network.buses.push_back(bus);
        if (row[1].empty()) {
            if (bus != 0) throw IoError(nf.where(i) + ": only the slack bus 0 may omit its parent");
            continue;
        }
        Line l;
        l.bus = bus;
        l.parent = static_cast<BusId>(parse_long(row[1], nf.where(i)));
        l.r_ohm = parse_double(row[2], nf.where(i));
        l.x_ohm = parse_double(row[3], nf.where(i));
        double amp = parse_double(row[4], nf.where(i));
        l.amp_limit_sqr = amp * amp;
        c.network.lines.push_back(l);
    }

    // prices.csv defines the horizon length
    CsvFile pf = read_csv(prices, {"period", "import_eur_per_kwh", "export_eur_per_kwh"});
    const int T = static_cast<int>(pf.rows.size());
    c.tariffs.import_price.resize(T);
    c.tariffs.export_price.resize(T);
    std::vector<bool> seen(T, false);
    for (size_t i = 0; i < pf.rows.size(); ++i) {
        long t = parse_long(pf.rows[i][0], pf.where(i));
        if (t < 0 || t >= T || seen[t])
            throw IoError(pf.where(i) + ": periods must cover 0.." + std::to_string(T - 1) +
                          " exactly once (is a row missing?)");
        seen[t] = true;
        c.tariffs.import_price[t] = parse_double(pf.rows[i][1], pf.where(i));
        c.tariffs.export_price[t] = parse_double(pf.rows[i][2], pf.where(i));
    }
    c.grid = TimeGrid::make(step_hours, T, blocks);

    // profiles.csv: every member bus needs a full series
    CsvFile prof = read_csv(profiles, {"bus_id", "period", "load_kw", "pv_potential_kw"});
    std::map<BusId, MemberProfile> members;
    std::map<BusId, int> rows_per_bus;
    for (size_t i = 0; i < prof.rows.size(); ++i) {
        BusId bus = static_cast<BusId>(parse_long(prof.rows[i][0], prof.where(i)));
        long t = parse_long(prof.rows[i][1], prof.where(i));
        if (!c.network.has_bus(bus))
            throw IoError(prof.where(i) + ": unknown bus " + std::to_string(bus));
        if (t < 0 || t >= T)
            throw IoError(prof.where(i) + ": period " + std::to_string(t) +
                          " outside the horizon of " + std::to_string(T) + " periods");
        auto& m = members[bus];
        if (m.load_kw.empty()) {
            m.bus = bus;
            m.load_kw.assign(T, 0.0);
            m.pv_potential_kw.assign(T, 0.0);
        }
        m.load_kw[t] = parse_double(prof.rows[i][2], prof.where(i));
        m.pv_potential_kw[t] = parse_double(prof.rows[i][3], prof.where(i));
        rows_per_bus[bus]++;
    }
    for (const auto& [bus, n] : rows_per_bus) {
        if (n != T)
            throw IoError(profiles.string() + ": bus " + std::to_string(bus) + " has " +
                          std::to_string(n) + " rows, expected " + std::to_string(T));
    }
    for (auto& [bus, m] : members) {
        auto pfo = j.value("power_factor_overrides", json::object());
        auto key = std::to_string(bus);
        if (pfo.contains(key)) m.power_factor = pfo[key].get<double>();
        c.members.push_back(std::move(m));
    }

    // rides.csv
    CsvFile rf = read_csv(rides, {"ride_id", "dep_period", "ret_period", "energy_kwh"});
    for (size_t i = 0; i < rf.rows.size(); ++i) {
        RideRequest r;
        r.id = static_cast<int>(parse_long(rf.rows[i][0], rf.where(i)));
        r.dep_period = static_cast<Period>(parse_long(rf.rows[i][1], rf.where(i)));
        r.ret_period = static_cast<Period>(parse_long(rf.rows[i][2], rf.where(i)));
        r.energy_kwh = parse_double(rf.rows[i][3], rf.where(i));
        if (r.dep_period < 0 || r.ret_period >= T)
            throw IoError(rf.where(i) + ": ride window [" + std::to_string(r.dep_period) + "," +
                          std::to_string(r.ret_period) + "] outside the horizon of " +
                          std::to_string(T) + " periods");
        c.rides.push_back(r);
    }

    ValidationReport rep = validate_case(c);
    if (!rep.ok()) {
        std::string msg = "case failed validation:";
        for (const auto& m : rep.error_messages()) msg += "\n  - " + m;
        throw IoError(msg);
    }
    return c;
}

bool case_equal(const CaseBundle& a, const CaseBundle& b) {
    return case_content_hash(a) == case_content_hash(b);
}

uint64_t case_content_hash(const CaseBundle& c) {
    uint64_t h = fnv1a(profiles_csv(c));
    h = fnv1a(prices_csv(c), h);
    h = fnv1a(rides_csv(c), h);
    h = fnv1a(network_csv(c), h);
    h = fnv1a(meta_json(c).dump(), h);
    return h;
}

uint64_t config_hash(const ScenarioConfig& cfg) {
    std::string s = std::to_string(cfg.scenario_id) + "|" + (cfg.v2g_enabled ? "1" : "0") + "|" +
                    to_string(cfg.cs_location) + "|" + to_string(cfg.peak_mode) + "|" +
                    cfg.solver.backend + "|" + dtos(cfg.solver.mip_gap) + "|" +
                    dtos(cfg.solver.time_limit_s) + "|" + dtos(cfg.solver.cone_tol) + "|" +
                    std::to_string(cfg.solver.max_oa_iters) + "|" + std::to_string(cfg.seed);
    return fnv1a(s);
}

}  // namespace ecfleet

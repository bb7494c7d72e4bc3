#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

#include "ecfleet/domain.hpp"

namespace ecfleet {

/// Loader/parser failure with file and line context.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class CsLocationMode { slack_only, free_location };
enum class PeakTariffMode { none_fixed, individual, collective };

struct SolverOptions {
    std::string backend;  // empty = ECFLEET_BACKEND env var, falling back to "highs"
    double mip_gap = 1e-4;
    double time_limit_s = 0.0;  // 0 = no limit
    double cone_tol = 1e-6;
    int max_oa_iters = 50;
    bool presolve = true;
};

/// Resolved run configuration. Presets 1-5 pin the flags; scenario_id 0 is
/// "custom" and requires every flag to be explicit.
struct ScenarioConfig {
    int scenario_id = 0;
    bool v2g_enabled = false;
    CsLocationMode cs_location = CsLocationMode::slack_only;
    PeakTariffMode peak_mode = PeakTariffMode::none_fixed;
    SolverOptions solver;
    std::string case_dir;
    uint64_t seed = 0;

    static ScenarioConfig preset(int scenario_id);
    /// True when the scenario runs the stand-alone EC + MSP pipeline instead
    /// of the coordinated problem.
    bool standalone_pipeline() const { return scenario_id == 1; }
    std::string label() const;
};

/// Parse a key=value scenario file ('#' starts a comment). Overrides are
/// applied on top (CLI flags win over file values). Throws IoError on unknown
/// keys, unknown scenario ids, or preset contradictions.
ScenarioConfig parse_scenario_config(const std::filesystem::path& path,
                                     const std::map<std::string, std::string>& overrides = {});
ScenarioConfig resolve_scenario_config(const std::map<std::string, std::string>& values,
                                       const std::string& origin = "<config>");

struct SyntheticCaseParams {
    int member_count = 20;
    int prosumer_count = 10;
    int ride_count = 88;
    int weeks = 4;           // number of representative blocks
    int days_per_block = 7;  // block length
    uint64_t seed = 1;
    double price_volatility = 0.012;   // EUR/kWh hourly random-walk step
    double member_peak_kw = 2.5;       // coordinated peak target per member
    int fleet_slots = 3;
    int cs_slots = 2;
};

/// Deterministic synthetic case mimicking the bundled study setup: a 21-bus
/// radial feeder (for 20 members), catalog tables, dynamic prices, and
/// commute-style ride requests. Same seed, same bundle, byte for byte.
CaseBundle generate_synthetic_case(const SyntheticCaseParams& params);

/// Load a case from a directory containing profiles.csv, prices.csv,
/// rides.csv, network.csv, and optionally case.json (falls back to the
/// default catalogs/parameters when absent).
CaseBundle load_case(const std::filesystem::path& dir);
CaseBundle load_case(const std::filesystem::path& profiles, const std::filesystem::path& prices,
                     const std::filesystem::path& rides, const std::filesystem::path& network,
                     const std::filesystem::path& meta = {});

/// Write the full bundle (4 CSV schemas + case.json) into dir.
void save_case(const CaseBundle& bundle, const std::filesystem::path& dir);

bool case_equal(const CaseBundle& a, const CaseBundle& b);

/// FNV-1a over the canonical serialized form; used to stamp results.
uint64_t case_content_hash(const CaseBundle& bundle);
uint64_t config_hash(const ScenarioConfig& config);

std::string to_string(CsLocationMode m);
std::string to_string(PeakTariffMode m);

}  // namespace ecfleet

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ecfleet/oracle.hpp"
#include "ecfleet/scenario.hpp"

namespace ecfleet {

/// Same layout as compare_scenarios but accepts a single record.
ComparisonTable kpi_table(const std::vector<KpiRecord>& records);

/// Render records as a sectioned table; format is "md" or "csv". CSV carries
/// full-precision numbers (loss-free). with_deltas adds percent deltas against
/// the first column in markdown mode.
std::string emit_report(const std::vector<KpiRecord>& records, const std::string& format,
                        bool with_deltas = false);

/// One JSON document per scenario (KPIs, investment decisions, config hash,
/// and the full variable values per run so results can be audited later) plus
/// per-run CSV time series of the slack exchange, SoC, and station power.
void save_scenario_result(const ScenarioResult& result, const CaseBundle& c,
                          const std::filesystem::path& out_dir);

struct StoredRun {
    std::string name;
    ScenarioConfig cfg;
    BuildMode mode = BuildMode::coordinated;
    std::vector<double> residual_import_kw;
    Solution solution;
    std::vector<std::pair<std::string, std::vector<double>>> values;  // per family
};

struct StoredResult {
    ScenarioConfig cfg;
    KpiRecord combined;
    std::vector<StoredRun> runs;
};

StoredResult load_scenario_result(const std::filesystem::path& json_path);
std::string kpi_to_json(const KpiRecord& k);

/// Rebuild the run's model from the case and replay the stored values into a
/// Solution aligned with the fresh registry.
struct RebuiltRun {
    ModelInstance model;
    BuildOptions build;
    Solution solution;
};
RebuiltRun rebuild_run(const CaseBundle& c, const StoredRun& run);

}  // namespace ecfleet

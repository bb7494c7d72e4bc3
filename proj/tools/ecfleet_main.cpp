#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"

#include "ecfleet/io.hpp"
#include "ecfleet/oracle.hpp"
#include "ecfleet/report.hpp"
#include "ecfleet/scenario.hpp"

namespace fs = std::filesystem;
using namespace ecfleet;

// exit codes: 0 ok, 1 usage, 2 file/parse error, 3 case validation failed,
// 4 solver failure, 5 audit violations
namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitIo = 2;
constexpr int kExitValidation = 3;
constexpr int kExitSolver = 4;
constexpr int kExitAudit = 5;

struct RunFlags {
    std::string scenario;
    std::string config_path;
    std::string case_dir;
    std::string out_dir = "results";
    std::string format = "md";
    std::string backend;
    std::string v2g, cs_location, peak_mode;
    std::string dump_model;
    double mip_gap = -1.0, time_limit = -1.0, cone_tol = -1.0;
    int max_oa_iters = -1;
    long seed = -1;
};

ScenarioConfig resolve_run_config(const RunFlags& f) {
    std::map<std::string, std::string> kv;
    if (!f.scenario.empty()) kv["scenario"] = f.scenario;
    if (!f.v2g.empty()) kv["v2g"] = f.v2g;
    if (!f.cs_location.empty()) kv["cs_location"] = f.cs_location;
    if (!f.peak_mode.empty()) kv["peak_mode"] = f.peak_mode;
    if (!f.backend.empty()) kv["backend"] = f.backend;
    if (f.mip_gap >= 0) kv["mip_gap"] = std::to_string(f.mip_gap);
    if (f.time_limit >= 0) kv["time_limit_s"] = std::to_string(f.time_limit);
    if (f.cone_tol >= 0) kv["cone_tol"] = std::to_string(f.cone_tol);
    if (f.max_oa_iters >= 0) kv["max_oa_iters"] = std::to_string(f.max_oa_iters);
    if (!f.case_dir.empty()) kv["case_dir"] = f.case_dir;
    if (f.seed >= 0) kv["seed"] = std::to_string(f.seed);
    if (!f.config_path.empty()) return parse_scenario_config(f.config_path, kv);
    return resolve_scenario_config(kv, "<cli>");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Shared EV fleet and charging-station planning inside a renewable energy "
                 "community on a radial LV network"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "Write a reproducible synthetic case to a directory");
    SyntheticCaseParams params;
    std::string gen_out;
    long gen_seed = 1;
    gen->add_option("--out-dir", gen_out, "target directory")->required();
    gen->add_option("--members", params.member_count, "household count (default 20)");
    gen->add_option("--prosumers", params.prosumer_count, "PV-equipped members (default 10)");
    gen->add_option("--rides", params.ride_count, "ride requests over the horizon (default 88)");
    gen->add_option("--weeks", params.weeks, "number of representative blocks (default 4)");
    gen->add_option("--days-per-block", params.days_per_block, "days per block (default 7)");
    gen->add_option("--fleet-slots", params.fleet_slots, "EV slots (default 3)");
    gen->add_option("--cs-slots", params.cs_slots, "charging-station slots (default 2)");
    gen->add_option("--seed", gen_seed, "random seed (default 1)");

    // validate
    auto* val = app.add_subcommand("validate", "Audit a case directory against all invariants");
    std::string val_dir;
    val->add_option("--case-dir", val_dir, "case directory")->required();

    // run
    auto* run = app.add_subcommand("run", "Solve a scenario pipeline and write KPIs + solutions");
    RunFlags rf;
    run->add_option("--scenario", rf.scenario, "1..5 or 'custom'");
    run->add_option("--config", rf.config_path, "key=value scenario file (CLI flags override)");
    run->add_option("--case-dir", rf.case_dir, "case directory");
    run->add_option("--out-dir", rf.out_dir, "output directory (default results/)");
    run->add_option("--format", rf.format, "report format: md or csv");
    run->add_option("--backend", rf.backend, "solver backend: highs or clarabel");
    run->add_option("--v2g", rf.v2g, "true/false (custom scenario)");
    run->add_option("--cs-location", rf.cs_location, "slack_only or free");
    run->add_option("--peak-mode", rf.peak_mode, "none_fixed, individual or collective");
    run->add_option("--mip-gap", rf.mip_gap, "relative MIP gap (default 1e-4)");
    run->add_option("--time-limit", rf.time_limit, "seconds per solve");
    run->add_option("--cone-tol", rf.cone_tol, "relative cone tolerance (default 1e-6)");
    run->add_option("--max-oa-iters", rf.max_oa_iters, "cut-loop iteration cap (default 50)");
    run->add_option("--seed", rf.seed, "seed stamped into the result");
    run->add_option("--dump-model", rf.dump_model, "write the built model rows to this file");

    // compare
    auto* cmp = app.add_subcommand("compare", "Side-by-side KPI table with deltas vs the first");
    std::vector<std::string> cmp_files;
    std::string cmp_format = "md";
    cmp->add_option("results", cmp_files, "scenario result JSON files")->required()->expected(-2);
    cmp->add_option("--format", cmp_format, "md or csv");

    // audit
    auto* aud = app.add_subcommand("audit", "Re-verify a stored result against every constraint");
    std::string aud_file, aud_case;
    double aud_tol = 1e-6;
    aud->add_option("result", aud_file, "scenario result JSON")->required();
    aud->add_option("--case-dir", aud_case, "case directory (default: from the stored config)");
    aud->add_option("--tol", aud_tol, "audit tolerance (default 1e-6)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*gen) {
            params.seed = static_cast<uint64_t>(gen_seed);
            CaseBundle c = generate_synthetic_case(params);
            save_case(c, gen_out);
            std::cout << "wrote case with " << c.network.buses.size() << " buses, "
                      << c.grid.num_periods << " periods, " << c.rides.size() << " rides to "
                      << gen_out << "\n";
            return kExitOk;
        }

        if (*val) {
            CaseBundle c = load_case(val_dir);  // throws on hard violations
            ValidationReport rep = validate_case(c);
            for (const auto& issue : rep.issues)
                std::cout << (issue.severity == Severity::error ? "error" : "warning") << " ["
                          << issue.code << "] " << issue.message << "\n";
            if (rep.empty()) std::cout << "case is valid\n";
            return rep.ok() ? kExitOk : kExitValidation;
        }

        if (*run) {
            ScenarioConfig cfg = resolve_run_config(rf);
            if (cfg.case_dir.empty()) {
                std::cerr << "error: no case directory (use --case-dir or case_dir= in the config)\n";
                return kExitUsage;
            }
            CaseBundle c = load_case(cfg.case_dir);
            if (!rf.dump_model.empty()) {
                BuildOptions opts;
                if (cfg.standalone_pipeline()) opts.mode = BuildMode::ec_only;
                ModelInstance model = build_model(c, cfg, opts);
                std::ofstream dump(rf.dump_model);
                model.dump(dump);
            }
            ConicMilpEngine engine(cfg.solver.backend);
            ScenarioResult result = run_scenario(c, cfg, engine);
            for (const auto& r : result.runs) {
                if (r.solution.status == SolveStatus::infeasible ||
                    r.solution.status == SolveStatus::error) {
                    std::cerr << "solver failed on " << r.name << ": "
                              << to_string(r.solution.status) << " " << r.solution.message << "\n";
                    return kExitSolver;
                }
            }
            save_scenario_result(result, c, rf.out_dir);
            const std::string report = emit_report({result.combined}, rf.format);
            std::ofstream out(fs::path(rf.out_dir) /
                              ("report_" + cfg.label() + "." + rf.format));
            out << report;
            std::cout << report;
            std::cout << "results written to " << rf.out_dir << "\n";
            return kExitOk;
        }

        if (*cmp) {
            std::vector<KpiRecord> records;
            for (const auto& f : cmp_files) records.push_back(load_scenario_result(f).combined);
            std::cout << emit_report(records, cmp_format, /*with_deltas=*/true);
            return kExitOk;
        }

        if (*aud) {
            StoredResult stored = load_scenario_result(aud_file);
            const std::string dir = aud_case.empty() ? stored.cfg.case_dir : aud_case;
            if (dir.empty()) {
                std::cerr << "error: stored result has no case_dir; pass --case-dir\n";
                return kExitUsage;
            }
            CaseBundle c = load_case(dir);
            bool all_ok = true;
            for (const auto& srun : stored.runs) {
                RebuiltRun rr = rebuild_run(c, srun);
                BuildOptions opts = rr.build;
                AuditReport rep = verify_solution(c, stored.cfg, opts, rr.model.registry,
                                                  rr.solution, aud_tol);
                std::cout << "# run '" << srun.name << "'\n" << rep.to_json() << "\n";
                all_ok = all_ok && rep.ok();
            }
            return all_ok ? kExitOk : kExitAudit;
        }
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    }
    return kExitUsage;
}

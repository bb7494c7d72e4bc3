#include "ecfleet/solver.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include "json.hpp"

#include "ecfleet_worker_embedded.hpp"

namespace ecfleet {

using nlohmann::json;

const char* to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::optimal: return "optimal";
        case SolveStatus::gap_reached: return "gap_reached";
        case SolveStatus::infeasible: return "infeasible";
        case SolveStatus::time_limit: return "time_limit";
        case SolveStatus::error: return "error";
    }
    return "?";
}

// ---- worker process --------------------------------------------------------

struct SubprocessBackend::Process {
    pid_t pid = -1;
    FILE* to_child = nullptr;
    FILE* from_child = nullptr;

    ~Process() {
        if (to_child) {
            fputs("{\"op\":\"quit\"}\n", to_child);
            fflush(to_child);
            fclose(to_child);
        }
        if (from_child) fclose(from_child);
        if (pid > 0) {
            int status = 0;
            for (int i = 0; i < 50 && waitpid(pid, &status, WNOHANG) == 0; ++i) usleep(10000);
            if (waitpid(pid, &status, WNOHANG) == 0) {
                kill(pid, SIGKILL);
                waitpid(pid, &status, 0);
            }
        }
    }
};

namespace {

std::string worker_script_path() {
    if (const char* p = std::getenv("ECFLEET_SOLVER_WORKER"); p && *p) return p;
    auto path = std::filesystem::temp_directory_path() /
                ("ecfleet_worker_" + std::to_string(getpid()) + ".py");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write worker script to " + path.string());
    out << kSolverWorkerSource;
    return path.string();
}

std::string python_interpreter() {
    if (const char* p = std::getenv("ECFLEET_PYTHON"); p && *p) return p;
    return "python3";
}

json round_trip(FILE* to_child, FILE* from_child, const json& request) {
    const std::string line = request.dump();
    if (fwrite(line.data(), 1, line.size(), to_child) != line.size() ||
        fputc('\n', to_child) == EOF || fflush(to_child) != 0)
        throw std::runtime_error("solver worker pipe closed while writing");
    std::string resp;
    char buf[1 << 16];
    while (fgets(buf, sizeof(buf), from_child)) {
        resp += buf;
        if (!resp.empty() && resp.back() == '\n') break;
    }
    if (resp.empty()) throw std::runtime_error("solver worker exited unexpectedly");
    return json::parse(resp);
}

SolveStatus parse_status(const std::string& s) {
    if (s == "optimal") return SolveStatus::optimal;
    if (s == "gap_reached") return SolveStatus::gap_reached;
    if (s == "infeasible") return SolveStatus::infeasible;
    if (s == "time_limit") return SolveStatus::time_limit;
    return SolveStatus::error;
}

}  // namespace

SubprocessBackend::SubprocessBackend(std::string backend_name)
    : backend_name_(std::move(backend_name)) {
    if (backend_name_ != "highs" && backend_name_ != "clarabel")
        throw std::invalid_argument("unknown solver backend '" + backend_name_ +
                                    "' (available: highs, clarabel)");
}

SubprocessBackend::~SubprocessBackend() = default;

BackendCaps SubprocessBackend::caps() const {
    if (backend_name_ == "clarabel") return {false, true};
    return {true, false};
}

void SubprocessBackend::ensure_worker() {
    if (proc_) return;
    signal(SIGPIPE, SIG_IGN);
    const std::string script = worker_script_path();
    const std::string python = python_interpreter();

    int to_child[2], from_child[2];
    if (pipe(to_child) != 0 || pipe(from_child) != 0)
        throw std::runtime_error("cannot create worker pipes");
    pid_t pid = fork();
    if (pid < 0) throw std::runtime_error("cannot fork solver worker");
    if (pid == 0) {
        dup2(to_child[0], STDIN_FILENO);
        dup2(from_child[1], STDOUT_FILENO);
        close(to_child[0]);
        close(to_child[1]);
        close(from_child[0]);
        close(from_child[1]);
        execlp(python.c_str(), python.c_str(), script.c_str(), nullptr);
        perror("ecfleet: exec solver worker");
        _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    auto proc = std::make_unique<Process>();
    proc->pid = pid;
    proc->to_child = fdopen(to_child[1], "w");
    proc->from_child = fdopen(from_child[0], "r");
    if (!proc->to_child || !proc->from_child)
        throw std::runtime_error("cannot attach to solver worker pipes");

    json hello = round_trip(proc->to_child, proc->from_child, json{{"op", "hello"}});
    if (!hello.value("ok", false))
        throw std::runtime_error("solver worker handshake failed: " + hello.dump());
    std::set<std::string> backends;
    for (const auto& b : hello.value("backends", json::array())) backends.insert(b.get<std::string>());
    if (!backends.count(backend_name_))
        throw std::runtime_error("solver worker does not provide backend '" + backend_name_ +
                                 "' (is " + (backend_name_ == "highs" ? "scipy" : "clarabel") +
                                 " installed for " + python + "?)");
    proc_ = std::move(proc);
}

BackendResult SubprocessBackend::solve(const ModelInstance& model, const std::vector<CutRow>& cuts,
                                       bool relax_integrality, bool send_cones,
                                       const SolverOptions& opts) {
    ensure_worker();

    json req;
    req["op"] = "solve";
    req["backend"] = backend_name_;
    req["ncols"] = model.num_cols();
    req["lb"] = model.col_lb;
    req["ub"] = model.col_ub;
    req["obj"] = model.obj;
    if (relax_integrality) {
        req["integrality"] = std::vector<int>(model.num_cols(), 0);
    } else {
        req["integrality"] = std::vector<int>(model.integer_col.begin(), model.integer_col.end());
    }

    std::vector<int> row_ptr = model.row_ptr;
    std::vector<int> col_idx = model.col_idx;
    std::vector<double> vals = model.vals;
    std::vector<double> row_lo = model.row_lo;
    std::vector<double> row_hi = model.row_hi;
    for (const auto& cut : cuts) {
        if (cut.cone_index < 0 || cut.cone_index >= static_cast<int>(model.cones.size()))
            throw std::logic_error("cut references a cone row outside this model");
        const ConeRow& cone = model.cones[cut.cone_index];
        col_idx.insert(col_idx.end(), {cone.p_col, cone.q_col, cone.i_col, cone.v_col});
        vals.insert(vals.end(), {cut.c_p, cut.c_q, cut.c_i, cut.c_v});
        row_ptr.push_back(static_cast<int>(col_idx.size()));
        row_lo.push_back(-kInfinity);
        row_hi.push_back(cut.rhs);
    }
    req["row_ptr"] = row_ptr;
    req["col_idx"] = col_idx;
    req["vals"] = vals;
    req["row_lo"] = row_lo;
    req["row_hi"] = row_hi;

    if (send_cones && !model.cones.empty()) {
        json cones;
        std::vector<int> ci, cv, cp, cq;
        for (const auto& c : model.cones) {
            ci.push_back(c.i_col);
            cv.push_back(c.v_col);
            cp.push_back(c.p_col);
            cq.push_back(c.q_col);
        }
        cones["i"] = ci;
        cones["v"] = cv;
        cones["p"] = cp;
        cones["q"] = cq;
        req["cones"] = cones;
    }
    req["options"] = {{"mip_gap", opts.mip_gap},
                      {"time_limit", opts.time_limit_s},
                      {"cone_tol", opts.cone_tol},
                      {"presolve", opts.presolve}};

    json resp = round_trip(proc_->to_child, proc_->from_child, req);
    if (!resp.value("ok", false))
        throw std::runtime_error("solver worker error: " + resp.value("error", resp.dump()));

    BackendResult out;
    out.status = parse_status(resp.value("status", "error"));
    out.message = resp.value("message", "");
    if (resp.contains("x")) {
        out.x = resp["x"].get<std::vector<double>>();
        out.objective = resp.value("obj", 0.0);
        out.bound = resp.value("bound", out.objective);
    }
    return out;
}

std::unique_ptr<SolverBackend> make_backend(const std::string& name) {
    std::string n = name;
    if (n.empty()) {
        const char* env = std::getenv("ECFLEET_BACKEND");
        n = (env && *env) ? env : "highs";
    }
    return std::make_unique<SubprocessBackend>(n);
}

// ---- cones and cuts ----------------------------------------------------------

std::vector<ConeViolation> cone_violations(const std::vector<double>& x, const ModelInstance& model,
                                           double tol) {
    std::vector<ConeViolation> out;
    for (size_t idx = 0; idx < model.cones.size(); ++idx) {
        const auto& c = model.cones[idx];
        const double p = x[c.p_col], q = x[c.q_col], i = x[c.i_col], v = x[c.v_col];
        const double lhs = p * p + q * q;
        const double rel = (lhs - i * v) / std::max(1.0, lhs);
        if (rel > tol) out.push_back({static_cast<int>(idx), rel});
    }
    return out;
}

double max_cone_violation(const std::vector<double>& x, const ModelInstance& model) {
    double worst = 0.0;
    for (const auto& c : model.cones) {
        const double p = x[c.p_col], q = x[c.q_col], i = x[c.i_col], v = x[c.v_col];
        const double lhs = p * p + q * q;
        worst = std::max(worst, (lhs - i * v) / std::max(1.0, lhs));
    }
    return worst;
}

CutRow cut_for_cone(const ModelInstance& model, int cone_index, const std::vector<double>& x) {
    const auto& c = model.cones[cone_index];
    double p = x[c.p_col], q = x[c.q_col], i = x[c.i_col], v = x[c.v_col];
    double g1 = 2.0 * p, g2 = 2.0 * q, g3 = i - v;
    double norm = std::sqrt(g1 * g1 + g2 * g2 + g3 * g3);
    if (norm < 1e-12) {
        // point on the cone axis; nudge off it and support there instead
        p += 1e-6;
        g1 = 2.0 * p;
        g3 = i - v;
        norm = std::sqrt(g1 * g1 + g2 * g2 + g3 * g3);
    }
    CutRow cut;
    cut.cone_index = cone_index;
    // (2 g1 p + 2 g2 q + g3 (i - v)) / ||g||  <=  i + v
    cut.c_p = 2.0 * g1 / norm;
    cut.c_q = 2.0 * g2 / norm;
    cut.c_i = g3 / norm - 1.0;
    cut.c_v = -g3 / norm - 1.0;
    cut.rhs = 0.0;
    return cut;
}

// ---- engine ---------------------------------------------------------------------

ConicMilpEngine::ConicMilpEngine(std::unique_ptr<SolverBackend> backend)
    : backend_(std::move(backend)) {}

ConicMilpEngine::ConicMilpEngine(const std::string& backend_name)
    : backend_(make_backend(backend_name)) {}

void ConicMilpEngine::clear_cut_pool() {
    pool_.clear();
    pool_key_ = 0;
}

namespace {

uint64_t structure_key(const ModelInstance& m) {
    // cuts are pure cone geometry, so a pool carries over to any model with
    // the same cone list length (re-solves of one case, scenario variants)
    return static_cast<uint64_t>(m.cones.size());
}

uint64_t cut_fingerprint(const CutRow& cut) {
    uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&](uint64_t v) {
        h ^= v;
        h *= 0x100000001b3ULL;
    };
    mix(static_cast<uint64_t>(cut.cone_index));
    for (double coef : {cut.c_p, cut.c_q, cut.c_i, cut.c_v})
        mix(static_cast<uint64_t>(std::llround(coef * 1e12)));
    return h;
}

Solution error_solution(const std::string& msg) {
    Solution s;
    s.status = SolveStatus::error;
    s.message = msg;
    return s;
}

}  // namespace

Solution ConicMilpEngine::run(const ModelInstance& model, bool relax, const SolverOptions& opts) {
    const BackendCaps caps = backend_->caps();
    const bool needs_milp = !relax && model.has_free_integers();
    if (needs_milp && !caps.milp)
        return error_solution("backend '" + backend_->name() + "' lacks MILP capability");

    const auto t_start = std::chrono::steady_clock::now();
    auto elapsed_s = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    };

    try {
        if (caps.native_soc) {
            BackendResult r = backend_->solve(model, {}, relax, true, opts);
            Solution s;
            s.status = r.status;
            s.message = r.message;
            s.x = std::move(r.x);
            if (!s.x.empty()) {
                s.objective = r.objective + model.obj_constant;
                s.bound = r.bound + model.obj_constant;
                s.cone_violation = max_cone_violation(s.x, model);
                if (s.status == SolveStatus::optimal && s.cone_violation > opts.cone_tol)
                    s.status = SolveStatus::gap_reached;
            }
            return s;
        }

        // outer approximation: cones start as box relaxations (variable
        // bounds), supporting hyperplanes accumulate in the warm pool
        const uint64_t key = structure_key(model);
        if (key != pool_key_) {
            pool_.clear();
            pool_key_ = key;
        }
        std::set<uint64_t> seen;
        for (const auto& cut : pool_) seen.insert(cut_fingerprint(cut));

        Solution s;
        BackendResult last;
        bool presolve = opts.presolve;
        for (int iter = 1; iter <= std::max(1, opts.max_oa_iters); ++iter) {
            SolverOptions pass = opts;
            pass.presolve = presolve;
            if (opts.time_limit_s > 0.0) {
                pass.time_limit_s = opts.time_limit_s - elapsed_s();
                if (pass.time_limit_s <= 0.0) {
                    s.status = SolveStatus::time_limit;
                    s.message = "time limit reached in the cut loop";
                    break;
                }
            }
            last = backend_->solve(model, pool_, relax, false, pass);
            if (last.status == SolveStatus::infeasible && presolve && !pool_.empty()) {
                // presolve occasionally mis-declares cut-dense models infeasible;
                // the cuts are valid, so trust the full solve instead
                presolve = false;
                pass.presolve = false;
                last = backend_->solve(model, pool_, relax, false, pass);
            }
            s.oa_iterations = iter;
            if (last.status == SolveStatus::infeasible || last.status == SolveStatus::error ||
                last.x.empty()) {
                s.status = last.status;
                s.message = last.message;
                return s;
            }

            const auto violations = cone_violations(last.x, model, opts.cone_tol);
            const double maxv = max_cone_violation(last.x, model);
            int added = 0;
            for (const auto& v : violations) {
                CutRow cut = cut_for_cone(model, v.cone_index, last.x);
                if (seen.insert(cut_fingerprint(cut)).second) {
                    pool_.push_back(std::move(cut));
                    ++added;
                }
            }
            if (pool_.size() > kMaxPoolSize) {
                const size_t drop = pool_.size() - kMaxPoolSize;
                pool_.erase(pool_.begin(), pool_.begin() + static_cast<long>(drop));
            }
            s.iteration_log.push_back({last.objective + model.obj_constant, maxv, added});

            if (violations.empty()) {
                s.status = last.status;  // optimal or time_limit from the backend
                s.message = last.message;
                break;
            }
            if (added == 0) {
                s.status = SolveStatus::gap_reached;
                s.message = "cut loop stalled (no new separating cuts)";
                break;
            }
            if (iter == opts.max_oa_iters) {
                s.status = SolveStatus::gap_reached;
                s.message = "cut-iteration cap reached";
            }
        }
        if (!last.x.empty()) {
            s.x = std::move(last.x);
            s.objective = last.objective + model.obj_constant;
            s.bound = last.bound + model.obj_constant;
            s.cone_violation = max_cone_violation(s.x, model);
        } else if (s.status != SolveStatus::time_limit) {
            s.status = SolveStatus::error;
            s.message = "cut loop produced no solution";
        }
        return s;
    } catch (const std::exception& e) {
        return error_solution(e.what());
    }
}

Solution ConicMilpEngine::solve(const ModelInstance& model, const SolverOptions& opts) {
    return run(model, false, opts);
}

Solution ConicMilpEngine::solve_relaxation(const ModelInstance& model, const SolverOptions& opts) {
    return run(model, true, opts);
}

}  // namespace ecfleet

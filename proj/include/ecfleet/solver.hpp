#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ecfleet/model.hpp"

namespace ecfleet {

enum class SolveStatus { optimal, gap_reached, infeasible, time_limit, error };
const char* to_string(SolveStatus s);

struct OaIteration {
    double objective = 0.0;
    double max_violation = 0.0;
    int cuts_added = 0;
};

struct Solution {
    std::vector<double> x;
    double objective = 0.0;  // EUR/year, includes the model constant
    double bound = 0.0;      // valid lower bound
    SolveStatus status = SolveStatus::error;
    double cone_violation = 0.0;  // max relative violation at x
    int oa_iterations = 0;
    std::vector<OaIteration> iteration_log;
    std::string message;

    double value(const VariableRegistry& reg, VarFamily f) const { return x[reg.col(f)]; }
    double value(const VariableRegistry& reg, VarFamily f, std::initializer_list<int> idx) const {
        return x[reg.col(f, idx)];
    }
};

struct BackendCaps {
    bool milp = false;
    bool native_soc = false;
};

/// One supporting hyperplane of a rotated-cone row, stored against the cone
/// index so a pool transfers between models sharing the same cone list:
/// c_p*p + c_q*q + c_i*i + c_v*v <= rhs over that cone's four columns.
struct CutRow {
    int cone_index = -1;
    double c_p = 0.0, c_q = 0.0, c_i = 0.0, c_v = 0.0;
    double rhs = 0.0;
};

struct BackendResult {
    SolveStatus status = SolveStatus::error;
    std::vector<double> x;
    double objective = 0.0;  // raw c.x, without the model constant
    double bound = 0.0;
    std::string message;
};

/// Minimal pluggable solve interface: a MILP (or continuous conic) solve over
/// the model rows plus extra cut rows; integrality can be dropped.
class SolverBackend {
public:
    virtual ~SolverBackend() = default;
    virtual BackendCaps caps() const = 0;
    virtual std::string name() const = 0;
    virtual BackendResult solve(const ModelInstance& model, const std::vector<CutRow>& cuts,
                                bool relax_integrality, bool send_cones,
                                const SolverOptions& opts) = 0;
};

/// Backend running the bundled Python worker (HiGHS via SciPy for the MILP
/// part, Clarabel for native-SOC continuous solves) in a persistent child
/// process. The worker script is embedded in the binary; ECFLEET_SOLVER_WORKER
/// overrides it and ECFLEET_PYTHON picks the interpreter.
class SubprocessBackend final : public SolverBackend {
public:
    explicit SubprocessBackend(std::string backend_name);
    ~SubprocessBackend() override;

    BackendCaps caps() const override;
    std::string name() const override { return backend_name_; }
    BackendResult solve(const ModelInstance& model, const std::vector<CutRow>& cuts,
                        bool relax_integrality, bool send_cones,
                        const SolverOptions& opts) override;

private:
    struct Process;
    void ensure_worker();
    std::string backend_name_;
    std::unique_ptr<Process> proc_;
};

/// Create a backend by name: "highs" (MILP, cones via cuts) or "clarabel"
/// (continuous native SOC). Reads ECFLEET_BACKEND when name is empty.
std::unique_ptr<SolverBackend> make_backend(const std::string& name);

struct ConeViolation {
    int cone_index;
    double relative_violation;
};

/// Rows where (p^2 + q^2 - i*v) / max(1, p^2 + q^2) exceeds tol.
std::vector<ConeViolation> cone_violations(const std::vector<double>& x, const ModelInstance& model,
                                           double tol);
double max_cone_violation(const std::vector<double>& x, const ModelInstance& model);

/// Supporting-hyperplane cut for one violated cone row at the current point;
/// valid for every cone-feasible point and strictly violated at x.
CutRow cut_for_cone(const ModelInstance& model, int cone_index, const std::vector<double>& x);

/// Solves ModelInstances: one backend call when the backend handles cones
/// natively, otherwise an outer-approximation loop that accumulates cuts in a
/// bounded warm pool reused across re-solves of structurally equal models.
class ConicMilpEngine {
public:
    explicit ConicMilpEngine(std::unique_ptr<SolverBackend> backend);
    explicit ConicMilpEngine(const std::string& backend_name = "");

    Solution solve(const ModelInstance& model, const SolverOptions& opts = {});
    Solution solve_relaxation(const ModelInstance& model, const SolverOptions& opts = {});

    const std::vector<CutRow>& cut_pool() const { return pool_; }
    void clear_cut_pool();
    SolverBackend& backend() { return *backend_; }

    static constexpr size_t kMaxPoolSize = 100000;

private:
    Solution run(const ModelInstance& model, bool relax, const SolverOptions& opts);
    uint64_t pool_key_ = 0;
    std::unique_ptr<SolverBackend> backend_;
    std::vector<CutRow> pool_;
};

}  // namespace ecfleet

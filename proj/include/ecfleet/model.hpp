#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ecfleet/domain.hpp"
#include "ecfleet/io.hpp"

namespace ecfleet {

constexpr double kInfinity = 1e30;  // bound sentinel shared with backends

enum class VarFamily : uint8_t {
    invest_ev,    // [slot][candidate]                     binary
    invest_cs,    // [slot][bus][candidate]                binary
    use_ride,     // [slot][ride]                          binary
    ev_state,     // [slot][state][period], last state = in use   binary
    link,         // [slot][candidate][cs_slot][period]    binary (product mode)
    ev_power,     // [slot][cs_slot][period]               kW at the plug
    ev_soc,       // [slot][period]                        kWh
    cs_power,     // [cs_slot][bus][period]                kW drawn at the bus
    away_energy,  // [slot][ride]                          kWh charged on trip
    pv_dispatch,  // [bus][period]                         kW
    grid_import,  // [period]                              kW
    grid_export,  // [period]                              kW
    p_inj,        // [bus][period]                         p.u.
    q_inj,        // [bus][period]                         p.u.
    p_line,       // [line][period]                        p.u., sending end
    q_line,       // [line][period]                        p.u.
    v_sqr,        // [bus][period]                         p.u.^2
    i_sqr,        // [line][period]                        p.u.^2
    import_pos,   // [bus][period]  kW, metered import split (peak modes)
    peak_import,  // [bus]          kW, per-meter yearly peak epigraph
    peak_coll,    // []             kW, transformer peak epigraph
    ev_discharge  // [slot][cs_slot][period] kW, discharge part (V2G cap)
};

const char* to_string(VarFamily f);

/// Equation tags carried by every generated row.
enum class RowTag : uint8_t {
    eq5, eq6, eq7, eq8, eq9, eq10, eq11, eq12, eq13, eq14, eq15, eq16, eq17, eq18, eq19,
    eq20, eq21, eq22, eq23, eq24, eq25, eq28,  // eq25 tags cone rows
    peak, v2g_cap, link
};

const char* to_string(RowTag t);

class VariableRegistry {
public:
    struct Family {
        int offset = -1;
        std::vector<int> dims;
        int size = 0;
    };

    int add_family(VarFamily f, std::vector<int> dims);
    bool has(VarFamily f) const { return families_.count(f) > 0; }
    const Family& family(VarFamily f) const;
    int family_size(VarFamily f) const { return has(f) ? family(f).size : 0; }

    int col(VarFamily f) const { return col(f, {}); }
    int col(VarFamily f, std::initializer_list<int> idx) const;
    int col(VarFamily f, const std::vector<int>& idx) const;

    int num_cols() const { return next_col_; }
    std::string name(int col) const;
    /// (family, multi-index) of a column.
    std::pair<VarFamily, std::vector<int>> locate(int col) const;

private:
    std::map<VarFamily, Family> families_;
    int next_col_ = 0;
};

struct ConeRow {
    // x[i_col] * x[v_col] >= x[p_col]^2 + x[q_col]^2
    int i_col, v_col, p_col, q_col;
};

/// Solver-agnostic program image: bounds, integrality, CSR linear rows with
/// two-sided bounds, rotated-cone rows, and a linear objective in EUR/year.
struct ModelInstance {
    VariableRegistry registry;

    std::vector<double> col_lb, col_ub, obj;
    std::vector<uint8_t> integer_col;
    double obj_constant = 0.0;

    std::vector<int> row_ptr{0};
    std::vector<int> col_idx;
    std::vector<double> vals;
    std::vector<double> row_lo, row_hi;
    std::vector<RowTag> row_tag;

    std::vector<ConeRow> cones;

    int num_cols() const { return static_cast<int>(col_lb.size()); }
    int num_rows() const { return static_cast<int>(row_lo.size()); }

    void init_columns();  // allocate bound/obj arrays after registry is built
    void add_row(RowTag tag, double lo, const std::vector<std::pair<int, double>>& terms,
                 double hi);
    void set_bounds(int col, double lo, double hi);
    void fix(int col, double value) { set_bounds(col, value, value); }
    void add_obj(int col, double coef) { obj[col] += coef; }

    std::map<RowTag, int> row_counts_by_tag() const;
    double row_activity(int row, const std::vector<double>& x) const;
    /// Plain-text dump, one row per line prefixed by its equation tag.
    void dump(std::ostream& os) const;

    bool has_free_integers() const;
};

enum class BuildMode { coordinated, ec_only, msp_only };
enum class LinearizationMode { decoupled, product };

struct BuildOptions {
    BuildMode mode = BuildMode::coordinated;
    LinearizationMode linearization = LinearizationMode::decoupled;
    /// Import headroom per period (kW) for the stand-alone fleet problem;
    /// required when mode == msp_only.
    std::vector<double> residual_import_kw;
};

/// Translate a case + scenario into the full program. Builders below are
/// exposed for targeted tests; build_model calls them in a fixed order.
ModelInstance build_model(const CaseBundle& c, const ScenarioConfig& cfg,
                          const BuildOptions& opts = {});

void add_investment_constraints(ModelInstance& m, const CaseBundle& c, const ScenarioConfig& cfg);
void add_assignment_constraints(ModelInstance& m, const CaseBundle& c);
void add_ev_operation_constraints(ModelInstance& m, const CaseBundle& c, const ScenarioConfig& cfg,
                                  const BuildOptions& opts);
void add_power_balance(ModelInstance& m, const CaseBundle& c, const BuildOptions& opts);
void add_distflow_constraints(ModelInstance& m, const CaseBundle& c, const BuildOptions& opts);
void add_objective(ModelInstance& m, const CaseBundle& c, const ScenarioConfig& cfg,
                   const BuildOptions& opts);
void add_peak_tariff(ModelInstance& m, const CaseBundle& c, PeakTariffMode mode);

/// Effective import price curve (energy price + grid fee of the active mode).
std::vector<double> effective_import_price(const CaseBundle& c, PeakTariffMode mode);

}  // namespace ecfleet

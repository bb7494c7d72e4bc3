#include "ecfleet/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace ecfleet {

const char* to_string(VarFamily f) {
    switch (f) {
        case VarFamily::invest_ev: return "invest_ev";
        case VarFamily::invest_cs: return "invest_cs";
        case VarFamily::use_ride: return "use_ride";
        case VarFamily::ev_state: return "ev_state";
        case VarFamily::link: return "link";
        case VarFamily::ev_power: return "ev_power";
        case VarFamily::ev_soc: return "ev_soc";
        case VarFamily::cs_power: return "cs_power";
        case VarFamily::away_energy: return "away_energy";
        case VarFamily::pv_dispatch: return "pv_dispatch";
        case VarFamily::grid_import: return "grid_import";
        case VarFamily::grid_export: return "grid_export";
        case VarFamily::p_inj: return "p_inj";
        case VarFamily::q_inj: return "q_inj";
        case VarFamily::p_line: return "p_line";
        case VarFamily::q_line: return "q_line";
        case VarFamily::v_sqr: return "v_sqr";
        case VarFamily::i_sqr: return "i_sqr";
        case VarFamily::import_pos: return "import_pos";
        case VarFamily::peak_import: return "peak_import";
        case VarFamily::peak_coll: return "peak_coll";
        case VarFamily::ev_discharge: return "ev_discharge";
    }
    return "?";
}

const char* to_string(RowTag t) {
    switch (t) {
        case RowTag::eq5: return "5";
        case RowTag::eq6: return "6";
        case RowTag::eq7: return "7";
        case RowTag::eq8: return "8";
        case RowTag::eq9: return "9";
        case RowTag::eq10: return "10";
        case RowTag::eq11: return "11";
        case RowTag::eq12: return "12";
        case RowTag::eq13: return "13";
        case RowTag::eq14: return "14";
        case RowTag::eq15: return "15";
        case RowTag::eq16: return "16";
        case RowTag::eq17: return "17";
        case RowTag::eq18: return "18";
        case RowTag::eq19: return "19";
        case RowTag::eq20: return "20";
        case RowTag::eq21: return "21";
        case RowTag::eq22: return "22";
        case RowTag::eq23: return "23";
        case RowTag::eq24: return "24";
        case RowTag::eq25: return "25";
        case RowTag::eq28: return "28";
        case RowTag::peak: return "peak";
        case RowTag::v2g_cap: return "v2g-cap";
        case RowTag::link: return "link";
    }
    return "?";
}

int VariableRegistry::add_family(VarFamily f, std::vector<int> dims) {
    if (families_.count(f)) throw std::logic_error("family registered twice");
    Family fam;
    fam.offset = next_col_;
    fam.size = 1;
    for (int d : dims) {
        if (d < 0) throw std::logic_error("negative dimension");
        fam.size *= d;
    }
    fam.dims = std::move(dims);
    families_[f] = fam;
    next_col_ += fam.size;
    return fam.offset;
}

const VariableRegistry::Family& VariableRegistry::family(VarFamily f) const {
    auto it = families_.find(f);
    if (it == families_.end())
        throw std::logic_error(std::string("family not registered: ") + to_string(f));
    return it->second;
}

int VariableRegistry::col(VarFamily f, std::initializer_list<int> idx) const {
    return col(f, std::vector<int>(idx));
}

int VariableRegistry::col(VarFamily f, const std::vector<int>& idx) const {
    const Family& fam = family(f);
    if (idx.size() != fam.dims.size()) throw std::logic_error("index arity mismatch");
    int flat = 0;
    for (size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= fam.dims[i])
            throw std::out_of_range(std::string("index out of range for ") + to_string(f));
        flat = flat * fam.dims[i] + idx[i];
    }
    return fam.offset + flat;
}

std::pair<VarFamily, std::vector<int>> VariableRegistry::locate(int col) const {
    for (const auto& [f, fam] : families_) {
        if (col >= fam.offset && col < fam.offset + fam.size) {
            int flat = col - fam.offset;
            std::vector<int> idx(fam.dims.size());
            for (int i = static_cast<int>(fam.dims.size()) - 1; i >= 0; --i) {
                idx[i] = flat % fam.dims[i];
                flat /= fam.dims[i];
            }
            return {f, idx};
        }
    }
    throw std::out_of_range("column not in registry");
}

std::string VariableRegistry::name(int col) const {
    auto [f, idx] = locate(col);
    std::string s = to_string(f);
    if (!idx.empty()) {
        s += "[";
        for (size_t i = 0; i < idx.size(); ++i) s += (i ? "," : "") + std::to_string(idx[i]);
        s += "]";
    }
    return s;
}

void ModelInstance::init_columns() {
    const int n = registry.num_cols();
    col_lb.assign(n, -kInfinity);
    col_ub.assign(n, kInfinity);
    obj.assign(n, 0.0);
    integer_col.assign(n, 0);
}

void ModelInstance::add_row(RowTag tag, double lo,
                            const std::vector<std::pair<int, double>>& terms, double hi) {
    for (const auto& [col, coef] : terms) {
        if (coef == 0.0) continue;
        col_idx.push_back(col);
        vals.push_back(coef);
    }
    row_ptr.push_back(static_cast<int>(col_idx.size()));
    row_lo.push_back(lo);
    row_hi.push_back(hi);
    row_tag.push_back(tag);
}

void ModelInstance::set_bounds(int col, double lo, double hi) {
    col_lb[col] = lo;
    col_ub[col] = hi;
}

std::map<RowTag, int> ModelInstance::row_counts_by_tag() const {
    std::map<RowTag, int> counts;
    for (RowTag t : row_tag) counts[t]++;
    return counts;
}

double ModelInstance::row_activity(int row, const std::vector<double>& x) const {
    double a = 0.0;
    for (int k = row_ptr[row]; k < row_ptr[row + 1]; ++k) a += vals[k] * x[col_idx[k]];
    return a;
}

bool ModelInstance::has_free_integers() const {
    for (int j = 0; j < num_cols(); ++j) {
        if (integer_col[j] && col_lb[j] < col_ub[j]) return true;
    }
    return false;
}

void ModelInstance::dump(std::ostream& os) const {
    for (int r = 0; r < num_rows(); ++r) {
        os << "[" << to_string(row_tag[r]) << "] ";
        if (row_lo[r] > -kInfinity) os << row_lo[r] << " <= ";
        for (int k = row_ptr[r]; k < row_ptr[r + 1]; ++k) {
            if (k > row_ptr[r]) os << " + ";
            os << vals[k] << "*" << registry.name(col_idx[k]);
        }
        if (row_hi[r] < kInfinity) os << " <= " << row_hi[r];
        os << "\n";
    }
    for (const auto& c : cones) {
        os << "[25] cone: " << registry.name(c.i_col) << "*" << registry.name(c.v_col)
           << " >= " << registry.name(c.p_col) << "^2 + " << registry.name(c.q_col) << "^2\n";
    }
}

namespace {

/// Per-bus aggregates and index maps shared by the builders.
struct BuildContext {
    std::vector<BusId> bus_ids;           // position -> bus id
    std::map<BusId, int> bus_pos;         // bus id -> position
    int slack_pos = -1;
    std::vector<std::vector<double>> load_kw;    // [pos][t]
    std::vector<std::vector<double>> q_load_kvar;  // [pos][t], inductive positive
    std::vector<std::vector<double>> pv_potential_kw;
    std::vector<std::vector<int>> active_rides;  // [t] -> ride indices
    std::vector<std::vector<int>> returning_rides;
    std::vector<std::pair<int, int>> overlap_idx;  // ride index pairs

    static BuildContext make(const CaseBundle& c);
};

BuildContext BuildContext::make(const CaseBundle& c) {
    BuildContext ctx;
    ctx.bus_ids = c.network.buses;
    for (size_t i = 0; i < ctx.bus_ids.size(); ++i) {
        ctx.bus_pos[ctx.bus_ids[i]] = static_cast<int>(i);
        if (ctx.bus_ids[i] == 0) ctx.slack_pos = static_cast<int>(i);
    }
    const int B = static_cast<int>(ctx.bus_ids.size());
    const int T = c.grid.num_periods;
    ctx.load_kw.assign(B, std::vector<double>(T, 0.0));
    ctx.q_load_kvar.assign(B, std::vector<double>(T, 0.0));
    ctx.pv_potential_kw.assign(B, std::vector<double>(T, 0.0));
    for (const auto& m : c.members) {
        int pos = ctx.bus_pos.at(m.bus);
        const double tphi = m.tan_phi();
        for (int t = 0; t < T; ++t) {
            ctx.load_kw[pos][t] += m.load_kw[t];
            ctx.q_load_kvar[pos][t] += tphi * m.load_kw[t];
            ctx.pv_potential_kw[pos][t] += m.pv_potential_kw[t];
        }
    }
    ctx.active_rides.assign(T, {});
    ctx.returning_rides.assign(T, {});
    for (size_t i = 0; i < c.rides.size(); ++i) {
        const auto& r = c.rides[i];
        for (int t = std::max(0, r.dep_period); t <= std::min(T - 1, r.ret_period); ++t)
            ctx.active_rides[t].push_back(static_cast<int>(i));
        if (r.ret_period >= 0 && r.ret_period < T)
            ctx.returning_rides[r.ret_period].push_back(static_cast<int>(i));
    }
    std::map<int, int> id_to_idx;
    for (size_t i = 0; i < c.rides.size(); ++i) id_to_idx[c.rides[i].id] = static_cast<int>(i);
    for (const auto& [a, b] : overlapping_pairs(c.rides))
        ctx.overlap_idx.emplace_back(id_to_idx.at(a), id_to_idx.at(b));
    return ctx;
}

bool has_ev_side(BuildMode m) { return m != BuildMode::ec_only; }
bool has_network(BuildMode m) { return m != BuildMode::msp_only; }

}  // namespace

std::vector<double> effective_import_price(const CaseBundle& c, PeakTariffMode mode) {
    const double fee = mode == PeakTariffMode::none_fixed ? c.tariffs.volumetric_fee
                                                          : c.tariffs.capacity_volumetric_fee;
    std::vector<double> out(c.tariffs.import_price);
    for (double& v : out) v += fee;
    return out;
}

namespace {

void add_investment_constraints_impl(ModelInstance& m, const CaseBundle& c,
                                     const ScenarioConfig& cfg, const BuildContext& ctx) {
    const int KEV = static_cast<int>(c.ev_catalog.size());
    const int KCS = static_cast<int>(c.cs_catalog.size());
    const int B = static_cast<int>(ctx.bus_ids.size());

    for (int n = 0; n < c.fleet_slots; ++n) {
        std::vector<std::pair<int, double>> terms;
        for (int k = 0; k < KEV; ++k) terms.emplace_back(m.registry.col(VarFamily::invest_ev, {n, k}), 1.0);
        m.add_row(RowTag::eq5, -kInfinity, terms, 1.0);
    }
    for (int s = 0; s < c.cs_slots; ++s) {
        std::vector<std::pair<int, double>> terms;
        for (int b = 0; b < B; ++b)
            for (int k = 0; k < KCS; ++k)
                terms.emplace_back(m.registry.col(VarFamily::invest_cs, {s, b, k}), 1.0);
        m.add_row(RowTag::eq6, -kInfinity, terms, 1.0);
    }
    if (cfg.cs_location == CsLocationMode::slack_only) {
        for (int s = 0; s < c.cs_slots; ++s)
            for (int b = 0; b < B; ++b) {
                if (b == ctx.slack_pos) continue;
                for (int k = 0; k < KCS; ++k) m.fix(m.registry.col(VarFamily::invest_cs, {s, b, k}), 0.0);
            }
    }
}

void add_assignment_constraints_impl(ModelInstance& m, const CaseBundle& c,
                                     const BuildContext& ctx) {
    const int NEV = c.fleet_slots;
    const int KEV = static_cast<int>(c.ev_catalog.size());
    const int KCS = static_cast<int>(c.cs_catalog.size());
    const int R = static_cast<int>(c.rides.size());
    const int B = static_cast<int>(ctx.bus_ids.size());
    const int T = c.grid.num_periods;
    const int in_use = c.cs_slots;  // last state index

    for (int r = 0; r < R; ++r) {
        std::vector<std::pair<int, double>> terms;
        for (int n = 0; n < NEV; ++n) terms.emplace_back(m.registry.col(VarFamily::use_ride, {n, r}), 1.0);
        m.add_row(RowTag::eq7, -kInfinity, terms, 1.0);
    }
    for (int n = 0; n < NEV; ++n)
        for (int r = 0; r < R; ++r) {
            std::vector<std::pair<int, double>> terms{{m.registry.col(VarFamily::use_ride, {n, r}), 1.0}};
            for (int k = 0; k < KEV; ++k)
                terms.emplace_back(m.registry.col(VarFamily::invest_ev, {n, k}), -1.0);
            m.add_row(RowTag::eq8, -kInfinity, terms, 0.0);
        }
    for (int n = 0; n < NEV; ++n)
        for (const auto& [r1, r2] : ctx.overlap_idx) {
            m.add_row(RowTag::eq9, -kInfinity,
                      {{m.registry.col(VarFamily::use_ride, {n, r1}), 1.0},
                       {m.registry.col(VarFamily::use_ride, {n, r2}), 1.0}},
                      1.0);
        }
    for (int n = 0; n < NEV; ++n)
        for (int t = 0; t < T; ++t) {
            std::vector<std::pair<int, double>> terms;
            for (int s = 0; s <= c.cs_slots; ++s)
                terms.emplace_back(m.registry.col(VarFamily::ev_state, {n, s, t}), 1.0);
            for (int k = 0; k < KEV; ++k)
                terms.emplace_back(m.registry.col(VarFamily::invest_ev, {n, k}), -1.0);
            m.add_row(RowTag::eq10, -kInfinity, terms, 0.0);
        }
    for (int n = 0; n < NEV; ++n)
        for (int s = 0; s < c.cs_slots; ++s)
            for (int t = 0; t < T; ++t) {
                std::vector<std::pair<int, double>> terms{
                    {m.registry.col(VarFamily::ev_state, {n, s, t}), 1.0}};
                for (int b = 0; b < B; ++b)
                    for (int k = 0; k < KCS; ++k)
                        terms.emplace_back(m.registry.col(VarFamily::invest_cs, {s, b, k}), -1.0);
                m.add_row(RowTag::eq11, -kInfinity, terms, 0.0);
            }
    for (int n = 0; n < NEV; ++n)
        for (int t = 0; t < T; ++t) {
            std::vector<std::pair<int, double>> terms{
                {m.registry.col(VarFamily::ev_state, {n, in_use, t}), 1.0}};
            for (int r : ctx.active_rides[t])
                terms.emplace_back(m.registry.col(VarFamily::use_ride, {n, r}), -1.0);
            m.add_row(RowTag::eq12, 0.0, terms, 0.0);
        }
}

void add_ev_operation_constraints_impl(ModelInstance& m, const CaseBundle& c,
                                       const ScenarioConfig& cfg, const BuildOptions& opts,
                                       const BuildContext& ctx) {
    const int NEV = c.fleet_slots;
    const int NCS = c.cs_slots;
    const int KEV = static_cast<int>(c.ev_catalog.size());
    const int KCS = static_cast<int>(c.cs_catalog.size());
    const int R = static_cast<int>(c.rides.size());
    const int B = static_cast<int>(ctx.bus_ids.size());
    const int T = c.grid.num_periods;
    const double dt = c.grid.step_hours;
    const double cap_max = c.max_ev_capacity_kwh();
    const double pow_max = c.max_ev_power_kw();
    const bool v2g = cfg.v2g_enabled;

    // (13): power at the plug, gated by investment and by presence
    for (int n = 0; n < NEV; ++n)
        for (int s = 0; s < NCS; ++s)
            for (int t = 0; t < T; ++t) {
                const int p = m.registry.col(VarFamily::ev_power, {n, s, t});
                if (opts.linearization == LinearizationMode::decoupled) {
                    std::vector<std::pair<int, double>> up{{p, 1.0}};
                    for (int k = 0; k < KEV; ++k)
                        up.emplace_back(m.registry.col(VarFamily::invest_ev, {n, k}),
                                        -c.ev_catalog[k].power_kw);
                    m.add_row(RowTag::eq13, -kInfinity, up, 0.0);
                    m.add_row(RowTag::eq13, -kInfinity,
                              {{p, 1.0},
                               {m.registry.col(VarFamily::ev_state, {n, s, t}), -pow_max}},
                              0.0);
                    if (v2g) {
                        std::vector<std::pair<int, double>> lo{{p, 1.0}};
                        for (int k = 0; k < KEV; ++k)
                            lo.emplace_back(m.registry.col(VarFamily::invest_ev, {n, k}),
                                            c.ev_catalog[k].power_kw);
                        m.add_row(RowTag::eq13, 0.0, lo, kInfinity);
                        m.add_row(RowTag::eq13, 0.0,
                                  {{p, 1.0},
                                   {m.registry.col(VarFamily::ev_state, {n, s, t}), pow_max}},
                                  kInfinity);
                    }
                } else {
                    // product mode: z = invest * state via McCormick, then
                    // |p| <= sum_k P_k z
                    std::vector<std::pair<int, double>> up{{p, 1.0}};
                    for (int k = 0; k < KEV; ++k) {
                        const int z = m.registry.col(VarFamily::link, {n, k, s, t});
                        const int ev = m.registry.col(VarFamily::invest_ev, {n, k});
                        const int st = m.registry.col(VarFamily::ev_state, {n, s, t});
                        m.add_row(RowTag::link, -kInfinity, {{z, 1.0}, {ev, -1.0}}, 0.0);
                        m.add_row(RowTag::link, -kInfinity, {{z, 1.0}, {st, -1.0}}, 0.0);
                        m.add_row(RowTag::link, -1.0, {{z, 1.0}, {ev, -1.0}, {st, -1.0}}, kInfinity);
                        up.emplace_back(z, -c.ev_catalog[k].power_kw);
                    }
                    m.add_row(RowTag::eq13, -kInfinity, up, 0.0);
                    if (v2g) {
                        std::vector<std::pair<int, double>> lo{{p, 1.0}};
                        for (int k = 0; k < KEV; ++k)
                            lo.emplace_back(m.registry.col(VarFamily::link, {n, k, s, t}),
                                            c.ev_catalog[k].power_kw);
                        m.add_row(RowTag::eq13, 0.0, lo, kInfinity);
                    }
                }
            }

    // (14): station power aggregates the plugged EVs
    for (int s = 0; s < NCS; ++s)
        for (int t = 0; t < T; ++t) {
            std::vector<std::pair<int, double>> terms;
            for (int b = 0; b < B; ++b)
                terms.emplace_back(m.registry.col(VarFamily::cs_power, {s, b, t}), 1.0);
            for (int n = 0; n < NEV; ++n)
                terms.emplace_back(m.registry.col(VarFamily::ev_power, {n, s, t}), -1.0);
            m.add_row(RowTag::eq14, 0.0, terms, 0.0);
        }

    // (15): station rating of the invested device, zero where not installed
    for (int s = 0; s < NCS; ++s)
        for (int b = 0; b < B; ++b)
            for (int t = 0; t < T; ++t) {
                const int p = m.registry.col(VarFamily::cs_power, {s, b, t});
                std::vector<std::pair<int, double>> up{{p, 1.0}};
                std::vector<std::pair<int, double>> lo{{p, 1.0}};
                for (int k = 0; k < KCS; ++k) {
                    const int d = m.registry.col(VarFamily::invest_cs, {s, b, k});
                    up.emplace_back(d, -c.cs_catalog[k].power_kw);
                    lo.emplace_back(d, c.cs_catalog[k].power_kw);
                }
                m.add_row(RowTag::eq15, -kInfinity, up, 0.0);
                m.add_row(RowTag::eq15, 0.0, lo, kInfinity);
            }

    // (16): state-of-charge recursion; each representative block starts from
    // the invested capacity
    for (int n = 0; n < NEV; ++n)
        for (int t = 0; t < T; ++t) {
            std::vector<std::pair<int, double>> terms{
                {m.registry.col(VarFamily::ev_soc, {n, t}), 1.0}};
            if (c.grid.is_block_start(t)) {
                for (int k = 0; k < KEV; ++k)
                    terms.emplace_back(m.registry.col(VarFamily::invest_ev, {n, k}),
                                       -c.ev_catalog[k].capacity_kwh);
            } else {
                terms.emplace_back(m.registry.col(VarFamily::ev_soc, {n, t - 1}), -1.0);
            }
            for (int s = 0; s < NCS; ++s)
                terms.emplace_back(m.registry.col(VarFamily::ev_power, {n, s, t}), -dt);
            for (int r : ctx.returning_rides[t]) {
                terms.emplace_back(m.registry.col(VarFamily::use_ride, {n, r}),
                                   c.rides[r].energy_kwh);
                terms.emplace_back(m.registry.col(VarFamily::away_energy, {n, r}), -1.0);
            }
            m.add_row(RowTag::eq16, 0.0, terms, 0.0);
        }

    // (17): battery window of the invested model
    for (int n = 0; n < NEV; ++n)
        for (int t = 0; t < T; ++t) {
            const int soc = m.registry.col(VarFamily::ev_soc, {n, t});
            std::vector<std::pair<int, double>> lo{{soc, -1.0}};
            std::vector<std::pair<int, double>> up{{soc, 1.0}};
            for (int k = 0; k < KEV; ++k) {
                const int d = m.registry.col(VarFamily::invest_ev, {n, k});
                lo.emplace_back(d, c.finance.soc_floor * c.ev_catalog[k].capacity_kwh);
                up.emplace_back(d, -c.ev_catalog[k].capacity_kwh);
            }
            m.add_row(RowTag::eq17, -kInfinity, lo, 0.0);
            m.add_row(RowTag::eq17, -kInfinity, up, 0.0);
        }

    // (18): departure state-of-charge floor, active only for the assigned car
    for (int n = 0; n < NEV; ++n)
        for (int r = 0; r < R; ++r) {
            std::vector<std::pair<int, double>> terms{
                {m.registry.col(VarFamily::ev_soc, {n, c.rides[r].dep_period}), 1.0},
                {m.registry.col(VarFamily::use_ride, {n, r}), -cap_max}};
            for (int k = 0; k < KEV; ++k)
                terms.emplace_back(m.registry.col(VarFamily::invest_ev, {n, k}),
                                   -c.finance.soc_departure * c.ev_catalog[k].capacity_kwh);
            m.add_row(RowTag::eq18, -cap_max, terms, kInfinity);
        }

    // (19): on-trip charging cap
    for (int n = 0; n < NEV; ++n)
        for (int r = 0; r < R; ++r) {
            const double cap = away_energy_cap(c.rides[r], c.ride_away_rating(c.rides[r]), dt);
            m.add_row(RowTag::eq19, -kInfinity,
                      {{m.registry.col(VarFamily::away_energy, {n, r}), 1.0},
                       {m.registry.col(VarFamily::use_ride, {n, r}), -cap}},
                      0.0);
        }

    // V2G restriction: aggregate discharge never exceeds the household demand
    if (v2g) {
        for (int n = 0; n < NEV; ++n)
            for (int s = 0; s < NCS; ++s)
                for (int t = 0; t < T; ++t)
                    m.add_row(RowTag::v2g_cap, 0.0,
                              {{m.registry.col(VarFamily::ev_discharge, {n, s, t}), 1.0},
                               {m.registry.col(VarFamily::ev_power, {n, s, t}), 1.0}},
                              kInfinity);
        for (int t = 0; t < T; ++t) {
            double load = 0.0;
            if (has_network(opts.mode))
                for (int b = 0; b < B; ++b) load += ctx.load_kw[b][t];
            std::vector<std::pair<int, double>> terms;
            for (int n = 0; n < NEV; ++n)
                for (int s = 0; s < NCS; ++s)
                    terms.emplace_back(m.registry.col(VarFamily::ev_discharge, {n, s, t}), 1.0);
            m.add_row(RowTag::v2g_cap, -kInfinity, terms, load);
        }
    }
}

void add_power_balance_impl(ModelInstance& m, const CaseBundle& c, const BuildOptions& opts,
                            const BuildContext& ctx) {
    const int B = static_cast<int>(ctx.bus_ids.size());
    const int T = c.grid.num_periods;
    const double S = c.network.base_power_kva;
    const bool ev = has_ev_side(opts.mode);

    if (opts.mode == BuildMode::msp_only) {
        // single-bus balance at the slack deposit
        for (int t = 0; t < T; ++t) {
            std::vector<std::pair<int, double>> terms;
            for (int s = 0; s < c.cs_slots; ++s)
                terms.emplace_back(m.registry.col(VarFamily::cs_power, {s, ctx.slack_pos, t}), 1.0);
            terms.emplace_back(m.registry.col(VarFamily::grid_import, {t}), -1.0);
            terms.emplace_back(m.registry.col(VarFamily::grid_export, {t}), 1.0);
            m.add_row(RowTag::eq21, 0.0, terms, 0.0);
        }
        return;
    }

    for (int b = 0; b < B; ++b)
        for (int t = 0; t < T; ++t) {
            std::vector<std::pair<int, double>> terms{
                {m.registry.col(VarFamily::p_inj, {b, t}), S},
                {m.registry.col(VarFamily::pv_dispatch, {b, t}), -1.0}};
            if (ev)
                for (int s = 0; s < c.cs_slots; ++s)
                    terms.emplace_back(m.registry.col(VarFamily::cs_power, {s, b, t}), 1.0);
            if (b == ctx.slack_pos) {
                terms.emplace_back(m.registry.col(VarFamily::grid_import, {t}), -1.0);
                terms.emplace_back(m.registry.col(VarFamily::grid_export, {t}), 1.0);
                m.add_row(RowTag::eq21, -ctx.load_kw[b][t], terms, -ctx.load_kw[b][t]);
            } else {
                m.add_row(RowTag::eq20, -ctx.load_kw[b][t], terms, -ctx.load_kw[b][t]);
            }
        }
    // reactive injections are fixed by the member loads (PV and CS at unity pf)
    for (int b = 0; b < B; ++b) {
        if (b == ctx.slack_pos) continue;
        for (int t = 0; t < T; ++t)
            m.fix(m.registry.col(VarFamily::q_inj, {b, t}), -ctx.q_load_kvar[b][t] / S);
    }
}

void add_distflow_constraints_impl(ModelInstance& m, const CaseBundle& c,
                                   const BuildOptions& opts, const BuildContext& ctx) {
    if (!has_network(opts.mode)) return;
    const int T = c.grid.num_periods;
    const int B = static_cast<int>(ctx.bus_ids.size());
    const int L = static_cast<int>(c.network.lines.size());

    // line index by receiving bus position
    std::vector<int> line_of_pos(B, -1);
    for (int l = 0; l < L; ++l) line_of_pos[ctx.bus_pos.at(c.network.lines[l].bus)] = l;
    std::vector<std::vector<int>> child_lines(B);
    for (int l = 0; l < L; ++l)
        child_lines[ctx.bus_pos.at(c.network.lines[l].parent)].push_back(l);

    for (int b = 0; b < B; ++b)
        for (int t = 0; t < T; ++t) {
            std::vector<std::pair<int, double>> p_terms{
                {m.registry.col(VarFamily::p_inj, {b, t}), 1.0}};
            std::vector<std::pair<int, double>> q_terms{
                {m.registry.col(VarFamily::q_inj, {b, t}), 1.0}};
            if (int l = line_of_pos[b]; l >= 0) {
                const auto& ln = c.network.lines[l];
                p_terms.emplace_back(m.registry.col(VarFamily::p_line, {l, t}), 1.0);
                p_terms.emplace_back(m.registry.col(VarFamily::i_sqr, {l, t}),
                                     -c.network.r_pu(ln));
                q_terms.emplace_back(m.registry.col(VarFamily::q_line, {l, t}), 1.0);
                q_terms.emplace_back(m.registry.col(VarFamily::i_sqr, {l, t}),
                                     -c.network.x_pu(ln));
            }
            for (int cl : child_lines[b]) {
                p_terms.emplace_back(m.registry.col(VarFamily::p_line, {cl, t}), -1.0);
                q_terms.emplace_back(m.registry.col(VarFamily::q_line, {cl, t}), -1.0);
            }
            m.add_row(RowTag::eq22, 0.0, p_terms, 0.0);
            m.add_row(RowTag::eq23, 0.0, q_terms, 0.0);
        }

    for (int l = 0; l < L; ++l) {
        const auto& ln = c.network.lines[l];
        const int b = ctx.bus_pos.at(ln.bus);
        const int a = ctx.bus_pos.at(ln.parent);
        const double r = c.network.r_pu(ln);
        const double x = c.network.x_pu(ln);
        for (int t = 0; t < T; ++t) {
            m.add_row(RowTag::eq24, 0.0,
                      {{m.registry.col(VarFamily::v_sqr, {b, t}), 1.0},
                       {m.registry.col(VarFamily::v_sqr, {a, t}), -1.0},
                       {m.registry.col(VarFamily::p_line, {l, t}), 2.0 * r},
                       {m.registry.col(VarFamily::q_line, {l, t}), 2.0 * x},
                       {m.registry.col(VarFamily::i_sqr, {l, t}), -(r * r + x * x)}},
                      0.0);
            m.cones.push_back({m.registry.col(VarFamily::i_sqr, {l, t}),
                               m.registry.col(VarFamily::v_sqr, {a, t}),
                               m.registry.col(VarFamily::p_line, {l, t}),
                               m.registry.col(VarFamily::q_line, {l, t})});
        }
    }

    // (28): the transformer rating caps the exchange with the upstream grid
    const double cap = c.network.transformer_rating_kw;
    for (int t = 0; t < T; ++t)
        m.add_row(RowTag::eq28, -cap,
                  {{m.registry.col(VarFamily::grid_import, {t}), 1.0},
                   {m.registry.col(VarFamily::grid_export, {t}), -1.0}},
                  cap);
}

void add_peak_tariff_impl(ModelInstance& m, const CaseBundle& c, PeakTariffMode mode,
                          const BuildContext& ctx) {
    if (mode == PeakTariffMode::none_fixed) return;  // fee + fixed charge live in the objective
    const int T = c.grid.num_periods;

    if (mode == PeakTariffMode::collective) {
        const int peak = m.registry.col(VarFamily::peak_coll);
        for (int t = 0; t < T; ++t)
            m.add_row(RowTag::peak, 0.0,
                      {{peak, 1.0}, {m.registry.col(VarFamily::grid_import, {t}), -1.0}},
                      kInfinity);
        m.add_obj(peak, c.tariffs.peak_fee);
        return;
    }

    const int B = static_cast<int>(ctx.bus_ids.size());
    const double S = c.network.base_power_kva;
    for (int b = 0; b < B; ++b) {
        const int peak = m.registry.col(VarFamily::peak_import, {b});
        for (int t = 0; t < T; ++t) {
            const int imp = m.registry.col(VarFamily::import_pos, {b, t});
            // metered import = positive part of (load + CS - PV); at the slack
            // meter it reduces to the deposit draw
            std::vector<std::pair<int, double>> terms{
                {imp, 1.0}, {m.registry.col(VarFamily::p_inj, {b, t}), S}};
            if (b == ctx.slack_pos) {
                terms.emplace_back(m.registry.col(VarFamily::grid_import, {t}), -1.0);
                terms.emplace_back(m.registry.col(VarFamily::grid_export, {t}), 1.0);
            }
            m.add_row(RowTag::peak, 0.0, terms, kInfinity);
            m.add_row(RowTag::peak, 0.0, {{peak, 1.0}, {imp, -1.0}}, kInfinity);
        }
        m.add_obj(peak, c.tariffs.peak_fee);
    }
}

void add_objective_impl(ModelInstance& m, const CaseBundle& c, const ScenarioConfig& cfg,
                        const BuildOptions& opts, const BuildContext& ctx) {
    const double af = c.grid.annualization_factor;
    const double dt = c.grid.step_hours;
    const double crf = capital_recovery_factor(c.finance.discount_rate, c.finance.horizon_years);
    const bool ev = has_ev_side(opts.mode);
    const int B = static_cast<int>(ctx.bus_ids.size());

    if (ev) {
        for (int n = 0; n < c.fleet_slots; ++n)
            for (size_t k = 0; k < c.ev_catalog.size(); ++k)
                m.add_obj(m.registry.col(VarFamily::invest_ev, {n, static_cast<int>(k)}),
                          crf * c.ev_catalog[k].price_eur + c.ev_catalog[k].fixed_cost_eur_per_year);
        for (int s = 0; s < c.cs_slots; ++s)
            for (int b = 0; b < B; ++b)
                for (size_t k = 0; k < c.cs_catalog.size(); ++k)
                    m.add_obj(m.registry.col(VarFamily::invest_cs, {s, b, static_cast<int>(k)}),
                              crf * c.cs_catalog[k].price_eur);
        double total_demand = 0.0;
        for (size_t r = 0; r < c.rides.size(); ++r) {
            total_demand += c.rides[r].energy_kwh;
            for (int n = 0; n < c.fleet_slots; ++n) {
                m.add_obj(m.registry.col(VarFamily::away_energy, {n, static_cast<int>(r)}),
                          af * c.tariffs.away_price);
                m.add_obj(m.registry.col(VarFamily::use_ride, {n, static_cast<int>(r)}),
                          -af * c.tariffs.unserved_price * c.rides[r].energy_kwh);
            }
        }
        m.obj_constant += af * c.tariffs.unserved_price * total_demand;
    }

    const auto import_price = effective_import_price(c, cfg.peak_mode);
    for (int t = 0; t < c.grid.num_periods; ++t) {
        m.add_obj(m.registry.col(VarFamily::grid_import, {t}), af * import_price[t] * dt);
        m.add_obj(m.registry.col(VarFamily::grid_export, {t}), -af * c.tariffs.export_price[t] * dt);
    }

    // analog-meter regime: flat yearly peak charge, booked on the community side
    if (cfg.peak_mode == PeakTariffMode::none_fixed && opts.mode != BuildMode::msp_only)
        m.obj_constant += c.tariffs.fixed_peak_charge;
}

}  // namespace

// public builders construct their own shared context
void add_investment_constraints(ModelInstance& m, const CaseBundle& c, const ScenarioConfig& cfg) {
    add_investment_constraints_impl(m, c, cfg, BuildContext::make(c));
}
void add_assignment_constraints(ModelInstance& m, const CaseBundle& c) {
    add_assignment_constraints_impl(m, c, BuildContext::make(c));
}
void add_ev_operation_constraints(ModelInstance& m, const CaseBundle& c, const ScenarioConfig& cfg,
                                  const BuildOptions& opts) {
    add_ev_operation_constraints_impl(m, c, cfg, opts, BuildContext::make(c));
}
void add_power_balance(ModelInstance& m, const CaseBundle& c, const BuildOptions& opts) {
    add_power_balance_impl(m, c, opts, BuildContext::make(c));
}
void add_distflow_constraints(ModelInstance& m, const CaseBundle& c, const BuildOptions& opts) {
    add_distflow_constraints_impl(m, c, opts, BuildContext::make(c));
}
void add_peak_tariff(ModelInstance& m, const CaseBundle& c, PeakTariffMode mode) {
    add_peak_tariff_impl(m, c, mode, BuildContext::make(c));
}
void add_objective(ModelInstance& m, const CaseBundle& c, const ScenarioConfig& cfg,
                   const BuildOptions& opts) {
    add_objective_impl(m, c, cfg, opts, BuildContext::make(c));
}

ModelInstance build_model(const CaseBundle& c, const ScenarioConfig& cfg, const BuildOptions& opts) {
    const BuildContext ctx = BuildContext::make(c);
    const int T = c.grid.num_periods;
    const int B = static_cast<int>(ctx.bus_ids.size());
    const int L = static_cast<int>(c.network.lines.size());
    const int KEV = static_cast<int>(c.ev_catalog.size());
    const int KCS = static_cast<int>(c.cs_catalog.size());
    const int R = static_cast<int>(c.rides.size());
    const bool ev = has_ev_side(opts.mode);
    const bool net = has_network(opts.mode);

    if (opts.mode == BuildMode::msp_only) {
        if (static_cast<int>(opts.residual_import_kw.size()) != T)
            throw std::invalid_argument(
                "stand-alone fleet model needs a residual import profile of horizon length");
        if (cfg.peak_mode != PeakTariffMode::none_fixed)
            throw std::invalid_argument("peak tariffs are defined on the community network model");
        if (cfg.cs_location != CsLocationMode::slack_only)
            throw std::invalid_argument("the stand-alone fleet deposit sits at the slack node");
    }

    ModelInstance m;
    auto& reg = m.registry;
    if (ev) {
        reg.add_family(VarFamily::invest_ev, {c.fleet_slots, KEV});
        reg.add_family(VarFamily::invest_cs, {c.cs_slots, B, KCS});
        reg.add_family(VarFamily::use_ride, {c.fleet_slots, R});
        reg.add_family(VarFamily::ev_state, {c.fleet_slots, c.cs_slots + 1, T});
        if (opts.linearization == LinearizationMode::product)
            reg.add_family(VarFamily::link, {c.fleet_slots, KEV, c.cs_slots, T});
        reg.add_family(VarFamily::ev_power, {c.fleet_slots, c.cs_slots, T});
        reg.add_family(VarFamily::ev_soc, {c.fleet_slots, T});
        reg.add_family(VarFamily::cs_power, {c.cs_slots, B, T});
        reg.add_family(VarFamily::away_energy, {c.fleet_slots, R});
        if (cfg.v2g_enabled) reg.add_family(VarFamily::ev_discharge, {c.fleet_slots, c.cs_slots, T});
    }
    reg.add_family(VarFamily::grid_import, {T});
    reg.add_family(VarFamily::grid_export, {T});
    if (net) {
        reg.add_family(VarFamily::pv_dispatch, {B, T});
        reg.add_family(VarFamily::p_inj, {B, T});
        reg.add_family(VarFamily::q_inj, {B, T});
        reg.add_family(VarFamily::p_line, {L, T});
        reg.add_family(VarFamily::q_line, {L, T});
        reg.add_family(VarFamily::v_sqr, {B, T});
        reg.add_family(VarFamily::i_sqr, {L, T});
        if (cfg.peak_mode == PeakTariffMode::individual) {
            reg.add_family(VarFamily::import_pos, {B, T});
            reg.add_family(VarFamily::peak_import, {B});
        } else if (cfg.peak_mode == PeakTariffMode::collective) {
            reg.add_family(VarFamily::peak_coll, {});
        }
    }
    m.init_columns();

    // column bounds and integrality
    auto mark_binary = [&](VarFamily f) {
        if (!reg.has(f)) return;
        const auto& fam = reg.family(f);
        for (int j = fam.offset; j < fam.offset + fam.size; ++j) {
            m.set_bounds(j, 0.0, 1.0);
            m.integer_col[j] = 1;
        }
    };
    if (ev) {
        mark_binary(VarFamily::invest_ev);
        mark_binary(VarFamily::invest_cs);
        mark_binary(VarFamily::use_ride);
        mark_binary(VarFamily::ev_state);
        if (reg.has(VarFamily::link)) mark_binary(VarFamily::link);

        const double pmax = c.max_ev_power_kw();
        const double csmax = [&] {
            double v = 0.0;
            for (const auto& k : c.cs_catalog) v = std::max(v, k.power_kw);
            return v;
        }();
        for (int n = 0; n < c.fleet_slots; ++n)
            for (int s = 0; s < c.cs_slots; ++s)
                for (int t = 0; t < T; ++t)
                    m.set_bounds(reg.col(VarFamily::ev_power, {n, s, t}),
                                 cfg.v2g_enabled ? -pmax : 0.0, pmax);
        for (int n = 0; n < c.fleet_slots; ++n)
            for (int t = 0; t < T; ++t)
                m.set_bounds(reg.col(VarFamily::ev_soc, {n, t}), 0.0, c.max_ev_capacity_kwh());
        for (int s = 0; s < c.cs_slots; ++s)
            for (int b = 0; b < B; ++b)
                for (int t = 0; t < T; ++t)
                    m.set_bounds(reg.col(VarFamily::cs_power, {s, b, t}),
                                 cfg.v2g_enabled ? -csmax : 0.0, csmax);
        for (int n = 0; n < c.fleet_slots; ++n)
            for (int r = 0; r < R; ++r)
                m.set_bounds(reg.col(VarFamily::away_energy, {n, r}), 0.0,
                             away_energy_cap(c.rides[r], c.ride_away_rating(c.rides[r]),
                                             c.grid.step_hours));
        if (cfg.v2g_enabled) {
            const auto& fam = reg.family(VarFamily::ev_discharge);
            for (int j = fam.offset; j < fam.offset + fam.size; ++j) m.set_bounds(j, 0.0, pmax);
        }
    }
    for (int t = 0; t < T; ++t) {
        if (opts.mode == BuildMode::msp_only) {
            const double headroom = opts.residual_import_kw[t];
            if (headroom < 0.0)
                throw std::invalid_argument("negative residual transformer capacity at period " +
                                            std::to_string(t));
            m.set_bounds(reg.col(VarFamily::grid_import, {t}), 0.0, headroom);
            m.fix(reg.col(VarFamily::grid_export, {t}), 0.0);
        } else {
            m.set_bounds(reg.col(VarFamily::grid_import, {t}), 0.0, kInfinity);
            m.set_bounds(reg.col(VarFamily::grid_export, {t}), 0.0, kInfinity);
        }
    }
    if (net) {
        const double S = c.network.base_power_kva;
        for (int b = 0; b < B; ++b)
            for (int t = 0; t < T; ++t) {
                m.set_bounds(reg.col(VarFamily::pv_dispatch, {b, t}), 0.0,
                             ctx.pv_potential_kw[b][t]);
                if (b == ctx.slack_pos) {
                    m.fix(reg.col(VarFamily::v_sqr, {b, t}), 1.0);
                } else {
                    m.set_bounds(reg.col(VarFamily::v_sqr, {b, t}), c.network.v_min_sqr,
                                 c.network.v_max_sqr);
                }
            }
        for (int l = 0; l < L; ++l)
            for (int t = 0; t < T; ++t)
                m.set_bounds(reg.col(VarFamily::i_sqr, {l, t}), 0.0,
                             c.network.amp_limit_sqr_pu(c.network.lines[l]));
        if (cfg.peak_mode == PeakTariffMode::individual) {
            const auto& fam = reg.family(VarFamily::import_pos);
            for (int j = fam.offset; j < fam.offset + fam.size; ++j)
                m.set_bounds(j, 0.0, kInfinity);
            const auto& pf = reg.family(VarFamily::peak_import);
            for (int j = pf.offset; j < pf.offset + pf.size; ++j) m.set_bounds(j, 0.0, kInfinity);
        } else if (cfg.peak_mode == PeakTariffMode::collective) {
            m.set_bounds(reg.col(VarFamily::peak_coll), 0.0, kInfinity);
        }
    }

    if (ev) {
        add_investment_constraints_impl(m, c, cfg, ctx);
        add_assignment_constraints_impl(m, c, ctx);
        add_ev_operation_constraints_impl(m, c, cfg, opts, ctx);
    }
    add_power_balance_impl(m, c, opts, ctx);
    add_distflow_constraints_impl(m, c, opts, ctx);
    if (net) add_peak_tariff_impl(m, c, cfg.peak_mode, ctx);
    add_objective_impl(m, c, cfg, opts, ctx);
    return m;
}

}  // namespace ecfleet

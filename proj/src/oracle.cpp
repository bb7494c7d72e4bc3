#include "ecfleet/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace ecfleet {

PowerFlowResult ac_power_flow(const RadialNetwork& net, const std::vector<double>& p_inj_kw,
                              const std::vector<double>& q_inj_kvar, double tol_pu,
                              int max_sweeps) {
    const auto order = net.topological_order();
    if (order.empty()) throw std::invalid_argument("ac_power_flow: network is not a radial tree");
    const int B = static_cast<int>(net.buses.size());
    const int L = static_cast<int>(net.lines.size());
    if (static_cast<int>(p_inj_kw.size()) != B || static_cast<int>(q_inj_kvar.size()) != B)
        throw std::invalid_argument("ac_power_flow: injection vectors must match the bus count");

    std::map<BusId, int> pos;
    for (int i = 0; i < B; ++i) pos[net.buses[i]] = i;
    std::vector<int> line_into(B, -1);  // by bus position
    std::vector<std::vector<int>> child_lines(B);
    for (int l = 0; l < L; ++l) {
        line_into[pos.at(net.lines[l].bus)] = l;
        child_lines[pos.at(net.lines[l].parent)].push_back(l);
    }

    const double S = net.base_power_kva;
    std::vector<double> p_pu(B), q_pu(B);
    for (int b = 0; b < B; ++b) {
        p_pu[b] = p_inj_kw[b] / S;
        q_pu[b] = q_inj_kvar[b] / S;
    }

    PowerFlowResult res;
    res.v_sqr.assign(B, 1.0);
    res.i_sqr.assign(L, 0.0);
    res.p_send.assign(L, 0.0);
    res.q_send.assign(L, 0.0);

    std::vector<int> order_pos;
    for (BusId b : order) order_pos.push_back(pos.at(b));

    for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
        // backward: accumulate receiving-end flows and line losses up the tree
        std::vector<double> p_recv(L, 0.0), q_recv(L, 0.0);
        for (auto it = order_pos.rbegin(); it != order_pos.rend(); ++it) {
            const int b = *it;
            const int l = line_into[b];
            if (l < 0) continue;  // slack
            double p = -p_pu[b], q = -q_pu[b];
            for (int cl : child_lines[b]) {
                p += res.p_send[cl];
                q += res.q_send[cl];
            }
            p_recv[l] = p;
            q_recv[l] = q;
            const double i2 = (p * p + q * q) / res.v_sqr[b];
            res.i_sqr[l] = i2;
            res.p_send[l] = p + net.r_pu(net.lines[l]) * i2;
            res.q_send[l] = q + net.x_pu(net.lines[l]) * i2;
        }
        // forward: propagate voltages down from the slack
        double max_dv = 0.0;
        for (int b : order_pos) {
            const int l = line_into[b];
            if (l < 0) {
                max_dv = std::max(max_dv, std::abs(res.v_sqr[b] - 1.0));
                res.v_sqr[b] = 1.0;
                continue;
            }
            const auto& ln = net.lines[l];
            const double r = net.r_pu(ln), x = net.x_pu(ln);
            const double va = res.v_sqr[pos.at(ln.parent)];
            const double v = va - 2.0 * (r * res.p_send[l] + x * res.q_send[l]) +
                             (r * r + x * x) * res.i_sqr[l];
            max_dv = std::max(max_dv, std::abs(v - res.v_sqr[b]));
            res.v_sqr[b] = v;
        }
        res.iterations = sweep;
        if (max_dv < tol_pu) {
            res.converged = true;
            break;
        }
    }

    double slack_p = 0.0, slack_q = 0.0, losses = 0.0;
    const int slack = pos.at(0);
    for (int cl : child_lines[slack]) {
        slack_p += res.p_send[cl];
        slack_q += res.q_send[cl];
    }
    for (int l = 0; l < L; ++l) losses += net.r_pu(net.lines[l]) * res.i_sqr[l];
    res.slack_p_kw = (slack_p - p_pu[slack]) * S;
    res.slack_q_kvar = (slack_q - q_pu[slack]) * S;
    res.losses_kw = losses * S;
    return res;
}

// ---- audit -----------------------------------------------------------------

namespace {

struct Audit {
    std::map<std::string, double>& res;
    void hit(const std::string& tag, double residual) {
        auto [it, inserted] = res.try_emplace(tag, residual);
        if (!inserted) it->second = std::max(it->second, residual);
    }
};

int rounded(double v) { return static_cast<int>(std::lround(v)); }

}  // namespace

std::vector<std::string> AuditReport::violated_families() const {
    std::vector<std::string> out;
    for (const auto& [tag, r] : max_residual) {
        if (tag == "25-slack") continue;  // informational
        if (r > tolerance) out.push_back(tag);
    }
    return out;
}

std::string AuditReport::to_json() const {
    nlohmann::json j;
    j["tolerance"] = tolerance;
    j["max_residual"] = max_residual;
    j["violations"] = violated_families();
    j["notes"] = notes;
    j["ok"] = ok();
    return j.dump(2);
}

AuditReport verify_solution(const CaseBundle& c, const ScenarioConfig& cfg,
                            const BuildOptions& opts, const VariableRegistry& reg,
                            const Solution& sol, double tol) {
    AuditReport rep;
    rep.tolerance = tol;
    Audit a{rep.max_residual};
    const auto& x = sol.x;
    const int T = c.grid.num_periods;
    const int NEV = c.fleet_slots;
    const int NCS = c.cs_slots;
    const int KEV = static_cast<int>(c.ev_catalog.size());
    const int KCS = static_cast<int>(c.cs_catalog.size());
    const int R = static_cast<int>(c.rides.size());
    const bool ev = opts.mode != BuildMode::ec_only;
    const bool net = opts.mode != BuildMode::msp_only;
    const double dt = c.grid.step_hours;
    const double S = c.network.base_power_kva;

    std::map<BusId, int> bus_pos;
    for (size_t i = 0; i < c.network.buses.size(); ++i)
        bus_pos[c.network.buses[i]] = static_cast<int>(i);
    const int B = static_cast<int>(c.network.buses.size());
    const int slack = bus_pos.at(0);

    auto val = [&](VarFamily f, std::initializer_list<int> idx) { return x[reg.col(f, idx)]; };

    // per-bus aggregates straight from the case
    std::vector<std::vector<double>> load(B, std::vector<double>(T, 0.0));
    std::vector<std::vector<double>> qload(B, std::vector<double>(T, 0.0));
    std::vector<std::vector<double>> pvmax(B, std::vector<double>(T, 0.0));
    for (const auto& mem : c.members) {
        int b = bus_pos.at(mem.bus);
        for (int t = 0; t < T; ++t) {
            load[b][t] += mem.load_kw[t];
            qload[b][t] += mem.tan_phi() * mem.load_kw[t];
            pvmax[b][t] += mem.pv_potential_kw[t];
        }
    }

    if (ev) {
        // integrality of every binary family
        double worst = 0.0;
        auto check_int = [&](VarFamily f) {
            if (!reg.has(f)) return;
            const auto& fam = reg.family(f);
            for (int j = fam.offset; j < fam.offset + fam.size; ++j)
                worst = std::max(worst, std::abs(x[j] - std::lround(x[j])));
        };
        check_int(VarFamily::invest_ev);
        check_int(VarFamily::invest_cs);
        check_int(VarFamily::use_ride);
        check_int(VarFamily::ev_state);
        check_int(VarFamily::link);
        a.hit("integrality", worst);

        std::vector<double> cap_n(NEV, 0.0), pow_n(NEV, 0.0);
        std::vector<int> invested(NEV, 0);
        for (int n = 0; n < NEV; ++n) {
            double sum = 0.0;
            for (int k = 0; k < KEV; ++k) {
                const double d = val(VarFamily::invest_ev, {n, k});
                sum += d;
                cap_n[n] += d * c.ev_catalog[k].capacity_kwh;
                pow_n[n] += d * c.ev_catalog[k].power_kw;
            }
            invested[n] = rounded(sum);
            a.hit("5", sum - 1.0);
        }
        std::vector<double> cs_rating(NCS, 0.0);  // of the installed device
        std::vector<int> cs_installed(NCS, 0);
        for (int s = 0; s < NCS; ++s) {
            double sum = 0.0;
            for (int b = 0; b < B; ++b)
                for (int k = 0; k < KCS; ++k) {
                    const double d = val(VarFamily::invest_cs, {s, b, k});
                    sum += d;
                    cs_rating[s] += d * c.cs_catalog[k].power_kw;
                }
            cs_installed[s] = rounded(sum);
            a.hit("6", sum - 1.0);
        }

        std::vector<std::vector<int>> active(T), returning(T);
        for (int r = 0; r < R; ++r) {
            for (int t = std::max(0, c.rides[r].dep_period);
                 t <= std::min(T - 1, c.rides[r].ret_period); ++t)
                active[t].push_back(r);
            returning[c.rides[r].ret_period].push_back(r);
        }
        std::map<int, int> idx_of;
        for (int r = 0; r < R; ++r) idx_of[c.rides[r].id] = r;

        for (int r = 0; r < R; ++r) {
            double sum = 0.0;
            for (int n = 0; n < NEV; ++n) {
                const double u = val(VarFamily::use_ride, {n, r});
                sum += u;
                a.hit("8", u - (invested[n] ? 1.0 : 0.0));
            }
            a.hit("7", sum - 1.0);
        }
        for (const auto& [id1, id2] : overlapping_pairs(c.rides))
            for (int n = 0; n < NEV; ++n)
                a.hit("9", val(VarFamily::use_ride, {n, idx_of.at(id1)}) +
                               val(VarFamily::use_ride, {n, idx_of.at(id2)}) - 1.0);

        for (int n = 0; n < NEV; ++n)
            for (int t = 0; t < T; ++t) {
                double states = 0.0;
                for (int s = 0; s <= NCS; ++s) states += val(VarFamily::ev_state, {n, s, t});
                a.hit("10", states - (invested[n] ? 1.0 : 0.0));
                for (int s = 0; s < NCS; ++s)
                    a.hit("11", val(VarFamily::ev_state, {n, s, t}) - (cs_installed[s] ? 1.0 : 0.0));
                double uses = 0.0;
                for (int r : active[t]) uses += val(VarFamily::use_ride, {n, r});
                a.hit("12", std::abs(val(VarFamily::ev_state, {n, NCS, t}) - uses));
            }

        for (int n = 0; n < NEV; ++n) {
            double soc_replay = 0.0;
            for (int t = 0; t < T; ++t) {
                if (c.grid.is_block_start(t)) soc_replay = cap_n[n];
                for (int s = 0; s < NCS; ++s) {
                    const double p = val(VarFamily::ev_power, {n, s, t});
                    const double st = val(VarFamily::ev_state, {n, s, t});
                    a.hit("13", std::abs(p) - pow_n[n] * std::lround(st));
                    soc_replay += p * dt;
                }
                for (int r : returning[t]) {
                    const double u = val(VarFamily::use_ride, {n, r});
                    soc_replay += -c.rides[r].energy_kwh * u + val(VarFamily::away_energy, {n, r});
                }
                const double soc = val(VarFamily::ev_soc, {n, t});
                a.hit("16", std::abs(soc - soc_replay));
                a.hit("17", std::max(c.finance.soc_floor * cap_n[n] - soc, soc - cap_n[n]));
            }
            for (int r = 0; r < R; ++r) {
                const double u = val(VarFamily::use_ride, {n, r});
                if (std::lround(u) == 1)
                    a.hit("18", c.finance.soc_departure * cap_n[n] -
                                    val(VarFamily::ev_soc, {n, c.rides[r].dep_period}));
                const double cap =
                    away_energy_cap(c.rides[r], c.ride_away_rating(c.rides[r]), dt);
                const double away = val(VarFamily::away_energy, {n, r});
                a.hit("19", std::max(-away, away - cap * u));
            }
        }

        for (int s = 0; s < NCS; ++s)
            for (int t = 0; t < T; ++t) {
                double total = 0.0;
                for (int b = 0; b < B; ++b) {
                    const double p = val(VarFamily::cs_power, {s, b, t});
                    total += p;
                    double rating = 0.0;
                    for (int k = 0; k < KCS; ++k)
                        rating += val(VarFamily::invest_cs, {s, b, k}) * c.cs_catalog[k].power_kw;
                    a.hit("15", std::abs(p) - rating);
                }
                double evp = 0.0;
                for (int n = 0; n < NEV; ++n) evp += val(VarFamily::ev_power, {n, s, t});
                a.hit("14", std::abs(total - evp));
            }

        if (cfg.v2g_enabled) {
            for (int t = 0; t < T; ++t) {
                double discharge = 0.0;
                for (int n = 0; n < NEV; ++n)
                    for (int s = 0; s < NCS; ++s)
                        discharge += std::max(0.0, -val(VarFamily::ev_power, {n, s, t}));
                double demand = 0.0;
                if (net)
                    for (int b = 0; b < B; ++b) demand += load[b][t];
                a.hit("v2g-cap", discharge - demand);
            }
        } else if (reg.has(VarFamily::ev_power)) {
            const auto& fam = reg.family(VarFamily::ev_power);
            for (int j = fam.offset; j < fam.offset + fam.size; ++j) a.hit("13", -x[j] - 0.0);
        }
    }

    if (net) {
        std::vector<int> line_into(B, -1);
        std::vector<std::vector<int>> child_lines(B);
        for (size_t l = 0; l < c.network.lines.size(); ++l) {
            line_into[bus_pos.at(c.network.lines[l].bus)] = static_cast<int>(l);
            child_lines[bus_pos.at(c.network.lines[l].parent)].push_back(static_cast<int>(l));
        }
        for (int b = 0; b < B; ++b)
            for (int t = 0; t < T; ++t) {
                const double pv = val(VarFamily::pv_dispatch, {b, t});
                a.hit("20-pv", std::max(-pv, pv - pvmax[b][t]));
                double cs = 0.0;
                if (ev)
                    for (int s = 0; s < NCS; ++s) cs += val(VarFamily::cs_power, {s, b, t});
                double balance = S * val(VarFamily::p_inj, {b, t}) - pv + load[b][t] + cs;
                if (b == slack)
                    balance -= val(VarFamily::grid_import, {t}) - val(VarFamily::grid_export, {t});
                a.hit(b == slack ? "21" : "20", std::abs(balance));
                if (b != slack)
                    a.hit("20-q", std::abs(S * val(VarFamily::q_inj, {b, t}) + qload[b][t]));
            }
        for (int b = 0; b < B; ++b)
            for (int t = 0; t < T; ++t) {
                double p = val(VarFamily::p_inj, {b, t});
                double q = val(VarFamily::q_inj, {b, t});
                if (int l = line_into[b]; l >= 0) {
                    const auto& ln = c.network.lines[l];
                    p += val(VarFamily::p_line, {l, t}) -
                         c.network.r_pu(ln) * val(VarFamily::i_sqr, {l, t});
                    q += val(VarFamily::q_line, {l, t}) -
                         c.network.x_pu(ln) * val(VarFamily::i_sqr, {l, t});
                }
                for (int cl : child_lines[b]) {
                    p -= val(VarFamily::p_line, {cl, t});
                    q -= val(VarFamily::q_line, {cl, t});
                }
                a.hit("22", std::abs(p));
                a.hit("23", std::abs(q));
            }
        for (size_t l = 0; l < c.network.lines.size(); ++l) {
            const auto& ln = c.network.lines[l];
            const double r = c.network.r_pu(ln), xx = c.network.x_pu(ln);
            const int li = static_cast<int>(l);
            for (int t = 0; t < T; ++t) {
                const double vb = val(VarFamily::v_sqr, {bus_pos.at(ln.bus), t});
                const double va = val(VarFamily::v_sqr, {bus_pos.at(ln.parent), t});
                const double pl = val(VarFamily::p_line, {li, t});
                const double ql = val(VarFamily::q_line, {li, t});
                const double i2 = val(VarFamily::i_sqr, {li, t});
                a.hit("24", std::abs(vb - va + 2.0 * (r * pl + xx * ql) - (r * r + xx * xx) * i2));
                const double lhs = pl * pl + ql * ql;
                a.hit("25", (lhs - i2 * va) / std::max(1.0, lhs));
                a.hit("25-slack", (i2 * va - lhs) / std::max(1.0, lhs));
                a.hit("26", std::max(c.network.v_min_sqr - vb, vb - c.network.v_max_sqr));
                a.hit("27", std::max(-i2, i2 - c.network.amp_limit_sqr_pu(ln)));
            }
        }
        const double cap = c.network.transformer_rating_kw;
        for (int t = 0; t < T; ++t) {
            const double exchange =
                val(VarFamily::grid_import, {t}) - val(VarFamily::grid_export, {t});
            a.hit("28", std::abs(exchange) - cap);
            a.hit("26", std::abs(val(VarFamily::v_sqr, {slack, t}) - 1.0));
        }
    } else {
        // stand-alone fleet: residual import bounds and the deposit balance
        for (int t = 0; t < T; ++t) {
            const double imp = val(VarFamily::grid_import, {t});
            const double exp = val(VarFamily::grid_export, {t});
            double cs = 0.0;
            for (int s = 0; s < NCS; ++s) cs += val(VarFamily::cs_power, {s, slack, t});
            a.hit("21", std::abs(cs - imp + exp));
            if (static_cast<int>(opts.residual_import_kw.size()) == T)
                a.hit("28", std::max(-imp, imp - opts.residual_import_kw[t]));
        }
    }

    if (cfg.peak_mode == PeakTariffMode::collective && reg.has(VarFamily::peak_coll)) {
        const double peak = x[reg.col(VarFamily::peak_coll)];
        double max_import = 0.0;
        for (int t = 0; t < T; ++t)
            max_import = std::max(max_import, val(VarFamily::grid_import, {t}));
        a.hit("peak", max_import - peak);
        if (c.tariffs.peak_fee > 0.0 && sol.status == SolveStatus::optimal)
            a.hit("peak", std::abs(peak - max_import));
    }
    if (cfg.peak_mode == PeakTariffMode::individual && reg.has(VarFamily::peak_import)) {
        for (int b = 0; b < B; ++b) {
            const double peak = val(VarFamily::peak_import, {b});
            for (int t = 0; t < T; ++t) {
                double metered = load[b][t] - val(VarFamily::pv_dispatch, {b, t});
                if (ev)
                    for (int s = 0; s < NCS; ++s) metered += val(VarFamily::cs_power, {s, b, t});
                a.hit("peak", std::min(metered, metered - peak));  // peak >= positive part
            }
        }
    }

    // objective recomputed from the cost semantics
    {
        const double af = c.grid.annualization_factor;
        const double crf =
            capital_recovery_factor(c.finance.discount_rate, c.finance.horizon_years);
        double cost = 0.0;
        if (ev) {
            for (int n = 0; n < NEV; ++n)
                for (int k = 0; k < KEV; ++k)
                    cost += val(VarFamily::invest_ev, {n, k}) *
                            (crf * c.ev_catalog[k].price_eur + c.ev_catalog[k].fixed_cost_eur_per_year);
            for (int s = 0; s < NCS; ++s)
                for (int b = 0; b < B; ++b)
                    for (int k = 0; k < KCS; ++k)
                        cost += val(VarFamily::invest_cs, {s, b, k}) * crf * c.cs_catalog[k].price_eur;
            for (int r = 0; r < R; ++r) {
                double served = 0.0;
                for (int n = 0; n < NEV; ++n) {
                    served += val(VarFamily::use_ride, {n, r});
                    cost += af * c.tariffs.away_price * val(VarFamily::away_energy, {n, r});
                }
                cost += af * c.tariffs.unserved_price * c.rides[r].energy_kwh * (1.0 - served);
            }
        }
        const auto price = effective_import_price(c, cfg.peak_mode);
        for (int t = 0; t < T; ++t)
            cost += af * dt *
                    (price[t] * val(VarFamily::grid_import, {t}) -
                     c.tariffs.export_price[t] * val(VarFamily::grid_export, {t}));
        if (cfg.peak_mode == PeakTariffMode::none_fixed && opts.mode != BuildMode::msp_only)
            cost += c.tariffs.fixed_peak_charge;
        if (cfg.peak_mode == PeakTariffMode::collective && reg.has(VarFamily::peak_coll))
            cost += c.tariffs.peak_fee * x[reg.col(VarFamily::peak_coll)];
        if (cfg.peak_mode == PeakTariffMode::individual && reg.has(VarFamily::peak_import))
            for (int b = 0; b < B; ++b)
                cost += c.tariffs.peak_fee * val(VarFamily::peak_import, {b});
        a.hit("objective", std::abs(cost - sol.objective));
    }

    return rep;
}

// ---- brute force -----------------------------------------------------------------

BruteForceResult brute_force_plan(const CaseBundle& c, const ScenarioConfig& cfg,
                                  ConicMilpEngine& engine, const SolverOptions& opts,
                                  const BuildOptions& build) {
    if (c.cs_slots != 1)
        throw std::invalid_argument(
            "instance too large: enumeration supports a single charging-station slot");
    const int NEV = c.fleet_slots;
    const int KEV = static_cast<int>(c.ev_catalog.size());
    const int KCS = static_cast<int>(c.cs_catalog.size());
    const int R = static_cast<int>(c.rides.size());
    const int B = static_cast<int>(c.network.buses.size());
    const int cs_buses = cfg.cs_location == CsLocationMode::slack_only ? 1 : B;
    const long n_binaries = static_cast<long>(NEV) * KEV + static_cast<long>(cs_buses) * KCS +
                            static_cast<long>(R) * NEV;
    if (n_binaries > 24)
        throw std::invalid_argument("instance too large: " + std::to_string(n_binaries) +
                                    " investment/assignment binaries (cap 24)");

    BruteForceResult out;
    out.model = build_model(c, cfg, build);
    const auto& reg = out.model.registry;

    std::map<BusId, int> bus_pos;
    for (size_t i = 0; i < c.network.buses.size(); ++i)
        bus_pos[c.network.buses[i]] = static_cast<int>(i);
    const int slack = bus_pos.at(0);

    const auto pairs = overlapping_pairs(c.rides);
    std::map<int, int> idx_of;
    for (int r = 0; r < R; ++r) idx_of[c.rides[r].id] = r;
    std::vector<std::pair<int, int>> overlap_idx;
    for (const auto& [a, b] : pairs) overlap_idx.emplace_back(idx_of.at(a), idx_of.at(b));

    std::vector<int> ev_choice(NEV, -1);       // candidate per slot, -1 = none
    std::pair<int, int> cs_choice{-1, -1};     // (bus position, candidate), -1 = none
    std::vector<int> ride_choice(R, -1);       // EV slot per ride, -1 = refused

    Solution best;
    best.status = SolveStatus::infeasible;
    bool have_best = false;

    std::function<void(int)> assign_rides = [&](int r) {
        if (r == R) {
            ++out.combos_tried;
            ModelInstance m = out.model;  // copy, then pin the long-term binaries
            for (int n = 0; n < NEV; ++n)
                for (int k = 0; k < KEV; ++k)
                    m.fix(reg.col(VarFamily::invest_ev, {n, k}), ev_choice[n] == k ? 1.0 : 0.0);
            for (int b = 0; b < B; ++b)
                for (int k = 0; k < KCS; ++k)
                    m.fix(reg.col(VarFamily::invest_cs, {0, b, k}),
                          (cs_choice.first == b && cs_choice.second == k) ? 1.0 : 0.0);
            for (int rr = 0; rr < R; ++rr)
                for (int n = 0; n < NEV; ++n)
                    m.fix(reg.col(VarFamily::use_ride, {n, rr}), ride_choice[rr] == n ? 1.0 : 0.0);
            // in-use state is pinned by the assignment; with one station the
            // idle state of an invested EV is plugged whenever a station exists
            for (int n = 0; n < NEV; ++n)
                for (int t = 0; t < c.grid.num_periods; ++t) {
                    bool in_use = false;
                    for (int rr = 0; rr < R; ++rr)
                        if (ride_choice[rr] == n && c.rides[rr].dep_period <= t &&
                            t <= c.rides[rr].ret_period)
                            in_use = true;
                    m.fix(reg.col(VarFamily::ev_state, {n, 1, t}), in_use ? 1.0 : 0.0);
                    const bool plugged =
                        !in_use && ev_choice[n] >= 0 && cs_choice.first >= 0;
                    m.fix(reg.col(VarFamily::ev_state, {n, 0, t}), plugged ? 1.0 : 0.0);
                }
            Solution sol = engine.solve_relaxation(m, opts);
            if (sol.status == SolveStatus::optimal) {
                ++out.combos_feasible;
                if (!have_best || sol.objective < best.objective) {
                    // snap the pinned binaries to their exact values
                    for (int j = 0; j < m.num_cols(); ++j)
                        if (m.integer_col[j] && m.col_lb[j] == m.col_ub[j])
                            sol.x[j] = m.col_lb[j];
                    best = std::move(sol);
                    have_best = true;
                }
            }
            return;
        }
        for (int n = -1; n < NEV; ++n) {
            if (n >= 0) {
                if (ev_choice[n] < 0) continue;  // no car in that slot
                bool clash = false;
                for (const auto& [r1, r2] : overlap_idx) {
                    if ((r1 == r && ride_choice[r2] == n) || (r2 == r && ride_choice[r1] == n))
                        clash = true;
                }
                if (clash) continue;
            }
            ride_choice[r] = n;
            assign_rides(r + 1);
        }
        ride_choice[r] = -1;
    };

    std::function<void(int)> pick_fleet = [&](int n) {
        if (n == NEV) {
            if (cfg.cs_location == CsLocationMode::slack_only) {
                cs_choice = {-1, -1};
                assign_rides(0);
                for (int k = 0; k < KCS; ++k) {
                    cs_choice = {slack, k};
                    assign_rides(0);
                }
            } else {
                cs_choice = {-1, -1};
                assign_rides(0);
                for (int b = 0; b < B; ++b)
                    for (int k = 0; k < KCS; ++k) {
                        cs_choice = {b, k};
                        assign_rides(0);
                    }
            }
            return;
        }
        // slots are interchangeable: enforce non-increasing candidate choices
        const int prev = n == 0 ? KEV - 1 : ev_choice[n - 1];
        for (int k = -1; k <= prev; ++k) {
            ev_choice[n] = k;
            pick_fleet(n + 1);
        }
        ev_choice[n] = -1;
    };
    pick_fleet(0);

    out.solution = std::move(best);
    return out;
}

}  // namespace ecfleet

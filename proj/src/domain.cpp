#include "ecfleet/domain.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

namespace ecfleet {

TimeGrid TimeGrid::make(double step_hours, int num_periods,
                        std::vector<Period> block_boundaries) {
    if (step_hours <= 0.0) throw std::invalid_argument("TimeGrid: step_hours must be > 0");
    if (num_periods <= 0) throw std::invalid_argument("TimeGrid: num_periods must be > 0");
    if (block_boundaries.empty()) block_boundaries.push_back(0);
    TimeGrid g;
    g.step_hours = step_hours;
    g.num_periods = num_periods;
    g.block_boundaries = std::move(block_boundaries);
    g.annualization_factor = kHoursPerYear / (num_periods * step_hours);
    return g;
}

bool TimeGrid::is_block_start(Period t) const {
    return std::find(block_boundaries.begin(), block_boundaries.end(), t) !=
           block_boundaries.end();
}

int TimeGrid::block_of(Period t) const {
    int block = 0;
    for (size_t i = 0; i < block_boundaries.size(); ++i) {
        if (t >= block_boundaries[i]) block = static_cast<int>(i);
    }
    return block;
}

const Line* RadialNetwork::line_to(BusId bus) const {
    for (const auto& l : lines) {
        if (l.bus == bus) return &l;
    }
    return nullptr;
}

bool RadialNetwork::has_bus(BusId bus) const {
    return std::find(buses.begin(), buses.end(), bus) != buses.end();
}

std::vector<std::vector<BusId>> RadialNetwork::children_by_bus() const {
    BusId max_id = 0;
    for (BusId b : buses) max_id = std::max(max_id, b);
    std::vector<std::vector<BusId>> children(static_cast<size_t>(max_id) + 1);
    for (const auto& l : lines) {
        if (l.parent >= 0 && l.parent <= max_id) children[l.parent].push_back(l.bus);
    }
    return children;
}

std::vector<BusId> RadialNetwork::topological_order() const {
    if (!has_bus(0)) return {};
    if (lines.size() + 1 != buses.size()) return {};
    for (const auto& l : lines) {
        if (l.bus == 0 || !has_bus(l.bus) || !has_bus(l.parent)) return {};
    }
    // every non-slack bus needs exactly one incoming line
    std::set<BusId> reached;
    auto children = children_by_bus();
    std::vector<BusId> order;
    order.reserve(buses.size());
    std::vector<BusId> stack{0};
    while (!stack.empty()) {
        BusId b = stack.back();
        stack.pop_back();
        if (!reached.insert(b).second) return {};  // cycle or duplicate line
        order.push_back(b);
        if (b < static_cast<BusId>(children.size())) {
            for (BusId c : children[b]) stack.push_back(c);
        }
    }
    if (order.size() != buses.size()) return {};  // disconnected
    return order;
}

bool MemberProfile::is_prosumer() const {
    for (double p : pv_potential_kw) {
        if (p > 0.0) return true;
    }
    return false;
}

double CaseBundle::max_ev_capacity_kwh() const {
    double m = 0.0;
    for (const auto& k : ev_catalog) m = std::max(m, k.capacity_kwh);
    return m;
}

double CaseBundle::max_ev_power_kw() const {
    double m = 0.0;
    for (const auto& k : ev_catalog) m = std::max(m, k.power_kw);
    return m;
}

double CaseBundle::total_load_kw(Period t) const {
    double sum = 0.0;
    for (const auto& m : members) {
        if (t >= 0 && t < static_cast<Period>(m.load_kw.size())) sum += m.load_kw[t];
    }
    return sum;
}

std::vector<std::pair<int, int>> overlapping_pairs(const std::vector<RideRequest>& rides) {
    // sort by departure, sweep an active set ordered by return period
    std::vector<const RideRequest*> by_dep;
    by_dep.reserve(rides.size());
    for (const auto& r : rides) by_dep.push_back(&r);
    std::sort(by_dep.begin(), by_dep.end(), [](const RideRequest* a, const RideRequest* b) {
        if (a->dep_period != b->dep_period) return a->dep_period < b->dep_period;
        return a->id < b->id;
    });

    std::vector<std::pair<int, int>> pairs;
    std::vector<const RideRequest*> active;
    for (const RideRequest* r : by_dep) {
        std::erase_if(active, [&](const RideRequest* a) { return a->ret_period < r->dep_period; });
        for (const RideRequest* a : active) {
            pairs.emplace_back(std::min(a->id, r->id), std::max(a->id, r->id));
        }
        active.push_back(r);
    }
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
    return pairs;
}

std::vector<int> rides_active_at(const std::vector<RideRequest>& rides, Period t) {
    std::vector<int> out;
    for (const auto& r : rides) {
        if (r.dep_period <= t && t <= r.ret_period) out.push_back(r.id);
    }
    return out;
}

std::vector<int> rides_returning_at(const std::vector<RideRequest>& rides, Period t) {
    std::vector<int> out;
    for (const auto& r : rides) {
        if (r.ret_period == t) out.push_back(r.id);
    }
    return out;
}

double capital_recovery_factor(double rho, int years) {
    if (rho < 0.0) throw std::invalid_argument("capital_recovery_factor: negative discount rate");
    if (years < 1) throw std::invalid_argument("capital_recovery_factor: years must be >= 1");
    if (rho == 0.0) return 1.0 / years;
    const double growth = std::pow(1.0 + rho, years);
    return rho * growth / (growth - 1.0);
}

double away_energy_cap(const RideRequest& ride, double away_rating_kw, double step_hours) {
    return away_rating_kw * (ride.ret_period - ride.dep_period) * step_hours;
}

bool ValidationReport::ok() const {
    return std::none_of(issues.begin(), issues.end(),
                        [](const ValidationIssue& i) { return i.severity == Severity::error; });
}

std::vector<std::string> ValidationReport::error_messages() const {
    std::vector<std::string> out;
    for (const auto& i : issues) {
        if (i.severity == Severity::error) out.push_back(i.message);
    }
    return out;
}

namespace {

void add_issue(ValidationReport& rep, Severity sev, std::string code, std::string msg) {
    rep.issues.push_back({sev, std::move(code), std::move(msg)});
}

template <typename... Args>
std::string fmt(Args&&... args) {
    std::ostringstream os;
    (os << ... << args);
    return os.str();
}

}  // namespace

ValidationReport validate_case(const CaseBundle& c) {
    ValidationReport rep;
    const int T = c.grid.num_periods;

    if (c.grid.step_hours <= 0.0)
        add_issue(rep, Severity::error, "grid.step", "time step must be positive");
    if (T <= 0) add_issue(rep, Severity::error, "grid.periods", "horizon has no periods");
    if (c.grid.block_boundaries.empty() || c.grid.block_boundaries.front() != 0)
        add_issue(rep, Severity::error, "grid.blocks", "first block must start at period 0");
    for (size_t i = 1; i < c.grid.block_boundaries.size(); ++i) {
        if (c.grid.block_boundaries[i] <= c.grid.block_boundaries[i - 1] ||
            c.grid.block_boundaries[i] >= T)
            add_issue(rep, Severity::error, "grid.blocks",
                      fmt("block boundary ", c.grid.block_boundaries[i], " out of order or range"));
    }
    const double af = kHoursPerYear / (T * c.grid.step_hours);
    if (T > 0 && std::abs(c.grid.annualization_factor - af) > 1e-9)
        add_issue(rep, Severity::error, "grid.annualization",
                  "annualization factor inconsistent with horizon length");

    if (!c.network.is_tree())
        add_issue(rep, Severity::error, "network.tree",
                  "lines do not form a tree rooted at the slack bus 0");
    for (const auto& l : c.network.lines) {
        if (l.r_ohm < 0.0 || l.x_ohm < 0.0)
            add_issue(rep, Severity::error, "network.impedance",
                      fmt("line to bus ", l.bus, " has negative impedance"));
        if (l.amp_limit_sqr <= 0.0)
            add_issue(rep, Severity::error, "network.ampacity",
                      fmt("line to bus ", l.bus, " has non-positive ampacity"));
    }
    if (c.network.v_min_sqr >= c.network.v_max_sqr)
        add_issue(rep, Severity::error, "network.vband", "v_min_sqr must be < v_max_sqr");
    if (c.network.transformer_rating_kw <= 0.0)
        add_issue(rep, Severity::error, "network.transformer", "transformer rating must be positive");

    for (const auto& m : c.members) {
        if (!c.network.has_bus(m.bus))
            add_issue(rep, Severity::error, "member.bus", fmt("member bus ", m.bus, " not in network"));
        if (static_cast<int>(m.load_kw.size()) != T || static_cast<int>(m.pv_potential_kw.size()) != T)
            add_issue(rep, Severity::error, "member.series",
                      fmt("member at bus ", m.bus, " has series length != horizon"));
        for (double v : m.load_kw) {
            if (v < 0.0) {
                add_issue(rep, Severity::error, "member.load",
                          fmt("negative load at bus ", m.bus));
                break;
            }
        }
        for (double v : m.pv_potential_kw) {
            if (v < 0.0) {
                add_issue(rep, Severity::error, "member.pv",
                          fmt("negative PV potential at bus ", m.bus));
                break;
            }
        }
        if (m.power_factor <= 0.0 || m.power_factor > 1.0)
            add_issue(rep, Severity::error, "member.pf",
                      fmt("power factor at bus ", m.bus, " outside (0, 1]"));
    }

    if (static_cast<int>(c.tariffs.import_price.size()) != T ||
        static_cast<int>(c.tariffs.export_price.size()) != T)
        add_issue(rep, Severity::error, "tariff.series", "price series length != horizon");
    for (int t = 0; t < std::min<int>(T, c.tariffs.import_price.size()); ++t) {
        if (c.tariffs.import_price[t] < 0.0 || t >= static_cast<int>(c.tariffs.export_price.size()) ||
            c.tariffs.export_price[t] < 0.0) {
            add_issue(rep, Severity::error, "tariff.negative", "negative price in schedule");
            break;
        }
    }
    for (int t = 0; t < std::min<int>(c.tariffs.import_price.size(), c.tariffs.export_price.size());
         ++t) {
        if (c.tariffs.import_price[t] < c.tariffs.export_price[t]) {
            add_issue(rep, Severity::warning, "tariff.spread",
                      fmt("import price below export price at period ", t));
            break;
        }
    }
    if (c.tariffs.away_price < 0.0 || c.tariffs.unserved_price < 0.0 ||
        c.tariffs.volumetric_fee < 0.0 || c.tariffs.capacity_volumetric_fee < 0.0 ||
        c.tariffs.peak_fee < 0.0 || c.tariffs.fixed_peak_charge < 0.0)
        add_issue(rep, Severity::error, "tariff.negative", "negative tariff parameter");

    std::set<int> ride_ids;
    for (const auto& r : c.rides) {
        if (!ride_ids.insert(r.id).second)
            add_issue(rep, Severity::error, "ride.id", fmt("duplicate ride id ", r.id));
        if (r.dep_period > r.ret_period)
            add_issue(rep, Severity::error, "ride.window",
                      fmt("ride ", r.id, " departs after it returns"));
        if (r.dep_period < 0 || r.ret_period >= T)
            add_issue(rep, Severity::error, "ride.horizon",
                      fmt("ride ", r.id, " window outside the horizon"));
        else if (c.grid.block_of(r.dep_period) != c.grid.block_of(r.ret_period))
            add_issue(rep, Severity::error, "ride.block",
                      fmt("ride ", r.id, " crosses a representative-block boundary"));
        if (r.energy_kwh < 0.0)
            add_issue(rep, Severity::error, "ride.energy", fmt("ride ", r.id, " has negative demand"));
    }

    for (const auto& k : c.ev_catalog) {
        if (k.capacity_kwh <= 0.0 || k.power_kw <= 0.0 || k.price_eur <= 0.0 ||
            k.fixed_cost_eur_per_year <= 0.0)
            add_issue(rep, Severity::error, "catalog.ev",
                      fmt("EV candidate '", k.name, "' has a non-positive property"));
    }
    for (const auto& k : c.cs_catalog) {
        if (k.power_kw <= 0.0 || k.price_eur <= 0.0)
            add_issue(rep, Severity::error, "catalog.cs",
                      fmt("CS candidate '", k.name, "' has a non-positive property"));
    }

    if (c.fleet_slots < 1)
        add_issue(rep, Severity::error, "slots.fleet", "fleet_slots must be >= 1");
    if (c.cs_slots < 1) add_issue(rep, Severity::error, "slots.cs", "cs_slots must be >= 1");
    if (c.away_rating_kw <= 0.0)
        add_issue(rep, Severity::error, "away.rating", "away charger rating must be positive");

    const auto& f = c.finance;
    if (f.discount_rate < 0.0 || f.discount_rate >= 1.0)
        add_issue(rep, Severity::error, "finance.rate", "discount rate outside [0, 1)");
    if (f.horizon_years < 1)
        add_issue(rep, Severity::error, "finance.horizon", "investment horizon must be >= 1 year");
    if (!(0.0 <= f.soc_floor && f.soc_floor <= f.soc_departure && f.soc_departure <= 1.0))
        add_issue(rep, Severity::error, "finance.soc",
                  "need 0 <= soc_floor <= soc_departure <= 1");

    return rep;
}

}  // namespace ecfleet

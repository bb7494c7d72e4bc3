#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace ecfleet {

using BusId = int;
using Period = int;

constexpr double kHoursPerYear = 8760.0;

/// Discretized operating horizon made of contiguous representative blocks
/// (weeks or days), scaled to one year by annualization_factor.
struct TimeGrid {
    double step_hours = 0.25;
    int num_periods = 0;
    std::vector<Period> block_boundaries;  // start index per block, first is 0
    double annualization_factor = 0.0;     // 8760 / (num_periods * step_hours)

    static TimeGrid make(double step_hours, int num_periods,
                         std::vector<Period> block_boundaries);

    bool is_block_start(Period t) const;
    /// Index of the block containing t.
    int block_of(Period t) const;
    double represented_hours() const { return num_periods * step_hours; }
};

struct Line {
    BusId bus = -1;     // receiving-end bus, unique per line
    BusId parent = -1;  // sending-end bus
    double r_ohm = 0.0;
    double x_ohm = 0.0;
    double amp_limit_sqr = 0.0;  // ampacity, stored squared (A^2)
};

/// Radial LV feeder rooted at the slack bus (id 0) where the community
/// exchanges power with the upstream grid through the MV/LV transformer.
struct RadialNetwork {
    std::vector<BusId> buses;  // includes slack
    std::vector<Line> lines;   // exactly one line per non-slack bus
    double v_min_sqr = 0.81;   // EN50160 +-10% band, squared p.u.
    double v_max_sqr = 1.21;
    double transformer_rating_kw = 60.0;
    double base_voltage_v = 400.0;
    double base_power_kva = 100.0;

    double z_base_ohm() const {
        return base_voltage_v * base_voltage_v / (base_power_kva * 1000.0);
    }
    double i_base_a() const { return base_power_kva * 1000.0 / base_voltage_v; }

    double r_pu(const Line& l) const { return l.r_ohm / z_base_ohm(); }
    double x_pu(const Line& l) const { return l.x_ohm / z_base_ohm(); }
    double amp_limit_sqr_pu(const Line& l) const {
        const double ib = i_base_a();
        return l.amp_limit_sqr / (ib * ib);
    }

    const Line* line_to(BusId bus) const;
    bool has_bus(BusId bus) const;
    std::vector<std::vector<BusId>> children_by_bus() const;  // indexed by bus id
    /// Parents-before-children ordering starting at the slack; empty if the
    /// parent relation is not a tree rooted at 0.
    std::vector<BusId> topological_order() const;
    bool is_tree() const { return !topological_order().empty(); }
};

struct EvCandidate {
    std::string name;
    double capacity_kwh = 0.0;
    double power_kw = 0.0;
    double price_eur = 0.0;
    double fixed_cost_eur_per_year = 0.0;
};

struct CsCandidate {
    std::string name;
    double power_kw = 0.0;
    double price_eur = 0.0;
};

struct RideRequest {
    int id = -1;
    Period dep_period = 0;
    Period ret_period = 0;
    double energy_kwh = 0.0;
    /// On-trip charger rating override; <= 0 means "use the case default".
    double away_rating_kw = 0.0;
};

enum class GridFeeMode { volumetric_flat, capacity_based };

struct TariffSchedule {
    std::vector<double> import_price;  // EUR/kWh per period, energy part
    std::vector<double> export_price;
    double away_price = 0.45;      // EUR/kWh charged on-trip
    double unserved_price = 2.0;   // EUR/kWh of refused ride demand
    GridFeeMode grid_fee_mode = GridFeeMode::volumetric_flat;
    double volumetric_fee = 0.099;           // EUR/kWh grid fee, flat regime
    double capacity_volumetric_fee = 0.064;  // EUR/kWh grid fee, peak regime
    double peak_fee = 59.0;                  // EUR/kW/year on peak import
    double fixed_peak_charge = 3108.0;       // EUR/year, flat regime
};

struct MemberProfile {
    BusId bus = -1;
    std::vector<double> load_kw;          // per period, >= 0
    double power_factor = 0.8;            // inductive
    std::vector<double> pv_potential_kw;  // per period, zero series for consumers

    double tan_phi() const {
        return std::tan(std::acos(power_factor));
    }
    bool is_prosumer() const;
};

struct FinanceParams {
    double discount_rate = 0.05;  // fraction/year; not given by the source data
    int horizon_years = 7;
    double soc_floor = 0.10;      // min state-of-charge fraction
    double soc_departure = 0.80;  // required fraction at ride departure
};

/// Full input to any scenario run.
struct CaseBundle {
    RadialNetwork network;
    TimeGrid grid;
    std::vector<MemberProfile> members;
    TariffSchedule tariffs;
    std::vector<RideRequest> rides;
    std::vector<EvCandidate> ev_catalog;
    std::vector<CsCandidate> cs_catalog;
    int fleet_slots = 1;
    int cs_slots = 1;
    double away_rating_kw = 11.0;  // default public charger rating on trips
    FinanceParams finance;

    double ride_away_rating(const RideRequest& r) const {
        return r.away_rating_kw > 0.0 ? r.away_rating_kw : away_rating_kw;
    }
    double max_ev_capacity_kwh() const;
    double max_ev_power_kw() const;
    double total_load_kw(Period t) const;
};

// ---- pure index/set computations ----------------------------------------

/// Pairs of ride ids (r1 < r2) whose closed windows intersect; a shared
/// boundary period counts as overlap.
std::vector<std::pair<int, int>> overlapping_pairs(const std::vector<RideRequest>& rides);

std::vector<int> rides_active_at(const std::vector<RideRequest>& rides, Period t);
std::vector<int> rides_returning_at(const std::vector<RideRequest>& rides, Period t);

/// Uniform capital recovery factor: rho = 0 gives 1/n, otherwise
/// rho(1+rho)^n / ((1+rho)^n - 1). Throws std::invalid_argument on rho < 0
/// or n < 1.
double capital_recovery_factor(double rho, int years);

/// Energy that can be charged on-trip: rating * window length.
double away_energy_cap(const RideRequest& ride, double away_rating_kw, double step_hours);

// ---- validation ----------------------------------------------------------

enum class Severity { error, warning };

struct ValidationIssue {
    Severity severity = Severity::error;
    std::string code;
    std::string message;
};

struct ValidationReport {
    std::vector<ValidationIssue> issues;

    bool ok() const;  // no error-severity issues
    bool empty() const { return issues.empty(); }
    std::vector<std::string> error_messages() const;
};

ValidationReport validate_case(const CaseBundle& bundle);

}  // namespace ecfleet

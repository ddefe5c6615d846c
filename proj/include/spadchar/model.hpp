#pragma once

// Deterministic detector physics: trapped-carrier populations, avalanche charge
// and the bias-dependent efficiency and dark-rate maps. Nothing here draws
// random numbers.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "spadchar/error.hpp"

namespace spadchar {

inline constexpr double kNsPerUs = 1000.0;
inline constexpr double kPsPerNs = 1000.0;

struct BiasConfig {
    double reverse_bias_v = 62.5;
    double breakdown_voltage_v = 60.0;

    double excess_bias_v() const { return reverse_bias_v - breakdown_voltage_v; }

    bool operator==(const BiasConfig&) const = default;
};

/// One class of deep-level traps with exponential release.
struct TrapSpecies {
    double lifetime_us = 1.0;
    double weight = 1.0;

    bool operator==(const TrapSpecies&) const = default;
};

/// Five log-spaced lifetimes whose combined surviving population follows
/// t^-0.916 to within 3.5% over 1-100 us (weights fitted in log space).
inline std::vector<TrapSpecies> default_trap_mixture() {
    return {{0.5, 0.7226}, {2.0, 0.1978}, {8.0, 0.0587}, {32.0, 0.0132}, {128.0, 0.0077}};
}

/// Physical configuration of the detector. Gate timing lives in GateTrain.
struct DetectorParams {
    BiasConfig bias;
    double holdoff_us = 10.0;
    std::vector<TrapSpecies> trap_species = default_trap_mixture();
    double trap_coefficient = 4.0e-6;        // carriers trapped per avalanche electron
    double avalanche_rate_e_per_ns = 6.0e6;  // steady-state avalanche current / e
    double buildup_time_ps = 300.0;
    double min_avalanche_charge_e = 1.0e6;
    double trigger_efficiency = 0.5;         // per released carrier
    double dark_rate_per_ns = 2.5e-6;        // at dark_reference_bias_v
    double dark_reference_bias_v = 2.5;
    double jitter_sigma_ps = 127.0;
    double efficiency_scale = 0.25;
    double efficiency_knee_v = 2.0;
    double temperature_c = -40.0;            // recorded only

    bool operator==(const DetectorParams&) const = default;
};

/// Mean-field trapped populations, one entry per species.
struct TrapState {
    std::vector<double> populations;
    double last_update_ns = 0.0;

    static TrapState empty(std::size_t species) { return {std::vector<double>(species, 0.0), 0.0}; }

    double total() const { return std::accumulate(populations.begin(), populations.end(), 0.0); }

    bool operator==(const TrapState&) const = default;
};

namespace detail {
inline void require(bool ok, const std::string& key, const std::string& what) {
    if (!ok) throw InvariantError(key, what);
}
} // namespace detail

inline void validate(std::span<const TrapSpecies> species) {
    double sum = 0.0;
    for (const auto& s : species) {
        detail::require(s.lifetime_us > 0.0 && std::isfinite(s.lifetime_us), "trap_lifetimes_us",
                        "lifetimes must be positive");
        detail::require(s.weight >= 0.0 && s.weight <= 1.0, "trap_weights", "weights must lie in [0, 1]");
        sum += s.weight;
    }
    if (!species.empty())
        detail::require(std::abs(sum - 1.0) <= 1e-9, "trap_weights", "weights must sum to 1");
}

inline void validate(const DetectorParams& p) {
    using detail::require;
    require(p.bias.excess_bias_v() >= 0.0, "reverse_bias_v", "reverse bias must not be below breakdown");
    require(p.bias.breakdown_voltage_v > 0.0, "breakdown_voltage_v", "must be positive");
    require(p.holdoff_us > 0.0, "holdoff_us", "must be positive");
    validate(p.trap_species);
    require(p.trap_coefficient >= 0.0, "trap_coefficient", "must be non-negative");
    require(p.avalanche_rate_e_per_ns >= 0.0, "avalanche_rate_e_per_ns", "must be non-negative");
    require(p.buildup_time_ps > 0.0, "buildup_time_ps", "must be positive");
    require(p.min_avalanche_charge_e >= 0.0, "min_avalanche_charge_e", "must be non-negative");
    require(p.trigger_efficiency >= 0.0 && p.trigger_efficiency <= 1.0, "trigger_efficiency",
            "must be a probability");
    require(p.dark_rate_per_ns >= 0.0, "dark_rate_per_ns", "must be non-negative");
    require(p.dark_reference_bias_v > 0.0, "dark_reference_bias_v", "must be positive");
    require(p.jitter_sigma_ps >= 0.0, "jitter_sigma_ps", "must be non-negative");
    require(p.efficiency_scale >= 0.0 && p.efficiency_scale <= 1.0, "efficiency_scale", "must be a probability");
    require(p.efficiency_knee_v > 0.0, "efficiency_knee_v", "must be positive");
}

/// Integrates dN/dt = capture - N/tau over `elapsed_ns`, with the captured
/// carriers split across species by weight and added at the end of the interval.
inline TrapState trap_step(const TrapState& state, std::span<const TrapSpecies> species, double elapsed_ns,
                           double captured) {
    if (!(elapsed_ns >= 0.0)) throw ArgumentError("trap_step: elapsed time must be non-negative");
    if (!(captured >= 0.0)) throw ArgumentError("trap_step: captured carriers must be non-negative");
    if (state.populations.size() != species.size())
        throw ArgumentError("trap_step: state and species sizes differ");
    TrapState next = state;
    for (std::size_t k = 0; k < species.size(); ++k) {
        const double tau_ns = species[k].lifetime_us * kNsPerUs;
        next.populations[k] = state.populations[k] * std::exp(-elapsed_ns / tau_ns) + species[k].weight * captured;
    }
    next.last_update_ns = state.last_update_ns + elapsed_ns;
    return next;
}

/// Expected number of carriers released during the next `window_ns`.
/// The state is not advanced; pair with trap_step over the same window.
inline double expected_release(const TrapState& state, std::span<const TrapSpecies> species, double window_ns) {
    if (!(window_ns > 0.0)) throw ArgumentError("expected_release: window must be positive");
    if (state.populations.size() != species.size())
        throw ArgumentError("expected_release: state and species sizes differ");
    double released = 0.0;
    for (std::size_t k = 0; k < species.size(); ++k) {
        const double tau_ns = species[k].lifetime_us * kNsPerUs;
        released += state.populations[k] * -std::expm1(-window_ns / tau_ns);
    }
    return released;
}

/// Electrons passed by an avalanche that lasted `quench_duration_ps` before the gate closed.
inline double avalanche_charge(double quench_duration_ps, const DetectorParams& p) {
    const double growth_ns = std::max(0.0, quench_duration_ps - p.buildup_time_ps) / kPsPerNs;
    return p.min_avalanche_charge_e + p.avalanche_rate_e_per_ns * growth_ns;
}

inline double detection_efficiency(double excess_bias_v, const DetectorParams& p) {
    if (!(excess_bias_v >= 0.0)) throw ArgumentError("detection_efficiency: excess bias must be non-negative");
    return p.efficiency_scale * -std::expm1(-excess_bias_v / p.efficiency_knee_v);
}

/// Dark-count rate per ns of open gate, linear in excess bias.
inline double dark_rate_at(double excess_bias_v, const DetectorParams& p) {
    return p.dark_rate_per_ns * excess_bias_v / p.dark_reference_bias_v;
}

} // namespace spadchar

#pragma once

// Seeded Monte Carlo of a gated detector facing a pulsed weak coherent source.
//
// Per armed gate the kernel considers three competing processes: afterpulses
// from trapped-carrier release, the photon pulse (if it lands inside the gate)
// and thermal dark carriers. The earliest one fires the gate; a click starts a
// hold-off during which whole gates are skipped. Every gate reads its random
// numbers from fixed slots of a counter-based stream keyed by (seed, gate index),
// so which values a gate sees never depends on what earlier gates consumed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "spadchar/error.hpp"
#include "spadchar/model.hpp"
#include "spadchar/rng.hpp"
#include "spadchar/text.hpp"

namespace spadchar {

struct SourceConfig {
    double mean_photon_number = 0.1;
    double pulse_period_ns = 42.0;
    double pulse_offset_ns = 10.0;

    bool operator==(const SourceConfig&) const = default;
};

struct GateTrain {
    double period_ns = 42.0;
    double width_ns = 4.0;
    double delay_ns = 8.0;
    double delay_jitter_ps = 20.0; // gate clock phase noise (1 sigma)

    bool operator==(const GateTrain&) const = default;
};

enum class Outcome { photon, dark, afterpulse };

inline std::string_view to_string(Outcome o) {
    switch (o) {
    case Outcome::photon: return "photon";
    case Outcome::dark: return "dark";
    case Outcome::afterpulse: return "afterpulse";
    }
    return "?";
}

inline std::optional<Outcome> parse_outcome(std::string_view s) {
    if (s == "photon") return Outcome::photon;
    if (s == "dark") return Outcome::dark;
    if (s == "afterpulse") return Outcome::afterpulse;
    return std::nullopt;
}

struct ClickRecord {
    std::uint64_t gate_index = 0;
    double raw_timestamp_ps = 0.0; // from the gate rising edge
    std::uint64_t tdc_bin = 0;
    Outcome outcome = Outcome::photon;
    double quench_ps = 0.0;

    bool operator==(const ClickRecord&) const = default;
};

struct RunSummary {
    std::uint64_t total_gates = 0;
    std::uint64_t armed_gates = 0; // gates not suppressed by hold-off
    std::uint64_t photon_clicks = 0;
    std::uint64_t dark_clicks = 0;
    std::uint64_t afterpulse_clicks = 0;
    double duration_s = 0.0;
    std::uint64_t seed = 0;

    std::uint64_t total_clicks() const { return photon_clicks + dark_clicks + afterpulse_clicks; }
    double counts_per_second() const { return static_cast<double>(total_clicks()) / duration_s; }
    double rate_of(Outcome o) const {
        switch (o) {
        case Outcome::photon: return static_cast<double>(photon_clicks) / duration_s;
        case Outcome::dark: return static_cast<double>(dark_clicks) / duration_s;
        case Outcome::afterpulse: return static_cast<double>(afterpulse_clicks) / duration_s;
        }
        return 0.0;
    }
};

struct SimulationResult {
    std::vector<ClickRecord> clicks;
    RunSummary summary;
};

inline std::uint64_t tdc_quantize(double timestamp_ps, double resolution_ps) {
    if (!(timestamp_ps >= 0.0)) throw ArgumentError("tdc_quantize: timestamp must be non-negative");
    if (!(resolution_ps > 0.0)) throw ArgumentError("tdc_quantize: resolution must be positive");
    return static_cast<std::uint64_t>(std::floor(timestamp_ps / resolution_ps));
}

inline void validate(const SourceConfig& s) {
    detail::require(s.mean_photon_number >= 0.0 && std::isfinite(s.mean_photon_number), "mean_photon_number",
                    "must be non-negative");
    detail::require(s.pulse_period_ns > 0.0, "pulse_period_ns", "must be positive");
    detail::require(std::isfinite(s.pulse_offset_ns), "pulse_offset_ns", "must be finite");
}

inline void validate(const GateTrain& g) {
    detail::require(g.period_ns > 0.0, "gate_period_ns", "must be positive");
    detail::require(g.width_ns > 0.0, "gate_width_ns", "must be positive");
    detail::require(g.width_ns < g.period_ns, "gate_width_ns", "must be shorter than the gate period");
    detail::require(g.delay_ns >= 0.0 && g.delay_ns < g.period_ns, "gate_delay_ns", "must lie in [0, period)");
    detail::require(g.delay_jitter_ps >= 0.0, "gate_delay_jitter_ps", "must be non-negative");
}

inline void validate_run(const DetectorParams& d, const SourceConfig& s, const GateTrain& g) {
    validate(d);
    validate(s);
    validate(g);
    detail::require(d.holdoff_us * kNsPerUs >= g.period_ns, "holdoff_us", "must be at least one gate period");
}

/// Per-gate inputs that do not depend on the trap state.
struct GateContext {
    std::uint64_t gate_index = 0;
    double width_ns = 4.0;
    std::optional<double> photon_time_ns;  // pulse arrival after the rising edge, if inside the gate
    double photon_click_probability = 0.0; // 1 - exp(-mu * eta)
    double dark_mean = 0.0;                // expected dark carriers over the gate
    double tdc_resolution_ps = 55.0;
};

/// The random numbers one gate consumes. Uniforms are on (0, 1].
struct GateDraws {
    double afterpulse = 1.0;
    double photon = 1.0;
    double dark = 1.0;
    double jitter = 0.0; // standard normal

    static GateDraws from(const CounterRng& rng) {
        return {rng.uniform(0), rng.uniform(1), rng.uniform(2), rng.normal(3)};
    }
};

/// Slots 5-6 carry the gate-clock phase noise.
inline constexpr std::uint64_t kDelayJitterSlot = 5;

struct GateResult {
    std::optional<ClickRecord> click;
    TrapState traps;
    double event_time_ns = 0.0; // after the rising edge, when click is set
};

namespace detail {

/// Time of the first event of a uniform Poisson process with mean `mean` over
/// `window`, or +inf if none occurs. One uniform, inverted through Exp(1).
inline double first_arrival(double mean, double window, double u) {
    const double e = -std::log(u);
    if (!(e < mean)) return std::numeric_limits<double>::infinity();
    return window * e / mean;
}

struct Candidate {
    double time_ns;
    Outcome outcome;
};

inline std::optional<Candidate> earliest_event(double afterpulse_mean, const GateContext& ctx, const GateDraws& draws) {
    std::optional<Candidate> best;
    auto offer = [&](double t, Outcome o) {
        if (std::isfinite(t) && (!best || t < best->time_ns)) best = Candidate{t, o};
    };
    offer(first_arrival(afterpulse_mean, ctx.width_ns, draws.afterpulse), Outcome::afterpulse);
    if (ctx.photon_time_ns && draws.photon <= ctx.photon_click_probability)
        offer(*ctx.photon_time_ns, Outcome::photon);
    offer(first_arrival(ctx.dark_mean, ctx.width_ns, draws.dark), Outcome::dark);
    return best;
}

/// (gate index * gate period) mod pulse period. Exact integer arithmetic on a
/// femtosecond grid when both periods sit on it, fmod otherwise.
class EdgePhase {
  public:
    EdgePhase(double gate_period_ns, double pulse_period_ns) : gate_(gate_period_ns), pulse_(pulse_period_ns) {
        const double gf = gate_period_ns * 1e6, pf = pulse_period_ns * 1e6;
        exact_ = std::abs(gf - std::round(gf)) < 1e-6 && std::abs(pf - std::round(pf)) < 1e-6 && gf < 1e15 &&
                 pf < 1e15 && std::round(pf) >= 1.0;
        if (exact_) {
            pulse_fs_ = static_cast<std::uint64_t>(std::llround(pf));
            step_fs_ = static_cast<std::uint64_t>(std::llround(gf)) % pulse_fs_;
        }
    }

    double at(std::uint64_t gate) const {
        if (!exact_) return std::fmod(static_cast<double>(gate) * gate_, pulse_);
        if (step_fs_ == 0) return 0.0;
        const auto r = static_cast<std::uint64_t>((static_cast<unsigned __int128>(gate) * step_fs_) % pulse_fs_);
        return static_cast<double>(r) * 1e-6;
    }

  private:
    double gate_, pulse_;
    bool exact_ = false;
    std::uint64_t pulse_fs_ = 1, step_fs_ = 0;
};

inline ClickRecord make_click(const DetectorParams& p, const GateContext& ctx, const Candidate& ev, double jitter) {
    const double width_ps = ctx.width_ns * kPsPerNs;
    const double raw = std::clamp(ev.time_ns * kPsPerNs + p.jitter_sigma_ps * jitter, 0.0, width_ps);
    return ClickRecord{ctx.gate_index, raw, tdc_quantize(raw, ctx.tdc_resolution_ps), ev.outcome,
                       width_ps - ev.time_ns * kPsPerNs};
}

} // namespace detail

/// One armed gate. `traps` must be current at the rising edge; the returned
/// state is advanced to the falling edge with any capture from this gate added.
inline GateResult gate_outcome(const DetectorParams& p, const GateContext& ctx, const TrapState& traps,
                               const GateDraws& draws) {
    const double afterpulse_mean = p.trigger_efficiency * expected_release(traps, p.trap_species, ctx.width_ns);
    const auto ev = detail::earliest_event(afterpulse_mean, ctx, draws);
    if (!ev) return {std::nullopt, trap_step(traps, p.trap_species, ctx.width_ns, 0.0), 0.0};
    auto click = detail::make_click(p, ctx, *ev, draws.jitter);
    const double captured = p.trap_coefficient * avalanche_charge(click.quench_ps, p);
    return {click, trap_step(traps, p.trap_species, ctx.width_ns, captured), ev->time_ns};
}

/// Walks `n_gates` gates and hands every click to `sink`. Returns the run summary.
template <class Sink>
RunSummary simulate(const DetectorParams& p, const SourceConfig& src, const GateTrain& gates, std::uint64_t n_gates,
                    std::uint64_t seed, double tdc_resolution_ps, Sink&& sink) {
    validate_run(p, src, gates);
    if (n_gates < 1) throw ArgumentError("run_experiment: n_gates must be at least 1");
    if (!(tdc_resolution_ps > 0.0)) throw InvariantError("tdc_resolution_ps", "must be positive");

    const auto& species = p.trap_species;
    const std::size_t k_species = species.size();
    const double width = gates.width_ns;
    const double gap = gates.period_ns - width;
    const double holdoff_ns = p.holdoff_us * kNsPerUs;
    const double vex = p.bias.excess_bias_v();

    // Per-species factors for the two intervals that repeat every gate.
    std::vector<double> release_frac(k_species), window_decay(k_species), gap_decay(k_species), tau_ns(k_species);
    for (std::size_t k = 0; k < k_species; ++k) {
        tau_ns[k] = species[k].lifetime_us * kNsPerUs;
        release_frac[k] = -std::expm1(-width / tau_ns[k]);
        window_decay[k] = 1.0 - release_frac[k];
        gap_decay[k] = std::exp(-gap / tau_ns[k]);
    }

    GateContext ctx;
    ctx.width_ns = width;
    ctx.photon_click_probability = -std::expm1(-src.mean_photon_number * detection_efficiency(vex, p));
    ctx.dark_mean = dark_rate_at(vex, p) * width;
    ctx.tdc_resolution_ps = tdc_resolution_ps;
    const bool source_on = src.mean_photon_number > 0.0;
    const detail::EdgePhase phase(gates.period_ns, src.pulse_period_ns);
    const double dark_threshold = std::exp(-ctx.dark_mean) * (1.0 - 1e-12);
    // Phase noise beyond 12 sigma is treated as unable to move a photon across a gate edge.
    const double jitter_reach_ns = 12.0 * gates.delay_jitter_ps / kPsPerNs;

    std::vector<double> pop(k_species, 0.0);
    double last_update_ns = 0.0; // nominal time `pop` refers to
    double next_armed_ns = -std::numeric_limits<double>::infinity();

    RunSummary summary;
    summary.total_gates = n_gates;
    summary.seed = seed;
    summary.duration_s = static_cast<double>(n_gates) * gates.period_ns * 1e-9;

    std::uint64_t g = 0;
    while (g < n_gates) {
        const double rising = static_cast<double>(g) * gates.period_ns + gates.delay_ns;
        if (rising < next_armed_ns) {
            const double first = std::ceil((next_armed_ns - gates.delay_ns) / gates.period_ns);
            g = std::max<std::uint64_t>(g + 1, static_cast<std::uint64_t>(first));
            continue;
        }

        const double elapsed = rising - last_update_ns;
        if (std::abs(elapsed - gap) <= 1e-9 * gates.period_ns) {
            for (std::size_t k = 0; k < k_species; ++k) pop[k] *= gap_decay[k];
        } else if (elapsed > 0.0) {
            for (std::size_t k = 0; k < k_species; ++k) pop[k] *= std::exp(-elapsed / tau_ns[k]);
        }

        // Draws are pure functions of (seed, gate, slot), so the expensive ones are
        // only evaluated when they can matter; results equal GateDraws::from().
        ++summary.armed_gates;
        const CounterRng rng(seed, g);
        ctx.gate_index = g;
        ctx.photon_time_ns.reset();
        if (source_on) {
            const double edge_phase = phase.at(g);
            const double nominal = src.pulse_offset_ns - gates.delay_ns - edge_phase;
            auto position = [&](double phase_noise_ns) {
                const double rel = nominal - phase_noise_ns;
                return rel - src.pulse_period_ns * std::floor(rel / src.pulse_period_ns);
            };
            const double coarse = position(0.0);
            const bool near_edge = jitter_reach_ns > 0.0 && (coarse < jitter_reach_ns ||
                                                             std::abs(coarse - width) < jitter_reach_ns ||
                                                             src.pulse_period_ns - coarse < jitter_reach_ns);
            if (near_edge || (coarse <= width && rng.uniform(1) <= ctx.photon_click_probability)) {
                const double rel = gates.delay_jitter_ps > 0.0
                                       ? position(gates.delay_jitter_ps * rng.normal(kDelayJitterSlot) / kPsPerNs)
                                       : coarse;
                if (rel <= width) ctx.photon_time_ns = rel;
            }
        }

        double released = 0.0;
        for (std::size_t k = 0; k < k_species; ++k) released += pop[k] * release_frac[k];
        const double afterpulse_mean = p.trigger_efficiency * released;
        std::optional<detail::Candidate> ev;
        {
            GateDraws draws;
            const double u_ap = rng.uniform(0);
            const double u_dark = rng.uniform(2);
            bool maybe = ctx.photon_time_ns.has_value();
            if (afterpulse_mean > 0.0 && u_ap > std::exp(-afterpulse_mean) * (1.0 - 1e-12)) maybe = true;
            if (ctx.dark_mean > 0.0 && u_dark > dark_threshold) maybe = true;
            if (maybe) {
                draws.afterpulse = u_ap;
                draws.photon = rng.uniform(1);
                draws.dark = u_dark;
                ev = detail::earliest_event(afterpulse_mean, ctx, draws);
            }
        }

        for (std::size_t k = 0; k < k_species; ++k) pop[k] *= window_decay[k];
        last_update_ns = rising + width;

        if (ev) {
            const ClickRecord click = detail::make_click(p, ctx, *ev, rng.normal(3));
            const double captured = p.trap_coefficient * avalanche_charge(click.quench_ps, p);
            for (std::size_t k = 0; k < k_species; ++k) pop[k] += species[k].weight * captured;
            switch (click.outcome) {
            case Outcome::photon: ++summary.photon_clicks; break;
            case Outcome::dark: ++summary.dark_clicks; break;
            case Outcome::afterpulse: ++summary.afterpulse_clicks; break;
            }
            next_armed_ns = rising + ev->time_ns + holdoff_ns;
            sink(click);
        }
        ++g;
    }
    return summary;
}

inline SimulationResult run_experiment(const DetectorParams& p, const SourceConfig& src, const GateTrain& gates,
                                       std::uint64_t n_gates, std::uint64_t seed, double tdc_resolution_ps = 55.0) {
    SimulationResult out;
    out.summary = simulate(p, src, gates, n_gates, seed, tdc_resolution_ps,
                           [&](const ClickRecord& c) { out.clicks.push_back(c); });
    return out;
}

inline RunSummary run_counts(const DetectorParams& p, const SourceConfig& src, const GateTrain& gates,
                             std::uint64_t n_gates, std::uint64_t seed, double tdc_resolution_ps = 55.0) {
    return simulate(p, src, gates, n_gates, seed, tdc_resolution_ps, [](const ClickRecord&) {});
}

// ---- click log CSV ----

inline constexpr std::string_view kClickCsvHeader = "gate_index,raw_timestamp_ps,tdc_bin,outcome,quench_ps";

inline std::string write_clicks_csv(const std::vector<ClickRecord>& clicks) {
    std::string out(kClickCsvHeader);
    out += '\n';
    for (const auto& c : clicks) {
        out += std::to_string(c.gate_index);
        out += ',';
        out += text::format_double(c.raw_timestamp_ps);
        out += ',';
        out += std::to_string(c.tdc_bin);
        out += ',';
        out += to_string(c.outcome);
        out += ',';
        out += text::format_double(c.quench_ps);
        out += '\n';
    }
    return out;
}

inline std::vector<ClickRecord> read_clicks_csv(std::string_view body) {
    std::vector<ClickRecord> out;
    bool header_seen = false;
    for (const auto& line : text::data_lines(body)) {
        if (!header_seen) {
            if (line.content != kClickCsvHeader) throw ParseError(line.number, "expected click log header");
            header_seen = true;
            continue;
        }
        const auto f = text::split(line.content, ',');
        ClickRecord c;
        std::optional<Outcome> o;
        if (f.size() != 5 || !text::parse_uint(f[0], c.gate_index) || !text::parse_double(f[1], c.raw_timestamp_ps) ||
            !text::parse_uint(f[2], c.tdc_bin) || !(o = parse_outcome(f[3])) || !text::parse_double(f[4], c.quench_ps))
            throw ParseError(line.number, "malformed click record");
        c.outcome = *o;
        out.push_back(c);
    }
    return out;
}

} // namespace spadchar

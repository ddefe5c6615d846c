#pragma once

// Measurement procedures run against the simulator: gate-delay sweeps, the
// two-position afterpulse protocol, dark-count scans and timing histograms.
// Every sweep point draws its seed from the master seed and the point's own
// coordinates (delay, width, hold-off), so reordering a list only permutes
// results.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "spadchar/error.hpp"
#include "spadchar/model.hpp"
#include "spadchar/rng.hpp"
#include "spadchar/simulation.hpp"
#include "spadchar/text.hpp"

namespace spadchar {

/// Everything a single simulated acquisition needs besides gate count and seed.
struct Setup {
    DetectorParams detector;
    SourceConfig source;
    GateTrain gates;
    double tdc_resolution_ps = 55.0;

    bool operator==(const Setup&) const = default;
};

struct DelayPoint {
    double delay_ns = 0.0;
    double counts_hz = 0.0;
    double photon_hz = 0.0;
    double dark_hz = 0.0;
    double afterpulse_hz = 0.0;
    std::uint64_t clicks = 0; // not serialized
    double duration_s = 0.0;  // not serialized

    double counts_sigma_hz() const { return std::sqrt(static_cast<double>(clicks)) / duration_s; }
};

struct DelayCurve {
    std::vector<DelayPoint> points;
};

struct AppPoint {
    double holdoff_us = 0.0;
    double app = 0.0;
    double app_sigma = 0.0;

    bool operator==(const AppPoint&) const = default;
};

struct AppSeries {
    std::string label;
    double gate_width_ns = 0.0;
    std::vector<AppPoint> points;
};

struct DcrCell {
    double period_ns = 0.0;
    double holdoff_us = 0.0;
    double dcr_hz = 0.0;
    std::uint64_t clicks = 0; // not serialized
    double duration_s = 0.0;  // not serialized

    double dcr_sigma_hz() const { return std::sqrt(static_cast<double>(clicks)) / duration_s; }
};

struct DcrTable {
    std::vector<DcrCell> cells;
};

struct JitterSlice {
    double delay_ns = 0.0;
    std::vector<std::uint64_t> counts; // index = TDC bin

    std::uint64_t total() const {
        std::uint64_t t = 0;
        for (auto c : counts) t += c;
        return t;
    }
    bool operator==(const JitterSlice&) const = default;
};

struct JitterSurface {
    double bin_width_ps = 55.0;
    std::vector<JitterSlice> slices;
};

/// Seed of a sweep point, keyed on a coordinate value rather than its list position.
inline std::uint64_t point_seed(std::uint64_t master, double coordinate) {
    return derive_seed(master, static_cast<std::uint64_t>(std::llround(coordinate * 1e6)));
}

namespace detail {

template <class F>
auto annotate(const std::string& where, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const InvariantError& e) {
        throw InvariantError(e.key(), std::string(e.what()) + " (" + where + ")");
    }
}

inline std::string ns_label(double v) { return text::format_double(v) + " ns"; }

/// Number of histogram bins covering [0, width].
inline std::size_t bins_for(const GateTrain& g, double resolution_ps) {
    return static_cast<std::size_t>(std::floor(g.width_ns * kPsPerNs / resolution_ps)) + 1;
}

} // namespace detail

inline DelayPoint measure_delay_point(const Setup& s, double delay_ns, std::uint64_t gates_per_point,
                                      std::uint64_t seed) {
    Setup at = s;
    at.gates.delay_ns = delay_ns;
    const auto sum = detail::annotate("gate delay " + detail::ns_label(delay_ns), [&] {
        return run_counts(at.detector, at.source, at.gates, gates_per_point, seed, at.tdc_resolution_ps);
    });
    return {delay_ns,
            sum.counts_per_second(),
            sum.rate_of(Outcome::photon),
            sum.rate_of(Outcome::dark),
            sum.rate_of(Outcome::afterpulse),
            sum.total_clicks(),
            sum.duration_s};
}

/// Delays 0, step, 2 step, ... below `span_ns`.
inline std::vector<double> delay_grid(double span_ns, double step_ns) {
    if (!(step_ns > 0.0)) throw ArgumentError("sweep: step must be positive");
    if (!(span_ns >= step_ns)) throw ArgumentError("sweep: span must be at least one step");
    const double ratio = span_ns / step_ns;
    const double nearest = std::round(ratio);
    const auto n = static_cast<std::size_t>(std::abs(ratio - nearest) < 1e-9 * ratio ? nearest : std::ceil(ratio));
    std::vector<double> out(n);
    for (std::size_t k = 0; k < n; ++k) out[k] = static_cast<double>(k) * step_ns;
    return out;
}

inline DelayCurve sweep_gate_delay(const Setup& s, std::span<const double> delays_ns, std::uint64_t gates_per_point,
                                   std::uint64_t seed) {
    DelayCurve curve;
    for (std::size_t i = 0; i < delays_ns.size(); ++i) {
        if (i > 0 && !(delays_ns[i] > delays_ns[i - 1]))
            throw ArgumentError("sweep: delays must be strictly increasing");
        curve.points.push_back(measure_delay_point(s, delays_ns[i], gates_per_point, point_seed(seed, delays_ns[i])));
    }
    return curve;
}

inline DelayCurve sweep_gate_delay(const Setup& s, double span_ns, double step_ns, std::uint64_t gates_per_point,
                                   std::uint64_t seed) {
    const auto grid = delay_grid(span_ns, step_ns);
    return sweep_gate_delay(s, grid, gates_per_point, seed);
}

/// Relative excess of counts with the long quench (photon near the rising edge)
/// over counts with the short quench (photon near the falling edge).
inline double afterpulse_probability(double counts_long_quench, double counts_short_quench) {
    if (!(counts_short_quench > 0.0))
        throw UndefinedEstimateError("afterpulse probability undefined: no counts at the short-quench delay");
    return (counts_long_quench - counts_short_quench) / counts_short_quench;
}

/// First-order Poisson error of afterpulse_probability for the given click totals.
inline double afterpulse_probability_sigma(double counts_long_quench, double counts_short_quench,
                                           std::uint64_t clicks_long, std::uint64_t clicks_short) {
    if (clicks_long == 0 || clicks_short == 0) return std::numeric_limits<double>::infinity();
    const double ratio = counts_long_quench / counts_short_quench;
    return ratio * std::sqrt(1.0 / static_cast<double>(clicks_long) + 1.0 / static_cast<double>(clicks_short));
}

/// Gate delay that places the photon `photon_after_edge_ns` after the rising edge.
inline double delay_for_photon_position(const Setup& s, double photon_after_edge_ns) {
    const double ratio = s.gates.period_ns / s.source.pulse_period_ns;
    if (std::abs(ratio - std::round(ratio)) > 1e-9 || std::round(ratio) < 1.0)
        throw InvariantError("gate_period_ns", "must be a whole multiple of pulse_period_ns for in-gate positioning");
    const double t = s.source.pulse_period_ns;
    double d = std::fmod(s.source.pulse_offset_ns - photon_after_edge_ns, t);
    if (d < 0.0) d += t;
    return d;
}

struct AppMeasurement {
    DelayPoint long_quench;
    DelayPoint short_quench;
    AppPoint point;
};

/// Runs the two-position protocol at one (gate width, hold-off) setting.
/// Photon positions sit one TDC bin inside each gate edge.
inline AppMeasurement measure_app(const Setup& s, std::uint64_t gates_per_point, std::uint64_t seed) {
    const double margin_ns = s.tdc_resolution_ps / kPsPerNs;
    if (!(s.gates.width_ns > 2.0 * margin_ns))
        throw InvariantError("gate_width_ns", "gate must be wider than two TDC bins");
    const double d_long = delay_for_photon_position(s, margin_ns);
    const double d_short = delay_for_photon_position(s, s.gates.width_ns - margin_ns);
    AppMeasurement m;
    m.long_quench = measure_delay_point(s, d_long, gates_per_point, derive_seed(seed, 1));
    m.short_quench = measure_delay_point(s, d_short, gates_per_point, derive_seed(seed, 2));
    m.point.holdoff_us = s.detector.holdoff_us;
    m.point.app = afterpulse_probability(m.long_quench.counts_hz, m.short_quench.counts_hz);
    m.point.app_sigma = afterpulse_probability_sigma(m.long_quench.counts_hz, m.short_quench.counts_hz,
                                                     m.long_quench.clicks, m.short_quench.clicks);
    return m;
}

struct AppSweepOptions {
    std::uint64_t gates_per_point = 1'000'000;
    /// Multiply the gate count by holdoff / smallest holdoff, keeping the number
    /// of hold-off cycles per point roughly constant.
    bool scale_gates_with_holdoff = false;
};

inline std::string width_label(double width_ns) { return text::format_double(width_ns) + "ns"; }

inline std::vector<AppSeries> app_vs_holdoff(const Setup& s, std::span<const double> holdoffs_us,
                                             std::span<const double> gate_widths_ns, const AppSweepOptions& opt,
                                             std::uint64_t seed) {
    if (holdoffs_us.empty() || gate_widths_ns.empty())
        throw ArgumentError("app_vs_holdoff: hold-off and gate width lists must be non-empty");
    for (std::size_t i = 1; i < holdoffs_us.size(); ++i)
        if (!(holdoffs_us[i] > holdoffs_us[i - 1]))
            throw ArgumentError("app_vs_holdoff: hold-offs must be strictly increasing");
    const double min_holdoff = holdoffs_us.front();
    std::vector<AppSeries> out;
    for (double width : gate_widths_ns) {
        AppSeries series{width_label(width), width, {}};
        for (double holdoff : holdoffs_us) {
            Setup at = s;
            at.gates.width_ns = width;
            at.detector.holdoff_us = holdoff;
            std::uint64_t gates = opt.gates_per_point;
            if (opt.scale_gates_with_holdoff)
                gates = static_cast<std::uint64_t>(std::llround(static_cast<double>(gates) * holdoff / min_holdoff));
            const auto seed_here = point_seed(point_seed(seed, width), holdoff);
            const auto m = detail::annotate("gate width " + detail::ns_label(width) + ", hold-off " +
                                                text::format_double(holdoff) + " us",
                                            [&] { return measure_app(at, gates, seed_here); });
            series.points.push_back(m.point);
        }
        out.push_back(std::move(series));
    }
    return out;
}

inline DcrTable dcr_scan(const Setup& s, std::span<const double> periods_ns, std::span<const double> holdoffs_us,
                         std::uint64_t gates_per_point, std::uint64_t seed) {
    if (s.source.mean_photon_number > 0.0)
        throw InvariantError("mean_photon_number", "dark-count scans require the source to be off (0)");
    if (periods_ns.empty() || holdoffs_us.empty())
        throw ArgumentError("dcr_scan: period and hold-off lists must be non-empty");
    DcrTable table;
    for (double period : periods_ns) {
        for (double holdoff : holdoffs_us) {
            Setup at = s;
            at.gates.period_ns = period;
            at.gates.delay_ns = 0.0;
            at.detector.holdoff_us = holdoff;
            const auto sum = detail::annotate(
                "period " + detail::ns_label(period) + ", hold-off " + text::format_double(holdoff) + " us", [&] {
                    return run_counts(at.detector, at.source, at.gates, gates_per_point,
                                      point_seed(point_seed(seed, period), holdoff), at.tdc_resolution_ps);
                });
            table.cells.push_back({period, holdoff, sum.counts_per_second(), sum.total_clicks(), sum.duration_s});
        }
    }
    return table;
}

inline JitterSlice jitter_slice(const Setup& s, double delay_ns, std::uint64_t gates_per_point, std::uint64_t seed) {
    if (!(s.tdc_resolution_ps > 0.0)) throw InvariantError("tdc_resolution_ps", "must be positive");
    Setup at = s;
    at.gates.delay_ns = delay_ns;
    JitterSlice slice{delay_ns, std::vector<std::uint64_t>(detail::bins_for(at.gates, at.tdc_resolution_ps), 0)};
    detail::annotate("gate delay " + detail::ns_label(delay_ns), [&] {
        return simulate(at.detector, at.source, at.gates, gates_per_point, seed, at.tdc_resolution_ps,
                        [&](const ClickRecord& c) { ++slice.counts.at(c.tdc_bin); });
    });
    return slice;
}

inline JitterSurface jitter_surface(const Setup& s, std::span<const double> delays_ns, std::uint64_t gates_per_point,
                                    std::uint64_t seed) {
    JitterSurface surface{s.tdc_resolution_ps, {}};
    for (double d : delays_ns) surface.slices.push_back(jitter_slice(s, d, gates_per_point, point_seed(seed, d)));
    return surface;
}

// ---- hardware timestamp logs ----

/// Histograms absolute click timestamps (ps on the gate clock) by their
/// position inside the enclosing gate. Stamps falling between gates are dropped.
inline JitterSlice jitter_slice_from_timestamps(std::span<const std::uint64_t> timestamps_ps, const GateTrain& gates,
                                                double tdc_resolution_ps) {
    validate(gates);
    if (!(tdc_resolution_ps > 0.0)) throw InvariantError("tdc_resolution_ps", "must be positive");
    JitterSlice slice{gates.delay_ns, std::vector<std::uint64_t>(detail::bins_for(gates, tdc_resolution_ps), 0)};
    const double period_ps = gates.period_ns * kPsPerNs;
    const double delay_ps = gates.delay_ns * kPsPerNs;
    const double width_ps = gates.width_ns * kPsPerNs;
    for (auto ts : timestamps_ps) {
        const double t = static_cast<double>(ts) - delay_ps;
        if (t < 0.0) continue;
        const double rel = t - period_ps * std::floor(t / period_ps);
        if (rel > width_ps) continue;
        ++slice.counts.at(tdc_quantize(rel, tdc_resolution_ps));
    }
    return slice;
}

inline DelayPoint delay_point_from_timestamps(std::span<const std::uint64_t> timestamps_ps, double delay_ns,
                                              double duration_s) {
    if (!(duration_s > 0.0)) throw ArgumentError("acquisition duration must be positive");
    DelayPoint p;
    p.delay_ns = delay_ns;
    p.clicks = timestamps_ps.size();
    p.duration_s = duration_s;
    p.counts_hz = static_cast<double>(p.clicks) / duration_s;
    return p;
}

// ---- CSV ----

inline constexpr std::string_view kDelayCurveHeader = "delay_ns,counts_hz,photon_hz,dark_hz,afterpulse_hz";
inline constexpr std::string_view kAppSeriesHeader = "holdoff_us,app,app_sigma";
inline constexpr std::string_view kDcrTableHeader = "period_ns,holdoff_us,dcr_hz";
inline constexpr std::string_view kJitterSurfaceHeader = "delay_ns,bin,count";

namespace detail {

inline std::string join_row(std::initializer_list<std::string> fields) {
    std::string row;
    for (const auto& f : fields) {
        if (!row.empty()) row += ',';
        row += f;
    }
    row += '\n';
    return row;
}

/// Data rows after the required header, each split into exactly `columns` numbers.
inline std::vector<std::pair<std::size_t, std::vector<double>>> numeric_rows(std::string_view body,
                                                                            std::string_view header,
                                                                            std::size_t columns) {
    std::vector<std::pair<std::size_t, std::vector<double>>> rows;
    bool header_seen = false;
    for (const auto& line : text::data_lines(body)) {
        if (!header_seen) {
            if (line.content != header) throw ParseError(line.number, "expected header '" + std::string(header) + "'");
            header_seen = true;
            continue;
        }
        const auto f = text::split(line.content, ',');
        if (f.size() != columns) throw ParseError(line.number, "expected " + std::to_string(columns) + " fields");
        std::vector<double> v(columns);
        for (std::size_t i = 0; i < columns; ++i)
            if (!text::parse_double(f[i], v[i])) throw ParseError(line.number, "not a number: " + std::string(f[i]));
        rows.emplace_back(line.number, std::move(v));
    }
    if (!header_seen) throw ParseError(1, "missing header '" + std::string(header) + "'");
    return rows;
}

} // namespace detail

inline std::string write_delay_curve_csv(const DelayCurve& c) {
    using text::format_double;
    std::string out(kDelayCurveHeader);
    out += '\n';
    for (const auto& p : c.points)
        out += detail::join_row({format_double(p.delay_ns), format_double(p.counts_hz), format_double(p.photon_hz),
                                 format_double(p.dark_hz), format_double(p.afterpulse_hz)});
    return out;
}

inline DelayCurve read_delay_curve_csv(std::string_view body) {
    DelayCurve c;
    for (const auto& [line, v] : detail::numeric_rows(body, kDelayCurveHeader, 5)) {
        if (!c.points.empty() && !(v[0] > c.points.back().delay_ns))
            throw ParseError(line, "delays must be strictly increasing");
        DelayPoint p;
        p.delay_ns = v[0];
        p.counts_hz = v[1];
        p.photon_hz = v[2];
        p.dark_hz = v[3];
        p.afterpulse_hz = v[4];
        c.points.push_back(p);
    }
    return c;
}

inline std::string write_app_series_csv(const AppSeries& s) {
    using text::format_double;
    std::string out(kAppSeriesHeader);
    out += '\n';
    for (const auto& p : s.points)
        out += detail::join_row({format_double(p.holdoff_us), format_double(p.app), format_double(p.app_sigma)});
    return out;
}

inline AppSeries read_app_series_csv(std::string_view body, std::string label = {}) {
    AppSeries s;
    s.label = std::move(label);
    for (const auto& [line, v] : detail::numeric_rows(body, kAppSeriesHeader, 3)) {
        if (!(v[0] > 0.0)) throw ParseError(line, "hold-off must be positive");
        if (!s.points.empty() && !(v[0] > s.points.back().holdoff_us))
            throw ParseError(line, "hold-offs must be strictly increasing");
        s.points.push_back({v[0], v[1], v[2]});
    }
    return s;
}

inline std::string write_dcr_table_csv(const DcrTable& t) {
    using text::format_double;
    std::string out(kDcrTableHeader);
    out += '\n';
    for (const auto& c : t.cells)
        out += detail::join_row({format_double(c.period_ns), format_double(c.holdoff_us), format_double(c.dcr_hz)});
    return out;
}

inline DcrTable read_dcr_table_csv(std::string_view body) {
    DcrTable t;
    for (const auto& [line, v] : detail::numeric_rows(body, kDcrTableHeader, 3)) {
        if (!(v[2] >= 0.0)) throw ParseError(line, "dark count rate must be non-negative");
        DcrCell c;
        c.period_ns = v[0];
        c.holdoff_us = v[1];
        c.dcr_hz = v[2];
        t.cells.push_back(c);
    }
    return t;
}

inline std::string write_jitter_surface_csv(const JitterSurface& s) {
    std::string out(kJitterSurfaceHeader);
    out += '\n';
    for (const auto& slice : s.slices)
        for (std::size_t b = 0; b < slice.counts.size(); ++b)
            out += detail::join_row(
                {text::format_double(slice.delay_ns), std::to_string(b), std::to_string(slice.counts[b])});
    return out;
}

/// Rows must be grouped by delay with bins listed densely from 0.
inline JitterSurface read_jitter_surface_csv(std::string_view body, double bin_width_ps) {
    JitterSurface s{bin_width_ps, {}};
    for (const auto& [line, v] : detail::numeric_rows(body, kJitterSurfaceHeader, 3)) {
        if (v[1] < 0.0 || v[2] < 0.0 || v[1] != std::floor(v[1]) || v[2] != std::floor(v[2]))
            throw ParseError(line, "bin and count must be non-negative integers");
        if (s.slices.empty() || s.slices.back().delay_ns != v[0]) s.slices.push_back({v[0], {}});
        auto& slice = s.slices.back();
        if (static_cast<std::size_t>(v[1]) != slice.counts.size()) throw ParseError(line, "bins must be dense from 0");
        slice.counts.push_back(static_cast<std::uint64_t>(v[2]));
    }
    return s;
}

} // namespace spadchar

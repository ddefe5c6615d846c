#pragma once

// Decay-model fitting and timing-histogram analysis.
//
// APP(t) = A0 * t^-lambda + d becomes a straight line in (ln t, ln(APP - d)).
// All series share one slope and keep their own intercepts; the common
// direction is the dominant right singular vector of the per-series centred
// points stacked together, which minimizes the summed squared orthogonal
// distances to the set of parallel lines.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/tools/minima.hpp>

#include "spadchar/error.hpp"
#include "spadchar/experiments.hpp"
#include "spadchar/text.hpp"

namespace spadchar {

struct DroppedPoint {
    std::size_t series = 0;
    double holdoff_us = 0.0;
    double app = 0.0;
};

struct PowerLawFit {
    double lambda = 0.0;
    std::vector<double> amplitudes; // A0 per series at reference_time_us
    std::vector<double> offsets;    // d per series
    double residual_norm = 0.0;     // root of summed squared orthogonal distances in log-log space
    double reference_time_us = 1.0;
    std::vector<DroppedPoint> dropped;
};

struct FwhmResult {
    double fwhm_ps = 0.0;
    std::size_t peak_bin = 0;
    double left_ps = 0.0; // crossings, in bin_index * bin_width coordinates
    double right_ps = 0.0;
};

/// Mean APP over the quarter of points with the longest hold-offs, clamped at 0.
inline double estimate_offset(const AppSeries& series) {
    const auto n = series.points.size();
    if (n < 6) throw InsufficientDataError("estimate_offset: need at least 6 points, got " + std::to_string(n));
    auto pts = series.points;
    std::stable_sort(pts.begin(), pts.end(),
                     [](const AppPoint& a, const AppPoint& b) { return a.holdoff_us < b.holdoff_us; });
    const std::size_t tail = std::max<std::size_t>(1, n / 4);
    double sum = 0.0;
    for (std::size_t i = n - tail; i < n; ++i) sum += pts[i].app;
    return std::max(0.0, sum / static_cast<double>(tail));
}

namespace detail {

struct LogSeries {
    std::vector<double> x, y;
    double cx = 0.0, cy = 0.0;
};

inline std::vector<LogSeries> to_log_space(std::span<const AppSeries> series, std::span<const double> offsets,
                                           std::vector<DroppedPoint>* dropped) {
    std::vector<LogSeries> out(series.size());
    for (std::size_t s = 0; s < series.size(); ++s) {
        for (const auto& p : series[s].points) {
            const double excess = p.app - offsets[s];
            if (!(excess > 0.0) || !(p.holdoff_us > 0.0)) {
                if (dropped) dropped->push_back({s, p.holdoff_us, p.app});
                continue;
            }
            out[s].x.push_back(std::log(p.holdoff_us));
            out[s].y.push_back(std::log(excess));
        }
        auto& ls = out[s];
        if (ls.x.size() < 2)
            throw InsufficientDataError("shared_slope_fit: series " + std::to_string(s) +
                                        " has fewer than 2 usable points");
        const auto m = static_cast<double>(ls.x.size());
        for (std::size_t i = 0; i < ls.x.size(); ++i) {
            ls.cx += ls.x[i];
            ls.cy += ls.y[i];
        }
        ls.cx /= m;
        ls.cy /= m;
    }
    return out;
}

struct Direction {
    double dx, dy, residual;
};

inline Direction common_direction(const std::vector<LogSeries>& ls) {
    std::size_t rows = 0;
    for (const auto& s : ls) rows += s.x.size();
    Eigen::MatrixX2d centred(static_cast<Eigen::Index>(rows), 2);
    Eigen::Index r = 0;
    for (const auto& s : ls)
        for (std::size_t i = 0; i < s.x.size(); ++i, ++r) {
            centred(r, 0) = s.x[i] - s.cx;
            centred(r, 1) = s.y[i] - s.cy;
        }
    const Eigen::JacobiSVD<Eigen::MatrixX2d> svd(centred, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    if (!(sv(0) > 0.0)) throw RankError("shared_slope_fit: every series collapses to a single point");
    const Eigen::Vector2d v = svd.matrixV().col(0);
    if (std::abs(v(0)) <= 1e-12 * std::abs(v(1)))
        throw RankError("shared_slope_fit: points span no range in hold-off");
    return {v(0), v(1), sv(1)};
}

} // namespace detail

/// Shared-slope orthogonal fit with given offsets. Points whose APP does not
/// exceed their offset cannot be logged; they are dropped and reported.
inline PowerLawFit shared_slope_fit(std::span<const AppSeries> series, std::span<const double> offsets,
                                    double reference_time_us = 1.0) {
    if (series.empty()) throw InsufficientDataError("shared_slope_fit: no series");
    if (offsets.size() != series.size()) throw ArgumentError("shared_slope_fit: one offset per series required");
    if (!(reference_time_us > 0.0)) throw ArgumentError("shared_slope_fit: reference time must be positive");
    PowerLawFit fit;
    fit.reference_time_us = reference_time_us;
    fit.offsets.assign(offsets.begin(), offsets.end());
    const auto ls = detail::to_log_space(series, offsets, &fit.dropped);
    const auto dir = detail::common_direction(ls);
    const double slope = dir.dy / dir.dx;
    if (!(slope < 0.0)) throw NonDecayingError("shared_slope_fit: fitted slope is not negative (data do not decay)");
    fit.lambda = -slope;
    const double x_ref = std::log(reference_time_us);
    for (const auto& s : ls) fit.amplitudes.push_back(std::exp(s.cy + slope * (x_ref - s.cx)));
    fit.residual_norm = dir.residual;
    return fit;
}

/// Orthogonal residual of the shared-slope fit, or +inf if the offsets make it undefined.
inline double shared_slope_residual(std::span<const AppSeries> series, std::span<const double> offsets) {
    try {
        const auto ls = detail::to_log_space(series, offsets, nullptr);
        return detail::common_direction(ls).residual;
    } catch (const Error&) {
        return std::numeric_limits<double>::infinity();
    }
}

/// Two-stage fit with the offsets chosen to minimize the shared-slope residual.
/// Each offset is searched in [0, min APP of its series); the tail-quartile
/// estimate seeds the search. Coordinate descent, grid scan plus Brent refinement.
inline PowerLawFit fit_power_law(std::span<const AppSeries> series, double reference_time_us = 1.0) {
    const std::size_t k = series.size();
    if (k == 0) throw InsufficientDataError("fit_power_law: no series");
    std::vector<double> hi(k), d(k);
    for (std::size_t s = 0; s < k; ++s) {
        double lowest = std::numeric_limits<double>::infinity();
        for (const auto& p : series[s].points) lowest = std::min(lowest, p.app);
        hi[s] = lowest > 0.0 ? lowest * (1.0 - 1e-6) : 0.0;
        d[s] = series[s].points.size() >= 6 ? std::clamp(estimate_offset(series[s]), 0.0, hi[s]) : 0.0;
    }

    auto objective = [&](std::size_t s, double value) {
        auto trial = d;
        trial[s] = value;
        return shared_slope_residual(series, trial);
    };

    constexpr int kGrid = 40;
    double best = shared_slope_residual(series, d);
    for (int sweep = 0; sweep < 50; ++sweep) {
        const double before = best;
        for (std::size_t s = 0; s < k; ++s) {
            if (hi[s] <= 0.0) continue;
            int best_i = -1;
            double best_grid = best;
            const double step = hi[s] / kGrid;
            for (int i = 0; i <= kGrid; ++i) {
                const double r = objective(s, i * step);
                if (r < best_grid) {
                    best_grid = r;
                    best_i = i;
                }
            }
            double lo_b = std::max(0.0, d[s] - step), hi_b = std::min(hi[s], d[s] + step);
            if (best_i >= 0) {
                lo_b = std::max(0.0, (best_i - 1) * step);
                hi_b = std::min(hi[s], (best_i + 1) * step);
            }
            std::uintmax_t iters = 200;
            const auto [arg, val] = boost::math::tools::brent_find_minima(
                [&](double v) { return objective(s, v); }, lo_b, hi_b, 52, iters);
            if (val < best) {
                best = val;
                d[s] = arg;
            } else if (best_i >= 0 && best_grid < best) {
                best = best_grid;
                d[s] = best_i * step;
            }
        }
        if (!(before - best > 1e-14 * std::max(1e-300, before))) break;
    }
    return shared_slope_fit(series, d, reference_time_us);
}

/// Time at which t^-lambda has fallen to half its value at `reference_time_us`.
inline double half_life(double lambda, double reference_time_us) {
    if (!(lambda > 0.0)) throw ArgumentError("half_life: lambda must be positive");
    if (!(reference_time_us > 0.0)) throw ArgumentError("half_life: reference time must be positive");
    return reference_time_us * std::exp2(1.0 / lambda);
}

/// Full width at half maximum with linear interpolation between neighbouring
/// bins; outermost crossings win when noise produces several.
template <class T>
FwhmResult fwhm(std::span<const T> histogram, double bin_width_ps) {
    if (histogram.empty()) throw EmptyDataError("fwhm: empty histogram");
    if (!(bin_width_ps > 0.0)) throw ArgumentError("fwhm: bin width must be positive");
    const auto peak_it = std::max_element(histogram.begin(), histogram.end());
    const double peak = static_cast<double>(*peak_it);
    if (!(peak > 0.0)) throw EmptyDataError("fwhm: histogram has no counts");
    FwhmResult r;
    r.peak_bin = static_cast<std::size_t>(peak_it - histogram.begin());
    const auto h = [&](std::size_t i) { return static_cast<double>(histogram[i]); };
    const std::size_t n = histogram.size();

    const auto occupied = std::count_if(histogram.begin(), histogram.end(), [](T v) { return v > T{}; });
    if (occupied == 1) {
        r.left_ps = (static_cast<double>(r.peak_bin) - 0.5) * bin_width_ps;
        r.right_ps = (static_cast<double>(r.peak_bin) + 0.5) * bin_width_ps;
        r.fwhm_ps = bin_width_ps;
        return r;
    }

    const double half = peak / 2.0;
    std::size_t first = 0;
    while (h(first) < half) ++first;
    std::size_t last = n - 1;
    while (h(last) < half) --last;

    double left = static_cast<double>(first);
    if (first > 0) left = static_cast<double>(first - 1) + (half - h(first - 1)) / (h(first) - h(first - 1));
    double right = static_cast<double>(last);
    if (last + 1 < n) right = static_cast<double>(last) + (h(last) - half) / (h(last) - h(last + 1));

    r.left_ps = left * bin_width_ps;
    r.right_ps = right * bin_width_ps;
    r.fwhm_ps = r.right_ps - r.left_ps;
    return r;
}

template <class T>
FwhmResult fwhm(const std::vector<T>& histogram, double bin_width_ps) {
    return fwhm(std::span<const T>(histogram), bin_width_ps);
}

// ---- fit report ----

inline std::string write_fit_report(const PowerLawFit& fit, std::span<const std::string> labels) {
    using text::format_double;
    std::string out;
    auto kv = [&](const std::string& key, double v) { out += key + " = " + format_double(v) + "\n"; };
    kv("lambda", fit.lambda);
    for (std::size_t s = 0; s < fit.amplitudes.size(); ++s) kv("A0_" + labels[s], fit.amplitudes[s]);
    for (std::size_t s = 0; s < fit.offsets.size(); ++s) kv("d_" + labels[s], fit.offsets[s]);
    kv("half_life_us", half_life(fit.lambda, fit.reference_time_us));
    kv("residual_norm", fit.residual_norm);
    return out;
}

/// Parses `key = value` lines (numbers only), preserving order.
inline std::vector<std::pair<std::string, double>> read_fit_report(std::string_view body) {
    std::vector<std::pair<std::string, double>> out;
    for (const auto& line : text::data_lines(body)) {
        const auto eq = line.content.find('=');
        double v = 0.0;
        if (eq == std::string_view::npos || !text::parse_double(line.content.substr(eq + 1), v))
            throw ParseError(line.number, "expected 'key = number'");
        out.emplace_back(std::string(text::trim(line.content.substr(0, eq))), v);
    }
    return out;
}

} // namespace spadchar

#pragma once

// Command-line front end. Kept in the library so tests can drive it in-process.

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spadchar/config.hpp"
#include "spadchar/estimation.hpp"
#include "spadchar/experiments.hpp"
#include "spadchar/io.hpp"
#include "spadchar/simulation.hpp"
#include "spadchar/text.hpp"

namespace spadchar {

namespace detail {

/// `app.csv` + `4ns` -> `app_4ns.csv`
inline std::filesystem::path labelled_path(const std::filesystem::path& base, const std::string& label) {
    auto name = base.stem().string() + "_" + label + base.extension().string();
    return base.parent_path() / name;
}

struct CommonOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<std::uint64_t> gates;
};

inline ExperimentConfig load_config(const CommonOptions& o) {
    ExperimentConfig c = o.config_path.empty() ? paper_preset() : parse_config(text::read_file(o.config_path));
    if (o.seed) c.master_seed = *o.seed;
    if (!o.out.empty()) c.output_path = o.out;
    if (o.gates) c.n_gates = *o.gates;
    if (c.n_gates < 1) throw InvariantError("n_gates", "must be at least 1");
    if (c.output_path.empty()) throw ArgumentError("no output path: pass --out or set output_path in the config");
    return c;
}

inline void add_common(CLI::App* sub, CommonOptions& o) {
    sub->add_option("--config", o.config_path, "key = value configuration file")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "master seed (overrides master_seed)");
    sub->add_option("--out", o.out, "output file (overrides output_path)");
    sub->add_option("--gates", o.gates, "gates per run or sweep point (overrides n_gates)");
}

inline std::vector<std::vector<std::uint64_t>> read_logs(const std::vector<std::string>& paths) {
    std::vector<std::vector<std::uint64_t>> logs;
    for (const auto& p : paths) {
        try {
            logs.push_back(read_timestamp_log(text::read_file(p)));
        } catch (const ParseError& e) {
            throw Error(p + ": " + e.what());
        }
    }
    return logs;
}

} // namespace detail

/// Runs one subcommand. Returns the process exit status; diagnostics go to `err`.
inline int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Gated single-photon detector simulator and characterization pipeline", "spadchar"};
    app.require_subcommand(1);

    detail::CommonOptions common;

    auto* simulate = app.add_subcommand("simulate", "run the detector simulation and write the click log CSV");
    detail::add_common(simulate, common);

    std::optional<double> span, step;
    std::vector<std::string> log_paths;
    std::vector<double> log_delays;
    std::optional<double> log_duration;
    auto* sweep = app.add_subcommand("sweep-delay", "counts per second versus gate delay");
    detail::add_common(sweep, common);
    sweep->add_option("--span", span, "delay span in ns (default: delay_span_ns)");
    sweep->add_option("--step", step, "delay step in ns (default: delay_step_ns)");
    sweep->add_option("--log", log_paths, "hardware timestamp log, one per delay, instead of simulating");
    sweep->add_option("--log-delays", log_delays, "gate delay in ns for each --log")->delimiter(',');
    sweep->add_option("--duration-s", log_duration, "acquisition time per log in seconds");

    std::vector<double> holdoffs, widths;
    bool scale_gates = false;
    auto* app_cmd = app.add_subcommand("app-holdoff", "afterpulse probability versus hold-off, one file per gate width");
    detail::add_common(app_cmd, common);
    app_cmd->add_option("--holdoffs", holdoffs, "hold-off times in us")->delimiter(',')->required();
    app_cmd->add_option("--widths", widths, "gate widths in ns (default: gate_width_ns)")->delimiter(',');
    app_cmd->add_flag("--scale-gates", scale_gates, "scale the gate count with hold-off / smallest hold-off");

    std::vector<double> periods;
    auto* dcr = app.add_subcommand("dcr-scan", "dark count rate over gate periods and hold-offs (source off)");
    detail::add_common(dcr, common);
    dcr->add_option("--periods", periods, "gate periods in ns")->delimiter(',')->required();
    dcr->add_option("--holdoffs", holdoffs, "hold-off times in us")->delimiter(',')->required();

    std::vector<double> delays;
    auto* jitter = app.add_subcommand("jitter", "TDC histograms per gate delay, with FWHM");
    detail::add_common(jitter, common);
    jitter->add_option("--delays", delays, "gate delays in ns (default: gate_delay_ns)")->delimiter(',');
    jitter->add_option("--log", log_paths, "hardware timestamp log, one per delay, instead of simulating");
    jitter->add_option("--log-delays", log_delays, "gate delay in ns for each --log")->delimiter(',');

    std::vector<std::string> inputs, labels;
    std::string fit_out;
    double t_ref = 1.0;
    std::string offset_mode = "profile";
    auto* fit = app.add_subcommand("fit", "shared-slope power-law fit of AppSeries CSV files");
    fit->add_option("--in", inputs, "AppSeries CSV (repeatable)")->required()->check(CLI::ExistingFile);
    fit->add_option("--label", labels, "series label per --in (default: file stem)");
    fit->add_option("--out", fit_out, "fit report file")->required();
    fit->add_option("--tref", t_ref, "amplitude reference time in us")->check(CLI::PositiveNumber);
    fit->add_option("--offsets", offset_mode, "offset handling: profile | tail | zero")
        ->check(CLI::IsMember({"profile", "tail", "zero"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    try {
        if (*simulate) {
            const auto c = detail::load_config(common);
            const auto& s = c.setup;
            const auto r = run_experiment(s.detector, s.source, s.gates, c.n_gates, c.master_seed, s.tdc_resolution_ps);
            text::write_file_atomic(c.output_path, write_clicks_csv(r.clicks));
            out << "gates " << r.summary.total_gates << ", clicks " << r.summary.total_clicks() << " (photon "
                << r.summary.photon_clicks << ", dark " << r.summary.dark_clicks << ", afterpulse "
                << r.summary.afterpulse_clicks << "), " << text::format_double(r.summary.counts_per_second())
                << " counts/s\n";
        } else if (*sweep) {
            const auto c = detail::load_config(common);
            DelayCurve curve;
            if (!log_paths.empty()) {
                if (log_delays.size() != log_paths.size())
                    throw ArgumentError("--log-delays needs one delay per --log");
                if (!log_duration) throw ArgumentError("--duration-s is required with --log");
                const auto logs = detail::read_logs(log_paths);
                for (std::size_t i = 0; i < logs.size(); ++i)
                    curve.points.push_back(delay_point_from_timestamps(logs[i], log_delays[i], *log_duration));
            } else {
                curve = sweep_gate_delay(c.setup, span.value_or(c.delay_span_ns), step.value_or(c.delay_step_ns),
                                         c.n_gates, c.master_seed);
            }
            text::write_file_atomic(c.output_path, write_delay_curve_csv(curve));
        } else if (*app_cmd) {
            const auto c = detail::load_config(common);
            if (widths.empty()) widths.push_back(c.setup.gates.width_ns);
            const auto series =
                app_vs_holdoff(c.setup, holdoffs, widths, AppSweepOptions{c.n_gates, scale_gates}, c.master_seed);
            for (const auto& s : series) {
                const auto path =
                    series.size() == 1 ? std::filesystem::path(c.output_path) : detail::labelled_path(c.output_path, s.label);
                text::write_file_atomic(path, write_app_series_csv(s));
                out << path.string() << "\n";
            }
        } else if (*dcr) {
            const auto c = detail::load_config(common);
            const auto table = dcr_scan(c.setup, periods, holdoffs, c.n_gates, c.master_seed);
            text::write_file_atomic(c.output_path, write_dcr_table_csv(table));
        } else if (*jitter) {
            const auto c = detail::load_config(common);
            JitterSurface surface{c.setup.tdc_resolution_ps, {}};
            if (!log_paths.empty()) {
                if (log_delays.size() != log_paths.size())
                    throw ArgumentError("--log-delays needs one delay per --log");
                const auto logs = detail::read_logs(log_paths);
                for (std::size_t i = 0; i < logs.size(); ++i) {
                    GateTrain g = c.setup.gates;
                    g.delay_ns = log_delays[i];
                    surface.slices.push_back(jitter_slice_from_timestamps(logs[i], g, c.setup.tdc_resolution_ps));
                }
            } else {
                if (delays.empty()) delays.push_back(c.setup.gates.delay_ns);
                surface = jitter_surface(c.setup, delays, c.n_gates, c.master_seed);
            }
            text::write_file_atomic(c.output_path, write_jitter_surface_csv(surface));
            for (const auto& slice : surface.slices) {
                out << "delay " << text::format_double(slice.delay_ns) << " ns: " << slice.total() << " clicks";
                if (slice.total() > 0)
                    out << ", FWHM " << text::format_double(fwhm(slice.counts, surface.bin_width_ps).fwhm_ps) << " ps";
                out << "\n";
            }
        } else if (*fit) {
            if (!labels.empty() && labels.size() != inputs.size())
                throw ArgumentError("--label must be given once per --in");
            std::vector<AppSeries> series;
            for (std::size_t i = 0; i < inputs.size(); ++i) {
                const auto label = labels.empty() ? std::filesystem::path(inputs[i]).stem().string() : labels[i];
                try {
                    series.push_back(read_app_series_csv(text::read_file(inputs[i]), label));
                } catch (const ParseError& e) {
                    throw Error(inputs[i] + ": " + e.what());
                }
            }
            PowerLawFit result;
            if (offset_mode == "profile") {
                result = fit_power_law(series, t_ref);
            } else {
                std::vector<double> d(series.size(), 0.0);
                if (offset_mode == "tail")
                    for (std::size_t i = 0; i < series.size(); ++i) d[i] = estimate_offset(series[i]);
                result = shared_slope_fit(series, d, t_ref);
            }
            std::vector<std::string> names;
            for (const auto& s : series) names.push_back(s.label);
            text::write_file_atomic(fit_out, write_fit_report(result, names));
            for (const auto& dp : result.dropped)
                err << "dropped " << names[dp.series] << " point at " << text::format_double(dp.holdoff_us)
                    << " us (APP " << text::format_double(dp.app) << " not above offset)\n";
            out << "lambda " << text::format_double(result.lambda) << ", half-life "
                << text::format_double(half_life(result.lambda, t_ref)) << " us\n";
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

} // namespace spadchar

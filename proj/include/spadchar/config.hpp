#pragma once

// Flat `key = value` experiment configuration. Every key carries its unit in
// its name; keys not present keep the preset values from paper_preset():
// 4 ns gates every 42 ns, mu = 0.1, 2.5 V excess bias, 10 us hold-off,
// 55 ps TDC and a 100 ps delay step.

#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "spadchar/error.hpp"
#include "spadchar/experiments.hpp"
#include "spadchar/model.hpp"
#include "spadchar/simulation.hpp"
#include "spadchar/text.hpp"

namespace spadchar {

struct ExperimentConfig {
    Setup setup;
    std::uint64_t master_seed = 1;
    std::uint64_t n_gates = 1'000'000; // per run / sweep point
    double delay_step_ns = 0.1;
    double delay_span_ns = 42.0;
    std::string output_path;

    bool operator==(const ExperimentConfig&) const = default;
};

inline ExperimentConfig paper_preset() { return {}; }

namespace detail {

struct ConfigKey {
    std::string name;
    std::function<std::string(const ExperimentConfig&)> render;
    std::function<bool(ExperimentConfig&, std::string_view)> assign; // empty for the trap lists
};

inline ConfigKey number_key(std::string name, std::function<double&(ExperimentConfig&)> ref) {
    return {std::move(name),
            [ref](const ExperimentConfig& c) {
                ExperimentConfig copy = c;
                return text::format_double(ref(copy));
            },
            [ref](ExperimentConfig& c, std::string_view v) { return text::parse_double(v, ref(c)); }};
}

inline ConfigKey integer_key(std::string name, std::function<std::uint64_t&(ExperimentConfig&)> ref) {
    return {std::move(name),
            [ref](const ExperimentConfig& c) {
                ExperimentConfig copy = c;
                return std::to_string(ref(copy));
            },
            [ref](ExperimentConfig& c, std::string_view v) { return text::parse_uint(v, ref(c)); }};
}

inline std::string render_list(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ", ";
        out += text::format_double(v[i]);
    }
    return out;
}

inline bool parse_list(std::string_view s, std::vector<double>& out) {
    out.clear();
    if (text::trim(s).empty()) return true;
    for (auto f : text::split(s, ',')) {
        double v = 0.0;
        if (!text::parse_double(f, v)) return false;
        out.push_back(v);
    }
    return true;
}

inline std::vector<double> species_field(const ExperimentConfig& c, double TrapSpecies::*field) {
    std::vector<double> out;
    for (const auto& s : c.setup.detector.trap_species) out.push_back(s.*field);
    return out;
}

inline const std::vector<ConfigKey>& config_keys() {
    using E = ExperimentConfig;
    static const std::vector<ConfigKey> keys = [] {
        std::vector<ConfigKey> k;
        auto num = [&](std::string name, std::function<double&(E&)> ref) {
            k.push_back(number_key(std::move(name), std::move(ref)));
        };
        num("reverse_bias_v", [](E& c) -> double& { return c.setup.detector.bias.reverse_bias_v; });
        num("breakdown_voltage_v", [](E& c) -> double& { return c.setup.detector.bias.breakdown_voltage_v; });
        num("gate_width_ns", [](E& c) -> double& { return c.setup.gates.width_ns; });
        num("gate_period_ns", [](E& c) -> double& { return c.setup.gates.period_ns; });
        num("gate_delay_ns", [](E& c) -> double& { return c.setup.gates.delay_ns; });
        num("gate_delay_jitter_ps", [](E& c) -> double& { return c.setup.gates.delay_jitter_ps; });
        num("holdoff_us", [](E& c) -> double& { return c.setup.detector.holdoff_us; });
        k.push_back({"trap_lifetimes_us",
                     [](const E& c) { return render_list(species_field(c, &TrapSpecies::lifetime_us)); },
                     nullptr});
        k.push_back({"trap_weights", [](const E& c) { return render_list(species_field(c, &TrapSpecies::weight)); },
                     nullptr});
        num("trap_coefficient", [](E& c) -> double& { return c.setup.detector.trap_coefficient; });
        num("avalanche_rate_e_per_ns", [](E& c) -> double& { return c.setup.detector.avalanche_rate_e_per_ns; });
        num("buildup_time_ps", [](E& c) -> double& { return c.setup.detector.buildup_time_ps; });
        num("min_avalanche_charge_e", [](E& c) -> double& { return c.setup.detector.min_avalanche_charge_e; });
        num("trigger_efficiency", [](E& c) -> double& { return c.setup.detector.trigger_efficiency; });
        num("dark_rate_per_ns", [](E& c) -> double& { return c.setup.detector.dark_rate_per_ns; });
        num("dark_reference_bias_v", [](E& c) -> double& { return c.setup.detector.dark_reference_bias_v; });
        num("jitter_sigma_ps", [](E& c) -> double& { return c.setup.detector.jitter_sigma_ps; });
        num("efficiency_scale", [](E& c) -> double& { return c.setup.detector.efficiency_scale; });
        num("efficiency_knee_v", [](E& c) -> double& { return c.setup.detector.efficiency_knee_v; });
        num("temperature_c", [](E& c) -> double& { return c.setup.detector.temperature_c; });
        num("mean_photon_number", [](E& c) -> double& { return c.setup.source.mean_photon_number; });
        num("pulse_period_ns", [](E& c) -> double& { return c.setup.source.pulse_period_ns; });
        num("pulse_offset_ns", [](E& c) -> double& { return c.setup.source.pulse_offset_ns; });
        num("tdc_resolution_ps", [](E& c) -> double& { return c.setup.tdc_resolution_ps; });
        num("delay_step_ns", [](E& c) -> double& { return c.delay_step_ns; });
        num("delay_span_ns", [](E& c) -> double& { return c.delay_span_ns; });
        k.push_back(integer_key("n_gates", [](E& c) -> std::uint64_t& { return c.n_gates; }));
        k.push_back(integer_key("master_seed", [](E& c) -> std::uint64_t& { return c.master_seed; }));
        k.push_back({"output_path", [](const E& c) { return c.output_path; },
                     [](E& c, std::string_view v) {
                         c.output_path = std::string(v);
                         return true;
                     }});
        return k;
    }();
    return keys;
}

} // namespace detail

inline void validate(const ExperimentConfig& c) {
    validate_run(c.setup.detector, c.setup.source, c.setup.gates);
    detail::require(c.setup.tdc_resolution_ps > 0.0, "tdc_resolution_ps", "must be positive");
    detail::require(c.n_gates >= 1, "n_gates", "must be at least 1");
    detail::require(c.delay_step_ns > 0.0, "delay_step_ns", "must be positive");
    detail::require(c.delay_span_ns >= c.delay_step_ns, "delay_span_ns", "must be at least one delay step");
}

/// Parses and validates. Unknown or repeated keys are rejected.
inline ExperimentConfig parse_config(std::string_view body) {
    ExperimentConfig c = paper_preset();
    const auto& keys = detail::config_keys();
    std::set<std::string, std::less<>> seen;
    std::optional<std::vector<double>> lifetimes, weights;
    for (const auto& line : text::data_lines(body)) {
        const auto eq = line.content.find('=');
        if (eq == std::string_view::npos) throw ParseError(line.number, "expected 'key = value'");
        const auto key = text::trim(line.content.substr(0, eq));
        const auto value = text::trim(line.content.substr(eq + 1));
        const auto it = std::find_if(keys.begin(), keys.end(), [&](const auto& k) { return k.name == key; });
        if (it == keys.end()) throw ParseError(line.number, "unknown key '" + std::string(key) + "'");
        if (!seen.insert(std::string(key)).second)
            throw ParseError(line.number, "duplicate key '" + std::string(key) + "'");
        bool ok = false;
        if (!it->assign) {
            auto& slot = key == "trap_lifetimes_us" ? lifetimes : weights;
            slot.emplace();
            ok = detail::parse_list(value, *slot);
        } else {
            ok = it->assign(c, value);
        }
        if (!ok) throw ParseError(line.number, "invalid value for '" + std::string(key) + "': " + std::string(value));
    }
    if (lifetimes.has_value() != weights.has_value())
        throw InvariantError(lifetimes ? "trap_weights" : "trap_lifetimes_us",
                             "trap_lifetimes_us and trap_weights must be given together");
    if (lifetimes) {
        if (lifetimes->size() != weights->size())
            throw InvariantError("trap_weights", "needs one weight per trap lifetime");
        auto& species = c.setup.detector.trap_species;
        species.clear();
        for (std::size_t i = 0; i < lifetimes->size(); ++i) species.push_back({(*lifetimes)[i], (*weights)[i]});
    }
    validate(c);
    return c;
}

inline std::string render_config(const ExperimentConfig& c) {
    std::string out;
    for (const auto& k : detail::config_keys()) out += k.name + " = " + k.render(c) + "\n";
    return out;
}

} // namespace spadchar

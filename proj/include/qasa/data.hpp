#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "qasa/errors.hpp"
#include "qasa/rng.hpp"

namespace qasa {

enum class Task {
    DampedOscillator,
    NoisyDampedOscillator,
    Arma,
    ChaoticLogistic,
    PiecewiseRegime,
    Sawtooth,
    SquareWave,
    SeasonalTrend,
};

inline const std::array<std::pair<Task, const char*>, 8>& task_table() {
    static const std::array<std::pair<Task, const char*>, 8> table{{
        {Task::DampedOscillator, "damped_oscillator"},
        {Task::NoisyDampedOscillator, "noisy_damped_oscillator"},
        {Task::Arma, "arma"},
        {Task::ChaoticLogistic, "chaotic_logistic"},
        {Task::PiecewiseRegime, "piecewise_regime"},
        {Task::Sawtooth, "sawtooth"},
        {Task::SquareWave, "square_wave"},
        {Task::SeasonalTrend, "seasonal_trend"},
    }};
    return table;
}

inline std::string task_name(Task t) {
    for (const auto& [task, name] : task_table())
        if (task == t) return name;
    return "?";
}

inline std::string task_list_string() {
    std::string out;
    for (const auto& [task, name] : task_table()) {
        if (!out.empty()) out += ", ";
        out += name;
    }
    return out;
}

inline Task parse_task(const std::string& name) {
    for (const auto& [task, tname] : task_table())
        if (name == tname) return task;
    throw ConfigError("unknown task '" + name + "' (expected one of: " +
                      task_list_string() + ")");
}

// Deterministic generator description. All numeric knobs live in `params`
// with per-task defaults; generation is a pure function of the spec.
struct SeriesSpec {
    Task task = Task::DampedOscillator;
    int length = 2050;
    double dt = 0.1;
    std::map<std::string, double> params;
    std::uint64_t seed = 42;
};

namespace detail {

inline double param_or(const std::map<std::string, double>& m,
                       const std::string& key, double fallback) {
    const auto it = m.find(key);
    return it == m.end() ? fallback : it->second;
}

inline void check_param_keys(const SeriesSpec& spec,
                             std::initializer_list<const char*> known) {
    for (const auto& [key, value] : spec.params) {
        bool ok = false;
        for (const char* k : known) ok |= (key == k);
        if (!ok)
            throw ConfigError("unknown parameter '" + key + "' for task " +
                              task_name(spec.task));
    }
}

}  // namespace detail

inline std::vector<double> generate(const SeriesSpec& spec) {
    if (spec.length <= 0)
        throw ContractViolation("series length must be positive, got " +
                                std::to_string(spec.length));
    const auto n = static_cast<std::size_t>(spec.length);
    std::vector<double> x(n);
    SplitMix64 rng = stream_for(spec.seed, task_name(spec.task));
    const auto& p = spec.params;
    constexpr double two_pi = 2.0 * std::numbers::pi;

    switch (spec.task) {
        case Task::DampedOscillator:
        case Task::NoisyDampedOscillator: {
            detail::check_param_keys(spec, {"amplitude", "gamma", "omega", "phi",
                                            "noise_std"});
            const double amplitude = detail::param_or(p, "amplitude", 1.0);
            const double gamma = detail::param_or(p, "gamma", 0.1);
            const double omega = detail::param_or(p, "omega", 2.0);
            const double phi = detail::param_or(p, "phi", 0.0);
            const double noise =
                spec.task == Task::NoisyDampedOscillator
                    ? detail::param_or(p, "noise_std", 0.05)
                    : 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                const double t = static_cast<double>(k) * spec.dt;
                x[k] = amplitude * std::exp(-gamma * t) * std::cos(omega * t + phi);
                if (noise > 0.0) x[k] += noise * rng.normal();
            }
            break;
        }
        case Task::Arma: {
            detail::check_param_keys(spec, {"ar1", "ar2", "ma1", "ma2",
                                            "innovation_std", "burn_in"});
            const double ar1 = detail::param_or(p, "ar1", 0.75);
            const double ar2 = detail::param_or(p, "ar2", -0.25);
            const double ma1 = detail::param_or(p, "ma1", 0.65);
            const double ma2 = detail::param_or(p, "ma2", 0.35);
            const double istd = detail::param_or(p, "innovation_std", 1.0);
            const auto burn =
                static_cast<std::size_t>(detail::param_or(p, "burn_in", 100.0));
            double x1 = 0.0, x2 = 0.0, e1 = 0.0, e2 = 0.0;
            for (std::size_t k = 0; k < burn + n; ++k) {
                const double e = istd * rng.normal();
                const double v = ar1 * x1 + ar2 * x2 + e + ma1 * e1 + ma2 * e2;
                x2 = x1;
                x1 = v;
                e2 = e1;
                e1 = e;
                if (k >= burn) x[k - burn] = v;
            }
            break;
        }
        case Task::ChaoticLogistic: {
            detail::check_param_keys(spec, {"r", "x0"});
            const double r = detail::param_or(p, "r", 3.9);
            double v = detail::param_or(p, "x0", 0.5);
            for (std::size_t k = 0; k < n; ++k) {
                x[k] = v;
                v = r * v * (1.0 - v);
            }
            break;
        }
        case Task::PiecewiseRegime: {
            detail::check_param_keys(spec, {"segment_length", "level_jump",
                                            "trend_slope", "sin_amplitude",
                                            "sin_period"});
            const auto seg = static_cast<std::size_t>(
                detail::param_or(p, "segment_length", 100.0));
            const double jump = detail::param_or(p, "level_jump", 10.0);
            const double slope = detail::param_or(p, "trend_slope", 0.05);
            const double amp = detail::param_or(p, "sin_amplitude", 2.0);
            const double period = detail::param_or(p, "sin_period", 25.0);
            for (std::size_t k = 0; k < n; ++k) {
                const std::size_t s = k / seg;
                const auto j = static_cast<double>(k % seg);
                const double level = jump * static_cast<double>(s);
                x[k] = (s % 2 == 0) ? level + slope * j
                                    : level + amp * std::sin(two_pi * j / period);
            }
            break;
        }
        case Task::Sawtooth: {
            detail::check_param_keys(spec, {"period", "amplitude"});
            const auto period =
                static_cast<std::size_t>(detail::param_or(p, "period", 40.0));
            const double amp = detail::param_or(p, "amplitude", 1.0);
            for (std::size_t k = 0; k < n; ++k) {
                const auto j = static_cast<double>(k % period);
                x[k] = amp * (2.0 * j / static_cast<double>(period) - 1.0);
            }
            break;
        }
        case Task::SquareWave: {
            detail::check_param_keys(spec, {"period", "amplitude", "duty"});
            const auto period =
                static_cast<std::size_t>(detail::param_or(p, "period", 40.0));
            const double amp = detail::param_or(p, "amplitude", 1.0);
            const double duty = detail::param_or(p, "duty", 0.5);
            for (std::size_t k = 0; k < n; ++k) {
                const auto j = static_cast<double>(k % period);
                x[k] = j < duty * static_cast<double>(period) ? amp : -amp;
            }
            break;
        }
        case Task::SeasonalTrend: {
            detail::check_param_keys(spec, {"trend_slope", "period1", "amplitude1",
                                            "period2", "amplitude2", "noise_std"});
            const double slope = detail::param_or(p, "trend_slope", 0.002);
            const double p1 = detail::param_or(p, "period1", 50.0);
            const double a1 = detail::param_or(p, "amplitude1", 1.0);
            const double p2 = detail::param_or(p, "period2", 13.0);
            const double a2 = detail::param_or(p, "amplitude2", 0.3);
            const double noise = detail::param_or(p, "noise_std", 0.05);
            for (std::size_t k = 0; k < n; ++k) {
                const auto kd = static_cast<double>(k);
                x[k] = slope * kd + a1 * std::sin(two_pi * kd / p1) +
                       a2 * std::sin(two_pi * kd / p2) + noise * rng.normal();
            }
            break;
        }
    }
    return x;
}

// Sliding windows of length L; target k is the raw value at index k + L.
struct WindowedDataset {
    std::size_t window = 0;
    std::vector<double> inputs;   // count x window, row-major
    std::vector<double> targets;  // count

    std::size_t count() const { return targets.size(); }

    std::span<const double> window_at(std::size_t k) const {
        return {inputs.data() + k * window, window};
    }
    double target_at(std::size_t k) const { return targets[k]; }
};

inline WindowedDataset window(std::span<const double> series, int L) {
    if (L < 1)
        throw ContractViolation("window length must be positive");
    if (series.size() < static_cast<std::size_t>(L) + 1)
        throw ContractViolation("series of " + std::to_string(series.size()) +
                                " points is too short for window " +
                                std::to_string(L));
    const std::size_t m = series.size() - static_cast<std::size_t>(L);
    WindowedDataset ds;
    ds.window = static_cast<std::size_t>(L);
    ds.inputs.reserve(m * ds.window);
    ds.targets.reserve(m);
    for (std::size_t k = 0; k < m; ++k) {
        ds.inputs.insert(ds.inputs.end(), series.begin() + static_cast<std::ptrdiff_t>(k),
                         series.begin() + static_cast<std::ptrdiff_t>(k + ds.window));
        ds.targets.push_back(series[k + ds.window]);
    }
    return ds;
}

struct StandardStats {
    double mean = 0.0;
    double std = 1.0;
};

struct SplitResult {
    WindowedDataset train;
    WindowedDataset val;
    StandardStats stats;
};

// Chronological 80/20 split; mean/std come from the training inputs and
// targets jointly (population denominator) and are applied to both splits.
inline SplitResult split_and_standardize(const WindowedDataset& ds,
                                         double ratio = 0.8,
                                         const std::string& label = "series") {
    if (ds.count() < 2)
        throw ContractViolation("need at least 2 windows to split, got " +
                                std::to_string(ds.count()));
    const auto n_train = static_cast<std::size_t>(
        std::floor(ratio * static_cast<double>(ds.count())));
    if (n_train == 0 || n_train == ds.count())
        throw ContractViolation("split ratio " + std::to_string(ratio) +
                                " leaves an empty split");

    double sum = 0.0, sum2 = 0.0;
    std::size_t cnt = 0;
    const auto feed = [&](double v) {
        sum += v;
        sum2 += v * v;
        ++cnt;
    };
    for (std::size_t k = 0; k < n_train * ds.window; ++k) feed(ds.inputs[k]);
    for (std::size_t k = 0; k < n_train; ++k) feed(ds.targets[k]);

    StandardStats stats;
    stats.mean = sum / static_cast<double>(cnt);
    const double var = sum2 / static_cast<double>(cnt) - stats.mean * stats.mean;
    stats.std = var > 0.0 ? std::sqrt(var) : 0.0;
    if (stats.std <= 0.0)
        throw ConfigError("task " + label +
                          " produced a constant training split; cannot standardize");

    const auto transform = [&](double v) { return (v - stats.mean) / stats.std; };
    SplitResult out;
    out.stats = stats;
    out.train.window = ds.window;
    out.val.window = ds.window;
    out.train.inputs.assign(ds.inputs.begin(),
                            ds.inputs.begin() + static_cast<std::ptrdiff_t>(n_train * ds.window));
    out.train.targets.assign(ds.targets.begin(),
                             ds.targets.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.val.inputs.assign(ds.inputs.begin() + static_cast<std::ptrdiff_t>(n_train * ds.window),
                          ds.inputs.end());
    out.val.targets.assign(ds.targets.begin() + static_cast<std::ptrdiff_t>(n_train),
                           ds.targets.end());
    for (auto& v : out.train.inputs) v = transform(v);
    for (auto& v : out.train.targets) v = transform(v);
    for (auto& v : out.val.inputs) v = transform(v);
    for (auto& v : out.val.targets) v = transform(v);
    return out;
}

namespace detail {

// Shortest decimal form that round-trips to the same double.
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return {buf, res.ptr};
}

}  // namespace detail

inline void write_series_csv(const std::string& path,
                             std::span<const double> series, double dt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open '" + path + "' for writing");
    out << "index,t,value\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        out << k << ',' << detail::format_double(static_cast<double>(k) * dt) << ','
            << detail::format_double(series[k]) << '\n';
    }
}

inline void write_dataset_csv(const std::string& path, const WindowedDataset& ds) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open '" + path + "' for writing");
    out << "window_id";
    for (std::size_t j = 0; j < ds.window; ++j) out << ",pos_" << j;
    out << ",target\n";
    for (std::size_t k = 0; k < ds.count(); ++k) {
        out << k;
        for (const double v : ds.window_at(k)) out << ',' << detail::format_double(v);
        out << ',' << detail::format_double(ds.target_at(k)) << '\n';
    }
}

}  // namespace qasa

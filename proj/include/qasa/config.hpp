#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "qasa/checkpoint.hpp"
#include "qasa/data.hpp"
#include "qasa/errors.hpp"
#include "qasa/model.hpp"
#include "qasa/train.hpp"

namespace qasa {

// Full description of one run: model, training recipe, data source and the
// output directory. Every field has a default (the desk-scale damped
// oscillator experiment), so an empty JSON object is a valid config.
struct ExperimentConfig {
    ModelConfig model = desk_config(Variant::Qasa);
    TrainConfig train;
    SeriesSpec data = SeriesSpec{Task::DampedOscillator, 832, 0.1, {}, 42};
    int window = 32;  // dataset window length; must equal model.L
    std::string out_dir = "runs/default";

    void validate() const {
        model.validate();
        train.validate();
        if (window != model.L)
            throw ConfigError("data.window (" + std::to_string(window) +
                              ") must equal model.L (" + std::to_string(model.L) + ")");
    }
};

inline nlohmann::ordered_json train_config_to_json(const TrainConfig& c) {
    nlohmann::ordered_json j;
    j["lr"] = c.lr;
    j["weight_decay"] = c.weight_decay;
    j["beta1"] = c.beta1;
    j["beta2"] = c.beta2;
    j["eps"] = c.eps;
    j["epochs"] = c.epochs;
    j["batch_size"] = c.batch_size;
    j["scheduler"] = scheduler_name(c.scheduler);
    j["early_stop_patience"] = c.early_stop_patience;
    j["seed"] = c.seed;
    j["lr_min"] = c.lr_min;
    j["plateau_factor"] = c.plateau_factor;
    j["plateau_patience"] = c.plateau_patience;
    return j;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    for (const auto& [key, value] : j.items()) {
        if (key == "lr") c.lr = value.get<double>();
        else if (key == "weight_decay") c.weight_decay = value.get<double>();
        else if (key == "beta1") c.beta1 = value.get<double>();
        else if (key == "beta2") c.beta2 = value.get<double>();
        else if (key == "eps") c.eps = value.get<double>();
        else if (key == "epochs") c.epochs = value.get<int>();
        else if (key == "batch_size") c.batch_size = value.get<int>();
        else if (key == "scheduler") c.scheduler = parse_scheduler(value.get<std::string>());
        else if (key == "early_stop_patience") c.early_stop_patience = value.get<int>();
        else if (key == "seed") c.seed = value.get<std::uint64_t>();
        else if (key == "lr_min") c.lr_min = value.get<double>();
        else if (key == "plateau_factor") c.plateau_factor = value.get<double>();
        else if (key == "plateau_patience") c.plateau_patience = value.get<int>();
        else throw ConfigError("unknown train config field '" + key + "'");
    }
    return c;
}

inline nlohmann::ordered_json series_spec_to_json(const SeriesSpec& s, int window) {
    nlohmann::ordered_json j;
    j["task"] = task_name(s.task);
    j["length"] = s.length;
    j["dt"] = s.dt;
    j["seed"] = s.seed;
    j["window"] = window;
    nlohmann::ordered_json params = nlohmann::ordered_json::object();
    for (const auto& [key, value] : s.params) params[key] = value;
    j["params"] = std::move(params);
    return j;
}

inline std::pair<SeriesSpec, int> series_spec_from_json(const nlohmann::json& j,
                                                        int default_window) {
    SeriesSpec s{Task::DampedOscillator, 832, 0.1, {}, 42};
    int window = default_window;
    for (const auto& [key, value] : j.items()) {
        if (key == "task") s.task = parse_task(value.get<std::string>());
        else if (key == "length") s.length = value.get<int>();
        else if (key == "dt") s.dt = value.get<double>();
        else if (key == "seed") s.seed = value.get<std::uint64_t>();
        else if (key == "window") window = value.get<int>();
        else if (key == "params") {
            for (const auto& [pk, pv] : value.items())
                s.params[pk] = pv.get<double>();
        } else {
            throw ConfigError("unknown data config field '" + key + "'");
        }
    }
    return {s, window};
}

inline nlohmann::ordered_json experiment_config_to_json(const ExperimentConfig& c) {
    nlohmann::ordered_json j;
    j["model"] = model_config_to_json(c.model);
    j["train"] = train_config_to_json(c.train);
    j["data"] = series_spec_to_json(c.data, c.window);
    j["out_dir"] = c.out_dir;
    return j;
}

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    for (const auto& [key, value] : j.items()) {
        if (key == "model") c.model = model_config_from_json(value);
        else if (key == "train") c.train = train_config_from_json(value);
        else if (key == "data") {
            const auto [spec, window] = series_spec_from_json(value, c.window);
            c.data = spec;
            c.window = window;
        } else if (key == "out_dir") {
            c.out_dir = value.get<std::string>();
        } else {
            throw ConfigError("unknown config field '" + key + "'");
        }
    }
    c.validate();
    return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
    return experiment_config_from_json(j);
}

// Windowed, standardized train/val splits for one experiment.
inline SplitResult build_datasets(const ExperimentConfig& cfg) {
    const auto series = generate(cfg.data);
    const auto ds = window(series, cfg.window);
    return split_and_standardize(ds, 0.8, task_name(cfg.data.task));
}

}  // namespace qasa

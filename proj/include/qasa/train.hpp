#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "qasa/checkpoint.hpp"
#include "qasa/data.hpp"
#include "qasa/errors.hpp"
#include "qasa/model.hpp"
#include "qasa/rng.hpp"
#include "qasa/tensor.hpp"

namespace qasa {

enum class SchedulerKind { Cosine, Plateau };

inline std::string scheduler_name(SchedulerKind s) {
    return s == SchedulerKind::Cosine ? "cosine" : "plateau";
}

inline SchedulerKind parse_scheduler(const std::string& name) {
    if (name == "cosine") return SchedulerKind::Cosine;
    if (name == "plateau") return SchedulerKind::Plateau;
    throw ConfigError("unknown scheduler '" + name + "' (expected cosine or plateau)");
}

struct TrainConfig {
    double lr = 1e-4;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int epochs = 45;
    int batch_size = 32;
    SchedulerKind scheduler = SchedulerKind::Cosine;
    int early_stop_patience = 10;
    std::uint64_t seed = 42;
    double lr_min = 0.0;
    double plateau_factor = 0.5;
    int plateau_patience = 5;

    void validate() const {
        if (lr <= 0.0 && lr != 0.0)
            throw ConfigError("learning rate must be non-negative");
        if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
            throw ConfigError("betas must lie in [0, 1)");
        if (epochs < 1) throw ConfigError("epochs must be >= 1");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (early_stop_patience < 1) throw ConfigError("early_stop_patience must be >= 1");
    }
};

struct EpochMetrics {
    int epoch = 0;
    std::string split;
    double mse = 0.0;
    double mae = 0.0;
    double lr = 0.0;
    double wall_time_s = 0.0;
};

struct TrainAbort : std::runtime_error {
    int epoch;
    int batch;
    TrainAbort(int epoch_, int batch_)
        : std::runtime_error("non-finite loss at epoch " + std::to_string(epoch_) +
                             ", batch " + std::to_string(batch_)),
          epoch(epoch_), batch(batch_) {}
};

// (1/N) sum (y - yhat)^2, differentiable through the tape.
inline Tensor mse_loss(const Tensor& pred, const Tensor& target) {
    if (pred.ndim() != 1 || target.ndim() != 1 || pred.size() != target.size() ||
        pred.size() == 0)
        throw DimensionError("mse_loss needs equal-length vectors, got " +
                             shape_str(pred.shape()) + " and " +
                             shape_str(target.shape()));
    Tensor diff = sub(pred, target);
    return mean(mul(diff, diff));
}

inline double mse_metric(std::span<const double> pred, std::span<const double> target) {
    if (pred.size() != target.size() || pred.empty())
        throw DimensionError("mse_metric needs equal-length non-empty vectors");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        acc += d * d;
    }
    return acc / static_cast<double>(pred.size());
}

// Evaluation-only; never differentiated.
inline double mae_metric(std::span<const double> pred, std::span<const double> target) {
    if (pred.size() != target.size() || pred.empty())
        throw DimensionError("mae_metric needs equal-length non-empty vectors");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        acc += std::abs(pred[i] - target[i]);
    return acc / static_cast<double>(pred.size());
}

// lr_min + 0.5 (lr_max - lr_min)(1 + cos(pi epoch / total)).
inline double cosine_lr(int epoch, int total_epochs, double lr_max, double lr_min) {
    if (total_epochs <= 0)
        throw ContractViolation("cosine_lr requires total_epochs >= 1");
    if (epoch < 0 || epoch > total_epochs)
        throw ContractViolation("cosine_lr epoch out of range");
    return lr_min + 0.5 * (lr_max - lr_min) *
                        (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) /
                                        static_cast<double>(total_epochs)));
}

// ReduceLROnPlateau bookkeeping: halve (by `factor`) after `patience`
// consecutive non-improving epochs.
struct PlateauSchedule {
    double lr;
    double factor;
    int patience;
    int wait = 0;

    void observe(bool improved) {
        if (improved) {
            wait = 0;
            return;
        }
        if (++wait >= patience) {
            lr *= factor;
            wait = 0;
        }
    }
};

// Decoupled weight decay on one flat parameter: m and v are the biased
// moment estimates, t the 1-based step index.
inline void adamw_update(std::span<double> p, std::span<const double> g,
                         std::span<double> m, std::span<double> v, long t,
                         double lr, double weight_decay, double beta1, double beta2,
                         double eps) {
    if (p.size() != g.size() || p.size() != m.size() || p.size() != v.size())
        throw ContractViolation("adamw state/parameter size mismatch");
    if (t < 1) throw ContractViolation("adamw step index must be >= 1");
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        const double m_hat = m[i] / bc1;
        const double v_hat = v[i] / bc2;
        p[i] -= lr * (m_hat / (std::sqrt(v_hat) + eps) + weight_decay * p[i]);
    }
}

// Weight decay exempts biases and LayerNorm affine parameters.
inline bool decays_weight(const std::string& path) {
    if (path.find(".norm") != std::string::npos) return false;
    const auto ends_with = [&](const char* suffix) {
        const std::string s(suffix);
        return path.size() >= s.size() &&
               path.compare(path.size() - s.size(), s.size(), s) == 0;
    };
    return !(ends_with(".bias") || ends_with(".b1") || ends_with(".b2"));
}

// Per-tensor AdamW state bound to a model's parameter registry.
class AdamW {
  public:
    AdamW(Model& model, const TrainConfig& cfg) : model_(model), cfg_(cfg) {
        for (const auto& path : model.param_paths()) {
            const std::size_t n = model.param(path).size();
            m_.emplace_back(n, 0.0);
            v_.emplace_back(n, 0.0);
        }
    }

    void step(const std::vector<std::vector<double>>& grads, double lr) {
        ++t_;
        const auto& paths = model_.param_paths();
        if (grads.size() != paths.size())
            throw ContractViolation("gradient list does not match parameter registry");
        for (std::size_t i = 0; i < paths.size(); ++i) {
            Tensor& p = model_.param(paths[i]);
            if (grads[i].size() != p.size())
                throw ContractViolation("gradient size mismatch for " + paths[i]);
            const double wd = decays_weight(paths[i]) ? cfg_.weight_decay : 0.0;
            adamw_update({p.mutable_data(), p.size()}, grads[i],
                         m_[i], v_[i], t_, lr, wd, cfg_.beta1, cfg_.beta2, cfg_.eps);
        }
    }

    long step_count() const { return t_; }

  private:
    Model& model_;
    TrainConfig cfg_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    long t_ = 0;
};

// Predictions over a dataset without recording; metrics in standardized space.
inline std::vector<double> predict_all(Model& model, const WindowedDataset& ds) {
    if (ds.count() == 0)
        throw ContractViolation("evaluate requires a non-empty dataset");
    std::vector<double> preds(ds.count());
    for (std::size_t k = 0; k < ds.count(); ++k)
        preds[k] = model.predict(ds.window_at(k));
    return preds;
}

inline std::pair<double, double> evaluate(Model& model, const WindowedDataset& ds) {
    const auto preds = predict_all(model, ds);
    return {mse_metric(preds, ds.targets), mae_metric(preds, ds.targets)};
}

struct TrainResult {
    std::vector<EpochMetrics> history;
    std::vector<std::uint8_t> best_checkpoint;
    double best_val_mse = std::numeric_limits<double>::infinity();
    int best_epoch = -1;
    int epochs_run = 0;
};

// Called once per epoch with the validation predictions.
using PredictionSink = std::function<void(int epoch, std::span<const double> preds,
                                          std::span<const double> targets)>;

// Mini-batch AdamW with per-epoch scheduling, early stopping on validation
// MSE and a best-checkpoint snapshot at every improvement. Batch order is a
// pure function of (seed, epoch); per-sample gradients are reduced in
// ascending sample order.
inline TrainResult train(Model& model, const WindowedDataset& train_ds,
                         const WindowedDataset& val_ds, const TrainConfig& cfg,
                         const PredictionSink& prediction_sink = nullptr) {
    cfg.validate();
    if (train_ds.count() == 0 || val_ds.count() == 0)
        throw ContractViolation("train and validation splits must be non-empty");
    if (train_ds.window != static_cast<std::size_t>(model.config().L))
        throw ConfigError("dataset window " + std::to_string(train_ds.window) +
                          " does not match model L=" + std::to_string(model.config().L));

    TrainResult result;
    AdamW optimizer(model, cfg);
    const auto& paths = model.param_paths();
    std::vector<std::vector<double>> grad_acc(paths.size());
    for (std::size_t i = 0; i < paths.size(); ++i)
        grad_acc[i].assign(model.param(paths[i]).size(), 0.0);

    PlateauSchedule plateau{cfg.lr, cfg.plateau_factor, cfg.plateau_patience};
    int since_best = 0;
    const auto L = static_cast<std::size_t>(model.config().L);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto epoch_start = std::chrono::steady_clock::now();
        const double lr = cfg.scheduler == SchedulerKind::Cosine
                              ? cosine_lr(epoch, cfg.epochs, cfg.lr, cfg.lr_min)
                              : plateau.lr;

        const auto order =
            stream_for(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch))
                .permutation(train_ds.count());

        const std::size_t batches =
            (train_ds.count() + static_cast<std::size_t>(cfg.batch_size) - 1) /
            static_cast<std::size_t>(cfg.batch_size);
        for (std::size_t b = 0; b < batches; ++b) {
            const std::size_t lo = b * static_cast<std::size_t>(cfg.batch_size);
            const std::size_t hi =
                std::min(lo + static_cast<std::size_t>(cfg.batch_size),
                         train_ds.count());
            for (auto& g : grad_acc) std::fill(g.begin(), g.end(), 0.0);
            double batch_loss = 0.0;
            for (std::size_t s = lo; s < hi; ++s) {
                const std::size_t idx = order[s];
                const auto win = train_ds.window_at(idx);
                Tensor x({L, 1}, std::vector<double>(win.begin(), win.end()));
                Tensor pred = model.forward(x);
                Tensor diff = sub(pred, Tensor::scalar(train_ds.target_at(idx)));
                Tensor loss = mul(diff, diff);
                batch_loss += loss.scalar_value();
                const Gradients grads = model.tape().backward(loss);
                for (std::size_t i = 0; i < paths.size(); ++i) {
                    const auto& g = grads.at(model.param(paths[i]));
                    for (std::size_t k = 0; k < g.size(); ++k) grad_acc[i][k] += g[k];
                }
            }
            const double inv = 1.0 / static_cast<double>(hi - lo);
            batch_loss *= inv;
            if (!std::isfinite(batch_loss))
                throw TrainAbort(epoch, static_cast<int>(b));
            for (auto& g : grad_acc)
                for (auto& v : g) v *= inv;
            optimizer.step(grad_acc, lr);
        }

        const auto [train_mse, train_mae] = evaluate(model, train_ds);
        const auto val_preds = predict_all(model, val_ds);
        const double val_mse = mse_metric(val_preds, val_ds.targets);
        const double val_mae = mae_metric(val_preds, val_ds.targets);
        if (prediction_sink) prediction_sink(epoch, val_preds, val_ds.targets);

        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                          epoch_start)
                .count();
        result.history.push_back({epoch, "train", train_mse, train_mae, lr, wall});
        result.history.push_back({epoch, "val", val_mse, val_mae, lr, wall});
        result.epochs_run = epoch + 1;

        const bool improved = val_mse < result.best_val_mse;
        plateau.observe(improved);
        if (improved) {
            result.best_val_mse = val_mse;
            result.best_epoch = epoch;
            result.best_checkpoint = serialize_checkpoint(model);
            since_best = 0;
        } else if (++since_best >= cfg.early_stop_patience) {
            break;
        }
    }
    return result;
}

inline void write_metrics_csv(const std::string& path,
                              std::span<const EpochMetrics> history) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open '" + path + "' for writing");
    out << "epoch,split,mse,mae,lr,wall_time_s\n";
    char buf[64];
    for (const auto& row : history) {
        out << row.epoch << ',' << row.split << ',' << detail::format_double(row.mse)
            << ',' << detail::format_double(row.mae) << ','
            << detail::format_double(row.lr) << ',';
        std::snprintf(buf, sizeof(buf), "%.6f", row.wall_time_s);
        out << buf << '\n';
    }
}

}  // namespace qasa

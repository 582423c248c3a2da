#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "qasa/circuit.hpp"
#include "qasa/errors.hpp"
#include "qasa/rng.hpp"
#include "qasa/tensor.hpp"

namespace qasa {

enum class Variant { Transformer, QasaClassical, Qasa };

inline std::string variant_name(Variant v) {
    switch (v) {
        case Variant::Transformer: return "transformer";
        case Variant::QasaClassical: return "qasa_classical";
        case Variant::Qasa: return "qasa";
    }
    return "?";
}

inline Variant parse_variant(const std::string& name) {
    if (name == "transformer") return Variant::Transformer;
    if (name == "qasa_classical" || name == "classical") return Variant::QasaClassical;
    if (name == "qasa" || name == "quantum") return Variant::Qasa;
    throw ConfigError("unknown model variant '" + name +
                      "' (expected transformer, qasa_classical or qasa)");
}

struct ModelConfig {
    Variant variant = Variant::Qasa;
    int L = 50;      // sequence length
    int d = 256;     // hidden dim
    int H = 4;       // attention heads
    int d_ff = 1024; // feedforward dim
    int N = 4;       // encoder layers
    int n = 8;       // qubits (qasa only)
    int L_q = 4;     // PQC layers (qasa only)
    std::uint64_t seed = 42;
    double layer_norm_eps = 1e-5;
    double t_ref = 50.0;  // sequence-length scaling for the circuit offset
    circuit::GradientEngine gradient_engine = circuit::GradientEngine::Adjoint;

    void validate() const {
        if (L < 1 || d < 1 || H < 1 || d_ff < 1 || N < 1)
            throw ConfigError("model dimensions must be positive");
        if (d % H != 0)
            throw ConfigError("hidden dim " + std::to_string(d) +
                              " not divisible by " + std::to_string(H) + " heads");
        if (d % 2 != 0)
            throw ConfigError("hidden dim must be even for sinusoidal encoding");
        if (variant == Variant::Qasa && (n < 1 || L_q < 1))
            throw ConfigError("qasa variant requires n >= 1 and L_q >= 1");
        if (t_ref <= 0.0)
            throw ConfigError("t_ref must be positive");
    }
};

// Paper-scale defaults.
inline ModelConfig default_config(Variant v) {
    ModelConfig c;
    c.variant = v;
    if (v == Variant::Transformer) c.H = 8;
    return c;
}

// Reduced dimensions that keep every structural property while running in
// minutes on a CPU.
inline ModelConfig desk_config(Variant v) {
    ModelConfig c;
    c.variant = v;
    c.L = 32;
    c.d = 64;
    c.H = 4;
    c.d_ff = 128;
    c.N = 3;
    c.n = 4;
    c.L_q = 2;
    return c;
}

// PE[pos, 2i] = sin(pos / 10000^(2i/d)), PE[pos, 2i+1] = cos(pos / 10000^(2i/d)).
inline Tensor sinusoidal_pe(int L, int d) {
    if (d % 2 != 0)
        throw ContractViolation("sinusoidal encoding requires even dim, got " +
                                std::to_string(d));
    std::vector<double> vals(static_cast<std::size_t>(L) * d);
    for (int pos = 0; pos < L; ++pos) {
        for (int i = 0; i < d / 2; ++i) {
            const double rate =
                std::pow(10000.0, 2.0 * static_cast<double>(i) / d);
            const double x = static_cast<double>(pos) / rate;
            vals[static_cast<std::size_t>(pos) * d + 2 * i] = std::sin(x);
            vals[static_cast<std::size_t>(pos) * d + 2 * i + 1] = std::cos(x);
        }
    }
    return Tensor({static_cast<std::size_t>(L), static_cast<std::size_t>(d)},
                  std::move(vals));
}

struct LayerShape {
    std::string name;
    Shape in;
    Shape out;
};

// One of the three Table-style architectures: a classical encoder stack with
// an optional quantum-enhanced final layer, plus a scalar prediction head.
// Owns its tape and its parameter registry; registry order is fixed at
// construction and is the on-disk checkpoint order.
class Model {
  public:
    explicit Model(ModelConfig config) : cfg_(std::move(config)) {
        cfg_.validate();
        rng_ = std::make_unique<SplitMix64>(stream_for(cfg_.seed, "model-init"));
        build_parameters();
        pe_ = sinusoidal_pe(cfg_.L, cfg_.d);
        if (cfg_.variant == Variant::Qasa) {
            circuit_spec_ = circuit::QasaCircuitSpec{cfg_.n, cfg_.L_q};
            circuit_spec_.validate();
            gates_ = std::make_shared<std::vector<qsim::GateOp>>(
                circuit::build_gates(circuit_spec_));
        }
        base_mark_ = tape_.mark();
        rng_.reset();
    }

    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;

    const ModelConfig& config() const { return cfg_; }
    Tape& tape() { return tape_; }

    const std::vector<std::string>& param_paths() const { return order_; }

    Tensor& param(const std::string& path) {
        const auto it = params_.find(path);
        if (it == params_.end())
            throw ContractViolation("unknown parameter path '" + path + "'");
        return it->second;
    }
    const Tensor& param(const std::string& path) const {
        return const_cast<Model*>(this)->param(path);
    }

    std::size_t num_parameter_tensors() const { return order_.size(); }

    std::size_t num_scalars() const {
        std::size_t total = 0;
        for (const auto& path : order_) total += params_.at(path).size();
        return total;
    }

    long quantum_invocations() const { return quantum_calls_; }

    double sequence_length_signal() const {
        return static_cast<double>(cfg_.L) / cfg_.t_ref;
    }

    // Drops all recorded operation nodes, keeping the parameter leaves.
    // Call between recorded passes once their gradients are consumed.
    void reset_tape() { tape_.reset_to(base_mark_); }

    // Scalar prediction for one (L x 1) window. Appends to the tape when
    // recording; the caller owns tape resets (see reset_tape).
    Tensor forward(const Tensor& x, std::vector<LayerShape>* trace = nullptr) {
        const Shape want{static_cast<std::size_t>(cfg_.L), 1};
        if (x.shape() != want)
            throw DimensionError("model input must be " + shape_str(want) +
                                 ", got " + shape_str(x.shape()));
        trace_ = trace;
        if (trace_) trace_->push_back({"input", x.shape(), x.shape()});

        Tensor h = embed(x);
        for (int k = 0; k < cfg_.N; ++k) {
            const Shape in = h.shape();
            if (cfg_.variant == Variant::Qasa && k == cfg_.N - 1) {
                h = quantum_encoder_layer(h);
                if (trace_) trace_->push_back({"quantum_encoder_layer", in, h.shape()});
            } else {
                h = transformer_layer(h, k);
                if (trace_) trace_->push_back({"transformer_layer", in, h.shape()});
            }
        }
        Tensor last = slice_last_timestep(h);
        Tensor y = head(last);
        if (trace_) trace_->push_back({"final_linear", last.shape(), y.shape()});
        trace_ = nullptr;
        return y;
    }

    double predict(std::span<const double> window) {
        if (window.size() != static_cast<std::size_t>(cfg_.L))
            throw DimensionError("window has " + std::to_string(window.size()) +
                                 " points, model expects " + std::to_string(cfg_.L));
        reset_tape();
        NoGradGuard guard(tape_);
        Tensor x({static_cast<std::size_t>(cfg_.L), 1},
                 std::vector<double>(window.begin(), window.end()));
        return forward(x).scalar_value();
    }

    // LayerNorm(W_e x + b_e) + PE
    Tensor embed(const Tensor& x) {
        Tensor h = layer_norm(linear(x, param("embed.weight"), param("embed.bias")),
                              param("embed.norm.gain"), param("embed.norm.bias"),
                              cfg_.layer_norm_eps);
        if (trace_) trace_->push_back({"linear_embedding", x.shape(), h.shape()});
        Tensor out = add(h, pe_);
        if (trace_) trace_->push_back({"positional_encoding", h.shape(), out.shape()});
        return out;
    }

    // softmax(Q K^T / sqrt(d_k)) V per head, concatenated and projected.
    Tensor multi_head_attention(const Tensor& x, int layer) {
        const int d_k = cfg_.d / cfg_.H;
        const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(d_k));
        std::vector<Tensor> heads;
        heads.reserve(static_cast<std::size_t>(cfg_.H));
        for (int j = 0; j < cfg_.H; ++j) {
            const std::string base = layer_prefix(layer) + ".attn.h" + std::to_string(j);
            Tensor q = matmul(x, param(base + ".wq"));
            Tensor k = matmul(x, param(base + ".wk"));
            Tensor v = matmul(x, param(base + ".wv"));
            Tensor weights =
                softmax_last(scale(matmul(q, transpose(k)), inv_sqrt_dk));
            heads.push_back(matmul(weights, v));
        }
        return matmul(concat_cols(heads), param(layer_prefix(layer) + ".attn.wo"));
    }

    // GELU(x W_1 + b_1) W_2 + b_2
    Tensor ffn(const Tensor& x, int layer) {
        const std::string base = layer_prefix(layer) + ".ffn";
        return linear(gelu(linear(x, param(base + ".w1"), param(base + ".b1"))),
                      param(base + ".w2"), param(base + ".b2"));
    }

    // Post-norm residual composition, exactly
    // LayerNorm(h + MHSA(h)) then LayerNorm(z + FFN(z)).
    Tensor transformer_layer(const Tensor& h, int layer) {
        Tensor z = sublayer_norm(add(h, multi_head_attention(h, layer)), layer, 1);
        return sublayer_norm(add(z, ffn(z, layer)), layer, 2);
    }

    // Per token row: h_q = tanh(W_q x_i) + t, out_i = x_i + W_o . QC(h_q).
    Tensor quantum_layer(const Tensor& x, double t) {
        if (cfg_.variant != Variant::Qasa)
            throw ConfigError("quantum_layer is only available on the qasa variant");
        const std::string base = layer_prefix(cfg_.N - 1) + ".quantum";
        const Tensor& theta = param(base + ".theta");
        Tensor projected = add(tanh(matmul(x, param(base + ".wq"))),
                               Tensor::scalar(t));
        const std::size_t rows = projected.shape()[0];
        std::vector<Tensor> outputs;
        outputs.reserve(rows);
        const circuit::QasaCircuitSpec spec = circuit_spec_;
        const circuit::GradientEngine engine = cfg_.gradient_engine;
        for (std::size_t i = 0; i < rows; ++i) {
            Tensor token = slice_row(projected, i);
            outputs.push_back(custom_node(
                {token, theta}, {static_cast<std::size_t>(cfg_.n)},
                [this, spec](const std::vector<std::span<const double>>& ins) {
                    ++quantum_calls_;
                    return circuit::forward(spec, ins[1], ins[0]);
                },
                [spec, engine](const std::vector<std::span<const double>>& ins) {
                    auto jac = circuit::jacobians(spec, ins[1], ins[0], engine);
                    return std::vector<std::vector<double>>{std::move(jac.d_input),
                                                            std::move(jac.d_theta)};
                }));
        }
        Tensor z = stack_rows(outputs);
        Tensor out = add(x, matmul(z, param(base + ".wo")));
        if (trace_) trace_->push_back({"quantum_layer", x.shape(), out.shape()});
        return out;
    }

    // a = MHSA(h); h' = LayerNorm(h + a); z = quantum_layer(h', t);
    // out = LayerNorm(z + FFN(z)).
    Tensor quantum_encoder_layer(const Tensor& h) {
        const int layer = cfg_.N - 1;
        Tensor hp = sublayer_norm(add(h, multi_head_attention(h, layer)), layer, 1);
        Tensor z = quantum_layer(hp, sequence_length_signal());
        return sublayer_norm(add(z, ffn(z, layer)), layer, 2);
    }

    Tensor head(const Tensor& h_last) {
        Tensor row = reshape(h_last, {1, h_last.size()});
        if (cfg_.variant == Variant::Qasa) {
            Tensor y = linear(row, param("head.weight"), param("head.bias"));
            return reshape(y, {1});
        }
        Tensor hidden = gelu(linear(row, param("head.w1"), param("head.b1")));
        Tensor y = linear(hidden, param("head.w2"), param("head.b2"));
        return reshape(y, {1});
    }

  private:
    std::string layer_prefix(int layer) const {
        return "layers." + std::to_string(layer);
    }

    Tensor sublayer_norm(const Tensor& x, int layer, int which) {
        const std::string base =
            layer_prefix(layer) + ".norm" + std::to_string(which);
        return layer_norm(x, param(base + ".gain"), param(base + ".bias"),
                          cfg_.layer_norm_eps);
    }

    enum class Init { Weight, Theta, Zero, One };

    void add_param(const std::string& path, Shape shape, Init init) {
        std::vector<double> vals(numel(shape));
        switch (init) {
            case Init::Weight:
                for (auto& v : vals) v = 0.02 * rng_->normal();
                break;
            case Init::Theta:
                for (auto& v : vals) v = 0.1 * rng_->normal();
                break;
            case Init::Zero:
                break;
            case Init::One:
                for (auto& v : vals) v = 1.0;
                break;
        }
        params_.emplace(path, tape_.leaf(std::move(shape), std::move(vals)));
        order_.push_back(path);
    }

    void add_norm(const std::string& base) {
        add_param(base + ".gain", {static_cast<std::size_t>(cfg_.d)}, Init::One);
        add_param(base + ".bias", {static_cast<std::size_t>(cfg_.d)}, Init::Zero);
    }

    void build_parameters() {
        const auto D = static_cast<std::size_t>(cfg_.d);
        const auto Dff = static_cast<std::size_t>(cfg_.d_ff);
        const auto dk = static_cast<std::size_t>(cfg_.d / cfg_.H);

        add_param("embed.weight", {1, D}, Init::Weight);
        add_param("embed.bias", {D}, Init::Zero);
        add_norm("embed.norm");

        for (int k = 0; k < cfg_.N; ++k) {
            const std::string lp = layer_prefix(k);
            for (int j = 0; j < cfg_.H; ++j) {
                const std::string hp = lp + ".attn.h" + std::to_string(j);
                add_param(hp + ".wq", {D, dk}, Init::Weight);
                add_param(hp + ".wk", {D, dk}, Init::Weight);
                add_param(hp + ".wv", {D, dk}, Init::Weight);
            }
            add_param(lp + ".attn.wo", {D, D}, Init::Weight);
            add_norm(lp + ".norm1");
            if (cfg_.variant == Variant::Qasa && k == cfg_.N - 1) {
                const auto Q = static_cast<std::size_t>(cfg_.n);
                add_param(lp + ".quantum.wq", {D, Q}, Init::Weight);
                add_param(lp + ".quantum.wo", {Q, D}, Init::Weight);
                add_param(lp + ".quantum.theta",
                          {static_cast<std::size_t>(cfg_.L_q),
                           static_cast<std::size_t>(2 * cfg_.n + 1)},
                          Init::Theta);
            }
            add_param(lp + ".ffn.w1", {D, Dff}, Init::Weight);
            add_param(lp + ".ffn.b1", {Dff}, Init::Zero);
            add_param(lp + ".ffn.w2", {Dff, D}, Init::Weight);
            add_param(lp + ".ffn.b2", {D}, Init::Zero);
            add_norm(lp + ".norm2");
        }

        if (cfg_.variant == Variant::Qasa) {
            add_param("head.weight", {D, 1}, Init::Weight);
            add_param("head.bias", {1}, Init::Zero);
        } else {
            add_param("head.w1", {D, D}, Init::Weight);
            add_param("head.b1", {D}, Init::Zero);
            add_param("head.w2", {D, 1}, Init::Weight);
            add_param("head.b2", {1}, Init::Zero);
        }
    }

    ModelConfig cfg_;
    Tape tape_;
    std::vector<std::string> order_;
    std::map<std::string, Tensor> params_;
    Tensor pe_;
    circuit::QasaCircuitSpec circuit_spec_{1, 1};
    std::unique_ptr<SplitMix64> rng_;
    std::size_t base_mark_ = 0;
    std::vector<LayerShape>* trace_ = nullptr;
    long quantum_calls_ = 0;
};

}  // namespace qasa

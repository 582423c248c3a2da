#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qasa/errors.hpp"
#include "qasa/gemm.hpp"

namespace qasa {

inline std::size_t numel(const Shape& s) {
    std::size_t n = 1;
    for (const std::size_t e : s) n *= e;
    return n;
}

class Tape;

// Dense row-major 64-bit real tensor. A tensor participates in reverse-mode
// differentiation iff it carries a tape node id; values are immutable while
// a recorded pass is alive (the optimizer mutates leaves between passes).
class Tensor {
  public:
    Tensor() = default;

    Tensor(Shape shape, std::vector<double> values)
        : shape_(std::move(shape)),
          values_(std::make_shared<std::vector<double>>(std::move(values))) {
        if (numel(shape_) != values_->size())
            throw DimensionError("tensor shape " + shape_str(shape_) +
                                 " does not match " +
                                 std::to_string(values_->size()) + " values");
    }

    static Tensor zeros(Shape shape) {
        const std::size_t n = numel(shape);
        return Tensor(std::move(shape), std::vector<double>(n, 0.0));
    }

    static Tensor full(Shape shape, double v) {
        const std::size_t n = numel(shape);
        return Tensor(std::move(shape), std::vector<double>(n, v));
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    const Shape& shape() const { return shape_; }
    std::size_t size() const { return values_ ? values_->size() : 0; }
    std::size_t ndim() const { return shape_.size(); }
    bool defined() const { return values_ != nullptr; }

    std::span<const double> data() const { return {values_->data(), values_->size()}; }
    const std::vector<double>& values() const { return *values_; }

    double operator[](std::size_t i) const { return (*values_)[i]; }
    double operator()(std::size_t i, std::size_t j) const {
        return (*values_)[i * shape_[1] + j];
    }

    double scalar_value() const {
        if (size() != 1)
            throw ContractViolation("expected scalar tensor, got " + shape_str(shape_));
        return (*values_)[0];
    }

    // In-place mutation of leaf values. Only legal between a backward() and
    // the next recorded forward pass.
    double* mutable_data() { return values_->data(); }
    void set_values(std::span<const double> v) {
        if (v.size() != size())
            throw DimensionError("set_values size mismatch for " + shape_str(shape_));
        std::copy(v.begin(), v.end(), values_->begin());
    }

    bool requires_grad() const { return requires_grad_; }
    int node() const { return node_; }
    Tape* tape() const { return tape_; }

  private:
    Shape shape_;
    std::shared_ptr<std::vector<double>> values_;
    Tape* tape_ = nullptr;
    int node_ = -1;
    bool requires_grad_ = false;

    std::shared_ptr<std::vector<double>> storage() const { return values_; }

    friend class Tape;
    friend struct OpRecorder;
};

// Per-node gradient buffers produced by Tape::backward. Unreached nodes keep
// zero-filled gradients so every registered leaf has a well-defined entry.
class Gradients {
  public:
    Gradients(std::vector<std::vector<double>> grads, std::vector<Shape> shapes)
        : grads_(std::move(grads)), shapes_(std::move(shapes)) {}

    const std::vector<double>& at_node(int node) const { return grads_.at(static_cast<std::size_t>(node)); }

    const std::vector<double>& at(const Tensor& t) const {
        if (t.node() < 0)
            throw ContractViolation("tensor is not on the tape");
        return grads_.at(static_cast<std::size_t>(t.node()));
    }

    Tensor tensor_for(const Tensor& t) const {
        return Tensor(t.shape(), at(t));
    }

    std::size_t node_count() const { return grads_.size(); }

  private:
    std::vector<std::vector<double>> grads_;
    std::vector<Shape> shapes_;
};

// Recorded computation history. Node creation order is the topological
// order, so backward is a single reverse sweep that visits each node once
// and sums gradients at fan-out points.
class Tape {
  public:
    using BackwardFn =
        std::function<void(const std::vector<double>& upstream,
                           std::vector<std::vector<double>>& grads)>;

    Tensor leaf(Shape shape, std::vector<double> values) {
        Tensor t(std::move(shape), std::move(values));
        t.tape_ = this;
        t.node_ = add_node(t.shape_, {}, nullptr);
        t.requires_grad_ = true;
        return t;
    }

    bool recording() const { return recording_; }
    void set_recording(bool on) { recording_ = on; }

    std::size_t mark() const { return nodes_.size(); }
    void reset_to(std::size_t watermark) {
        if (watermark > nodes_.size())
            throw ContractViolation("tape watermark beyond current size");
        nodes_.resize(watermark);
    }

    std::size_t num_nodes() const { return nodes_.size(); }

    Gradients backward(const Tensor& loss) {
        if (loss.tape() != this || loss.node() < 0)
            throw ContractViolation("loss tensor is not recorded on this tape");
        if (loss.size() != 1)
            throw ContractViolation("backward requires a scalar loss, got " +
                                    shape_str(loss.shape()));
        std::vector<std::vector<double>> grads(nodes_.size());
        std::vector<Shape> shapes(nodes_.size());
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            grads[i].assign(numel(nodes_[i].shape), 0.0);
            shapes[i] = nodes_[i].shape;
        }
        grads[static_cast<std::size_t>(loss.node())][0] = 1.0;
        for (int id = loss.node(); id >= 0; --id) {
            const Node& n = nodes_[static_cast<std::size_t>(id)];
            if (n.backward)
                n.backward(grads[static_cast<std::size_t>(id)], grads);
        }
        return Gradients(std::move(grads), std::move(shapes));
    }

    int add_node(Shape shape, std::vector<int> inputs, BackwardFn fn) {
        nodes_.push_back(Node{std::move(shape), std::move(inputs), std::move(fn)});
        return static_cast<int>(nodes_.size()) - 1;
    }

  private:
    struct Node {
        Shape shape;
        std::vector<int> inputs;
        BackwardFn backward;
    };

    std::vector<Node> nodes_;
    bool recording_ = true;
};

// Suspends recording on a tape for pure inference passes.
class NoGradGuard {
  public:
    explicit NoGradGuard(Tape& tape) : tape_(tape), prev_(tape.recording()) {
        tape_.set_recording(false);
    }
    ~NoGradGuard() { tape_.set_recording(prev_); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    Tape& tape_;
    bool prev_;
};

struct OpRecorder {
    static void attach(Tensor& out, Tape* tape, std::vector<int> inputs,
                       Tape::BackwardFn fn) {
        out.tape_ = tape;
        out.node_ = tape->add_node(out.shape(), std::move(inputs), std::move(fn));
        out.requires_grad_ = true;
    }
};

namespace detail {

inline Tape* recording_tape(std::initializer_list<const Tensor*> inputs) {
    Tape* tape = nullptr;
    for (const Tensor* t : inputs) {
        if (t->node() < 0) continue;
        if (tape && t->tape() != tape)
            throw ContractViolation("operands recorded on different tapes");
        if (!tape) tape = t->tape();
    }
    return (tape && tape->recording()) ? tape : nullptr;
}

inline void finish(Tensor& out, Tape* tape, std::vector<int> inputs,
                   Tape::BackwardFn fn) {
    if (!tape) return;
    OpRecorder::attach(out, tape, std::move(inputs), std::move(fn));
}

inline double gelu_value(double x) {
    return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2));
}

inline double gelu_derivative(double x) {
    const double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    return 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2)) + x * phi;
}

}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.shape()[1] != b.shape()[0])
        throw DimensionError("matmul shapes incompatible: " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
    const std::size_t m = a.shape()[0], k = a.shape()[1], p = b.shape()[1];
    std::vector<double> vals(m * p);
    detail::gemm_nn(m, k, p, a.data().data(), b.data().data(), vals.data());
    Tensor out({m, p}, std::move(vals));

    Tape* tape = detail::recording_tape({&a, &b});
    if (tape) {
        const int na = a.node(), nb = b.node();
        auto av = a.values(), bv = b.values();
        detail::finish(out, tape, {na, nb},
                       [=, av = std::move(av), bv = std::move(bv)](
                           const std::vector<double>& up, auto& grads) {
                           if (na >= 0)
                               detail::gemm_nt(m, p, k, up.data(), bv.data(),
                                               grads[na].data(), true);
                           if (nb >= 0)
                               detail::gemm_tn(m, k, p, av.data(), up.data(),
                                               grads[nb].data(), true);
                       });
    }
    return out;
}

inline Tensor transpose(const Tensor& a) {
    if (a.ndim() != 2)
        throw DimensionError("transpose expects a 2-d tensor, got " + shape_str(a.shape()));
    const std::size_t r = a.shape()[0], c = a.shape()[1];
    std::vector<double> vals(r * c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) vals[j * r + i] = a[i * c + j];
    Tensor out({c, r}, std::move(vals));

    Tape* tape = detail::recording_tape({&a});
    if (tape) {
        const int na = a.node();
        detail::finish(out, tape, {na},
                       [=](const std::vector<double>& up, auto& grads) {
                           for (std::size_t i = 0; i < c; ++i)
                               for (std::size_t j = 0; j < r; ++j)
                                   grads[na][j * c + i] += up[i * r + j];
                       });
    }
    return out;
}

// x(m x k) * w(k x p) + b(p), bias broadcast across rows.
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.ndim() != 2 || w.ndim() != 2 || x.shape()[1] != w.shape()[0])
        throw DimensionError("linear shapes incompatible: " + shape_str(x.shape()) +
                             " vs " + shape_str(w.shape()));
    const std::size_t m = x.shape()[0], k = x.shape()[1], p = w.shape()[1];
    if (b.size() != p)
        throw DimensionError("linear bias " + shape_str(b.shape()) +
                             " does not match output width " + std::to_string(p));
    std::vector<double> vals(m * p);
    detail::gemm_nn(m, k, p, x.data().data(), w.data().data(), vals.data());
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < p; ++j) vals[i * p + j] += b[j];
    Tensor out({m, p}, std::move(vals));

    Tape* tape = detail::recording_tape({&x, &w, &b});
    if (tape) {
        const int nx = x.node(), nw = w.node(), nb = b.node();
        auto xv = x.values(), wv = w.values();
        detail::finish(out, tape, {nx, nw, nb},
                       [=, xv = std::move(xv), wv = std::move(wv)](
                           const std::vector<double>& up, auto& grads) {
                           if (nx >= 0)
                               detail::gemm_nt(m, p, k, up.data(), wv.data(),
                                               grads[nx].data(), true);
                           if (nw >= 0)
                               detail::gemm_tn(m, k, p, xv.data(), up.data(),
                                               grads[nw].data(), true);
                           if (nb >= 0)
                               for (std::size_t i = 0; i < m; ++i)
                                   for (std::size_t j = 0; j < p; ++j)
                                       grads[nb][j] += up[i * p + j];
                       });
    }
    return out;
}

namespace detail {

enum class EwKind { Add, Sub, Mul };

inline Tensor elementwise_binary(const Tensor& a, const Tensor& b, EwKind kind) {
    const bool a_scalar = a.size() == 1, b_scalar = b.size() == 1;
    if (!a_scalar && !b_scalar && a.shape() != b.shape())
        throw DimensionError("elementwise shapes incompatible: " +
                             shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const Tensor& big = b_scalar ? a : b;
    const std::size_t n = big.size();
    std::vector<double> vals(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = a_scalar ? a[0] : a[i];
        const double y = b_scalar ? b[0] : b[i];
        vals[i] = kind == EwKind::Add ? x + y : kind == EwKind::Sub ? x - y : x * y;
    }
    Tensor out(big.shape(), std::move(vals));

    Tape* tape = recording_tape({&a, &b});
    if (tape) {
        const int na = a.node(), nb = b.node();
        auto av = a.values(), bv = b.values();
        finish(out, tape, {na, nb},
               [=, av = std::move(av), bv = std::move(bv)](
                   const std::vector<double>& up, auto& grads) {
                   for (std::size_t i = 0; i < n; ++i) {
                       const double u = up[i];
                       if (na >= 0) {
                           double da = u;
                           if (kind == EwKind::Mul) da *= b_scalar ? bv[0] : bv[i];
                           grads[na][a_scalar ? 0 : i] += da;
                       }
                       if (nb >= 0) {
                           double db = kind == EwKind::Sub ? -u : u;
                           if (kind == EwKind::Mul) db = u * (a_scalar ? av[0] : av[i]);
                           grads[nb][b_scalar ? 0 : i] += db;
                       }
                   }
               });
    }
    return out;
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
    return detail::elementwise_binary(a, b, detail::EwKind::Add);
}
inline Tensor sub(const Tensor& a, const Tensor& b) {
    return detail::elementwise_binary(a, b, detail::EwKind::Sub);
}
inline Tensor mul(const Tensor& a, const Tensor& b) {
    return detail::elementwise_binary(a, b, detail::EwKind::Mul);
}

inline Tensor scale(const Tensor& a, double c) {
    const std::size_t n = a.size();
    std::vector<double> vals(n);
    for (std::size_t i = 0; i < n; ++i) vals[i] = a[i] * c;
    Tensor out(a.shape(), std::move(vals));
    Tape* tape = detail::recording_tape({&a});
    if (tape) {
        const int na = a.node();
        detail::finish(out, tape, {na},
                       [=](const std::vector<double>& up, auto& grads) {
                           for (std::size_t i = 0; i < n; ++i)
                               grads[na][i] += c * up[i];
                       });
    }
    return out;
}

inline Tensor tanh(const Tensor& a) {
    const std::size_t n = a.size();
    std::vector<double> vals(n);
    for (std::size_t i = 0; i < n; ++i) vals[i] = std::tanh(a[i]);
    Tensor out(a.shape(), std::move(vals));
    Tape* tape = detail::recording_tape({&a});
    if (tape) {
        const int na = a.node();
        auto yv = out.values();
        detail::finish(out, tape, {na},
                       [=, yv = std::move(yv)](const std::vector<double>& up, auto& grads) {
                           for (std::size_t i = 0; i < n; ++i)
                               grads[na][i] += (1.0 - yv[i] * yv[i]) * up[i];
                       });
    }
    return out;
}

// Exact erf form, not the tanh approximation.
inline Tensor gelu(const Tensor& a) {
    const std::size_t n = a.size();
    std::vector<double> vals(n);
    for (std::size_t i = 0; i < n; ++i) vals[i] = detail::gelu_value(a[i]);
    Tensor out(a.shape(), std::move(vals));
    Tape* tape = detail::recording_tape({&a});
    if (tape) {
        const int na = a.node();
        auto xv = a.values();
        detail::finish(out, tape, {na},
                       [=, xv = std::move(xv)](const std::vector<double>& up, auto& grads) {
                           for (std::size_t i = 0; i < n; ++i)
                               grads[na][i] += detail::gelu_derivative(xv[i]) * up[i];
                       });
    }
    return out;
}

// Per-last-axis (x - mean) / sqrt(var + eps) * gain + bias with population
// variance over the last axis.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                         double eps) {
    if (x.ndim() == 0 || x.shape().back() == 0)
        throw DimensionError("layer_norm requires a non-empty last axis, got " +
                             shape_str(x.shape()));
    const std::size_t d = x.shape().back();
    if (gain.size() != d || bias.size() != d)
        throw DimensionError("layer_norm gain/bias must have extent " +
                             std::to_string(d) + ", got " + shape_str(gain.shape()) +
                             " and " + shape_str(bias.shape()));
    const std::size_t rows = x.size() / d;
    std::vector<double> vals(x.size());
    std::vector<double> xhat(x.size());
    std::vector<double> inv_std(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data().data() + r * d;
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += xr[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double c = xr[j] - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[r] = is;
        for (std::size_t j = 0; j < d; ++j) {
            const double xh = (xr[j] - mean) * is;
            xhat[r * d + j] = xh;
            vals[r * d + j] = xh * gain[j] + bias[j];
        }
    }
    Tensor out(x.shape(), std::move(vals));

    Tape* tape = detail::recording_tape({&x, &gain, &bias});
    if (tape) {
        const int nx = x.node(), ng = gain.node(), nb = bias.node();
        auto gv = gain.values();
        detail::finish(
            out, tape, {nx, ng, nb},
            [=, xhat = std::move(xhat), inv_std = std::move(inv_std),
             gv = std::move(gv)](const std::vector<double>& up, auto& grads) {
                for (std::size_t r = 0; r < rows; ++r) {
                    const double* ur = up.data() + r * d;
                    const double* xh = xhat.data() + r * d;
                    if (ng >= 0)
                        for (std::size_t j = 0; j < d; ++j)
                            grads[ng][j] += ur[j] * xh[j];
                    if (nb >= 0)
                        for (std::size_t j = 0; j < d; ++j) grads[nb][j] += ur[j];
                    if (nx >= 0) {
                        double mean_dxh = 0.0, mean_dxh_xh = 0.0;
                        for (std::size_t j = 0; j < d; ++j) {
                            const double dxh = ur[j] * gv[j];
                            mean_dxh += dxh;
                            mean_dxh_xh += dxh * xh[j];
                        }
                        mean_dxh /= static_cast<double>(d);
                        mean_dxh_xh /= static_cast<double>(d);
                        for (std::size_t j = 0; j < d; ++j) {
                            const double dxh = ur[j] * gv[j];
                            grads[nx][r * d + j] +=
                                inv_std[r] * (dxh - mean_dxh - xh[j] * mean_dxh_xh);
                        }
                    }
                }
            });
    }
    return out;
}

// Row-stochastic softmax over the last axis, computed with max subtraction.
inline Tensor softmax_last(const Tensor& x) {
    if (x.ndim() == 0 || x.shape().back() == 0)
        throw DimensionError("softmax_last requires a non-empty last axis");
    const std::size_t k = x.shape().back();
    const std::size_t rows = x.size() / k;
    std::vector<double> vals(x.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data().data() + r * k;
        double m = xr[0];
        for (std::size_t j = 1; j < k; ++j) m = std::max(m, xr[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            const double e = std::exp(xr[j] - m);
            vals[r * k + j] = e;
            z += e;
        }
        for (std::size_t j = 0; j < k; ++j) vals[r * k + j] /= z;
    }
    Tensor out(x.shape(), std::move(vals));

    Tape* tape = detail::recording_tape({&x});
    if (tape) {
        const int nx = x.node();
        auto yv = out.values();
        detail::finish(out, tape, {nx},
                       [=, yv = std::move(yv)](const std::vector<double>& up, auto& grads) {
                           for (std::size_t r = 0; r < rows; ++r) {
                               const double* ur = up.data() + r * k;
                               const double* yr = yv.data() + r * k;
                               double dot = 0.0;
                               for (std::size_t j = 0; j < k; ++j) dot += ur[j] * yr[j];
                               for (std::size_t j = 0; j < k; ++j)
                                   grads[nx][r * k + j] += yr[j] * (ur[j] - dot);
                           }
                       });
    }
    return out;
}

inline Tensor slice_row(const Tensor& x, std::size_t row) {
    if (x.ndim() != 2)
        throw DimensionError("slice_row expects a 2-d tensor, got " + shape_str(x.shape()));
    const std::size_t rows = x.shape()[0], d = x.shape()[1];
    if (row >= rows)
        throw IndexError("row " + std::to_string(row) + " out of range for " +
                         shape_str(x.shape()));
    std::vector<double> vals(x.data().begin() + static_cast<std::ptrdiff_t>(row * d),
                             x.data().begin() + static_cast<std::ptrdiff_t>((row + 1) * d));
    Tensor out({d}, std::move(vals));
    Tape* tape = detail::recording_tape({&x});
    if (tape) {
        const int nx = x.node();
        detail::finish(out, tape, {nx},
                       [=](const std::vector<double>& up, auto& grads) {
                           for (std::size_t j = 0; j < d; ++j)
                               grads[nx][row * d + j] += up[j];
                       });
    }
    return out;
}

// Final-timestep extraction: last row of an (L x d) tensor.
inline Tensor slice_last_timestep(const Tensor& x) {
    if (x.ndim() != 2 || x.shape()[0] == 0)
        throw DimensionError("slice_last_timestep expects a non-empty 2-d tensor");
    return slice_row(x, x.shape()[0] - 1);
}

inline Tensor stack_rows(const std::vector<Tensor>& rows) {
    if (rows.empty())
        throw DimensionError("stack_rows requires at least one row");
    const std::size_t d = rows[0].size();
    std::vector<double> vals;
    vals.reserve(rows.size() * d);
    std::vector<int> ids;
    Tape* tape = nullptr;
    for (const Tensor& r : rows) {
        if (r.ndim() != 1 || r.size() != d)
            throw DimensionError("stack_rows rows must share shape, got " +
                                 shape_str(r.shape()));
        vals.insert(vals.end(), r.data().begin(), r.data().end());
        ids.push_back(r.node());
        if (r.node() >= 0) {
            if (tape && r.tape() != tape)
                throw ContractViolation("operands recorded on different tapes");
            tape = r.tape();
        }
    }
    Tensor out({rows.size(), d}, std::move(vals));
    if (tape && tape->recording()) {
        detail::finish(out, tape, ids,
                       [=](const std::vector<double>& up, auto& grads) {
                           for (std::size_t r = 0; r < ids.size(); ++r) {
                               if (ids[r] < 0) continue;
                               for (std::size_t j = 0; j < d; ++j)
                                   grads[ids[r]][j] += up[r * d + j];
                           }
                       });
    }
    return out;
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty())
        throw DimensionError("concat_cols requires at least one part");
    const std::size_t rows = parts[0].shape()[0];
    std::size_t total = 0;
    Tape* tape = nullptr;
    std::vector<int> ids;
    std::vector<std::size_t> widths;
    for (const Tensor& p : parts) {
        if (p.ndim() != 2 || p.shape()[0] != rows)
            throw DimensionError("concat_cols parts must share row count, got " +
                                 shape_str(p.shape()));
        widths.push_back(p.shape()[1]);
        total += p.shape()[1];
        ids.push_back(p.node());
        if (p.node() >= 0) {
            if (tape && p.tape() != tape)
                throw ContractViolation("operands recorded on different tapes");
            tape = p.tape();
        }
    }
    std::vector<double> vals(rows * total);
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const std::size_t w = widths[k];
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < w; ++j)
                vals[i * total + off + j] = parts[k][i * w + j];
        off += w;
    }
    Tensor out({rows, total}, std::move(vals));
    if (tape && tape->recording()) {
        detail::finish(out, tape, ids,
                       [=](const std::vector<double>& up, auto& grads) {
                           std::size_t o = 0;
                           for (std::size_t k = 0; k < ids.size(); ++k) {
                               const std::size_t w = widths[k];
                               if (ids[k] >= 0)
                                   for (std::size_t i = 0; i < rows; ++i)
                                       for (std::size_t j = 0; j < w; ++j)
                                           grads[ids[k]][i * w + j] +=
                                               up[i * total + o + j];
                               o += w;
                           }
                       });
    }
    return out;
}

inline Tensor reshape(const Tensor& x, Shape target) {
    if (numel(target) != x.size())
        throw DimensionError("reshape " + shape_str(x.shape()) + " -> " +
                             shape_str(target) + " changes element count");
    Tensor out(std::move(target), std::vector<double>(x.data().begin(), x.data().end()));
    Tape* tape = detail::recording_tape({&x});
    if (tape) {
        const int nx = x.node();
        const std::size_t n = x.size();
        detail::finish(out, tape, {nx},
                       [=](const std::vector<double>& up, auto& grads) {
                           for (std::size_t i = 0; i < n; ++i) grads[nx][i] += up[i];
                       });
    }
    return out;
}

inline Tensor sum(const Tensor& x) {
    double acc = 0.0;
    for (const double v : x.data()) acc += v;
    Tensor out = Tensor::scalar(acc);
    Tape* tape = detail::recording_tape({&x});
    if (tape) {
        const int nx = x.node();
        const std::size_t n = x.size();
        detail::finish(out, tape, {nx},
                       [=](const std::vector<double>& up, auto& grads) {
                           for (std::size_t i = 0; i < n; ++i) grads[nx][i] += up[0];
                       });
    }
    return out;
}

inline Tensor mean(const Tensor& x) {
    if (x.size() == 0)
        throw DimensionError("mean of an empty tensor");
    double acc = 0.0;
    for (const double v : x.data()) acc += v;
    const double inv = 1.0 / static_cast<double>(x.size());
    Tensor out = Tensor::scalar(acc * inv);
    Tape* tape = detail::recording_tape({&x});
    if (tape) {
        const int nx = x.node();
        const std::size_t n = x.size();
        detail::finish(out, tape, {nx},
                       [=](const std::vector<double>& up, auto& grads) {
                           for (std::size_t i = 0; i < n; ++i)
                               grads[nx][i] += up[0] * inv;
                       });
    }
    return out;
}

using CustomForwardFn =
    std::function<std::vector<double>(const std::vector<std::span<const double>>&)>;
// One row-major Jacobian [out_size x in_size_k] per input; entries for
// untracked inputs may be empty.
using CustomJacobianFn =
    std::function<std::vector<std::vector<double>>(const std::vector<std::span<const double>>&)>;

// Bridge for operations computed outside the tape (the quantum circuit).
// The forward function runs eagerly; the Jacobian provider is called at
// backward time and the chain rule is applied to its exact Jacobians, so the
// output participates in differentiation like any native op.
inline Tensor custom_node(const std::vector<Tensor>& inputs, Shape out_shape,
                          const CustomForwardFn& forward_fn,
                          CustomJacobianFn jacobian_fn) {
    std::vector<std::shared_ptr<std::vector<double>>> buffers;
    std::vector<std::span<const double>> views;
    std::vector<int> ids;
    std::vector<std::size_t> in_sizes;
    Tape* tape = nullptr;
    for (const Tensor& t : inputs) {
        buffers.push_back(std::make_shared<std::vector<double>>(t.values()));
        views.emplace_back(buffers.back()->data(), buffers.back()->size());
        ids.push_back(t.node());
        in_sizes.push_back(t.size());
        if (t.node() >= 0) {
            if (tape && t.tape() != tape)
                throw ContractViolation("operands recorded on different tapes");
            tape = t.tape();
        }
    }
    std::vector<double> vals = forward_fn(views);
    if (vals.size() != numel(out_shape))
        throw DimensionError("custom_node forward produced " +
                             std::to_string(vals.size()) + " values for shape " +
                             shape_str(out_shape));
    const std::size_t out_size = vals.size();
    Tensor out(std::move(out_shape), std::move(vals));
    if (tape && tape->recording()) {
        detail::finish(
            out, tape, ids,
            [=, jacobian_fn = std::move(jacobian_fn)](const std::vector<double>& up,
                                                      auto& grads) {
                std::vector<std::span<const double>> v;
                v.reserve(buffers.size());
                for (const auto& b : buffers) v.emplace_back(b->data(), b->size());
                const auto jacs = jacobian_fn(v);
                if (jacs.size() != ids.size())
                    throw DimensionError("custom_node expected " +
                                         std::to_string(ids.size()) + " Jacobians, got " +
                                         std::to_string(jacs.size()));
                for (std::size_t k = 0; k < ids.size(); ++k) {
                    if (ids[k] < 0) continue;
                    const std::size_t in_size = in_sizes[k];
                    if (jacs[k].size() != out_size * in_size)
                        throw DimensionError(
                            "custom_node Jacobian " + std::to_string(k) + " has " +
                            std::to_string(jacs[k].size()) + " entries, expected " +
                            std::to_string(out_size * in_size));
                    for (std::size_t o = 0; o < out_size; ++o) {
                        const double u = up[o];
                        if (u == 0.0) continue;
                        const double* row = jacs[k].data() + o * in_size;
                        for (std::size_t c = 0; c < in_size; ++c)
                            grads[ids[k]][c] += u * row[c];
                    }
                }
            });
    }
    return out;
}

}  // namespace qasa

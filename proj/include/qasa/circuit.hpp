#pragma once

#include <span>
#include <string>
#include <vector>

#include "qasa/errors.hpp"
#include "qasa/qsim.hpp"

namespace qasa::circuit {

// Gate layout of the QASA parameterized circuit: n data wires plus one
// auxiliary wire, L_q layers, each layer carrying
//   per data wire:  RX(x_i), RZ(x_i)                (encoding, reuploaded)
//   per data wire:  RY(theta_{l,2i}), RZ(theta_{l,2i+1})
//   ring:           CNOT(i -> (i+1) mod n)
//   auxiliary:      CNOT(n-1 -> n), RY(theta_{l,2n}) on wire n
// Parameters are laid out row-major as [L_q, 2n+1]. Measurements are
// <Z_j> on the n data wires only; the auxiliary wire is never measured.
struct QasaCircuitSpec {
    int n = 1;
    int L_q = 1;

    int num_wires() const { return n + 1; }
    int params_per_layer() const { return 2 * n + 1; }
    int num_params() const { return L_q * params_per_layer(); }

    void validate() const {
        if (n < 1 || L_q < 1)
            throw ContractViolation("QASA circuit requires n >= 1 and L_q >= 1, got n=" +
                                    std::to_string(n) + " L_q=" + std::to_string(L_q));
    }
};

inline std::vector<qsim::GateOp> build_gates(const QasaCircuitSpec& spec) {
    spec.validate();
    const int n = spec.n;
    std::vector<qsim::GateOp> gates;
    gates.reserve(static_cast<std::size_t>(spec.L_q) * (5 * n + 2));
    for (int l = 0; l < spec.L_q; ++l) {
        const int base = l * spec.params_per_layer();
        for (int i = 0; i < n; ++i) {
            gates.push_back(qsim::GateOp::rx_input(i, i));
            gates.push_back(qsim::GateOp::rz_input(i, i));
        }
        for (int i = 0; i < n; ++i) {
            gates.push_back(qsim::GateOp::ry_param(i, base + 2 * i));
            gates.push_back(qsim::GateOp::rz_param(i, base + 2 * i + 1));
        }
        for (int i = 0; i < n; ++i) {
            const int next = (i + 1) % n;
            if (next == i) continue;  // n=1: self-targeting ring link is skipped
            gates.push_back(qsim::GateOp::cnot(i, next));
        }
        gates.push_back(qsim::GateOp::cnot(n - 1, n));
        gates.push_back(qsim::GateOp::ry_param(n, base + 2 * n));
    }
    return gates;
}

inline std::vector<int> observed_wires(const QasaCircuitSpec& spec) {
    std::vector<int> wires(static_cast<std::size_t>(spec.n));
    for (int i = 0; i < spec.n; ++i) wires[static_cast<std::size_t>(i)] = i;
    return wires;
}

inline void check_input(const QasaCircuitSpec& spec, std::span<const double> h_q) {
    if (h_q.size() != static_cast<std::size_t>(spec.n))
        throw DimensionError("circuit input has " + std::to_string(h_q.size()) +
                             " entries, expected " + std::to_string(spec.n));
}

inline void check_params(const QasaCircuitSpec& spec, std::span<const double> theta) {
    if (theta.size() != static_cast<std::size_t>(spec.num_params()))
        throw DimensionError("circuit has " + std::to_string(theta.size()) +
                             " parameters, expected " +
                             std::to_string(spec.num_params()));
}

// QC(h_q) = [<Z_j>] over the n data wires. The overload taking a prebuilt
// gate list avoids rebuilding it per token.
inline std::vector<double> forward(const QasaCircuitSpec& spec,
                                   std::span<const double> theta,
                                   std::span<const double> h_q,
                                   std::span<const qsim::GateOp> gates) {
    check_input(spec, h_q);
    check_params(spec, theta);
    const qsim::StateVector state =
        qsim::run_circuit(gates, theta, h_q, spec.num_wires());
    std::vector<double> z(static_cast<std::size_t>(spec.n));
    for (int j = 0; j < spec.n; ++j)
        z[static_cast<std::size_t>(j)] = qsim::expectation_z(state, j);
    return z;
}

inline std::vector<double> forward(const QasaCircuitSpec& spec,
                                   std::span<const double> theta,
                                   std::span<const double> h_q) {
    return forward(spec, theta, h_q, build_gates(spec));
}

struct CircuitJacobians {
    std::vector<double> d_input;  // n x n, row j = d<Z_j>/dh_q
    std::vector<double> d_theta;  // n x num_params
};

enum class GradientEngine { Adjoint, ParameterShift };

inline CircuitJacobians jacobians(const QasaCircuitSpec& spec,
                                  std::span<const double> theta,
                                  std::span<const double> h_q,
                                  std::span<const qsim::GateOp> gates,
                                  GradientEngine engine = GradientEngine::Adjoint) {
    check_input(spec, h_q);
    check_params(spec, theta);
    const auto wires = observed_wires(spec);
    const qsim::CircuitGradients g =
        engine == GradientEngine::Adjoint
            ? qsim::adjoint_gradient(gates, theta, h_q, wires, spec.num_wires())
            : qsim::parameter_shift_gradient(gates, theta, h_q, wires,
                                             spec.num_wires());
    return CircuitJacobians{g.d_inputs, g.d_params};
}

inline CircuitJacobians jacobians(const QasaCircuitSpec& spec,
                                  std::span<const double> theta,
                                  std::span<const double> h_q,
                                  GradientEngine engine = GradientEngine::Adjoint) {
    return jacobians(spec, theta, h_q, build_gates(spec), engine);
}

}  // namespace qasa::circuit

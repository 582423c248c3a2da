#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "qasa/errors.hpp"

namespace qasa::qsim {

using Complex = std::complex<double>;

// Dense 2^n amplitude register. Wire 0 is the least-significant bit of the
// amplitude index.
struct StateVector {
    int num_qubits = 0;
    std::vector<Complex> amps;

    static StateVector zero_state(int num_qubits) {
        StateVector s;
        s.num_qubits = num_qubits;
        s.amps.assign(std::size_t{1} << num_qubits, Complex{0.0, 0.0});
        s.amps[0] = Complex{1.0, 0.0};
        return s;
    }

    std::size_t dim() const { return amps.size(); }

    double norm_sq() const {
        double n = 0.0;
        for (const Complex& a : amps) n += std::norm(a);
        return n;
    }
};

enum class GateKind { RX, RY, RZ, CNOT };

enum class AngleSource { Literal, Param, Input };

// Rotation convention: R_P(theta) = exp(-i * theta * P / 2).
struct GateOp {
    GateKind kind;
    int target = 0;
    int control = -1;  // CNOT only
    AngleSource source = AngleSource::Literal;
    double literal = 0.0;
    int slot = -1;

    static GateOp rx(int wire, double angle) {
        return {GateKind::RX, wire, -1, AngleSource::Literal, angle, -1};
    }
    static GateOp ry(int wire, double angle) {
        return {GateKind::RY, wire, -1, AngleSource::Literal, angle, -1};
    }
    static GateOp rz(int wire, double angle) {
        return {GateKind::RZ, wire, -1, AngleSource::Literal, angle, -1};
    }
    static GateOp rx_param(int wire, int slot) {
        return {GateKind::RX, wire, -1, AngleSource::Param, 0.0, slot};
    }
    static GateOp ry_param(int wire, int slot) {
        return {GateKind::RY, wire, -1, AngleSource::Param, 0.0, slot};
    }
    static GateOp rz_param(int wire, int slot) {
        return {GateKind::RZ, wire, -1, AngleSource::Param, 0.0, slot};
    }
    static GateOp rx_input(int wire, int slot) {
        return {GateKind::RX, wire, -1, AngleSource::Input, 0.0, slot};
    }
    static GateOp rz_input(int wire, int slot) {
        return {GateKind::RZ, wire, -1, AngleSource::Input, 0.0, slot};
    }
    static GateOp cnot(int control, int target) {
        return {GateKind::CNOT, target, control, AngleSource::Literal, 0.0, -1};
    }

    bool is_rotation() const { return kind != GateKind::CNOT; }
    bool is_symbolic() const { return source != AngleSource::Literal; }
};

namespace detail {

inline void check_wire(const StateVector& state, int wire, const char* what) {
    if (wire < 0 || wire >= state.num_qubits)
        throw IndexError(std::string(what) + " wire " + std::to_string(wire) +
                         " out of range for " + std::to_string(state.num_qubits) +
                         " qubits");
}

// In-place single-qubit rotation kernels over amplitude pairs differing in
// the target bit.
inline void apply_rotation(StateVector& state, GateKind kind, int wire, double angle) {
    const std::size_t bit = std::size_t{1} << wire;
    const double c = std::cos(0.5 * angle);
    const double s = std::sin(0.5 * angle);
    const std::size_t dim = state.dim();
    switch (kind) {
        case GateKind::RX:
            for (std::size_t i = 0; i < dim; ++i) {
                if (i & bit) continue;
                const Complex a0 = state.amps[i];
                const Complex a1 = state.amps[i | bit];
                state.amps[i] = c * a0 + Complex{0.0, -s} * a1;
                state.amps[i | bit] = Complex{0.0, -s} * a0 + c * a1;
            }
            break;
        case GateKind::RY:
            for (std::size_t i = 0; i < dim; ++i) {
                if (i & bit) continue;
                const Complex a0 = state.amps[i];
                const Complex a1 = state.amps[i | bit];
                state.amps[i] = c * a0 - s * a1;
                state.amps[i | bit] = s * a0 + c * a1;
            }
            break;
        case GateKind::RZ: {
            const Complex p0{c, -s};
            const Complex p1{c, s};
            for (std::size_t i = 0; i < dim; ++i)
                state.amps[i] *= (i & bit) ? p1 : p0;
            break;
        }
        default:
            throw UnsupportedGateError("apply_rotation on non-rotation gate");
    }
}

inline void apply_cnot(StateVector& state, int control, int target) {
    const std::size_t cbit = std::size_t{1} << control;
    const std::size_t tbit = std::size_t{1} << target;
    const std::size_t dim = state.dim();
    for (std::size_t i = 0; i < dim; ++i)
        if ((i & cbit) && !(i & tbit))
            std::swap(state.amps[i], state.amps[i | tbit]);
}

// Left-multiplies by the rotation generator Pauli (not the half-angle form).
inline void apply_pauli(StateVector& state, GateKind kind, int wire) {
    const std::size_t bit = std::size_t{1} << wire;
    const std::size_t dim = state.dim();
    switch (kind) {
        case GateKind::RX:  // X
            for (std::size_t i = 0; i < dim; ++i)
                if (!(i & bit)) std::swap(state.amps[i], state.amps[i | bit]);
            break;
        case GateKind::RY:  // Y
            for (std::size_t i = 0; i < dim; ++i) {
                if (i & bit) continue;
                const Complex a0 = state.amps[i];
                const Complex a1 = state.amps[i | bit];
                state.amps[i] = Complex{0.0, -1.0} * a1;
                state.amps[i | bit] = Complex{0.0, 1.0} * a0;
            }
            break;
        case GateKind::RZ:  // Z
            for (std::size_t i = 0; i < dim; ++i)
                if (i & bit) state.amps[i] = -state.amps[i];
            break;
        default:
            throw UnsupportedGateError("no Pauli generator for CNOT");
    }
}

}  // namespace detail

inline void apply_gate_inplace(StateVector& state, const GateOp& gate, double angle) {
    detail::check_wire(state, gate.target, "target");
    if (gate.kind == GateKind::CNOT) {
        detail::check_wire(state, gate.control, "control");
        if (gate.control == gate.target)
            throw ContractViolation("CNOT control equals target wire " +
                                    std::to_string(gate.target));
        detail::apply_cnot(state, gate.control, gate.target);
    } else {
        detail::apply_rotation(state, gate.kind, gate.target, angle);
    }
}

inline StateVector apply_gate(const StateVector& state, const GateOp& gate,
                              double angle) {
    StateVector out = state;
    apply_gate_inplace(out, gate, angle);
    return out;
}

inline double resolve_angle(const GateOp& gate, std::span<const double> params,
                            std::span<const double> inputs) {
    switch (gate.source) {
        case AngleSource::Literal:
            return gate.literal;
        case AngleSource::Param:
            if (gate.slot < 0 || static_cast<std::size_t>(gate.slot) >= params.size())
                throw ContractViolation("unresolved parameter slot " +
                                        std::to_string(gate.slot) + " (have " +
                                        std::to_string(params.size()) + " params)");
            return params[static_cast<std::size_t>(gate.slot)];
        case AngleSource::Input:
            if (gate.slot < 0 || static_cast<std::size_t>(gate.slot) >= inputs.size())
                throw ContractViolation("unresolved input slot " +
                                        std::to_string(gate.slot) + " (have " +
                                        std::to_string(inputs.size()) + " inputs)");
            return inputs[static_cast<std::size_t>(gate.slot)];
    }
    throw ContractViolation("invalid angle source");
}

inline int circuit_width(std::span<const GateOp> gates) {
    int w = 0;
    for (const GateOp& g : gates) {
        w = std::max(w, g.target + 1);
        if (g.kind == GateKind::CNOT) w = std::max(w, g.control + 1);
    }
    return std::max(w, 1);
}

inline StateVector run_circuit(std::span<const GateOp> gates,
                               std::span<const double> params,
                               std::span<const double> inputs,
                               int num_qubits = -1) {
    StateVector state =
        StateVector::zero_state(num_qubits > 0 ? num_qubits : circuit_width(gates));
    for (const GateOp& g : gates)
        apply_gate_inplace(state, g, resolve_angle(g, params, inputs));
    return state;
}

// <Z_wire> = sum_b |amp_b|^2 * (+1 if bit(b, wire) = 0 else -1).
inline double expectation_z(const StateVector& state, int wire) {
    detail::check_wire(state, wire, "measurement");
    const std::size_t bit = std::size_t{1} << wire;
    double e = 0.0;
    for (std::size_t i = 0; i < state.dim(); ++i) {
        const double p = std::norm(state.amps[i]);
        e += (i & bit) ? -p : p;
    }
    return e;
}

// Jacobians of the observed expectations: rows index observed wires, columns
// index parameter or input slots. Slots reused by several gate occurrences
// (data reuploading) accumulate one contribution per occurrence.
struct CircuitGradients {
    std::size_t num_observables = 0;
    std::size_t num_params = 0;
    std::size_t num_inputs = 0;
    std::vector<double> d_params;  // num_observables x num_params
    std::vector<double> d_inputs;  // num_observables x num_inputs

    double param(std::size_t obs, std::size_t slot) const {
        return d_params[obs * num_params + slot];
    }
    double input(std::size_t obs, std::size_t slot) const {
        return d_inputs[obs * num_inputs + slot];
    }
};

// Exact adjoint-mode differentiation: one forward sweep, then a reverse
// sweep undoing each gate while advancing one boundary state per observable.
// For R_P(theta), d<O>/dtheta = Im(<b_k| P |psi_k>).
inline CircuitGradients adjoint_gradient(std::span<const GateOp> gates,
                                         std::span<const double> params,
                                         std::span<const double> inputs,
                                         std::span<const int> observed_wires,
                                         int num_qubits = -1) {
    CircuitGradients out;
    out.num_observables = observed_wires.size();
    out.num_params = params.size();
    out.num_inputs = inputs.size();
    out.d_params.assign(out.num_observables * out.num_params, 0.0);
    out.d_inputs.assign(out.num_observables * out.num_inputs, 0.0);

    StateVector psi = run_circuit(gates, params, inputs, num_qubits);
    std::vector<StateVector> lambdas;
    lambdas.reserve(observed_wires.size());
    for (const int w : observed_wires) {
        detail::check_wire(psi, w, "measurement");
        StateVector b = psi;
        detail::apply_pauli(b, GateKind::RZ, w);  // Z |psi>
        lambdas.push_back(std::move(b));
    }

    for (std::size_t k = gates.size(); k-- > 0;) {
        const GateOp& g = gates[k];
        const double angle = resolve_angle(g, params, inputs);
        // Undo gate k to expose |psi_{k-1}>; boundary states keep gate k
        // applied until the derivative below is taken, so snapshot first.
        if (g.is_rotation() && g.is_symbolic()) {
            StateVector p_psi = psi;
            detail::apply_pauli(p_psi, g.kind, g.target);
            for (std::size_t j = 0; j < lambdas.size(); ++j) {
                Complex dot{0.0, 0.0};
                for (std::size_t i = 0; i < psi.dim(); ++i)
                    dot += std::conj(lambdas[j].amps[i]) * p_psi.amps[i];
                const double grad = dot.imag();
                if (g.source == AngleSource::Param)
                    out.d_params[j * out.num_params + g.slot] += grad;
                else
                    out.d_inputs[j * out.num_inputs + g.slot] += grad;
            }
        }
        apply_gate_inplace(psi, g, -angle);
        for (StateVector& b : lambdas) apply_gate_inplace(b, g, -angle);
    }
    return out;
}

// Parameter-shift oracle, valid because every rotation generator is a
// Pauli over 2: shifts one gate occurrence at a time by +-pi/2 and sums
// occurrence contributions per slot.
inline CircuitGradients parameter_shift_gradient(std::span<const GateOp> gates,
                                                 std::span<const double> params,
                                                 std::span<const double> inputs,
                                                 std::span<const int> observed_wires,
                                                 int num_qubits = -1) {
    for (const GateOp& g : gates)
        if (g.is_symbolic() && !g.is_rotation())
            throw UnsupportedGateError(
                "parameter-shift requires rotation gates for symbolic slots");

    CircuitGradients out;
    out.num_observables = observed_wires.size();
    out.num_params = params.size();
    out.num_inputs = inputs.size();
    out.d_params.assign(out.num_observables * out.num_params, 0.0);
    out.d_inputs.assign(out.num_observables * out.num_inputs, 0.0);

    const int width = num_qubits > 0 ? num_qubits : circuit_width(gates);
    const auto run_with_override = [&](std::size_t occurrence, double angle) {
        StateVector state = StateVector::zero_state(width);
        for (std::size_t k = 0; k < gates.size(); ++k) {
            const double a = (k == occurrence)
                                 ? angle
                                 : resolve_angle(gates[k], params, inputs);
            apply_gate_inplace(state, gates[k], a);
        }
        return state;
    };

    constexpr double half_pi = 1.5707963267948966;
    for (std::size_t k = 0; k < gates.size(); ++k) {
        const GateOp& g = gates[k];
        if (!g.is_symbolic()) continue;
        const double base = resolve_angle(g, params, inputs);
        const StateVector plus = run_with_override(k, base + half_pi);
        const StateVector minus = run_with_override(k, base - half_pi);
        for (std::size_t j = 0; j < observed_wires.size(); ++j) {
            const double grad = 0.5 * (expectation_z(plus, observed_wires[j]) -
                                       expectation_z(minus, observed_wires[j]));
            if (g.source == AngleSource::Param)
                out.d_params[j * out.num_params + g.slot] += grad;
            else
                out.d_inputs[j * out.num_inputs + g.slot] += grad;
        }
    }
    return out;
}

}  // namespace qasa::qsim

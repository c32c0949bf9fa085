// SPDX-License-Identifier: Apache-2.0

#include "codeforge/models/recurrent.hpp"

#include <stdexcept>

namespace codeforge::models {

using namespace numeric;

CellKind parse_cell_kind(const std::string& text) {
    if (text == "lstm") return CellKind::lstm;
    if (text == "rnn") return CellKind::rnn;
    if (text == "gru") return CellKind::gru;
    throw std::invalid_argument("unknown cell kind '" + text + "' (expected lstm, rnn or gru)");
}

std::string to_string(CellKind kind) {
    switch (kind) {
        case CellKind::lstm: return "lstm";
        case CellKind::rnn: return "rnn";
        case CellKind::gru: return "gru";
    }
    return "?";
}

std::size_t gate_count(CellKind kind) {
    switch (kind) {
        case CellKind::lstm: return 4;
        case CellKind::gru: return 3;
        case CellKind::rnn: return 1;
    }
    return 1;
}

CellWeights add_cell_parameters(ParameterSet& params, const std::string& prefix, CellKind kind, std::size_t input,
                                std::size_t hidden, double stddev, Rng& rng) {
    const std::size_t g = gate_count(kind) * hidden;
    params.add(prefix + ".w_in", init_normal({input, g}, stddev, rng));
    params.add(prefix + ".w_hh", init_normal({hidden, g}, stddev, rng));
    params.add(prefix + ".bias", init_constant({g}, real(0)));
    if (kind == CellKind::gru) params.add(prefix + ".bias_hh", init_constant({g}, real(0)));
    return cell_weights(params, prefix, kind);
}

CellWeights cell_weights(const ParameterSet& params, const std::string& prefix, CellKind kind) {
    CellWeights w{params.get(prefix + ".w_in"), params.get(prefix + ".w_hh"), params.get(prefix + ".bias"), {}};
    if (kind == CellKind::gru) w.bias_hh = params.get(prefix + ".bias_hh");
    return w;
}

CellState zero_state(CellKind kind, std::size_t batch, std::size_t hidden) {
    CellState s{Tensor({batch, hidden}), {}};
    if (kind == CellKind::lstm) s.c = Tensor({batch, hidden});
    return s;
}

CellState cell_step(CellKind kind, const Tensor& xp, const CellState& state, const CellWeights& w, std::size_t hidden) {
    const std::size_t H = hidden;
    switch (kind) {
        case CellKind::lstm: {
            const Tensor gates = add(xp, matmul(state.h, w.w_hh));
            const Tensor i = sigmoid(slice(gates, 1, 0, H));
            const Tensor f = sigmoid(slice(gates, 1, H, 2 * H));
            const Tensor g = tanh(slice(gates, 1, 2 * H, 3 * H));
            const Tensor o = sigmoid(slice(gates, 1, 3 * H, 4 * H));
            const Tensor c = add(mul(f, state.c), mul(i, g));
            return {mul(o, tanh(c)), c};
        }
        case CellKind::gru: {
            const Tensor hh = add_bias(matmul(state.h, w.w_hh), w.bias_hh);
            const Tensor r = sigmoid(add(slice(xp, 1, 0, H), slice(hh, 1, 0, H)));
            const Tensor z = sigmoid(add(slice(xp, 1, H, 2 * H), slice(hh, 1, H, 2 * H)));
            const Tensor n = tanh(add(slice(xp, 1, 2 * H, 3 * H), mul(r, slice(hh, 1, 2 * H, 3 * H))));
            // (1 - z) * n + z * h == n + z * (h - n)
            return {add(n, mul(z, sub(state.h, n))), {}};
        }
        case CellKind::rnn:
            return {tanh(add(xp, matmul(state.h, w.w_hh))), {}};
    }
    throw std::logic_error("unreachable cell kind");
}

}  // namespace codeforge::models

// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "codeforge/numeric/ops.hpp"
#include "codeforge/numeric/parameter.hpp"

namespace codeforge::models {

enum class CellKind { lstm, rnn, gru };

CellKind parse_cell_kind(const std::string& text);
std::string to_string(CellKind kind);
/// Gate blocks per cell: 4 (LSTM: i, f, g, o), 3 (GRU: r, z, n), 1 (tanh RNN).
std::size_t gate_count(CellKind kind);

/// Weights of one recurrent layer. The input projection and its bias are
/// applied by the caller; the cell only sees the projected input.
struct CellWeights {
    numeric::Tensor w_in;     // [input, G*H]
    numeric::Tensor w_hh;     // [H, G*H]
    numeric::Tensor bias;     // [G*H], input side
    numeric::Tensor bias_hh;  // [G*H], recurrent side (GRU only)
};

struct CellState {
    numeric::Tensor h;
    numeric::Tensor c;  // LSTM only
};

/// Registers `<prefix>.w_in`, `.w_hh`, `.bias` (and `.bias_hh` for GRU).
CellWeights add_cell_parameters(numeric::ParameterSet& params, const std::string& prefix, CellKind kind,
                                std::size_t input, std::size_t hidden, double stddev, numeric::Rng& rng);
CellWeights cell_weights(const numeric::ParameterSet& params, const std::string& prefix, CellKind kind);

CellState zero_state(CellKind kind, std::size_t batch, std::size_t hidden);

/// One time step. `projected_input` is x W_in + bias, shape [B, G*H].
///   LSTM: i,f,o = sigmoid, g = tanh; c' = f*c + i*g; h' = o*tanh(c')
///   GRU:  r,z = sigmoid(xp + h W_hh + b_hh); n = tanh(xp_n + r*(h W_hn + b_hn));
///         h' = (1-z)*n + z*h
///   RNN:  h' = tanh(xp + h W_hh)
CellState cell_step(CellKind kind, const numeric::Tensor& projected_input, const CellState& state,
                    const CellWeights& w, std::size_t hidden);

}  // namespace codeforge::models

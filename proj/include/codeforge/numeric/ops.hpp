// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "codeforge/numeric/rng.hpp"
#include "codeforge/numeric/tensor.hpp"

namespace codeforge::numeric {

using TokenId = std::int32_t;

// Dense algebra. Shapes are explicit; the only implicit broadcast is a
// single-element tensor against any shape.

/// a[..., m, k] x b[k, n] -> [..., m, n]
Tensor matmul(const Tensor& a, const Tensor& b);
/// a[..., m, k] x b[n, k]^T -> [..., m, n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);
/// Batched: a[B, m, k] x b[B, k, n] -> [B, m, n]
Tensor bmm(const Tensor& a, const Tensor& b);
/// Batched with transposed right side: a[B, m, k] x b[B, n, k]^T -> [B, m, n]
Tensor bmm_nt(const Tensor& a, const Tensor& b);
/// Swaps the last two axes.
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// x[..., n] + bias[n]
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor scale(const Tensor& a, real factor);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& a, Shape shape);

Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
/// tanh approximation, as in GPT-2.
Tensor gelu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);

Tensor softmax(const Tensor& a, std::size_t axis);
Tensor log_softmax(const Tensor& a, std::size_t axis);

/// Sets entries above the diagonal of the trailing [T, T] block to -inf.
Tensor causal_mask(const Tensor& scores);

/// Row gather: result shape is index_shape + [D]. Equivalent to a one-hot
/// row vector times the table.
Tensor embedding(const Tensor& table, std::span<const TokenId> ids, Shape index_shape);
/// Mean of the embedding rows of each bag -> [bags, D]. Bags must be non-empty.
Tensor embedding_bag_mean(const Tensor& table, const std::vector<std::vector<TokenId>>& bags);

/// Normalizes over the last axis, then applies gain and bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, real eps = real(1e-5));

/// Inverted dropout; identity when not training or rate is 0.
Tensor dropout(const Tensor& x, real rate, bool training, Rng& rng);

/// Mean over rows of -log softmax(logits)[row, target]. logits is [..., V]
/// flattened to rows; targets holds one id per row.
Tensor cross_entropy(const Tensor& logits, std::span<const TokenId> targets);

/// 1-of-k encoding as a constant tensor [n, k].
Tensor one_hot(std::span<const TokenId> ids, std::size_t k);

}  // namespace codeforge::numeric

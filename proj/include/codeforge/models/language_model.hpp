// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "json.hpp"

#include "codeforge/numeric/ops.hpp"
#include "codeforge/numeric/parameter.hpp"

namespace codeforge::models {

using numeric::real;
using numeric::Rng;
using numeric::Tensor;
using numeric::TokenId;

/// Row-major [batch, steps] block of token ids.
struct TokenBatch {
    std::size_t batch = 0;
    std::size_t steps = 0;
    std::vector<TokenId> ids;

    TokenId at(std::size_t b, std::size_t t) const { return ids[b * steps + t]; }
    static TokenBatch single(std::vector<TokenId> sequence);
};

/// Incremental decoding: feed one token, get the logits for the next one.
class Decoder {
public:
    virtual ~Decoder() = default;
    virtual std::vector<real> feed(TokenId token) = 0;
};

/// Autoregressive next-token model over a fixed vocabulary.
class LanguageModel {
public:
    virtual ~LanguageModel() = default;

    /// Logits [B, T, V]; logits at step t depend only on inputs 0..t.
    /// `rng` drives dropout and may be null when not training.
    virtual Tensor forward(const TokenBatch& input, bool training, Rng* rng) = 0;

    virtual std::size_t vocab_size() const = 0;
    /// Longest input accepted; nullopt for recurrent models.
    virtual std::optional<std::size_t> context_length() const = 0;

    virtual numeric::ParameterSet& parameters() = 0;
    virtual const numeric::ParameterSet& parameters() const = 0;
    virtual nlohmann::json architecture() const = 0;

    virtual std::unique_ptr<Decoder> decoder() const = 0;
};

/// Builds a freshly initialized model from an architecture manifest
/// ("kind": "char_rnn" or "transformer").
std::unique_ptr<LanguageModel> make_language_model(const nlohmann::json& architecture, std::uint64_t seed);

}  // namespace codeforge::models

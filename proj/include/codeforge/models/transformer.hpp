// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "codeforge/models/language_model.hpp"

namespace codeforge::models {

struct TransformerConfig {
    std::size_t layers = 2;
    std::size_t heads = 4;
    std::size_t width = 128;
    std::size_t ffn_width = 512;
    std::size_t context = 256;
    std::size_t vocab = 1000;
    bool tied_embeddings = true;
    double dropout = 0.0;

    /// 12 layers x 12 heads x 768 wide, vocabulary 50257, context 1024.
    static TransformerConfig gpt2_small();

    void validate() const;
    nlohmann::json to_json() const;
    static TransformerConfig from_json(const nlohmann::json& j);
};

/// Names and shapes of every parameter, in construction order.
std::vector<std::pair<std::string, numeric::Shape>> transformer_parameter_shapes(const TransformerConfig& config);
std::size_t transformer_parameter_count(const TransformerConfig& config);

/// Masked scaled dot-product weights softmax(mask(q k^T / sqrt(d))) for
/// q, k of shape [B, T, d]; returns [B, T, T].
Tensor causal_attention_weights(const Tensor& q, const Tensor& k);

/// Decoder-only transformer with learned positional embeddings, pre-norm
/// blocks (GPT-2 layout) and GELU feed-forward layers.
class TransformerLm final : public LanguageModel {
public:
    TransformerLm(TransformerConfig config, std::uint64_t seed);

    Tensor forward(const TokenBatch& input, bool training, Rng* rng) override;
    std::size_t vocab_size() const override { return config_.vocab; }
    std::optional<std::size_t> context_length() const override { return config_.context; }
    numeric::ParameterSet& parameters() override { return params_; }
    const numeric::ParameterSet& parameters() const override { return params_; }
    nlohmann::json architecture() const override { return config_.to_json(); }
    std::unique_ptr<Decoder> decoder() const override;

    const TransformerConfig& config() const { return config_; }

    /// Forward pass without dropout for a const model (used by decoding).
    Tensor infer(const TokenBatch& input) const;

private:
    Tensor run(const TokenBatch& input, bool training, Rng* rng) const;

    TransformerConfig config_;
    numeric::ParameterSet params_;
};

}  // namespace codeforge::models

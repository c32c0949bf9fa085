// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "codeforge/models/language_model.hpp"
#include "codeforge/models/recurrent.hpp"

namespace codeforge::models {

struct CharLmConfig {
    CellKind cell = CellKind::lstm;
    std::size_t hidden = 128;
    std::size_t layers = 2;
    std::size_t vocab = 0;
    double dropout = 0.0;
    double init_stddev = 0.02;

    void validate() const;
    nlohmann::json to_json() const;
    static CharLmConfig from_json(const nlohmann::json& j);
};

/// Character-level recurrent LM. Inputs are 1-of-k vectors; the first
/// layer's input projection is computed as a row lookup into w_in, which is
/// the same product without materializing the one-hot matrix.
class CharLm final : public LanguageModel {
public:
    CharLm(CharLmConfig config, std::uint64_t seed);

    Tensor forward(const TokenBatch& input, bool training, Rng* rng) override;
    std::size_t vocab_size() const override { return config_.vocab; }
    std::optional<std::size_t> context_length() const override { return std::nullopt; }
    numeric::ParameterSet& parameters() override { return params_; }
    const numeric::ParameterSet& parameters() const override { return params_; }
    nlohmann::json architecture() const override { return config_.to_json(); }
    std::unique_ptr<Decoder> decoder() const override;

    const CharLmConfig& config() const { return config_; }

    /// Per-layer states after consuming `token` from `states` (batch 1).
    std::vector<CellState> step(TokenId token, const std::vector<CellState>& states) const;
    Tensor output_logits(const Tensor& top_hidden) const;

private:
    CharLmConfig config_;
    numeric::ParameterSet params_;
};

}  // namespace codeforge::models

// SPDX-License-Identifier: Apache-2.0

#include "codeforge/models/language_model.hpp"

#include <stdexcept>

#include "codeforge/models/char_lm.hpp"
#include "codeforge/models/transformer.hpp"

namespace codeforge::models {

TokenBatch TokenBatch::single(std::vector<TokenId> sequence) {
    TokenBatch b;
    b.batch = 1;
    b.steps = sequence.size();
    b.ids = std::move(sequence);
    return b;
}

std::unique_ptr<LanguageModel> make_language_model(const nlohmann::json& architecture, std::uint64_t seed) {
    const std::string kind = architecture.value("kind", std::string());
    if (kind == "char_rnn") return std::make_unique<CharLm>(CharLmConfig::from_json(architecture), seed);
    if (kind == "transformer") return std::make_unique<TransformerLm>(TransformerConfig::from_json(architecture), seed);
    throw std::invalid_argument("unknown language model kind '" + kind + "'");
}

}  // namespace codeforge::models

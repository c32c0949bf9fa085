// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "codeforge/tokenizers/char_vocab.hpp"

namespace codeforge::tokenizers {

/// Word-level vocabulary for the search encoders. Id 0 is the unknown token;
/// the rest are ordered by descending frequency, then lexicographically.
class WordVocab {
public:
    static constexpr TokenId kUnknown = 0;

    WordVocab();
    static WordVocab build(std::span<const std::vector<std::string>> sequences, std::size_t max_size,
                           std::size_t min_count = 1);

    std::size_t size() const { return words_.size(); }
    TokenId id_of(const std::string& word) const;
    const std::string& word(TokenId id) const { return words_.at(static_cast<std::size_t>(id)); }
    std::vector<TokenId> encode(std::span<const std::string> tokens) const;

    nlohmann::json to_json() const;
    static WordVocab from_json(const nlohmann::json& j);

private:
    std::vector<std::string> words_;
    std::unordered_map<std::string, TokenId> index_;
};

/// Lower-cases ASCII letters; search queries and docstring tokens are matched case-insensitively.
std::string fold_case(std::string text);

}  // namespace codeforge::tokenizers

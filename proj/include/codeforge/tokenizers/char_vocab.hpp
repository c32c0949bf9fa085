// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace codeforge::tokenizers {

using TokenId = std::int32_t;

class UnknownChar : public std::runtime_error {
public:
    UnknownChar(char32_t ch, std::size_t position);
    char32_t ch;
    std::size_t position;  // in code points
};

enum class UnknownPolicy { fail, fallback };

/// 1-of-k character codec over unicode scalar values, ids in code point order.
class CharVocab {
public:
    CharVocab() = default;
    /// `chars` must be strictly increasing.
    explicit CharVocab(std::vector<char32_t> chars);

    static CharVocab build(std::string_view corpus_text);

    std::size_t size() const { return chars_.size(); }
    const std::vector<char32_t>& chars() const { return chars_; }
    std::optional<TokenId> id_of(char32_t ch) const;

    /// Throws UnknownChar on the first character missing from the vocabulary.
    std::vector<TokenId> encode(std::string_view text) const;
    /// Under UnknownPolicy::fallback, unseen characters map to `fallback_id`.
    std::vector<TokenId> encode(std::string_view text, UnknownPolicy policy, TokenId fallback_id) const;
    std::string decode(std::span<const TokenId> ids) const;

    nlohmann::json to_json() const;
    static CharVocab from_json(const nlohmann::json& j);

private:
    std::vector<char32_t> chars_;
    std::unordered_map<char32_t, TokenId> index_;
};

}  // namespace codeforge::tokenizers

// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"

#include "codeforge/tokenizers/char_vocab.hpp"

namespace codeforge::tokenizers {

inline constexpr std::size_t kByteAlphabet = 256;

/// Splits text into maximal runs of whitespace and of non-whitespace. Merges
/// never cross these boundaries.
std::vector<std::string_view> pre_segment(std::string_view text);

/// Byte-level BPE. Ids 0..255 are the raw bytes; id 256 + i is the token
/// produced by merge i.
class BpeModel {
public:
    using Merge = std::pair<TokenId, TokenId>;

    BpeModel();
    explicit BpeModel(std::vector<Merge> merges);

    /// Greedy training: repeatedly merges the most frequent adjacent pair
    /// (lexicographically smaller pair on ties) until the vocabulary reaches
    /// `target_vocab_size` or no pair occurs at least twice.
    static BpeModel train(std::string_view corpus, std::size_t target_vocab_size);

    std::size_t vocab_size() const { return tokens_.size(); }
    const std::vector<Merge>& merges() const { return merges_; }
    const std::string& token_bytes(TokenId id) const;

    /// Model restricted to the first `count` merges.
    BpeModel prefix(std::size_t count) const;

    std::vector<TokenId> encode(std::string_view text) const;
    std::string decode(std::span<const TokenId> ids) const;

    nlohmann::json to_json() const;
    static BpeModel from_json(const nlohmann::json& j);

private:
    void encode_segment(std::string_view segment, std::vector<TokenId>& out) const;

    std::vector<Merge> merges_;
    std::vector<std::string> tokens_;
    std::unordered_map<std::uint64_t, std::size_t> rank_;
};

}  // namespace codeforge::tokenizers

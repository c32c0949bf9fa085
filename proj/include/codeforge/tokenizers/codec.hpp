// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

#include "codeforge/tokenizers/bpe.hpp"
#include "codeforge/tokenizers/char_vocab.hpp"

namespace codeforge::tokenizers {

/// Either codec behind one text <-> id interface. The JSON manifest is the
/// codec's own manifest ("type": "char" | "bpe"), with the character
/// codec's unknown-character policy stored alongside.
class TokenCodec {
public:
    TokenCodec() = default;
    explicit TokenCodec(CharVocab vocab, UnknownPolicy policy = UnknownPolicy::fail, TokenId fallback_id = 0);
    explicit TokenCodec(BpeModel model);

    bool is_char() const { return std::holds_alternative<CharVocab>(impl_); }
    bool is_bpe() const { return std::holds_alternative<BpeModel>(impl_); }
    const CharVocab& char_vocab() const { return std::get<CharVocab>(impl_); }
    const BpeModel& bpe() const { return std::get<BpeModel>(impl_); }

    std::size_t vocab_size() const;
    std::vector<TokenId> encode(std::string_view text) const;
    std::string decode(std::span<const TokenId> ids) const;

    nlohmann::json to_json() const;
    static TokenCodec from_json(const nlohmann::json& j);

    void save(const std::filesystem::path& path) const;
    static TokenCodec load(const std::filesystem::path& path);

private:
    std::variant<CharVocab, BpeModel> impl_;
    UnknownPolicy policy_ = UnknownPolicy::fail;
    TokenId fallback_id_ = 0;
};

}  // namespace codeforge::tokenizers

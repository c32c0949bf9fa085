// SPDX-License-Identifier: Apache-2.0

#include "codeforge/tokenizers/char_vocab.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "codeforge/util/utf8.hpp"

namespace codeforge::tokenizers {

namespace {

std::string describe(char32_t ch) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "U+%04X", static_cast<unsigned>(ch));
    return buf;
}

}  // namespace

UnknownChar::UnknownChar(char32_t c, std::size_t pos)
    : std::runtime_error("unknown character " + describe(c) + " at position " + std::to_string(pos)),
      ch(c),
      position(pos) {}

CharVocab::CharVocab(std::vector<char32_t> chars) : chars_(std::move(chars)) {
    for (std::size_t i = 0; i < chars_.size(); ++i) {
        if (i > 0 && chars_[i] <= chars_[i - 1])
            throw std::invalid_argument("character vocabulary must be strictly increasing");
        index_.emplace(chars_[i], static_cast<TokenId>(i));
    }
}

CharVocab CharVocab::build(std::string_view corpus_text) {
    const auto cps = util::decode_utf8(corpus_text);
    std::set<char32_t> seen(cps.begin(), cps.end());
    return CharVocab(std::vector<char32_t>(seen.begin(), seen.end()));
}

std::optional<TokenId> CharVocab::id_of(char32_t ch) const {
    auto it = index_.find(ch);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::vector<TokenId> CharVocab::encode(std::string_view text) const {
    return encode(text, UnknownPolicy::fail, 0);
}

std::vector<TokenId> CharVocab::encode(std::string_view text, UnknownPolicy policy, TokenId fallback_id) const {
    const auto cps = util::decode_utf8(text);
    std::vector<TokenId> ids;
    ids.reserve(cps.size());
    for (std::size_t i = 0; i < cps.size(); ++i) {
        auto id = id_of(cps[i]);
        if (id) {
            ids.push_back(*id);
        } else if (policy == UnknownPolicy::fallback) {
            ids.push_back(fallback_id);
        } else {
            throw UnknownChar(cps[i], i);
        }
    }
    return ids;
}

std::string CharVocab::decode(std::span<const TokenId> ids) const {
    std::string out;
    out.reserve(ids.size());
    for (auto id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= chars_.size())
            throw std::out_of_range("character id " + std::to_string(id) + " outside vocabulary of " +
                                    std::to_string(chars_.size()));
        util::append_utf8(out, chars_[static_cast<std::size_t>(id)]);
    }
    return out;
}

nlohmann::json CharVocab::to_json() const {
    std::vector<std::uint32_t> cps(chars_.begin(), chars_.end());
    return {{"type", "char"}, {"chars", cps}};
}

CharVocab CharVocab::from_json(const nlohmann::json& j) {
    if (j.at("type") != "char") throw std::invalid_argument("codec manifest is not a character vocabulary");
    std::vector<char32_t> chars;
    for (const auto& v : j.at("chars")) chars.push_back(static_cast<char32_t>(v.get<std::uint32_t>()));
    return CharVocab(std::move(chars));
}

}  // namespace codeforge::tokenizers

// SPDX-License-Identifier: Apache-2.0

#include "codeforge/tokenizers/codec.hpp"

#include "codeforge/util/atomic_write.hpp"

namespace codeforge::tokenizers {

TokenCodec::TokenCodec(CharVocab vocab, UnknownPolicy policy, TokenId fallback_id)
    : impl_(std::move(vocab)), policy_(policy), fallback_id_(fallback_id) {}

TokenCodec::TokenCodec(BpeModel model) : impl_(std::move(model)) {}

std::size_t TokenCodec::vocab_size() const {
    return is_char() ? char_vocab().size() : bpe().vocab_size();
}

std::vector<TokenId> TokenCodec::encode(std::string_view text) const {
    if (is_char()) return char_vocab().encode(text, policy_, fallback_id_);
    return bpe().encode(text);
}

std::string TokenCodec::decode(std::span<const TokenId> ids) const {
    return is_char() ? char_vocab().decode(ids) : bpe().decode(ids);
}

nlohmann::json TokenCodec::to_json() const {
    if (is_bpe()) return bpe().to_json();
    auto j = char_vocab().to_json();
    j["unknown_policy"] = policy_ == UnknownPolicy::fail ? "fail" : "fallback";
    j["fallback_id"] = fallback_id_;
    return j;
}

TokenCodec TokenCodec::from_json(const nlohmann::json& j) {
    const auto type = j.at("type").get<std::string>();
    if (type == "bpe") return TokenCodec(BpeModel::from_json(j));
    if (type != "char") throw std::invalid_argument("unknown codec type '" + type + "'");
    const auto policy = j.value("unknown_policy", std::string("fail"));
    if (policy != "fail" && policy != "fallback") throw std::invalid_argument("unknown char policy '" + policy + "'");
    return TokenCodec(CharVocab::from_json(j), policy == "fail" ? UnknownPolicy::fail : UnknownPolicy::fallback,
                      j.value("fallback_id", TokenId{0}));
}

void TokenCodec::save(const std::filesystem::path& path) const { util::write_file_atomic(path, to_json().dump()); }

TokenCodec TokenCodec::load(const std::filesystem::path& path) {
    return from_json(nlohmann::json::parse(util::read_file(path)));
}

}  // namespace codeforge::tokenizers

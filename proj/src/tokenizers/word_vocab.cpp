// SPDX-License-Identifier: Apache-2.0

#include "codeforge/tokenizers/word_vocab.hpp"

#include <algorithm>
#include <map>

namespace codeforge::tokenizers {

WordVocab::WordVocab() : words_{"<unk>"} { index_.emplace(words_[0], kUnknown); }

WordVocab WordVocab::build(std::span<const std::vector<std::string>> sequences, std::size_t max_size,
                           std::size_t min_count) {
    std::map<std::string, std::size_t> counts;
    for (const auto& seq : sequences)
        for (const auto& t : seq) ++counts[fold_case(t)];
    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

    WordVocab vocab;
    for (const auto& [w, n] : ranked) {
        if (vocab.size() >= max_size) break;
        if (n < min_count || w == "<unk>") continue;
        vocab.index_.emplace(w, static_cast<TokenId>(vocab.words_.size()));
        vocab.words_.push_back(w);
    }
    return vocab;
}

TokenId WordVocab::id_of(const std::string& word) const {
    auto it = index_.find(fold_case(word));
    return it == index_.end() ? kUnknown : it->second;
}

std::vector<TokenId> WordVocab::encode(std::span<const std::string> tokens) const {
    std::vector<TokenId> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(id_of(t));
    return ids;
}

nlohmann::json WordVocab::to_json() const { return {{"type", "words"}, {"words", words_}}; }

WordVocab WordVocab::from_json(const nlohmann::json& j) {
    WordVocab vocab;
    const auto words = j.at("words").get<std::vector<std::string>>();
    if (words.empty() || words[0] != "<unk>") throw std::invalid_argument("word vocabulary must start with <unk>");
    for (std::size_t i = 1; i < words.size(); ++i) {
        vocab.index_.emplace(words[i], static_cast<TokenId>(i));
        vocab.words_.push_back(words[i]);
    }
    return vocab;
}

std::string fold_case(std::string text) {
    for (auto& c : text)
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    return text;
}

}  // namespace codeforge::tokenizers

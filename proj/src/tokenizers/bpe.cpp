// SPDX-License-Identifier: Apache-2.0

#include "codeforge/tokenizers/bpe.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <stdexcept>
#include <tuple>

namespace codeforge::tokenizers {

namespace {

std::uint64_t pair_key(TokenId a, TokenId b) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
}

bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

// Replaces every non-overlapping (a, b), scanning left to right.
void merge_in_place(std::vector<TokenId>& syms, TokenId a, TokenId b, TokenId merged) {
    std::size_t w = 0;
    for (std::size_t r = 0; r < syms.size();) {
        if (r + 1 < syms.size() && syms[r] == a && syms[r + 1] == b) {
            syms[w++] = merged;
            r += 2;
        } else {
            syms[w++] = syms[r++];
        }
    }
    syms.resize(w);
}

}  // namespace

std::vector<std::string_view> pre_segment(std::string_view text) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (std::size_t i = 1; i <= text.size(); ++i) {
        if (i == text.size() ||
            is_space(static_cast<unsigned char>(text[i])) != is_space(static_cast<unsigned char>(text[start]))) {
            out.push_back(text.substr(start, i - start));
            start = i;
        }
    }
    return out;
}

BpeModel::BpeModel() : BpeModel(std::vector<Merge>{}) {}

BpeModel::BpeModel(std::vector<Merge> merges) : merges_(std::move(merges)) {
    tokens_.reserve(kByteAlphabet + merges_.size());
    for (std::size_t b = 0; b < kByteAlphabet; ++b) tokens_.emplace_back(1, static_cast<char>(b));
    for (std::size_t i = 0; i < merges_.size(); ++i) {
        const auto [a, b] = merges_[i];
        const auto limit = static_cast<TokenId>(tokens_.size());
        if (a < 0 || b < 0 || a >= limit || b >= limit)
            throw std::invalid_argument("merge " + std::to_string(i) + " references a token not yet defined");
        tokens_.push_back(tokens_[static_cast<std::size_t>(a)] + tokens_[static_cast<std::size_t>(b)]);
        rank_.emplace(pair_key(a, b), i);
    }
}

BpeModel BpeModel::train(std::string_view corpus, std::size_t target_vocab_size) {
    if (target_vocab_size < kByteAlphabet + 1)
        throw std::invalid_argument("BPE target vocabulary must be at least 257, got " + std::to_string(target_vocab_size));

    std::map<std::string_view, long long> segment_counts;
    for (auto seg : pre_segment(corpus)) ++segment_counts[seg];

    std::vector<std::vector<TokenId>> words;
    std::vector<long long> freq;
    for (const auto& [seg, n] : segment_counts) {
        std::vector<TokenId> syms;
        for (unsigned char c : seg) syms.push_back(c);
        words.push_back(std::move(syms));
        freq.push_back(n);
    }

    std::unordered_map<std::uint64_t, long long> pair_counts;
    std::unordered_map<std::uint64_t, std::vector<std::size_t>> pair_words;
    auto add_pairs = [&](std::size_t w, long long sign) {
        const auto& s = words[w];
        for (std::size_t i = 0; i + 1 < s.size(); ++i) {
            const auto key = pair_key(s[i], s[i + 1]);
            pair_counts[key] += sign * freq[w];
            if (sign > 0) pair_words[key].push_back(w);
        }
    };
    for (std::size_t w = 0; w < words.size(); ++w) add_pairs(w, +1);

    std::vector<std::string> tokens;
    for (std::size_t b = 0; b < kByteAlphabet; ++b) tokens.emplace_back(1, static_cast<char>(b));
    std::vector<Merge> merges;
    std::vector<std::size_t> stamp(words.size(), std::numeric_limits<std::size_t>::max());

    while (tokens.size() < target_vocab_size) {
        std::uint64_t best = 0;
        long long best_count = 1;
        for (const auto& [key, count] : pair_counts) {
            if (count < 2) continue;
            const auto a = static_cast<std::size_t>(key >> 32), b = static_cast<std::size_t>(key & 0xFFFFFFFFu);
            bool better = count > best_count;
            if (!better && count == best_count) {
                const auto ba = static_cast<std::size_t>(best >> 32), bb = static_cast<std::size_t>(best & 0xFFFFFFFFu);
                better = std::tie(tokens[a], tokens[b]) < std::tie(tokens[ba], tokens[bb]);
            }
            if (better) {
                best = key;
                best_count = count;
            }
        }
        if (best_count < 2) break;

        const auto a = static_cast<TokenId>(best >> 32), b = static_cast<TokenId>(best & 0xFFFFFFFFu);
        const auto merged = static_cast<TokenId>(tokens.size());
        merges.emplace_back(a, b);
        tokens.push_back(tokens[static_cast<std::size_t>(a)] + tokens[static_cast<std::size_t>(b)]);

        const std::size_t iteration = merges.size();
        const auto affected = std::move(pair_words[best]);
        pair_words.erase(best);
        for (std::size_t w : affected) {
            if (stamp[w] == iteration) continue;
            stamp[w] = iteration;
            add_pairs(w, -1);
            merge_in_place(words[w], a, b, merged);
            add_pairs(w, +1);
        }
        for (auto it = pair_counts.begin(); it != pair_counts.end();) {
            if (it->second <= 0) it = pair_counts.erase(it);
            else ++it;
        }
    }
    return BpeModel(std::move(merges));
}

const std::string& BpeModel::token_bytes(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
        throw std::out_of_range("BPE id " + std::to_string(id) + " outside vocabulary of " +
                                std::to_string(tokens_.size()));
    return tokens_[static_cast<std::size_t>(id)];
}

BpeModel BpeModel::prefix(std::size_t count) const {
    count = std::min(count, merges_.size());
    return BpeModel(std::vector<Merge>(merges_.begin(), merges_.begin() + static_cast<std::ptrdiff_t>(count)));
}

void BpeModel::encode_segment(std::string_view segment, std::vector<TokenId>& out) const {
    std::vector<TokenId> syms;
    syms.reserve(segment.size());
    for (unsigned char c : segment) syms.push_back(c);
    while (syms.size() >= 2) {
        std::size_t best_rank = std::numeric_limits<std::size_t>::max();
        for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
            auto it = rank_.find(pair_key(syms[i], syms[i + 1]));
            if (it != rank_.end() && it->second < best_rank) best_rank = it->second;
        }
        if (best_rank == std::numeric_limits<std::size_t>::max()) break;
        const auto [a, b] = merges_[best_rank];
        merge_in_place(syms, a, b, static_cast<TokenId>(kByteAlphabet + best_rank));
    }
    out.insert(out.end(), syms.begin(), syms.end());
}

std::vector<TokenId> BpeModel::encode(std::string_view text) const {
    std::vector<TokenId> ids;
    for (auto seg : pre_segment(text)) encode_segment(seg, ids);
    return ids;
}

std::string BpeModel::decode(std::span<const TokenId> ids) const {
    std::string out;
    for (auto id : ids) out += token_bytes(id);
    return out;
}

nlohmann::json BpeModel::to_json() const {
    auto merges = nlohmann::json::array();
    for (const auto& [a, b] : merges_) merges.push_back({a, b});
    return {{"type", "bpe"}, {"merges", merges}};
}

BpeModel BpeModel::from_json(const nlohmann::json& j) {
    if (j.at("type") != "bpe") throw std::invalid_argument("codec manifest is not a BPE model");
    std::vector<Merge> merges;
    for (const auto& m : j.at("merges")) merges.emplace_back(m.at(0).get<TokenId>(), m.at(1).get<TokenId>());
    return BpeModel(std::move(merges));
}

}  // namespace codeforge::tokenizers

// SPDX-License-Identifier: Apache-2.0

#include "codeforge/corpus/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_set>

#include "codeforge/numeric/rng.hpp"
#include "codeforge/util/atomic_write.hpp"
#include "codeforge/util/utf8.hpp"

namespace codeforge::corpus {

namespace {

bool read_string(const nlohmann::json& obj, const char* key, std::string& out) {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_string()) return false;
    out = it->get<std::string>();
    return true;
}

bool read_tokens(const nlohmann::json& obj, const char* key, std::vector<std::string>& out) {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_array()) return false;
    out.clear();
    for (const auto& t : *it) {
        if (!t.is_string()) return false;
        out.push_back(t.get<std::string>());
    }
    return true;
}

bool is_blank(const std::string& s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

std::optional<Sample> sample_from_json(const nlohmann::json& record) {
    if (!record.is_object()) return std::nullopt;
    Sample s;
    if (!read_string(record, "code", s.code) || !read_string(record, "docstring", s.docstring) ||
        !read_string(record, "language", s.language) || !read_tokens(record, "code_tokens", s.code_tokens) ||
        !read_tokens(record, "docstring_tokens", s.docstring_tokens))
        return std::nullopt;
    if (is_blank(s.code)) return std::nullopt;
    read_string(record, "repo", s.repo);
    read_string(record, "path", s.path);
    std::string url;
    if (read_string(record, "url", url)) s.url = std::move(url);
    return s;
}

nlohmann::json to_json(const Sample& s) {
    nlohmann::json j = {{"repo", s.repo},
                        {"path", s.path},
                        {"language", s.language},
                        {"code", s.code},
                        {"docstring", s.docstring},
                        {"code_tokens", s.code_tokens},
                        {"docstring_tokens", s.docstring_tokens}};
    if (s.url) j["url"] = *s.url;
    return j;
}

LoadResult read_jsonl(std::istream& in, const std::string& language_filter) {
    LoadResult result;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (is_blank(line)) continue;
        nlohmann::json record;
        try {
            record = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error&) {
            ++result.malformed_lines;
            continue;
        }
        if (!record.is_object()) {
            ++result.malformed_lines;
            continue;
        }
        auto sample = sample_from_json(record);
        if (!sample) {
            ++result.missing_fields;
            continue;
        }
        if (!language_filter.empty() && sample->language != language_filter) {
            ++result.other_language;
            continue;
        }
        result.samples.push_back(std::move(*sample));
    }
    return result;
}

LoadResult load_jsonl(const std::filesystem::path& path, const std::string& language_filter) {
    std::ifstream in(path);
    if (!in) throw CorpusError("cannot read corpus file " + path.string());
    return read_jsonl(in, language_filter);
}

void write_jsonl(const std::filesystem::path& path, std::span<const Sample> samples) {
    std::string text;
    for (const auto& s : samples) {
        text += to_json(s).dump();
        text += '\n';
    }
    util::write_file_atomic(path, text);
}

void SplitSpec::validate() const {
    auto in_unit = [](double f) { return f >= 0.0 && f <= 1.0; };
    if (!in_unit(train) || !in_unit(valid) || !in_unit(test))
        throw std::invalid_argument("split fractions must each lie in [0, 1]");
    if (std::abs(train + valid + test - 1.0) > 1e-9)
        throw std::invalid_argument("split fractions must sum to 1 (got " + std::to_string(train + valid + test) + ")");
    if (!(subset_fraction > 0.0 && subset_fraction <= 1.0))
        throw std::invalid_argument("subset fraction must lie in (0, 1]");
}

SplitIndices split_indices(std::size_t count, const SplitSpec& spec) {
    spec.validate();
    std::vector<std::pair<std::uint64_t, std::size_t>> keyed(count);
    const std::uint64_t salt = numeric::mix64(spec.seed);
    for (std::size_t i = 0; i < count; ++i) keyed[i] = {numeric::mix64(salt ^ numeric::mix64(i)), i};
    std::sort(keyed.begin(), keyed.end());

    const auto retained = static_cast<std::size_t>(std::llround(spec.subset_fraction * static_cast<double>(count)));
    const auto n_train = std::min(retained, static_cast<std::size_t>(std::llround(spec.train * retained)));
    const auto n_valid = std::min(retained - n_train, static_cast<std::size_t>(std::llround(spec.valid * retained)));

    SplitIndices out;
    for (std::size_t r = 0; r < retained; ++r) {
        const std::size_t idx = keyed[r].second;
        if (r < n_train) out.train.push_back(idx);
        else if (r < n_train + n_valid) out.valid.push_back(idx);
        else out.test.push_back(idx);
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.valid.begin(), out.valid.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

Splits split(std::span<const Sample> samples, const SplitSpec& spec) {
    const auto idx = split_indices(samples.size(), spec);
    Splits out;
    for (auto i : idx.train) out.train.push_back(samples[i]);
    for (auto i : idx.valid) out.valid.push_back(samples[i]);
    for (auto i : idx.test) out.test.push_back(samples[i]);
    return out;
}

nlohmann::json CorpusStats::to_json() const {
    auto quantiles = [](const std::map<int, std::size_t>& q) {
        nlohmann::json j = nlohmann::json::object();
        for (const auto& [p, v] : q) j["p" + std::to_string(p)] = v;
        return j;
    };
    return {{"sample_count", sample_count},
            {"method_count", method_count},
            {"code_token_length_quantiles", quantiles(code_token_length_quantiles)},
            {"doc_token_length_quantiles", quantiles(doc_token_length_quantiles)},
            {"distinct_char_count", distinct_char_count},
            {"total_char_count", total_char_count}};
}

std::size_t nearest_rank(std::vector<std::size_t> values, int percentile) {
    if (values.empty()) return 0;
    std::sort(values.begin(), values.end());
    const double n = static_cast<double>(values.size());
    auto rank = static_cast<std::size_t>(std::ceil(static_cast<double>(percentile) / 100.0 * n));
    rank = std::clamp<std::size_t>(rank, 1, values.size());
    return values[rank - 1];
}

CorpusStats compute_stats(std::span<const Sample> samples) {
    CorpusStats stats;
    std::vector<std::size_t> code_lengths, doc_lengths;
    std::unordered_set<char32_t> distinct;
    for (const auto& s : samples) {
        ++stats.method_count;
        if (s.is_paired()) ++stats.sample_count;
        code_lengths.push_back(s.code_tokens.size());
        doc_lengths.push_back(s.docstring_tokens.size());
        const auto cps = util::decode_utf8(s.code);
        stats.total_char_count += cps.size();
        distinct.insert(cps.begin(), cps.end());
    }
    stats.distinct_char_count = distinct.size();
    for (int p : kStatPercentiles) {
        stats.code_token_length_quantiles[p] = nearest_rank(code_lengths, p);
        stats.doc_token_length_quantiles[p] = nearest_rank(doc_lengths, p);
    }
    return stats;
}

std::string lm_text(std::span<const Sample> samples) {
    std::string text;
    for (const auto& s : samples) {
        text += s.code;
        if (text.empty() || text.back() != '\n') text += '\n';
    }
    return text;
}

}  // namespace codeforge::corpus

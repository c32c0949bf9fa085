// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace codeforge::corpus {

/// One CodeSearchNet record: a function's source and its documentation.
struct Sample {
    std::string repo;
    std::string path;
    std::string language;
    std::string code;
    std::string docstring;
    std::vector<std::string> code_tokens;
    std::vector<std::string> docstring_tokens;
    std::optional<std::string> url;

    /// Usable as a (docstring, code) training pair; otherwise LM-only.
    bool is_paired() const { return !code_tokens.empty() && !docstring_tokens.empty(); }

    bool operator==(const Sample&) const = default;
};

class CorpusError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct LoadResult {
    std::vector<Sample> samples;
    std::size_t malformed_lines = 0;   // not parseable as a JSON object
    std::size_t missing_fields = 0;    // mandatory field absent, mistyped or code blank
    std::size_t other_language = 0;

    std::size_t skipped() const { return malformed_lines + missing_fields; }
};

/// Mandatory fields: code, docstring, code_tokens, docstring_tokens, language.
std::optional<Sample> sample_from_json(const nlohmann::json& record);
nlohmann::json to_json(const Sample& sample);

/// An empty filter admits every language.
LoadResult read_jsonl(std::istream& in, const std::string& language_filter);
/// Throws CorpusError when the file cannot be read.
LoadResult load_jsonl(const std::filesystem::path& path, const std::string& language_filter);
void write_jsonl(const std::filesystem::path& path, std::span<const Sample> samples);

struct SplitSpec {
    std::uint64_t seed = 0;
    double train = 0.8;
    double valid = 0.1;
    double test = 0.1;
    double subset_fraction = 1.0;

    /// Throws std::invalid_argument on out-of-range fractions.
    void validate() const;
};

struct SplitIndices {
    std::vector<std::size_t> train, valid, test;
};

struct Splits {
    std::vector<Sample> train, valid, test;
};

/// Every sample gets a key hash(seed, index). The round(subset * n) smallest
/// keys are retained; the retained keys are then cut by rank into train,
/// valid and test. Each split lists indices in ascending (file) order.
SplitIndices split_indices(std::size_t count, const SplitSpec& spec);
Splits split(std::span<const Sample> samples, const SplitSpec& spec);

struct CorpusStats {
    std::size_t sample_count = 0;  // (docstring, code) pairs
    std::size_t method_count = 0;  // all functions
    std::map<int, std::size_t> code_token_length_quantiles;
    std::map<int, std::size_t> doc_token_length_quantiles;
    std::size_t distinct_char_count = 0;
    std::size_t total_char_count = 0;

    nlohmann::json to_json() const;
};

inline constexpr int kStatPercentiles[] = {5, 25, 50, 75, 90, 95, 99};

/// Nearest-rank percentile of an unsorted list; 0 for an empty list.
std::size_t nearest_rank(std::vector<std::size_t> values, int percentile);

CorpusStats compute_stats(std::span<const Sample> samples);

/// Text a language model trains on: raw function source, docstring in place.
std::string lm_text(std::span<const Sample> samples);

}  // namespace codeforge::corpus

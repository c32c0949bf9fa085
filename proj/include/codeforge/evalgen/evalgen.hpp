// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "codeforge/corpus/corpus.hpp"
#include "codeforge/models/language_model.hpp"
#include "codeforge/tokenizers/codec.hpp"
#include "codeforge/training/training.hpp"

namespace codeforge::evalgen {

using numeric::TokenId;
using TokenList = std::vector<std::string>;

/// A function's opening: its signature line(s) and documentation.
struct Prompt {
    std::string signature;
    std::string docstring;

    /// Signature, then the docstring as an indented triple-quoted block.
    std::string render() const;
};

enum class Strategy { greedy, sample, top_k };

Strategy parse_strategy(const std::string& text);
std::string to_string(Strategy s);

struct GenConfig {
    std::size_t max_new_tokens = 256;
    double temperature = 1.0;
    Strategy strategy = Strategy::greedy;
    std::size_t top_k = 1;
    /// Stop once a generated line starts at column 0 with non-space text.
    bool stop_at_dedent = false;
    std::uint64_t seed = 0;

    void validate() const;
    nlohmann::json to_json() const;
};

/// Token index picked from next-token logits under `cfg`. Greedy and top-k
/// break ties toward the lower id.
TokenId choose_token(std::span<const numeric::real> logits, const GenConfig& cfg, numeric::Rng& rng);

/// Continues `prompt_text`; the result excludes the prompt.
std::string generate(const models::LanguageModel& model, const tokenizers::TokenCodec& codec,
                     std::string_view prompt_text, const GenConfig& cfg);
std::string generate(const models::LanguageModel& model, const tokenizers::TokenCodec& codec, const Prompt& prompt,
                     const GenConfig& cfg);

/// Cuts generated text before the first line that starts at column 0 with
/// non-space text; text before any newline is kept whole.
std::string cut_at_dedent(std::string_view text);

struct BleuReport {
    double bleu = 0.0;
    std::array<double, 4> precisions{};
    double brevity_penalty = 0.0;
    std::size_t candidate_tokens = 0;
    std::size_t reference_tokens = 0;
    std::size_t pairs = 0;
    std::size_t skipped = 0;  // pairs with an empty side

    nlohmann::json to_json() const;
};

/// Corpus-level BLEU-4, uniform weights, one reference per candidate, no
/// smoothing; any zero precision makes the score 0.
BleuReport corpus_bleu(std::span<const TokenList> candidates, std::span<const TokenList> references);

/// exp(mean next-token cross-entropy) over every predictable position of
/// every text. Texts longer than the model context are cut into chunks.
double perplexity(models::LanguageModel& model, const tokenizers::TokenCodec& codec,
                  std::span<const std::string> texts);

/// Share of the generated n-grams (with multiplicity) absent from every
/// corpus sequence. N-grams never span two corpus sequences.
double ngram_novelty(std::span<const std::string> generated, std::span<const TokenList> corpus, std::size_t n);

/// Source of a function split into the part shown to the model and the
/// part it must produce.
struct FunctionParts {
    std::string prompt;  // signature through the docstring block
    std::string body;
    std::string signature;
};

/// Signature = text up to the first ':' at bracket depth 0 that ends its
/// line; a following string-literal block joins the prompt. Without such a
/// colon the first line is the prompt.
FunctionParts split_function(std::string_view code);

/// Reference tokens for a sample: code_tokens after the signature (through
/// the first ':' at bracket depth 0), or the splitter applied to the body
/// when code_tokens is empty or has no such colon.
TokenList reference_tokens(const corpus::Sample& sample);

struct LoadedLm {
    std::unique_ptr<models::LanguageModel> model;
    tokenizers::TokenCodec codec;
    nlohmann::json manifest;
};

/// Rebuilds a language model and its codec from a checkpoint.
LoadedLm load_language_model(const std::filesystem::path& checkpoint);

struct BleuEval {
    BleuReport report;
    std::vector<std::string> generations;
};

/// Prompts each sample with its raw prefix, generates a body and scores it
/// against the reference tokens. Samples without a body are skipped.
BleuEval eval_bleu(const models::LanguageModel& model, const tokenizers::TokenCodec& codec,
                   std::span<const corpus::Sample> samples, const GenConfig& cfg, std::size_t max_samples = 0);

/// Sweep row evaluator for language models: builds `architecture` seeded
/// with the row seed, trains on the train samples' text, then reports BLEU
/// on (up to `max_bleu_samples` of) the train and eval samples.
training::SweepEval lm_bleu_sweep_eval(std::vector<corpus::Sample> train, std::vector<corpus::Sample> eval,
                                       tokenizers::TokenCodec codec, nlohmann::json architecture, GenConfig gen,
                                       std::size_t max_bleu_samples);

}  // namespace codeforge::evalgen

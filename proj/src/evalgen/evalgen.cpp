// SPDX-License-Identifier: Apache-2.0

#include "codeforge/evalgen/evalgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "codeforge/numeric/checkpoint.hpp"
#include "codeforge/tokenizers/code_tokens.hpp"

namespace codeforge::evalgen {

using numeric::real;
using numeric::TokenId;

namespace {

constexpr char kGramSeparator = '\x1f';

std::string join_gram(std::span<const std::string> tokens, std::size_t at, std::size_t n) {
    std::string key;
    for (std::size_t i = 0; i < n; ++i) {
        if (i) key += kGramSeparator;
        key += tokens[at + i];
    }
    return key;
}

std::unordered_map<std::string, std::size_t> gram_counts(std::span<const std::string> tokens, std::size_t n) {
    std::unordered_map<std::string, std::size_t> counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) ++counts[join_gram(tokens, i, n)];
    return counts;
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v'; }

std::size_t line_end(std::string_view text, std::size_t from) {
    const auto nl = text.find('\n', from);
    return nl == std::string_view::npos ? text.size() : nl + 1;
}

// Index just past the closing quote of a literal opening at `at`, or npos.
std::size_t skip_string(std::string_view text, std::size_t at) {
    const char q = text[at];
    const bool triple = text.substr(at, 3) == std::string(3, q);
    if (triple) {
        const auto close = text.find(std::string(3, q), at + 3);
        return close == std::string_view::npos ? close : close + 3;
    }
    for (std::size_t i = at + 1; i < text.size(); ++i) {
        if (text[i] == '\\') ++i;
        else if (text[i] == q) return i + 1;
        else if (text[i] == '\n') return std::string_view::npos;
    }
    return std::string_view::npos;
}

// End of the signature (past its newline), or npos when no line ends with a
// depth-0 colon.
std::size_t signature_end(std::string_view code) {
    int depth = 0;
    for (std::size_t i = 0; i < code.size(); ++i) {
        const char c = code[i];
        if (c == '"' || c == '\'') {
            const auto past = skip_string(code, i);
            if (past == std::string_view::npos) return past;
            i = past - 1;
        } else if (c == '#') {
            i = line_end(code, i) - 1;
        } else if (c == '(' || c == '[' || c == '{') {
            ++depth;
        } else if (c == ')' || c == ']' || c == '}') {
            depth = std::max(0, depth - 1);
        } else if (c == ':' && depth == 0) {
            std::size_t j = i + 1;
            while (j < code.size() && (code[j] == ' ' || code[j] == '\t' || code[j] == '\r')) ++j;
            if (j == code.size() || code[j] == '\n' || code[j] == '#') return line_end(code, j);
        }
    }
    return std::string_view::npos;
}

}  // namespace

std::string Prompt::render() const {
    if (signature.empty()) throw std::invalid_argument("prompt signature is empty");
    std::string out = signature;
    while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) out.pop_back();
    out += '\n';
    if (!docstring.empty()) out += "    \"\"\"" + docstring + "\"\"\"\n";
    return out;
}

Strategy parse_strategy(const std::string& text) {
    if (text == "greedy") return Strategy::greedy;
    if (text == "sample") return Strategy::sample;
    if (text == "top_k") return Strategy::top_k;
    throw std::invalid_argument("unknown decoding strategy '" + text + "' (expected greedy, sample or top_k)");
}

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::greedy: return "greedy";
        case Strategy::sample: return "sample";
        case Strategy::top_k: return "top_k";
    }
    return "?";
}

void GenConfig::validate() const {
    if (strategy != Strategy::greedy && !(temperature > 0.0))
        throw std::invalid_argument("temperature must be positive for sampling");
    if (strategy == Strategy::top_k && top_k < 1) throw std::invalid_argument("top_k must be at least 1");
}

nlohmann::json GenConfig::to_json() const {
    return {{"max_new_tokens", max_new_tokens}, {"temperature", temperature}, {"strategy", to_string(strategy)},
            {"top_k", top_k},                   {"stop_at_dedent", stop_at_dedent}, {"seed", seed}};
}

TokenId choose_token(std::span<const real> logits, const GenConfig& cfg, numeric::Rng& rng) {
    if (logits.empty()) throw std::invalid_argument("empty logits");
    if (cfg.strategy == Strategy::greedy)
        return static_cast<TokenId>(std::max_element(logits.begin(), logits.end()) - logits.begin());

    std::vector<std::size_t> pool(logits.size());
    std::iota(pool.begin(), pool.end(), 0);
    if (cfg.strategy == Strategy::top_k && cfg.top_k < pool.size()) {
        std::stable_sort(pool.begin(), pool.end(), [&](std::size_t a, std::size_t b) { return logits[a] > logits[b]; });
        pool.resize(cfg.top_k);
    }
    double top = -std::numeric_limits<double>::infinity();
    for (auto i : pool) top = std::max(top, static_cast<double>(logits[i]));
    std::vector<double> weights(pool.size());
    double total = 0.0;
    for (std::size_t k = 0; k < pool.size(); ++k) {
        weights[k] = std::exp((static_cast<double>(logits[pool[k]]) - top) / cfg.temperature);
        total += weights[k];
    }
    double u = rng.uniform() * total;
    for (std::size_t k = 0; k < pool.size(); ++k) {
        if (u < weights[k]) return static_cast<TokenId>(pool[k]);
        u -= weights[k];
    }
    return static_cast<TokenId>(pool.back());
}

std::string cut_at_dedent(std::string_view text) {
    for (std::size_t i = 0; i + 1 < text.size(); ++i)
        if (text[i] == '\n' && !is_space(text[i + 1])) return std::string(text.substr(0, i + 1));
    return std::string(text);
}

std::string generate(const models::LanguageModel& model, const tokenizers::TokenCodec& codec,
                     std::string_view prompt_text, const GenConfig& cfg) {
    cfg.validate();
    const auto prompt = codec.encode(prompt_text);
    if (prompt.empty()) throw std::invalid_argument("prompt encodes to no tokens");
    if (auto ctx = model.context_length(); ctx && prompt.size() > *ctx)
        throw std::invalid_argument("prompt of " + std::to_string(prompt.size()) + " tokens exceeds context length " +
                                    std::to_string(*ctx));
    if (cfg.max_new_tokens == 0) return {};

    auto decoder = model.decoder();
    std::vector<real> logits;
    for (auto id : prompt) logits = decoder->feed(id);
    numeric::Rng rng(cfg.seed);
    std::vector<TokenId> out;
    for (std::size_t i = 0; i < cfg.max_new_tokens; ++i) {
        const TokenId next = choose_token(logits, cfg, rng);
        out.push_back(next);
        if (cfg.stop_at_dedent) {
            const std::string text = codec.decode(out);
            std::string cut = cut_at_dedent(text);
            if (cut.size() < text.size()) return cut;
        }
        if (i + 1 < cfg.max_new_tokens) logits = decoder->feed(next);
    }
    return codec.decode(out);
}

std::string generate(const models::LanguageModel& model, const tokenizers::TokenCodec& codec, const Prompt& prompt,
                     const GenConfig& cfg) {
    return generate(model, codec, prompt.render(), cfg);
}

nlohmann::json BleuReport::to_json() const {
    return {{"bleu", bleu},
            {"precisions", precisions},
            {"brevity_penalty", brevity_penalty},
            {"candidate_tokens", candidate_tokens},
            {"reference_tokens", reference_tokens},
            {"pairs", pairs},
            {"skipped", skipped}};
}

BleuReport corpus_bleu(std::span<const TokenList> candidates, std::span<const TokenList> references) {
    if (candidates.size() != references.size())
        throw std::invalid_argument("BLEU needs one reference per candidate (" + std::to_string(candidates.size()) +
                                    " vs " + std::to_string(references.size()) + ")");
    if (candidates.empty()) throw std::invalid_argument("BLEU of an empty corpus");

    BleuReport r;
    std::array<std::size_t, 4> matched{}, total{};
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const auto& cand = candidates[i];
        const auto& ref = references[i];
        if (cand.empty() || ref.empty()) {
            ++r.skipped;
            continue;
        }
        ++r.pairs;
        r.candidate_tokens += cand.size();
        r.reference_tokens += ref.size();
        for (std::size_t n = 1; n <= 4; ++n) {
            const auto ref_counts = gram_counts(ref, n);
            for (const auto& [gram, count] : gram_counts(cand, n)) {
                const auto it = ref_counts.find(gram);
                matched[n - 1] += it == ref_counts.end() ? 0 : std::min(count, it->second);
                total[n - 1] += count;
            }
        }
    }
    if (r.pairs == 0) return r;

    double log_sum = 0.0;
    bool zero = false;
    for (std::size_t n = 0; n < 4; ++n) {
        r.precisions[n] = total[n] ? static_cast<double>(matched[n]) / static_cast<double>(total[n]) : 0.0;
        if (r.precisions[n] == 0.0) zero = true;
        else log_sum += 0.25 * std::log(r.precisions[n]);
    }
    const auto c = static_cast<double>(r.candidate_tokens), ref_len = static_cast<double>(r.reference_tokens);
    r.brevity_penalty = c >= ref_len ? 1.0 : c > 0.0 ? std::exp(1.0 - ref_len / c) : 0.0;
    r.bleu = zero ? 0.0 : r.brevity_penalty * std::exp(log_sum);
    return r;
}

double perplexity(models::LanguageModel& model, const tokenizers::TokenCodec& codec,
                  std::span<const std::string> texts) {
    if (texts.empty()) throw std::invalid_argument("perplexity of no texts");
    numeric::NoGradGuard no_grad;
    const auto ctx = model.context_length();
    double nll = 0.0;
    std::size_t positions = 0;
    for (const auto& text : texts) {
        const auto ids = codec.encode(text);
        if (ids.size() < 2) continue;
        const std::size_t span_len = ctx ? *ctx : ids.size() - 1;
        // Chunks share one boundary token so every position is predicted once.
        for (std::size_t start = 0; start + 1 < ids.size(); start += span_len) {
            const std::size_t len = std::min(span_len, ids.size() - 1 - start);
            auto input = models::TokenBatch::single(
                {ids.begin() + static_cast<std::ptrdiff_t>(start), ids.begin() + static_cast<std::ptrdiff_t>(start + len)});
            const std::vector<TokenId> targets(ids.begin() + static_cast<std::ptrdiff_t>(start + 1),
                                               ids.begin() + static_cast<std::ptrdiff_t>(start + len + 1));
            nll += static_cast<double>(numeric::cross_entropy(model.forward(input, false, nullptr), targets).item()) *
                   static_cast<double>(len);
            positions += len;
        }
    }
    if (positions == 0) throw std::invalid_argument("texts hold no predictable positions");
    return std::exp(nll / static_cast<double>(positions));
}

double ngram_novelty(std::span<const std::string> generated, std::span<const TokenList> corpus, std::size_t n) {
    if (n == 0) throw std::invalid_argument("n-gram order must be positive");
    if (generated.size() < n)
        throw std::invalid_argument("generated sequence of " + std::to_string(generated.size()) +
                                    " tokens is shorter than n = " + std::to_string(n));
    std::unordered_set<std::string> seen;
    for (const auto& seq : corpus)
        for (std::size_t i = 0; i + n <= seq.size(); ++i) seen.insert(join_gram(seq, i, n));
    std::size_t novel = 0;
    const std::size_t grams = generated.size() - n + 1;
    for (std::size_t i = 0; i < grams; ++i) novel += seen.count(join_gram(generated, i, n)) ? 0 : 1;
    return static_cast<double>(novel) / static_cast<double>(grams);
}

FunctionParts split_function(std::string_view code) {
    FunctionParts parts;
    std::size_t sig = signature_end(code);
    if (sig == std::string_view::npos) sig = line_end(code, 0);
    parts.signature = std::string(code.substr(0, sig));
    while (!parts.signature.empty() && (parts.signature.back() == '\n' || parts.signature.back() == '\r'))
        parts.signature.pop_back();
    std::size_t prompt_end = sig;

    std::size_t p = sig;
    while (p < code.size() && is_space(code[p])) ++p;
    std::size_t q = p;
    while (q < code.size() && q - p < 2 && std::string_view("rRuUbBfF").find(code[q]) != std::string_view::npos) ++q;
    if (q < code.size() && (code[q] == '"' || code[q] == '\'')) {
        const auto past = skip_string(code, q);
        if (past != std::string_view::npos) prompt_end = line_end(code, past);
    }
    parts.prompt = std::string(code.substr(0, prompt_end));
    parts.body = std::string(code.substr(prompt_end));
    return parts;
}

TokenList reference_tokens(const corpus::Sample& sample) {
    int depth = 0;
    const auto& tokens = sample.code_tokens;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const auto& t = tokens[i];
        if (t == "(" || t == "[" || t == "{") ++depth;
        else if (t == ")" || t == "]" || t == "}") depth = std::max(0, depth - 1);
        else if (t == ":" && depth == 0) return {tokens.begin() + static_cast<std::ptrdiff_t>(i + 1), tokens.end()};
    }
    return tokenizers::split_code_tokens(split_function(sample.code).body);
}

LoadedLm load_language_model(const std::filesystem::path& checkpoint) {
    const auto data = numeric::load_checkpoint(checkpoint);
    const auto& codec_json = data.manifest.at("codec");
    if (codec_json.is_null()) throw numeric::CheckpointError(checkpoint.string() + " carries no codec");
    LoadedLm out{models::make_language_model(data.manifest.at("architecture"), 0), tokenizers::TokenCodec::from_json(codec_json),
                 data.manifest};
    if (out.codec.vocab_size() != out.model->vocab_size())
        throw numeric::CheckpointError("codec vocabulary " + std::to_string(out.codec.vocab_size()) +
                                       " does not match model vocabulary " + std::to_string(out.model->vocab_size()));
    numeric::restore_parameters(data, out.model->parameters());
    return out;
}

BleuEval eval_bleu(const models::LanguageModel& model, const tokenizers::TokenCodec& codec,
                   std::span<const corpus::Sample> samples, const GenConfig& cfg, std::size_t max_samples) {
    const std::size_t count = max_samples ? std::min(max_samples, samples.size()) : samples.size();
    if (count == 0) throw std::invalid_argument("no samples to evaluate");
    BleuEval out;
    std::vector<TokenList> candidates, references;
    std::size_t skipped = 0;
    const auto ctx = model.context_length();
    for (std::size_t i = 0; i < count; ++i) {
        const auto parts = split_function(samples[i].code);
        const bool has_body = std::any_of(parts.body.begin(), parts.body.end(), [](char c) { return !is_space(c); });
        if (!has_body || (ctx && codec.encode(parts.prompt).size() > *ctx)) {
            ++skipped;
            continue;
        }
        out.generations.push_back(generate(model, codec, parts.prompt, cfg));
        candidates.push_back(tokenizers::split_code_tokens(out.generations.back()));
        references.push_back(reference_tokens(samples[i]));
    }
    if (!candidates.empty()) out.report = corpus_bleu(candidates, references);
    out.report.skipped += skipped;
    return out;
}

training::SweepEval lm_bleu_sweep_eval(std::vector<corpus::Sample> train, std::vector<corpus::Sample> eval,
                                       tokenizers::TokenCodec codec, nlohmann::json architecture, GenConfig gen,
                                       std::size_t max_bleu_samples) {
    architecture["vocab"] = codec.vocab_size();
    auto ids = std::make_shared<const std::vector<TokenId>>(codec.encode(corpus::lm_text(train)));
    return [=, train = std::move(train), eval = std::move(eval)](const training::TrainConfig& cfg) {
        auto arch = architecture;
        arch["dropout"] = cfg.dropout;
        auto model = models::make_language_model(arch, cfg.seed);
        training::train_lm(*model, *ids, {}, cfg);
        return training::SweepMetrics{eval_bleu(*model, codec, train, gen, max_bleu_samples).report.bleu,
                                      eval_bleu(*model, codec, eval, gen, max_bleu_samples).report.bleu};
    };
}

}  // namespace codeforge::evalgen

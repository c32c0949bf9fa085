// SPDX-License-Identifier: Apache-2.0

#include <memory>
#include <ostream>

#include "cli_common.hpp"
#include "codeforge/evalgen/evalgen.hpp"
#include "codeforge/retrieval/retrieval.hpp"
#include "codeforge/tokenizers/code_tokens.hpp"
#include "codeforge/util/atomic_write.hpp"

namespace codeforge::cli {

namespace {

struct GenFlags {
    std::optional<std::string> strategy;
    std::optional<double> temperature;
    std::optional<std::size_t> top_k;
    std::size_t max_new_tokens = 256;
    bool stop_at_dedent = false;
    std::optional<std::uint64_t> seed;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--strategy", strategy, "greedy, sample or top_k (default greedy)");
        cmd->add_option("--temperature", temperature, "Sampling temperature (implies sample)");
        cmd->add_option("--top-k", top_k, "Sample among the k most likely tokens (implies top_k)");
        cmd->add_option("--max-new-tokens", max_new_tokens, "Token budget")->capture_default_str();
        cmd->add_flag("--stop-at-dedent", stop_at_dedent, "Stop when a line returns to column 0");
        cmd->add_option("--seed", seed, "Sampling seed (default: CODEFORGE_SEED or 0)");
    }

    evalgen::GenConfig resolve() const {
        evalgen::GenConfig g;
        g.max_new_tokens = max_new_tokens;
        g.stop_at_dedent = stop_at_dedent;
        if (temperature) g.temperature = *temperature;
        if (top_k) g.top_k = *top_k;
        if (strategy) g.strategy = evalgen::parse_strategy(*strategy);
        else if (top_k) g.strategy = evalgen::Strategy::top_k;
        else if (temperature) g.strategy = evalgen::Strategy::sample;
        g.seed = resolve_seed(seed, nullptr);
        g.validate();
        return g;
    }
};

std::vector<corpus::Sample> first_samples(const std::string& path, std::size_t max_samples) {
    auto samples = load_split(path);
    if (max_samples && samples.size() > max_samples) samples.resize(max_samples);
    return samples;
}

// ---- generate ----------------------------------------------------------

struct GenerateOptions {
    std::string model;
    std::optional<std::string> prompt_file, prompt, out;
    GenFlags gen;
};

void run_generate(const GenerateOptions& o, Session& s) {
    if (o.prompt_file.has_value() == o.prompt.has_value())
        throw std::invalid_argument("give exactly one of --prompt-file and --prompt");
    const std::string prompt = o.prompt_file ? util::read_file(*o.prompt_file) : *o.prompt;
    const auto cfg = o.gen.resolve();
    const auto loaded = evalgen::load_language_model(o.model);
    const std::string text = evalgen::generate(*loaded.model, loaded.codec, prompt, cfg);
    if (o.out) {
        util::write_file_atomic(*o.out, text);
        RunManifest m{"generate", cfg.to_json(), cfg.seed};
        m.inputs = {{"model", o.model}, {"prompt_file", o.prompt_file ? nlohmann::json(*o.prompt_file) : nullptr}};
        m.outputs = {{"text", *o.out}};
        write_manifest_beside(*o.out, m, s);
    }
    s.out << text;
    if (!text.empty() && text.back() != '\n') s.out << '\n';
}

// ---- search ------------------------------------------------------------

struct SearchOptions {
    std::string index, query;
    std::optional<std::string> model;
    std::size_t k = 5;
};

void run_search(const SearchOptions& o, Session& s) {
    const auto index = retrieval::SnippetIndex::load(o.index);
    fs::path model_path;
    if (o.model) model_path = *o.model;
    else if (index.manifest_extra().contains("model"))
        model_path = fs::path(o.index).parent_path() / index.manifest_extra().at("model").get<std::string>();
    else throw std::invalid_argument("index names no encoder checkpoint; pass --model");
    const auto encoder = retrieval::load_dual_encoder(model_path);
    const auto result = index.search(retrieval::encode_query(o.query, encoder.model, encoder.vocab), o.k);

    nlohmann::json hits = nlohmann::json::array();
    for (std::size_t r = 0; r < result.hits.size(); ++r) {
        const auto& h = result.hits[r];
        const auto& smp = index.sample(h.entry);
        hits.push_back({{"rank", r + 1},
                        {"score", h.score},
                        {"entry", h.entry},
                        {"repo", smp.repo},
                        {"path", smp.path},
                        {"url", smp.url ? nlohmann::json(*smp.url) : nullptr},
                        {"docstring", smp.docstring},
                        {"code", smp.code}});
    }
    print_json(s.out, {{"query", o.query}, {"k", o.k}, {"truncated", result.truncated}, {"results", hits}});
}

// ---- eval --------------------------------------------------------------

struct EvalOptions {
    std::string model, data, corpus;
    std::optional<std::string> generated, out;
    std::size_t max_samples = 0, n = 4;
    GenFlags gen;
};

void finish_eval(const std::string& kind, const nlohmann::json& result, const EvalOptions& o, const nlohmann::json& config,
                 Session& s) {
    if (o.out) {
        util::write_file_atomic(*o.out, result.dump(2) + "\n");
        RunManifest m{"eval " + kind, config, 0};
        m.inputs = {{"model", o.model}, {"data", o.data}, {"corpus", o.corpus}};
        m.outputs = {{"report", *o.out}};
        write_manifest_beside(*o.out, m, s);
    }
    print_json(s.out, result);
}

void run_eval_bleu(const EvalOptions& o, Session& s) {
    const auto cfg = o.gen.resolve();
    const auto loaded = evalgen::load_language_model(o.model);
    const auto samples = first_samples(o.data, o.max_samples);
    const auto bleu = evalgen::eval_bleu(*loaded.model, loaded.codec, samples, cfg);
    finish_eval("bleu", bleu.report.to_json(), o, {{"generation", cfg.to_json()}, {"max_samples", o.max_samples}}, s);
}

void run_eval_perplexity(const EvalOptions& o, Session& s) {
    const auto loaded = evalgen::load_language_model(o.model);
    std::vector<std::string> texts;
    for (const auto& smp : first_samples(o.data, o.max_samples)) texts.push_back(smp.code);
    const double ppl = evalgen::perplexity(*loaded.model, loaded.codec, texts);
    finish_eval("perplexity", {{"perplexity", ppl}, {"texts", texts.size()}}, o, {{"max_samples", o.max_samples}}, s);
}

void run_eval_novelty(const EvalOptions& o, Session& s) {
    std::vector<evalgen::TokenList> corpus_tokens;
    for (const auto& smp : load_split(o.corpus))
        corpus_tokens.push_back(smp.code_tokens.empty() ? tokenizers::split_code_tokens(smp.code) : smp.code_tokens);

    std::vector<std::string> texts;
    nlohmann::json config{{"n", o.n}};
    if (o.generated) {
        texts.push_back(util::read_file(*o.generated));
    } else {
        if (o.model.empty() || o.data.empty()) throw std::invalid_argument("give --generated, or --model with --data");
        const auto cfg = o.gen.resolve();
        const auto loaded = evalgen::load_language_model(o.model);
        texts = evalgen::eval_bleu(*loaded.model, loaded.codec, first_samples(o.data, o.max_samples), cfg).generations;
        config["generation"] = cfg.to_json();
        config["max_samples"] = o.max_samples;
    }
    // Pooled over generations; ones shorter than n contribute nothing.
    double novel = 0.0;
    std::size_t grams = 0, too_short = 0;
    for (const auto& t : texts) {
        const auto tokens = tokenizers::split_code_tokens(t);
        if (tokens.size() < o.n) {
            ++too_short;
            continue;
        }
        const std::size_t count = tokens.size() - o.n + 1;
        novel += evalgen::ngram_novelty(tokens, corpus_tokens, o.n) * static_cast<double>(count);
        grams += count;
    }
    if (grams == 0) throw std::invalid_argument("no generated text holds " + std::to_string(o.n) + " tokens");
    finish_eval("novelty",
                {{"n", o.n},
                 {"novelty", novel / static_cast<double>(grams)},
                 {"ngrams", grams},
                 {"generations", texts.size()},
                 {"too_short", too_short}},
                o, config, s);
}

}  // namespace

void add_eval_commands(CLI::App& app, Session& session) {
    auto gen = std::make_shared<GenerateOptions>();
    auto* cmd = app.add_subcommand("generate", "Continue a prompt with a trained language model");
    cmd->add_option("--model", gen->model, "Language-model checkpoint")->required();
    cmd->add_option("--prompt-file", gen->prompt_file, "File holding the prompt text");
    cmd->add_option("--prompt", gen->prompt, "Prompt text");
    cmd->add_option("--out", gen->out, "Also write the text here, with a run manifest beside it");
    gen->gen.add_to(cmd);
    cmd->callback([gen, &session] { run_generate(*gen, session); });

    auto search = std::make_shared<SearchOptions>();
    cmd = app.add_subcommand("search", "Rank indexed snippets against a natural-language query");
    cmd->add_option("--index", search->index, "Index written by train-search")->required();
    cmd->add_option("--query", search->query, "Query text")->required();
    cmd->add_option("-k", search->k, "Results to return")->capture_default_str();
    cmd->add_option("--model", search->model, "Encoder checkpoint (default: the one the index names)");
    cmd->callback([search, &session] { run_search(*search, session); });

    auto* eval = app.add_subcommand("eval", "Score a model: bleu, perplexity or novelty");
    eval->require_subcommand(1, 1);

    auto bleu = std::make_shared<EvalOptions>();
    cmd = eval->add_subcommand("bleu", "Corpus BLEU of generated bodies against reference bodies");
    cmd->add_option("--model", bleu->model, "Language-model checkpoint")->required();
    cmd->add_option("--data", bleu->data, "Split JSONL file")->required();
    cmd->add_option("--max-samples", bleu->max_samples, "Score only the first N samples (0 = all)");
    cmd->add_option("--out", bleu->out, "Also write the report here");
    bleu->gen.add_to(cmd);
    cmd->callback([bleu, &session] { run_eval_bleu(*bleu, session); });

    auto ppl = std::make_shared<EvalOptions>();
    cmd = eval->add_subcommand("perplexity", "Perplexity of a model on a split's code");
    cmd->add_option("--model", ppl->model, "Language-model checkpoint")->required();
    cmd->add_option("--data", ppl->data, "Split JSONL file")->required();
    cmd->add_option("--max-samples", ppl->max_samples, "Use only the first N samples (0 = all)");
    cmd->add_option("--out", ppl->out, "Also write the report here");
    cmd->callback([ppl, &session] { run_eval_perplexity(*ppl, session); });

    auto nov = std::make_shared<EvalOptions>();
    cmd = eval->add_subcommand("novelty", "Share of generated n-grams absent from a training corpus");
    cmd->add_option("--n", nov->n, "N-gram order")->capture_default_str();
    cmd->add_option("--corpus", nov->corpus, "Training split JSONL file")->required();
    cmd->add_option("--generated", nov->generated, "File of generated code");
    cmd->add_option("--model", nov->model, "Generate from this checkpoint instead");
    cmd->add_option("--data", nov->data, "Prompts for --model: split JSONL file");
    cmd->add_option("--max-samples", nov->max_samples, "Use only the first N prompts (0 = all)");
    cmd->add_option("--out", nov->out, "Also write the report here");
    nov->gen.add_to(cmd);
    cmd->callback([nov, &session] { run_eval_novelty(*nov, session); });
}

}  // namespace codeforge::cli

// SPDX-License-Identifier: Apache-2.0

#include <memory>
#include <ostream>

#include "cli_common.hpp"
#include "codeforge/tokenizers/codec.hpp"
#include "codeforge/util/atomic_write.hpp"
#include "codeforge/util/utf8.hpp"

namespace codeforge::cli {

namespace {

struct IngestOptions {
    std::string input, language = "python", out;
    double subset = 1.0, train = 0.8, valid = 0.1, test = 0.1;
    std::optional<std::uint64_t> seed;
};

void run_ingest(const IngestOptions& o, Session& s) {
    const auto loaded = corpus::load_jsonl(o.input, o.language);
    corpus::SplitSpec spec;
    spec.seed = resolve_seed(o.seed, nullptr);
    spec.train = o.train;
    spec.valid = o.valid;
    spec.test = o.test;
    spec.subset_fraction = o.subset;
    const auto parts = corpus::split(loaded.samples, spec);

    const fs::path dir(o.out);
    corpus::write_jsonl(dir / "train.jsonl", parts.train);
    corpus::write_jsonl(dir / "valid.jsonl", parts.valid);
    corpus::write_jsonl(dir / "test.jsonl", parts.test);

    const nlohmann::json summary{{"records", loaded.samples.size()},
                                 {"malformed_lines", loaded.malformed_lines},
                                 {"missing_fields", loaded.missing_fields},
                                 {"other_language", loaded.other_language},
                                 {"skipped", loaded.skipped()},
                                 {"retained", parts.train.size() + parts.valid.size() + parts.test.size()},
                                 {"train", parts.train.size()},
                                 {"valid", parts.valid.size()},
                                 {"test", parts.test.size()}};
    RunManifest m{"ingest",
                  {{"language", o.language},
                   {"subset", o.subset},
                   {"fractions", {o.train, o.valid, o.test}},
                   {"seed", spec.seed}},
                  spec.seed};
    m.inputs = {{"input", o.input}};
    m.outputs = {{"train", (dir / "train.jsonl").string()},
                 {"valid", (dir / "valid.jsonl").string()},
                 {"test", (dir / "test.jsonl").string()},
                 {"summary", summary}};
    write_manifest_in(dir, m, s);
    print_json(s.out, summary);
}

struct TokenizeOptions {
    std::string input, out, language;
    bool raw = false;
    std::size_t vocab_size = 0;
    std::string unknown = "fallback";
    std::string fallback_char = " ";
};

std::string corpus_text(const TokenizeOptions& o) {
    if (o.raw) return util::read_file(o.input);
    return corpus::lm_text(corpus::load_jsonl(o.input, o.language).samples);
}

void save_codec(const tokenizers::TokenCodec& codec, const TokenizeOptions& o, const std::string& kind,
                nlohmann::json config, Session& s) {
    codec.save(o.out);
    RunManifest m{"tokenize " + kind, std::move(config), 0};
    m.inputs = {{"input", o.input}, {"raw", o.raw}, {"language", o.language}};
    m.outputs = {{"codec", o.out}};
    write_manifest_beside(o.out, m, s);
    print_json(s.out, {{"codec", o.out}, {"type", codec.is_bpe() ? "bpe" : "char"}, {"vocab_size", codec.vocab_size()}});
}

void run_train_bpe(const TokenizeOptions& o, Session& s) {
    const tokenizers::TokenCodec codec(tokenizers::BpeModel::train(corpus_text(o), o.vocab_size));
    save_codec(codec, o, "train-bpe", {{"vocab_size", o.vocab_size}}, s);
}

void run_build_char(const TokenizeOptions& o, Session& s) {
    auto vocab = tokenizers::CharVocab::build(corpus_text(o));
    tokenizers::UnknownPolicy policy;
    if (o.unknown == "fail") policy = tokenizers::UnknownPolicy::fail;
    else if (o.unknown == "fallback") policy = tokenizers::UnknownPolicy::fallback;
    else throw std::invalid_argument("--unknown must be fail or fallback");
    TokenId fallback = 0;
    if (policy == tokenizers::UnknownPolicy::fallback) {
        const auto cps = util::decode_utf8(o.fallback_char);
        if (cps.size() != 1) throw std::invalid_argument("--fallback-char must be a single character");
        fallback = vocab.id_of(cps[0]).value_or(0);
    }
    const tokenizers::TokenCodec codec(std::move(vocab), policy, fallback);
    save_codec(codec, o, "build-char", {{"unknown", o.unknown}, {"fallback_char", o.fallback_char}}, s);
}

}  // namespace

void add_data_commands(CLI::App& app, Session& session) {
    auto ingest = std::make_shared<IngestOptions>();
    auto* cmd = app.add_subcommand("ingest", "Filter a JSONL corpus to one language and write train/valid/test splits");
    cmd->add_option("--input", ingest->input, "CodeSearchNet-format JSONL file")->required();
    cmd->add_option("--language", ingest->language, "Language to keep")->capture_default_str();
    cmd->add_option("--subset", ingest->subset, "Fraction of records retained")->capture_default_str();
    cmd->add_option("--train", ingest->train, "Train fraction")->capture_default_str();
    cmd->add_option("--valid", ingest->valid, "Validation fraction")->capture_default_str();
    cmd->add_option("--test", ingest->test, "Test fraction")->capture_default_str();
    cmd->add_option("--seed", ingest->seed, "Split seed (default: CODEFORGE_SEED or 0)");
    cmd->add_option("--out", ingest->out, "Output directory")->required();
    cmd->callback([ingest, &session] { run_ingest(*ingest, session); });

    auto stats = std::make_shared<TokenizeOptions>();
    cmd = app.add_subcommand("stats", "Print corpus statistics as JSON");
    cmd->add_option("--input", stats->input, "JSONL file")->required();
    cmd->add_option("--language", stats->language, "Only records of this language (default: all)");
    cmd->callback([stats, &session] {
        const auto loaded = corpus::load_jsonl(stats->input, stats->language);
        print_json(session.out, corpus::compute_stats(loaded.samples).to_json());
    });

    auto* tokenize = app.add_subcommand("tokenize", "Build a token codec");
    tokenize->require_subcommand(1, 1);

    auto bpe = std::make_shared<TokenizeOptions>();
    cmd = tokenize->add_subcommand("train-bpe", "Learn a byte-level BPE merge table");
    cmd->add_option("--vocab-size", bpe->vocab_size, "Target vocabulary size (>= 257)")->required();
    cmd->add_option("--input", bpe->input, "JSONL corpus (or text with --raw)")->required();
    cmd->add_option("--language", bpe->language, "Only records of this language (default: all)");
    cmd->add_flag("--raw", bpe->raw, "Treat the input as plain text");
    cmd->add_option("--out", bpe->out, "Codec JSON path")->required();
    cmd->callback([bpe, &session] { run_train_bpe(*bpe, session); });

    auto chr = std::make_shared<TokenizeOptions>();
    cmd = tokenize->add_subcommand("build-char", "Collect the character vocabulary");
    cmd->add_option("--input", chr->input, "JSONL corpus (or text with --raw)")->required();
    cmd->add_option("--language", chr->language, "Only records of this language (default: all)");
    cmd->add_flag("--raw", chr->raw, "Treat the input as plain text");
    cmd->add_option("--unknown", chr->unknown, "Unseen characters: fail or fallback")->capture_default_str();
    cmd->add_option("--fallback-char", chr->fallback_char, "Character unseen input maps to")->capture_default_str();
    cmd->add_option("--out", chr->out, "Codec JSON path")->required();
    cmd->callback([chr, &session] { run_build_char(*chr, session); });
}

}  // namespace codeforge::cli

// SPDX-License-Identifier: Apache-2.0

#include <memory>
#include <ostream>

#include "cli_common.hpp"
#include "codeforge/evalgen/evalgen.hpp"
#include "codeforge/models/char_lm.hpp"
#include "codeforge/models/transformer.hpp"
#include "codeforge/retrieval/retrieval.hpp"
#include "codeforge/training/training.hpp"
#include "codeforge/util/atomic_write.hpp"

namespace codeforge::cli {

namespace {

using training::TrainConfig;

/// Training flags; unset ones leave the config-file or default value alone.
struct TrainFlags {
    std::optional<std::size_t> batch_size, seq_len, epochs;
    std::optional<double> lr, lr_decay, clip, dropout, reg_weight;
    std::optional<std::string> clip_mode, optimizer;
    std::optional<std::uint64_t> seed;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--batch-size", batch_size, "Mini-batch size");
        cmd->add_option("--seq-len", seq_len, "Window length in tokens");
        cmd->add_option("--epochs", epochs, "Epoch count");
        cmd->add_option("--lr", lr, "Starter learning rate");
        cmd->add_option("--lr-decay", lr_decay, "Learning-rate decay per epoch");
        cmd->add_option("--clip", clip, "Gradient clip limit");
        cmd->add_option("--clip-mode", clip_mode, "element or global_norm");
        cmd->add_option("--dropout", dropout, "Dropout rate");
        cmd->add_option("--reg-weight", reg_weight, "L2 penalty coefficient");
        cmd->add_option("--optimizer", optimizer, "sgd or adam");
        cmd->add_option("--seed", seed, "Seed (default: config, then CODEFORGE_SEED, then 0)");
    }

    nlohmann::json overrides() const {
        nlohmann::json j = nlohmann::json::object();
        if (batch_size) j["batch_size"] = *batch_size;
        if (seq_len) j["seq_len"] = *seq_len;
        if (epochs) j["epochs"] = *epochs;
        if (lr) j["starter_lr"] = *lr;
        if (lr_decay) j["lr_decay"] = *lr_decay;
        if (clip) j["clip"] = *clip;
        if (clip_mode) j["clip_mode"] = *clip_mode;
        if (dropout) j["dropout"] = *dropout;
        if (reg_weight) j["reg_weight"] = *reg_weight;
        if (optimizer) j["optimizer"] = *optimizer;
        return j;
    }
};

/// defaults <- config file section <- flags, with the seed resolved last.
TrainConfig resolve_train(const nlohmann::json& file_section, const TrainFlags& flags, TrainConfig defaults) {
    const auto section = file_section.is_null() ? nlohmann::json::object() : file_section;
    TrainConfig cfg = TrainConfig::from_json(section, defaults);
    cfg = TrainConfig::from_json(flags.overrides(), cfg);
    cfg.seed = resolve_seed(flags.seed, section.value("seed", nlohmann::json()));
    cfg.validate();
    return cfg;
}

struct ModelFlags {
    std::optional<std::string> cell;
    std::optional<std::size_t> hidden, layers, heads, width, ffn_width, context;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--cell", cell, "Recurrent cell: lstm, rnn or gru");
        cmd->add_option("--hidden", hidden, "Recurrent hidden size");
        cmd->add_option("--layers", layers, "Layer count");
        cmd->add_option("--heads", heads, "Attention heads");
        cmd->add_option("--width", width, "Transformer model width");
        cmd->add_option("--ffn-width", ffn_width, "Transformer feed-forward width");
        cmd->add_option("--context", context, "Transformer context length");
    }
};

nlohmann::json resolve_architecture(const std::string& arch, const nlohmann::json& file_section, const ModelFlags& f,
                                    std::size_t vocab, double dropout) {
    nlohmann::json j;
    if (arch == "char") j = models::CharLmConfig{}.to_json();
    else if (arch == "transformer") j = models::TransformerConfig{}.to_json();
    else throw std::invalid_argument("--arch must be char or transformer, got '" + arch + "'");
    if (!file_section.is_null()) j.merge_patch(file_section);
    if (f.layers) j["layers"] = *f.layers;
    if (arch == "char") {
        if (f.cell) j["cell"] = *f.cell;
        if (f.hidden) j["hidden"] = *f.hidden;
    } else {
        if (f.heads) j["heads"] = *f.heads;
        if (f.width) {
            j["width"] = *f.width;
            if (!f.ffn_width && !(file_section.is_object() && file_section.contains("ffn_width")))
                j["ffn_width"] = 4 * *f.width;
        }
        if (f.ffn_width) j["ffn_width"] = *f.ffn_width;
        if (f.context) j["context"] = *f.context;
    }
    if (j.contains("vocab") && file_section.is_object() && file_section.contains("vocab") &&
        j["vocab"].get<std::size_t>() != vocab)
        throw std::invalid_argument("configured vocabulary " + j["vocab"].dump() + " differs from codec vocabulary " +
                                    std::to_string(vocab));
    j["vocab"] = vocab;
    j["dropout"] = dropout;
    // Round-trip through the typed config to validate and normalize.
    if (arch == "char") {
        const auto c = models::CharLmConfig::from_json(j);
        c.validate();
        return c.to_json();
    }
    const auto c = models::TransformerConfig::from_json(j);
    c.validate();
    return c.to_json();
}

std::vector<TokenId> encode_split(const tokenizers::TokenCodec& codec, const std::vector<corpus::Sample>& samples) {
    if (samples.empty()) return {};
    return codec.encode(corpus::lm_text(samples));
}

void write_report(const fs::path& dir, const training::TrainReport& report) {
    util::write_file_atomic(dir / "report.json", report.to_json().dump(2) + "\n");
    util::write_file_atomic(dir / "curve.txt", report.curve_text());
}

std::function<void(const training::EpochRecord&)> progress_printer(bool enabled, std::ostream& err) {
    if (!enabled) return {};
    return [&err](const training::EpochRecord& r) {
        nlohmann::json line{{"epoch", r.epoch}, {"lr", r.lr}, {"train_loss", r.train_loss}};
        if (r.valid_loss) line["valid_loss"] = *r.valid_loss;
        if (r.train_mrr) line["train_mrr"] = *r.train_mrr;
        if (r.valid_mrr) line["valid_mrr"] = *r.valid_mrr;
        err << line.dump() << '\n';
    };
}

// ---- train-lm ----------------------------------------------------------

struct TrainLmOptions {
    std::optional<std::string> arch, config;
    std::string codec, data, out;
    bool progress = false;
    TrainFlags train;
    ModelFlags model;
};

void run_train_lm(const TrainLmOptions& o, Session& s) {
    const auto file = read_config_file(o.config);
    const std::string arch = o.arch.value_or(file.value("arch", std::string("char")));
    const auto codec = tokenizers::TokenCodec::load(o.codec);
    const TrainConfig cfg = resolve_train(file.value("train", nlohmann::json()), o.train, TrainConfig{});
    const auto architecture =
        resolve_architecture(arch, file.value("model", nlohmann::json()), o.model, codec.vocab_size(), cfg.dropout);

    const fs::path data(o.data), out(o.out);
    const auto train = load_split(data / "train.jsonl");
    const auto valid_path = optional_split(data, "valid");
    const auto train_ids = encode_split(codec, train);
    const auto valid_ids = valid_path ? encode_split(codec, load_split(*valid_path)) : std::vector<TokenId>{};

    auto model = models::make_language_model(architecture, cfg.seed);
    training::TrainOutputs outputs{out, codec.to_json(), progress_printer(o.progress, s.err)};
    const auto report = training::train_lm(*model, train_ids, valid_ids, cfg, outputs);
    write_report(out, report);

    RunManifest m{"train-lm", {{"arch", arch}, {"train", cfg.to_json()}, {"model", architecture}}, cfg.seed};
    m.inputs = {{"codec", o.codec}, {"data", o.data}};
    m.outputs = {{"checkpoint", (out / "checkpoint.ckpt").string()},
                 {"best", report.best_checkpoint.string()},
                 {"report", (out / "report.json").string()},
                 {"curve", (out / "curve.txt").string()}};
    write_manifest_in(out, m, s);
    print_json(s.out, report.to_json());
}

// ---- train-search ------------------------------------------------------

struct TrainSearchOptions {
    std::optional<std::string> config, query_enc, code_enc;
    std::string data, out, index_split = "test";
    std::optional<std::size_t> embed_dim, output_dim, hidden, vocab_size;
    bool progress = false;
    TrainFlags train;
};

models::EncoderConfig resolve_encoder(const nlohmann::json& file_section, const std::optional<std::string>& kind,
                                      const TrainSearchOptions& o, std::size_t vocab) {
    auto j = models::EncoderConfig{}.to_json();
    if (!file_section.is_null()) j.merge_patch(file_section);
    if (kind) j["kind"] = *kind;
    if (o.embed_dim) j["embed_dim"] = *o.embed_dim;
    if (o.output_dim) j["output_dim"] = *o.output_dim;
    if (o.hidden) j["hidden"] = *o.hidden;
    j["vocab"] = vocab;
    auto c = models::EncoderConfig::from_json(j);
    c.validate();
    return c;
}

void run_train_search(const TrainSearchOptions& o, Session& s) {
    const auto file = read_config_file(o.config);
    const TrainConfig cfg = resolve_train(file.value("train", nlohmann::json()), o.train, TrainConfig{});
    const fs::path data(o.data), out(o.out);

    const auto train = load_split(data / "train.jsonl");
    std::vector<std::vector<std::string>> token_lists;
    for (const auto& smp : train) {
        if (!smp.is_paired()) continue;
        for (const auto* side : {&smp.docstring_tokens, &smp.code_tokens}) {
            std::vector<std::string> folded;
            for (const auto& t : *side) folded.push_back(tokenizers::fold_case(t));
            token_lists.push_back(std::move(folded));
        }
    }
    const std::size_t max_vocab = o.vocab_size.value_or(file.value("vocab_size", std::size_t{10000}));
    const auto vocab = tokenizers::WordVocab::build(token_lists, max_vocab);

    const auto query = resolve_encoder(file.value("query", nlohmann::json()), o.query_enc, o, vocab.size());
    const auto code = resolve_encoder(file.value("code", nlohmann::json()), o.code_enc, o, vocab.size());
    models::DualEncoder model(query, code, cfg.seed);

    const auto train_pairs = retrieval::encode_pairs(train, vocab);
    retrieval::EncodedPairs valid_pairs;
    if (auto p = optional_split(data, "valid")) valid_pairs = retrieval::encode_pairs(load_split(*p), vocab);

    training::TrainOutputs outputs{out, vocab.to_json(), progress_printer(o.progress, s.err)};
    const auto report = training::train_dual_encoder(model, train_pairs, valid_pairs, cfg, outputs);
    write_report(out, report);

    RunManifest m{"train-search",
                  {{"train", cfg.to_json()},
                   {"query", query.to_json()},
                   {"code", code.to_json()},
                   {"vocab_size", max_vocab},
                   {"index_split", o.index_split}},
                  cfg.seed};
    m.inputs = {{"data", o.data}};
    m.outputs = {{"checkpoint", (out / "checkpoint.ckpt").string()},
                 {"best", report.best_checkpoint.string()},
                 {"report", (out / "report.json").string()}};

    nlohmann::json summary = report.to_json();
    if (auto split_path = optional_split(data, o.index_split); split_path && !report.best_checkpoint.empty()) {
        const auto best = retrieval::load_dual_encoder(report.best_checkpoint);
        const auto index = retrieval::SnippetIndex::build(load_split(*split_path), best.model, best.vocab);
        index.save(out / "index.ckpt", {{"model", "best.ckpt"}, {"split", o.index_split}});
        m.outputs["index"] = (out / "index.ckpt").string();
        summary["index_entries"] = index.size();
    }
    write_manifest_in(out, m, s);
    print_json(s.out, summary);
}

// ---- sweep -------------------------------------------------------------

struct SweepOptions {
    std::optional<std::string> grid, arch, out, preset;
    std::string data, codec;
    std::optional<std::size_t> max_bleu_samples;
    std::optional<std::uint64_t> seed;
};

nlohmann::json preset_axes(const std::string& name) {
    if (name != "batch-lr-reg") throw std::invalid_argument("unknown sweep preset '" + name + "' (expected batch-lr-reg)");
    return nlohmann::json::array({{{"name", "batch_size"}, {"values", {64, 128}}},
                                  {{"name", "starter_lr"}, {"values", {0.02, 0.002, 0.0002}}},
                                  {{"name", "reg_weight"}, {"values", {0.1, 0.01}}}});
}

evalgen::GenConfig resolve_generation(const nlohmann::json& j) {
    evalgen::GenConfig g;
    g.stop_at_dedent = true;
    if (j.is_null()) return g;
    g.max_new_tokens = j.value("max_new_tokens", g.max_new_tokens);
    g.temperature = j.value("temperature", g.temperature);
    g.strategy = evalgen::parse_strategy(j.value("strategy", evalgen::to_string(g.strategy)));
    g.top_k = j.value("top_k", g.top_k);
    g.stop_at_dedent = j.value("stop_at_dedent", g.stop_at_dedent);
    g.seed = j.value("seed", g.seed);
    g.validate();
    return g;
}

void run_sweep(const SweepOptions& o, Session& s) {
    if (!o.grid && !o.preset) throw std::invalid_argument("sweep needs --grid or --preset");
    const auto file = o.grid ? read_config_file(o.grid) : nlohmann::json::object();
    const std::string arch = o.arch.value_or(file.value("arch", std::string("char")));
    const auto codec = tokenizers::TokenCodec::load(o.codec);

    TrainConfig defaults;
    // Char-LM sweeps default to plain SGD, transformers to Adam.
    defaults.optimizer = arch == "char" ? numeric::OptimizerKind::sgd : numeric::OptimizerKind::adam;
    TrainFlags flags;
    flags.seed = o.seed;
    const TrainConfig base = resolve_train(file.value("base", nlohmann::json()), flags, defaults);
    const auto axes = o.preset ? preset_axes(*o.preset) : file.at("axes");
    const auto grid = training::expand_grid(base, axes);

    const auto architecture =
        resolve_architecture(arch, file.value("model", nlohmann::json()), ModelFlags{}, codec.vocab_size(), 0.0);
    const auto gen = resolve_generation(file.value("generation", nlohmann::json()));
    const std::size_t max_samples = o.max_bleu_samples.value_or(file.value("max_bleu_samples", std::size_t{8}));
    const std::string train_split = file.value("train_split", std::string("train"));
    const std::string eval_split = file.value("eval_split", std::string("valid"));
    const fs::path data(o.data);

    const auto eval = evalgen::lm_bleu_sweep_eval(load_split(data / (train_split + ".jsonl")),
                                                  load_split(data / (eval_split + ".jsonl")), codec, architecture, gen,
                                                  max_samples);
    const auto table = training::run_sweep(grid, eval);
    auto result = table.to_json("train_bleu", "eval_bleu");
    result["arch"] = arch;

    if (o.out) {
        const fs::path out(*o.out);
        util::write_file_atomic(out / "sweep.json", result.dump(2) + "\n");
        RunManifest m{"sweep",
                      {{"arch", arch},
                       {"base", base.to_json()},
                       {"axes", axes},
                       {"model", architecture},
                       {"generation", gen.to_json()},
                       {"max_bleu_samples", max_samples},
                       {"train_split", train_split},
                       {"eval_split", eval_split}},
                      base.seed};
        m.inputs = {{"data", o.data}, {"codec", o.codec}};
        m.outputs = {{"table", (out / "sweep.json").string()}};
        write_manifest_in(out, m, s);
    }
    print_json(s.out, result);
}

}  // namespace

void add_train_commands(CLI::App& app, Session& session) {
    auto lm = std::make_shared<TrainLmOptions>();
    auto* cmd = app.add_subcommand("train-lm", "Train a character-level or transformer language model");
    cmd->add_option("--arch", lm->arch, "char or transformer (default char)");
    cmd->add_option("--codec", lm->codec, "Codec JSON from `tokenize`")->required();
    cmd->add_option("--config", lm->config, "JSON config: {arch, train, model} or a run manifest");
    cmd->add_option("--data", lm->data, "Directory holding train.jsonl and optionally valid.jsonl")->required();
    cmd->add_option("--out", lm->out, "Output directory")->required();
    cmd->add_flag("--progress", lm->progress, "Print one JSON line per epoch to stderr");
    lm->train.add_to(cmd);
    lm->model.add_to(cmd);
    cmd->callback([lm, &session] { run_train_lm(*lm, session); });

    auto search = std::make_shared<TrainSearchOptions>();
    cmd = app.add_subcommand("train-search", "Train a query/code dual encoder and index a split");
    cmd->add_option("--query-enc", search->query_enc, "Query encoder: nbow or rnn (default nbow)");
    cmd->add_option("--code-enc", search->code_enc, "Code encoder: nbow or rnn (default nbow)");
    cmd->add_option("--config", search->config, "JSON config: {train, query, code, vocab_size} or a run manifest");
    cmd->add_option("--data", search->data, "Directory holding train.jsonl (valid.jsonl, test.jsonl optional)")
        ->required();
    cmd->add_option("--out", search->out, "Output directory")->required();
    cmd->add_option("--index-split", search->index_split, "Split to index after training")->capture_default_str();
    cmd->add_option("--embed-dim", search->embed_dim, "Token embedding width");
    cmd->add_option("--output-dim", search->output_dim, "Shared encoding width");
    cmd->add_option("--hidden", search->hidden, "GRU hidden size per direction");
    cmd->add_option("--vocab-size", search->vocab_size, "Word vocabulary cap");
    cmd->add_flag("--progress", search->progress, "Print one JSON line per epoch to stderr");
    search->train.add_to(cmd);
    cmd->callback([search, &session] { run_train_search(*search, session); });

    auto sweep = std::make_shared<SweepOptions>();
    cmd = app.add_subcommand("sweep", "Train one LM per grid point and tabulate train/eval BLEU");
    cmd->add_option("--grid", sweep->grid, "Grid JSON: {arch, base, axes, model, generation, max_bleu_samples}");
    cmd->add_option("--preset", sweep->preset, "Built-in axes: batch-lr-reg (batch x lr x reg, 12 points)");
    cmd->add_option("--arch", sweep->arch, "char or transformer (default char)");
    cmd->add_option("--data", sweep->data, "Directory holding the train and eval splits")->required();
    cmd->add_option("--codec", sweep->codec, "Codec JSON")->required();
    cmd->add_option("--max-bleu-samples", sweep->max_bleu_samples, "Samples scored per split (default 8)");
    cmd->add_option("--seed", sweep->seed, "Base seed (default: grid, then CODEFORGE_SEED, then 0)");
    cmd->add_option("--out", sweep->out, "Directory for sweep.json and the run manifest");
    cmd->callback([sweep, &session] { run_sweep(*sweep, session); });
}

}  // namespace codeforge::cli

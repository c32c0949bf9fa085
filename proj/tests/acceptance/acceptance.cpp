// SPDX-License-Identifier: Apache-2.0

// Acceptance criteria. With no arguments every criterion runs; otherwise the
// listed ids. The gradient criterion lives in a separate double-precision
// binary and is launched from here.

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <tuple>

#include "json.hpp"

#include "cli.hpp"
#include "codeforge/corpus/corpus.hpp"
#include "codeforge/evalgen/evalgen.hpp"
#include "codeforge/models/char_lm.hpp"
#include "codeforge/models/transformer.hpp"
#include "codeforge/retrieval/retrieval.hpp"
#include "codeforge/tokenizers/bpe.hpp"
#include "codeforge/training/training.hpp"
#include "codeforge/util/atomic_write.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "report.hpp"

namespace fs = std::filesystem;
using namespace codeforge;
using acceptance::fmt;
using acceptance::Outcome;
using numeric::real;
using numeric::Tensor;
using numeric::TokenId;

namespace {

// Pinned tolerances.
constexpr double kLossTolerance = 1e-6;
constexpr double kBleuTolerance = 1e-9;
constexpr double kMrrTolerance = 1e-12;
constexpr double kOverfitLoss = 0.1;
constexpr double kRetrievalMrr = 0.9;
constexpr double kUntrainedLossBand = 0.10;
constexpr double kPaperParams = 117e6;
constexpr double kParamBand = 0.05;

Tensor to_tensor(const oracles::Matrix& m) {
    const std::size_t n = m.size();
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) t.data()[i * n + j] = static_cast<real>(m[i][j]);
    return t;
}

// Entries are rounded to the library's precision first, so both sides see
// the same matrix.
oracles::Matrix random_matrix(std::size_t n, std::mt19937_64& gen, double spread) {
    std::normal_distribution<double> normal(0.0, spread);
    oracles::Matrix m(n, std::vector<double>(n));
    for (auto& row : m)
        for (auto& v : row) v = static_cast<double>(static_cast<real>(normal(gen)));
    return m;
}

struct Cli {
    int code;
    std::string out, err;
};

Cli cli(std::vector<std::string> args) {
    args.insert(args.begin(), "codeforge");
    std::ostringstream out, err;
    const int code = cli::dispatch(args, out, err);
    return {code, out.str(), err.str()};
}

void require_ok(const Cli& r, const std::string& what) {
    if (r.code != 0) throw std::runtime_error(what + " exited " + std::to_string(r.code) + ": " + r.err);
}

Outcome loss_oracle() {
    std::mt19937_64 gen(2024);
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const auto m = random_matrix(1 + gen() % 16, gen, 2.0);
        const double got = retrieval::eq1_loss(to_tensor(m)).item();
        worst = std::max(worst, std::abs(got - oracles::retrieval_loss(m)));
    }
    return {worst < kLossTolerance, "200 matrices, max |diff| " + fmt("%.2e", worst) + ", limit 1e-6"};
}

Outcome mrr_exactness() {
    const std::vector<std::size_t> r123{1, 2, 3};
    const double m123 = retrieval::mrr(r123);
    oracles::Matrix dominant(5, std::vector<double>(5, 0.0));
    for (std::size_t i = 0; i < 5; ++i) dominant[i][i] = 3.0;
    const double ones = retrieval::mrr(retrieval::batch_ranks(to_tensor(dominant)));
    std::mt19937_64 gen(7);
    int invariant = 0, oracle_agree = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const auto m = random_matrix(2 + gen() % 15, gen, 1.0);
        auto t = m;
        for (auto& row : t)
            for (auto& v : row) v = std::exp(v / 2) * 3 - 1;
        const auto ranks = retrieval::batch_ranks(to_tensor(m));
        invariant += ranks == retrieval::batch_ranks(to_tensor(t));
        oracle_agree += ranks == oracles::sorted_ranks(m);
    }
    const bool pass = std::abs(m123 - 11.0 / 18.0) < kMrrTolerance && ones == 1.0 && invariant == 100 && oracle_agree == 100;
    return {pass, "mrr{1,2,3} " + fmt("%.17g", m123) + ", all-first " + fmt("%g", ones) + ", invariant " +
                      std::to_string(invariant) + "/100, oracle " + std::to_string(oracle_agree) + "/100"};
}

Outcome gradients() {
    const std::string cmd = std::string("\"") + CODEFORGE_GRADIENT_BINARY + "\"";
    const int status = std::system(cmd.c_str());
    return {status == 0, "double-precision checker exit status " + std::to_string(status)};
}

// Logits before the perturbed position must not change by a single bit.
bool causal(models::LanguageModel& model, std::size_t steps, std::mt19937_64& gen, int& comparisons) {
    const std::size_t vocab = model.vocab_size();
    models::TokenBatch base{2, steps, std::vector<TokenId>(2 * steps)};
    for (auto& id : base.ids) id = static_cast<TokenId>(gen() % vocab);
    const auto reference = model.forward(base, false, nullptr);
    for (std::size_t t = 1; t < steps; ++t) {
        auto changed = base;
        for (std::size_t b = 0; b < 2; ++b) {
            auto& id = changed.ids[b * steps + t];
            id = static_cast<TokenId>((id + 1 + gen() % (vocab - 1)) % vocab);
        }
        const auto logits = model.forward(changed, false, nullptr);
        for (std::size_t b = 0; b < 2; ++b) {
            const auto* a = reference.data().data() + b * steps * vocab;
            const auto* c = logits.data().data() + b * steps * vocab;
            if (std::memcmp(a, c, t * vocab * sizeof(real)) != 0) return false;
        }
        ++comparisons;
    }
    return true;
}

Outcome causality() {
    std::mt19937_64 gen(5);
    int comparisons = 0;
    bool pass = true;
    std::string failed;
    for (auto cell : {models::CellKind::lstm, models::CellKind::gru, models::CellKind::rnn}) {
        models::CharLmConfig c;
        c.cell = cell;
        c.vocab = 13;
        c.hidden = 24;
        c.layers = 2;
        c.init_stddev = 0.3;
        models::CharLm lm(c, 3);
        if (!causal(lm, 24, gen, comparisons)) {
            pass = false;
            failed += " char_lm";
        }
    }
    models::TransformerConfig tc;
    tc.layers = 2;
    tc.heads = 2;
    tc.width = 16;
    tc.ffn_width = 32;
    tc.context = 24;
    tc.vocab = 13;
    models::TransformerLm tlm(tc, 3);
    if (!causal(tlm, 24, gen, comparisons)) {
        pass = false;
        failed += " transformer";
    }
    return {pass, std::to_string(comparisons) + " perturbations, earlier logits bit-identical" +
                      (failed.empty() ? "" : "; violated by" + failed)};
}

Outcome overfit() {
    const std::string text = fixtures::repeated(fixtures::kFunction, 50);
    const tokenizers::TokenCodec codec(tokenizers::CharVocab::build(text));
    const auto ids = codec.encode(text);
    models::CharLmConfig mc;  // LSTM, 128 hidden, 2 layers
    mc.vocab = codec.vocab_size();
    models::CharLm model(mc, 1);
    training::TrainConfig cfg;  // Adam, lr 0.002 decaying 0.97 per epoch, clip 5
    cfg.epochs = 30;
    cfg.batch_size = 2;
    cfg.seq_len = 128;
    cfg.seed = 1;
    const auto report = training::train_lm(model, ids, {}, cfg);
    double best = 1e300;
    for (const auto& e : report.epochs) best = std::min(best, e.train_loss);
    const double final_loss = report.epochs.back().train_loss;

    evalgen::GenConfig greedy;
    greedy.max_new_tokens = fixtures::kFunction.size() - 10;
    const auto regenerated = evalgen::generate(model, codec, fixtures::kFunction.substr(0, 10), greedy);
    const bool verbatim = regenerated == fixtures::kFunction.substr(10);
    const double ppl = evalgen::perplexity(model, codec, std::vector<std::string>{fixtures::kFunction});
    return {final_loss < kOverfitLoss && verbatim,
            "final train loss " + fmt("%.4f", final_loss) + " (best " + fmt("%.4f", best) +
                "), limit 0.1; greedy body " + (verbatim ? "verbatim" : "differs") + "; fixture perplexity " +
                fmt("%.3f", ppl)};
}

Outcome retrieval_overfit() {
    std::mt19937_64 gen(31);
    std::vector<corpus::Sample> samples;
    for (int i = 0; i < 100; ++i) {
        std::vector<std::string> words(4 + gen() % 6);
        for (auto& w : words) w = "w" + std::to_string(gen() % 300);
        corpus::Sample s;
        s.repo = "synthetic/" + std::to_string(i);
        s.path = "s.py";
        s.language = "python";
        s.code_tokens = words;
        s.docstring_tokens = words;
        for (const auto& w : words) s.code += w + " ";
        s.docstring = s.code;
        samples.push_back(std::move(s));
    }
    std::vector<std::vector<std::string>> lists;
    for (const auto& s : samples) lists.push_back(s.code_tokens);
    const auto vocab = tokenizers::WordVocab::build(lists, 10000);
    const auto pairs = retrieval::encode_pairs(samples, vocab);

    models::EncoderConfig ec;
    ec.kind = models::EncoderKind::nbow;
    ec.vocab = vocab.size();
    ec.embed_dim = 64;
    ec.output_dim = 64;
    models::DualEncoder model(ec, ec, 17);
    const auto scores = models::DualEncoder::score_matrix(model.encode_queries(pairs.queries),
                                                          model.encode_code(pairs.code));
    const double untrained = retrieval::eq1_loss(scores).item();
    const double ln_n = std::log(static_cast<double>(pairs.size()));
    const double gap = std::abs(untrained - ln_n) / ln_n;

    training::TrainConfig cfg;
    cfg.batch_size = 20;
    cfg.epochs = 50;
    cfg.starter_lr = 0.01;
    cfg.seed = 4;
    const auto report = training::train_dual_encoder(model, pairs, {}, cfg);
    double best = 0.0;
    std::size_t reached = 0;
    for (const auto& e : report.epochs) {
        const double m = e.train_mrr.value_or(0.0);
        if (m > kRetrievalMrr && reached == 0) reached = e.epoch + 1;
        best = std::max(best, m);
    }
    return {pairs.size() == 100 && reached > 0 && gap < kUntrainedLossBand,
            "untrained loss " + fmt("%.4f", untrained) + " vs ln N " + fmt("%.4f", ln_n) + " (" +
                fmt("%.2f", 100 * gap) + "%, limit 10%); best train MRR " + fmt("%.4f", best) +
                (reached ? ", above 0.9 at epoch " + std::to_string(reached) : ", never above 0.9")};
}

Outcome bleu_oracle() {
    std::mt19937_64 gen(77);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t pairs = 1 + gen() % 6, alphabet = 2 + gen() % 4;
        std::vector<evalgen::TokenList> cand(pairs), ref(pairs);
        for (auto* side : {&cand, &ref})
            for (auto& seq : *side) {
                seq.resize(gen() % 14);
                for (auto& t : seq) t = std::string(1, static_cast<char>('a' + gen() % alphabet));
            }
        const auto expect = oracles::corpus_bleu(cand, ref);
        const auto got = evalgen::corpus_bleu(cand, ref);
        worst = std::max(worst, std::abs(got.bleu - expect.score));
        if (got.pairs > 0) {
            worst = std::max(worst, std::abs(got.brevity_penalty - expect.brevity_penalty));
            for (int n = 0; n < 4; ++n) worst = std::max(worst, std::abs(got.precisions[n] - expect.precisions[n]));
        }
    }
    const std::vector<evalgen::TokenList> ref{tokenizers::split_code_tokens("for i in range ( n ) : total += i")};
    const double identity = evalgen::corpus_bleu(ref, ref).bleu;
    evalgen::TokenList half(ref[0].begin(), ref[0].begin() + static_cast<std::ptrdiff_t>(ref[0].size() / 2));
    const double prefix = evalgen::corpus_bleu(std::vector<evalgen::TokenList>{half}, ref).bleu;
    const double prefix_gap = std::abs(prefix - std::exp(-1.0));
    return {worst < kBleuTolerance && std::abs(identity - 1.0) < kBleuTolerance && prefix_gap < kBleuTolerance,
            "oracle max |diff| " + fmt("%.1e", worst) + "; identity " + fmt("%.12f", identity) +
                "; half prefix off e^-1 by " + fmt("%.1e", prefix_gap) + ", limit 1e-9"};
}

Outcome parameter_count() {
    const auto count = static_cast<double>(models::transformer_parameter_count(models::TransformerConfig::gpt2_small()));
    const double off = std::abs(count - kPaperParams) / kPaperParams;
    return {off <= kParamBand, "reference config has " + fmt("%.0f", count) + " parameters, " +
                                   fmt("%.2f", 100 * off) + "% from 117M, limit 5%"};
}

// Synthetic corpus ingested into train/valid/test splits plus a char codec.
void prepare_data(const fixtures::TempDir& dir) {
    corpus::write_jsonl(dir / "all.jsonl", fixtures::synthetic_corpus(80, 3));
    require_ok(cli({"ingest", "--input", (dir / "all.jsonl").string(), "--language", "python", "--out",
                    (dir / "data").string(), "--seed", "1"}),
               "ingest");
    require_ok(cli({"tokenize", "build-char", "--input", (dir / "data" / "train.jsonl").string(), "--out",
                    (dir / "char.json").string()}),
               "tokenize");
}

Outcome sweep_shape() {
    fixtures::TempDir dir("accept_sweep");
    prepare_data(dir);
    util::write_file_atomic(dir / "grid.json", nlohmann::json{{"base", {{"epochs", 1}, {"seq_len", 32}}},
                                                         {"model", {{"hidden", 32}, {"layers", 1}}},
                                                         {"generation", {{"max_new_tokens", 40}}}}
                                              .dump());
    std::string first;
    for (const char* out : {"sw1", "sw2"}) {
        require_ok(cli({"sweep", "--grid", (dir / "grid.json").string(), "--preset", "batch-lr-reg", "--data",
                        (dir / "data").string(), "--codec", (dir / "char.json").string(), "--max-bleu-samples", "4",
                        "--seed", "9", "--out", (dir / out).string()}),
                   "sweep");
        if (first.empty()) first = util::read_file(dir / out / "sweep.json");
    }
    const bool identical = first == util::read_file(dir / "sw2" / "sweep.json");
    const auto table = nlohmann::json::parse(first);
    const auto& rows = table.at("rows");
    std::set<std::tuple<std::size_t, double, double>> grid;
    bool columns = true;
    for (const auto& r : rows) {
        columns = columns && r.at("train_bleu").is_number() && r.at("eval_bleu").is_number() && r.at("error").is_null();
        const auto& c = r.at("config");
        grid.insert({c.at("batch_size").get<std::size_t>(), c.at("starter_lr").get<double>(),
                     c.at("reg_weight").get<double>()});
    }
    std::set<std::tuple<std::size_t, double, double>> expected;
    for (std::size_t b : {64, 128})
        for (double lr : {0.02, 0.002, 0.0002})
            for (double reg : {0.1, 0.01}) expected.insert({b, lr, reg});
    const bool pass = rows.size() == 12 && columns && grid == expected && identical;
    return {pass, std::to_string(rows.size()) + " rows, " + (grid == expected ? "full" : "wrong") + " grid, BLEU columns " +
                      (columns ? "present" : "missing") + ", reruns " + (identical ? "byte-identical" : "differ")};
}

Outcome bpe_laws() {
    std::mt19937_64 gen(99);
    std::string training_text = fixtures::repeated(fixtures::kFunction, 3);
    for (int i = 0; i < 200; ++i) training_text += fixtures::random_unicode(gen, 20) + " ";
    const auto bpe = tokenizers::BpeModel::train(training_text, 700);
    int round_trips = 0;
    for (int i = 0; i < 1000; ++i) {
        const auto text = fixtures::random_unicode(gen, 40);
        round_trips += bpe.decode(bpe.encode(text)) == text;
    }
    const auto tiny = tokenizers::BpeModel::train("aaab aaab", 257);
    const bool first_merge = !tiny.merges().empty() && tiny.merges()[0] == tokenizers::BpeModel::Merge{'a', 'a'};

    const std::string held_out = fixtures::synthetic_corpus(5, 8)[0].code + fixtures::kFunction;
    bool monotone = true;
    std::size_t previous = SIZE_MAX;
    for (std::size_t k = 0; k <= bpe.merges().size(); ++k) {
        const auto count = bpe.prefix(k).encode(held_out).size();
        monotone = monotone && count <= previous;
        previous = count;
    }
    return {round_trips == 1000 && first_merge && monotone,
            std::to_string(round_trips) + "/1000 unicode round trips; first merge " +
                (first_merge ? "(a, a)" : "wrong") + "; token count " + (monotone ? "non-increasing" : "increases") +
                " over " + std::to_string(bpe.merges().size()) + " merges"};
}

// Runs one training command twice into the same directory and compares
// every checkpoint byte for byte.
bool twice_identical(const fixtures::TempDir& dir, const std::vector<std::string>& args, std::size_t& files) {
    const auto out = dir / "run";
    std::map<std::string, std::string> first;
    for (int pass = 0; pass < 2; ++pass) {
        fs::remove_all(out);
        auto full = args;
        full.insert(full.end(), {"--out", out.string()});
        require_ok(cli(full), args[0]);
        for (const auto& entry : fs::directory_iterator(out)) {
            if (entry.path().extension() != ".ckpt") continue;
            const auto bytes = util::read_file(entry.path());
            const auto name = entry.path().filename().string();
            if (pass == 0) first[name] = bytes;
            else if (first[name] != bytes) return false;
        }
    }
    files += first.size();
    return !first.empty();
}

Outcome determinism() {
    fixtures::TempDir dir("accept_determinism");
    prepare_data(dir);
    const auto data = (dir / "data").string(), codec = (dir / "char.json").string();
    std::size_t files = 0;
    std::vector<std::string> differing;
    const std::vector<std::pair<std::string, std::vector<std::string>>> runs{
        {"train-lm char",
         {"train-lm", "--codec", codec, "--data", data, "--epochs", "2", "--batch-size", "4", "--seq-len", "32",
          "--hidden", "16", "--layers", "1", "--dropout", "0.1", "--seed", "3"}},
        {"train-lm transformer",
         {"train-lm", "--arch", "transformer", "--codec", codec, "--data", data, "--epochs", "2", "--batch-size",
          "4", "--seq-len", "16", "--layers", "1", "--heads", "2", "--width", "16", "--ffn-width", "32", "--context",
          "16", "--dropout", "0.1", "--seed", "3"}},
        {"train-search",
         {"train-search", "--query-enc", "rnn", "--code-enc", "nbow", "--data", data, "--epochs", "2",
          "--batch-size", "8", "--embed-dim", "16", "--output-dim", "16", "--hidden", "8", "--seed", "3"}}};
    for (const auto& [label, args] : runs)
        if (!twice_identical(dir, args, files)) differing.push_back(label);
    std::string detail = std::to_string(files) + " checkpoints from " + std::to_string(runs.size()) + " commands";
    for (const auto& d : differing) detail += "; differs: " + d;
    return {differing.empty(), detail + (differing.empty() ? ", all byte-identical" : "")};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<acceptance::Criterion> criteria{
        {1, "retrieval loss matches scalar oracle", 1.0, loss_oracle},
        {2, "MRR exactness", 1.0, mrr_exactness},
        {3, "finite-difference gradients", 120.0, gradients},
        {4, "causality", 10.0, causality},
        {5, "char LM memorizes the fixture", 300.0, overfit},
        {6, "retrieval overfit", 120.0, retrieval_overfit},
        {7, "BLEU matches brute-force oracle", 5.0, bleu_oracle},
        {8, "reference transformer parameter count", 1.0, parameter_count},
        {9, "twelve-point sweep shape", 1800.0, sweep_shape},
        {10, "BPE laws", 10.0, bpe_laws},
        {11, "training determinism", 300.0, determinism},
    };
    std::set<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
    int failures = 0;
    for (const auto& c : criteria) {
        if (!wanted.empty() && !wanted.count(c.id)) continue;
        // The child prints its own line for the gradient criterion.
        if (c.id == 3) {
            failures += gradients().pass ? 0 : 1;
            continue;
        }
        failures += acceptance::run(c) ? 0 : 1;
    }
    return failures == 0 ? 0 : 1;
}

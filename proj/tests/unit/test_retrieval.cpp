// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>

#include "doctest.h"

#include "codeforge/retrieval/retrieval.hpp"
#include "codeforge/training/training.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace codeforge;
using numeric::real;
using numeric::Tensor;

namespace {

Tensor matrix(const oracles::Matrix& m) {
    const std::size_t n = m.size(), c = m.empty() ? 0 : m[0].size();
    Tensor t({n, c});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) t.data()[i * c + j] = static_cast<real>(m[i][j]);
    return t;
}

oracles::Matrix random_matrix(std::size_t n, std::mt19937_64& gen, double spread = 3.0) {
    std::normal_distribution<double> normal(0.0, spread);
    oracles::Matrix m(n, std::vector<double>(n));
    for (auto& row : m)
        for (auto& v : row) v = static_cast<double>(static_cast<real>(normal(gen)));
    return m;
}

tokenizers::WordVocab vocab_for(std::span<const corpus::Sample> samples) {
    std::vector<std::vector<std::string>> lists;
    for (const auto& s : samples)
        for (const auto* side : {&s.docstring_tokens, &s.code_tokens}) {
            std::vector<std::string> folded;
            for (const auto& t : *side) folded.push_back(tokenizers::fold_case(t));
            lists.push_back(folded);
        }
    return tokenizers::WordVocab::build(lists, 10000);
}

models::EncoderConfig nbow(std::size_t vocab) {
    models::EncoderConfig c;
    c.kind = models::EncoderKind::nbow;
    c.vocab = vocab;
    c.embed_dim = 32;
    c.output_dim = 32;
    return c;
}

}  // namespace

TEST_CASE("retrieval loss reference values") {
    CHECK(retrieval::eq1_loss(matrix({{2, 0}, {0, 2}})).item() == doctest::Approx(0.1269).epsilon(1e-3));
    CHECK(retrieval::eq1_loss(matrix({{123.0}})).item() == 0);
    for (std::size_t n : {2, 5, 16})
        CHECK(retrieval::eq1_loss(matrix(oracles::Matrix(n, std::vector<double>(n, 0.7)))).item() ==
              doctest::Approx(std::log(static_cast<double>(n))).epsilon(1e-6));
    CHECK_THROWS(retrieval::eq1_loss(Tensor({2, 3})));
}

TEST_CASE("retrieval loss agrees with the scalar loop") {
    std::mt19937_64 gen(1);
    for (int trial = 0; trial < 100; ++trial) {
        const auto m = random_matrix(1 + gen() % 16, gen);
        CHECK(std::abs(retrieval::eq1_loss(matrix(m)).item() - oracles::retrieval_loss(m)) < 1e-5);
    }
}

TEST_CASE("retrieval loss falls toward zero as the diagonal dominates") {
    std::mt19937_64 gen(2);
    for (int trial = 0; trial < 20; ++trial) {
        auto m = random_matrix(2 + gen() % 8, gen, 1.0);
        double previous = retrieval::eq1_loss(matrix(m)).item();
        for (int step = 0; step < 6; ++step) {
            for (std::size_t i = 0; i < m.size(); ++i) m[i][i] += 4.0;
            const double loss = retrieval::eq1_loss(matrix(m)).item();
            CHECK(loss < previous);
            previous = loss;
        }
        CHECK(previous < 1e-6);
    }
}

TEST_CASE("ranks and MRR reference values") {
    const std::vector<std::size_t> r123{1, 2, 3}, ones{1, 1}, four{4};
    CHECK(retrieval::mrr(r123) == doctest::Approx(11.0 / 18.0));
    CHECK(retrieval::mrr(ones) == 1.0);
    CHECK(retrieval::mrr(four) == 0.25);
    CHECK_THROWS(retrieval::mrr(std::vector<std::size_t>{}));

    oracles::Matrix dominant(3, std::vector<double>(3, 0.0));
    for (int i = 0; i < 3; ++i) dominant[i][i] = 10;
    CHECK(retrieval::batch_ranks(matrix(dominant)) == std::vector<std::size_t>{1, 1, 1});
    CHECK(retrieval::batch_ranks(matrix(oracles::Matrix(4, std::vector<double>(4, 1.0)))) ==
          std::vector<std::size_t>{4, 4, 4, 4});
    const auto r = retrieval::batch_ranks(matrix({{1, 3}, {0, 5}}));
    CHECK(r == std::vector<std::size_t>{2, 1});
    CHECK(retrieval::mrr(r) == 0.75);
}

TEST_CASE("ranks agree with a sort oracle, with ties") {
    std::mt19937_64 gen(3);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + gen() % 10;
        oracles::Matrix m(n, std::vector<double>(n));
        for (auto& row : m)
            for (auto& v : row) v = static_cast<double>(gen() % 4);  // plenty of ties
        CHECK(retrieval::batch_ranks(matrix(m)) == oracles::sorted_ranks(m));
    }
}

TEST_CASE("ranks ignore strictly increasing transforms") {
    std::mt19937_64 gen(4);
    for (int trial = 0; trial < 50; ++trial) {
        const auto m = random_matrix(2 + gen() % 10, gen, 1.0);
        auto t = m;
        for (auto& row : t)
            for (auto& v : row) v = std::exp(v / 2) * 3 - 1;
        CHECK(retrieval::batch_ranks(matrix(m)) == retrieval::batch_ranks(matrix(t)));
    }
}

TEST_CASE("index search ordering, truncation and persistence") {
    auto samples = fixtures::synthetic_corpus(6, 9);
    samples.push_back(samples[2]);  // duplicate snippet
    const auto vocab = vocab_for(samples);
    const models::DualEncoder model(nbow(vocab.size()), nbow(vocab.size()), 5);
    const auto index = retrieval::SnippetIndex::build(samples, model, vocab, 4);
    CHECK(index.size() == 7);

    const auto q = retrieval::encode_query(samples[2].docstring, model, vocab);
    CHECK(index.search(q, 0).hits.empty());
    const auto all = index.search(q, 50);
    CHECK(all.truncated);
    REQUIRE(all.hits.size() == 7);
    for (std::size_t i = 1; i < all.hits.size(); ++i) CHECK(all.hits[i - 1].score >= all.hits[i].score);
    std::size_t pos2 = 99, pos6 = 99;
    for (std::size_t i = 0; i < 7; ++i) {
        if (all.hits[i].entry == 2) pos2 = i;
        if (all.hits[i].entry == 6) pos6 = i;
    }
    CHECK(pos6 == pos2 + 1);

    fixtures::TempDir dir("index");
    index.save(dir / "i.ckpt", {{"model", "m.ckpt"}});
    const auto back = retrieval::SnippetIndex::load(dir / "i.ckpt");
    CHECK(back.manifest_extra().at("model") == "m.ckpt");
    CHECK(back.sample(3) == index.sample(3));
    const auto again = back.search(q, 3);
    CHECK_FALSE(again.truncated);
    for (std::size_t i = 0; i < 3; ++i) CHECK(again.hits[i].entry == all.hits[i].entry);
}

TEST_CASE("a trained index ranks the matching snippet first") {
    std::vector<corpus::Sample> samples;
    for (int i = 0; i < 30; ++i) {
        const std::string word = "topic" + std::to_string(i);
        samples.push_back(fixtures::make_sample("def " + word + "(x):\n    return x\n", "compute " + word, word));
    }
    const auto vocab = vocab_for(samples);
    models::DualEncoder model(nbow(vocab.size()), nbow(vocab.size()), 3);
    const auto pairs = retrieval::encode_pairs(samples, vocab);
    CHECK(pairs.size() == 30);
    training::TrainConfig cfg;
    cfg.batch_size = 10;
    cfg.epochs = 80;
    cfg.starter_lr = 0.05;
    training::train_dual_encoder(model, pairs, {}, cfg);
    const auto index = retrieval::SnippetIndex::build(samples, model, vocab);
    for (int i : {0, 7, 29}) {
        const auto hits = index.search(retrieval::encode_query("Compute topic" + std::to_string(i), model, vocab), 1);
        CHECK(hits.hits.at(0).entry == static_cast<std::size_t>(i));
    }
    CHECK(retrieval::chunked_mrr(model, pairs, 10) > 0.9);
}

TEST_CASE("pairs drop samples without both sides") {
    auto samples = fixtures::synthetic_corpus(4, 2);
    samples[1].docstring_tokens.clear();
    const auto vocab = vocab_for(samples);
    const auto pairs = retrieval::encode_pairs(samples, vocab);
    CHECK(pairs.size() == 3);
    CHECK(pairs.queries.size() == pairs.code.size());
}

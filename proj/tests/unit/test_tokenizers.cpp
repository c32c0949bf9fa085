// SPDX-License-Identifier: Apache-2.0

#include <random>

#include "doctest.h"

#include "codeforge/tokenizers/bpe.hpp"
#include "codeforge/tokenizers/char_vocab.hpp"
#include "codeforge/tokenizers/code_tokens.hpp"
#include "codeforge/tokenizers/codec.hpp"
#include "codeforge/tokenizers/word_vocab.hpp"
#include "codeforge/util/utf8.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace codeforge::tokenizers;
using codeforge::numeric::TokenId;

namespace {

std::string token_text(const BpeModel& m, TokenId id) { return m.token_bytes(id); }

}  // namespace

TEST_CASE("char vocabulary is sorted by code point") {
    const auto v = CharVocab::build("aba\nc");
    CHECK(v.size() == 4);
    CHECK(v.chars() == std::vector<char32_t>{U'\n', U'a', U'b', U'c'});
    CHECK(CharVocab::build("").size() == 0);
}

TEST_CASE("char encode and decode") {
    const CharVocab v(std::vector<char32_t>{U'a', U'b'});
    CHECK(v.encode("ab") == std::vector<TokenId>{0, 1});
    const std::vector<TokenId> ba{1, 0};
    CHECK(v.decode(ba) == "ba");
    try {
        (void)v.encode("ax");
        FAIL("expected UnknownChar");
    } catch (const UnknownChar& e) {
        CHECK(e.ch == U'x');
        CHECK(e.position == 1);
    }
    CHECK(v.encode("axb", UnknownPolicy::fallback, 1) == std::vector<TokenId>{0, 1, 1});
    const std::vector<TokenId> bad{2};
    CHECK_THROWS(v.decode(bad));
}

TEST_CASE("char codec round-trips strings drawn from its vocabulary") {
    std::mt19937_64 gen(7);
    const std::string alphabet = fixtures::random_unicode(gen, 60) + "x";
    const auto v = CharVocab::build(alphabet);
    const auto cps = codeforge::util::decode_utf8(alphabet);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<char32_t> pick(gen() % 40);
        for (auto& c : pick) c = cps[gen() % cps.size()];
        const auto text = codeforge::util::encode_utf8(pick);
        CHECK(v.decode(v.encode(text)) == text);
    }
    CHECK(CharVocab::from_json(v.to_json()).chars() == v.chars());
}

TEST_CASE("bpe first merge and merge chains") {
    const auto m = BpeModel::train("aaab aaab", 258);
    REQUIRE(m.merges().size() >= 1);
    CHECK(token_text(m, m.merges()[0].first) == "a");
    CHECK(token_text(m, m.merges()[0].second) == "a");

    const auto chain = BpeModel::train(std::string(16, 'x'), 300);
    const auto expected = oracles::bpe_merges(std::string(16, 'x'), 300);
    REQUIRE(chain.merges().size() == expected.size());
    CHECK(token_text(chain, 256) == "xx");
    for (std::size_t i = 0; i < expected.size(); ++i) {
        CHECK(token_text(chain, chain.merges()[i].first) == expected[i].first);
        CHECK(token_text(chain, chain.merges()[i].second) == expected[i].second);
    }

    const auto empty = BpeModel::train("", 300);
    CHECK(empty.vocab_size() == 256);
    CHECK(empty.merges().empty());
    CHECK_THROWS(BpeModel::train("abc", 256));
}

TEST_CASE("bpe training agrees with the pair-count oracle") {
    std::mt19937_64 gen(19);
    for (int trial = 0; trial < 40; ++trial) {
        std::string text;
        const std::size_t len = 5 + gen() % 60;
        for (std::size_t i = 0; i < len; ++i) text += "abc  d\n"[gen() % 7];
        const std::size_t target = 257 + gen() % 20;
        const auto model = BpeModel::train(text, target);
        const auto expected = oracles::bpe_merges(text, target - 256);
        INFO("corpus: " << text);
        REQUIRE(model.merges().size() == expected.size());
        for (std::size_t i = 0; i < expected.size(); ++i) {
            CHECK(token_text(model, model.merges()[i].first) == expected[i].first);
            CHECK(token_text(model, model.merges()[i].second) == expected[i].second);
        }
        CHECK(model.encode(text).size() == oracles::bpe_token_count(text, expected));
    }
}

TEST_CASE("bpe encoding applies merges in training order") {
    const BpeModel m({{'a', 'a'}});
    CHECK(m.encode("aaa") == std::vector<TokenId>{256, 'a'});
    CHECK(m.encode("").empty());
    const std::vector<TokenId> bad{257};
    CHECK_THROWS(m.decode(bad));
}

TEST_CASE("bpe round-trips arbitrary bytes and compresses monotonically") {
    const std::string corpus = fixtures::repeated(fixtures::kFunction, 3) + "héllo wörld ✓ 𝄞";
    const auto model = BpeModel::train(corpus, 330);
    std::mt19937_64 gen(23);
    for (int trial = 0; trial < 300; ++trial) {
        std::string bytes(gen() % 50, '\0');
        for (auto& b : bytes) b = static_cast<char>(gen() & 0xFF);
        CHECK(model.decode(model.encode(bytes)) == bytes);
        const auto text = fixtures::random_unicode(gen, 30);
        CHECK(model.decode(model.encode(text)) == text);
    }
    std::size_t previous = model.prefix(0).encode(corpus).size();
    for (std::size_t k = 1; k <= model.merges().size(); ++k) {
        const auto count = model.prefix(k).encode(corpus).size();
        CHECK(count <= previous);
        previous = count;
    }
    CHECK(BpeModel::from_json(model.to_json()).merges() == model.merges());
}

TEST_CASE("bpe never merges across whitespace boundaries") {
    const auto segs = pre_segment("ab  c\nd");
    CHECK(segs == std::vector<std::string_view>{"ab", "  ", "c", "\n", "d"});
    const auto model = BpeModel::train("a a a a a a", 300);
    for (std::size_t id = 256; id < model.vocab_size(); ++id) {
        const auto& t = model.token_bytes(static_cast<TokenId>(id));
        const bool has_space = t.find(' ') != std::string::npos;
        const bool has_a = t.find('a') != std::string::npos;
        CHECK_FALSE((has_space && has_a));
    }
}

TEST_CASE("token codec save and load for both kinds") {
    fixtures::TempDir dir("codec");
    const TokenCodec chars(CharVocab::build("hello"), UnknownPolicy::fallback, 0);
    chars.save(dir / "c.json");
    const auto c2 = TokenCodec::load(dir / "c.json");
    CHECK(c2.is_char());
    CHECK(c2.encode("hex") == chars.encode("hex"));
    CHECK(c2.vocab_size() == 4);

    const TokenCodec bpe(BpeModel::train("hello hello", 260));
    bpe.save(dir / "b.json");
    const auto b2 = TokenCodec::load(dir / "b.json");
    CHECK(b2.is_bpe());
    CHECK(b2.encode("hello") == bpe.encode("hello"));
    CHECK(b2.decode(b2.encode("zz")) == "zz");

    const TokenCodec strict(CharVocab::build("ab"));
    CHECK_THROWS_AS(strict.encode("abc"), UnknownChar);
}

TEST_CASE("word vocabulary orders by frequency and reserves id 0") {
    const std::vector<std::vector<std::string>> seqs{{"b", "a", "b"}, {"c", "b", "a"}};
    const auto v = WordVocab::build(seqs, 3);
    CHECK(v.size() == 3);
    CHECK(v.word(0) == "<unk>");
    CHECK(v.id_of("b") == 1);
    CHECK(v.id_of("a") == 2);
    CHECK(v.id_of("c") == WordVocab::kUnknown);
    const std::vector<std::string> q{"a", "zzz"};
    CHECK(v.encode(q) == std::vector<TokenId>{2, 0});
    CHECK(WordVocab::from_json(v.to_json()).id_of("a") == 2);
    CHECK(fold_case("MixedCase_42") == "mixedcase_42");
}

TEST_CASE("code token splitter") {
    CHECK(split_code_tokens("def f(x_1):\n    return x_1+2") ==
          std::vector<std::string>{"def", "f", "(", "x_1", ")", ":", "return", "x_1", "+", "2"});
    CHECK(split_code_tokens("   ").empty());
}

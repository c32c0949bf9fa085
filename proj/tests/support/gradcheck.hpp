// SPDX-License-Identifier: Apache-2.0

// Central finite-difference gradient checks. Meant for the double-precision
// build; in float the differences are too noisy for a 1e-4 tolerance.

#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "codeforge/models/char_lm.hpp"
#include "codeforge/models/encoders.hpp"
#include "codeforge/models/transformer.hpp"
#include "codeforge/numeric/ops.hpp"
#include "codeforge/retrieval/retrieval.hpp"

namespace gradcheck {

namespace cf = codeforge;
namespace nm = codeforge::numeric;
using nm::Rng;
using nm::Shape;
using nm::Tensor;
using nm::TokenId;

inline constexpr double kStep = 1e-3;
inline constexpr double kTolerance = 1e-4;
inline constexpr int kInstances = 20;

/// ||analytic - numeric|| / (||analytic|| + ||numeric||), over every element
/// of every input. Zero when both gradients vanish.
inline double relative_error(const std::function<Tensor()>& loss, std::vector<Tensor> inputs) {
    for (auto& t : inputs) {
        t.set_requires_grad(true);
        t.zero_grad();
    }
    loss().backward();
    double diff = 0.0, norm_a = 0.0, norm_n = 0.0;
    nm::NoGradGuard no_grad;
    for (auto& t : inputs) {
        auto values = t.data();
        const auto grad = t.grad();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const auto saved = values[i];
            values[i] = saved + static_cast<nm::real>(kStep);
            const double up = loss().item();
            values[i] = saved - static_cast<nm::real>(kStep);
            const double down = loss().item();
            values[i] = saved;
            const double numeric = (up - down) / (2 * kStep);
            const double analytic = grad[i];
            diff += (analytic - numeric) * (analytic - numeric);
            norm_a += analytic * analytic;
            norm_n += numeric * numeric;
        }
    }
    const double denom = std::sqrt(norm_a) + std::sqrt(norm_n);
    return denom == 0.0 ? 0.0 : std::sqrt(diff) / denom;
}

inline std::size_t dim(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

inline Tensor random(Shape shape, Rng& rng, double lo = -1.5, double hi = 1.5) {
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = static_cast<nm::real>(rng.uniform(lo, hi));
    return t;
}

/// Values bounded away from zero, for ops with a kink there.
inline Tensor away_from_zero(Shape shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (auto& v : t.data()) {
        const double mag = rng.uniform(0.1, 1.5);
        v = static_cast<nm::real>(rng.uniform() < 0.5 ? -mag : mag);
    }
    return t;
}

inline std::vector<TokenId> random_ids(std::size_t n, std::size_t vocab, Rng& rng) {
    std::vector<TokenId> ids(n);
    for (auto& id : ids) id = static_cast<TokenId>(rng.below(vocab));
    return ids;
}

/// Contracts an output against fixed random weights so every element matters.
inline Tensor project(const Tensor& out, const Tensor& weights) { return nm::sum(nm::mul(out, weights)); }

inline double check_model(cf::models::LanguageModel& model, std::size_t batch, std::size_t steps, Rng& rng) {
    cf::models::TokenBatch input{batch, steps, random_ids(batch * steps, model.vocab_size(), rng)};
    const auto targets = random_ids(batch * steps, model.vocab_size(), rng);
    std::vector<Tensor> params;
    for (auto& p : model.parameters().items()) params.push_back(p.tensor);
    return relative_error([&] { return nm::cross_entropy(model.forward(input, false, nullptr), targets); }, params);
}

struct Case {
    std::string name;
    std::function<double(Rng&)> instance;  // relative error of one random instance
};

/// Single-input elementwise op on a random [m, n] tensor.
inline Case unary_case(std::string name, Tensor (*op)(const Tensor&), double lo = -1.5, double hi = 1.5) {
    return {std::move(name), [op, lo, hi](Rng& rng) {
                const Shape s{dim(rng, 1, 4), dim(rng, 1, 5)};
                Tensor x = random(s, rng, lo, hi), w = random(s, rng);
                return relative_error([&] { return project(op(x), w); }, {x});
            }};
}

inline std::vector<Case> op_cases() {
    std::vector<Case> cases;
    cases.push_back({"matmul", [](Rng& rng) {
                         const auto m = dim(rng, 1, 4), k = dim(rng, 1, 4), n = dim(rng, 1, 4);
                         Tensor a = random({m, k}, rng), b = random({k, n}, rng), w = random({m, n}, rng);
                         return relative_error([&] { return project(nm::matmul(a, b), w); }, {a, b});
                     }});
    cases.push_back({"matmul_nt", [](Rng& rng) {
                         const auto m = dim(rng, 1, 4), k = dim(rng, 1, 4), n = dim(rng, 1, 4);
                         Tensor a = random({m, k}, rng), b = random({n, k}, rng), w = random({m, n}, rng);
                         return relative_error([&] { return project(nm::matmul_nt(a, b), w); }, {a, b});
                     }});
    cases.push_back({"bmm", [](Rng& rng) {
                         const auto B = dim(rng, 1, 3), m = dim(rng, 1, 3), k = dim(rng, 1, 3), n = dim(rng, 1, 3);
                         Tensor a = random({B, m, k}, rng), b = random({B, k, n}, rng), w = random({B, m, n}, rng);
                         return relative_error([&] { return project(nm::bmm(a, b), w); }, {a, b});
                     }});
    cases.push_back({"bmm_nt", [](Rng& rng) {
                         const auto B = dim(rng, 1, 3), m = dim(rng, 1, 3), k = dim(rng, 1, 3), n = dim(rng, 1, 3);
                         Tensor a = random({B, m, k}, rng), b = random({B, n, k}, rng), w = random({B, m, n}, rng);
                         return relative_error([&] { return project(nm::bmm_nt(a, b), w); }, {a, b});
                     }});
    cases.push_back({"transpose", [](Rng& rng) {
                         const auto m = dim(rng, 1, 4), n = dim(rng, 1, 4);
                         Tensor a = random({m, n}, rng), w = random({n, m}, rng);
                         return relative_error([&] { return project(nm::transpose(a), w); }, {a});
                     }});
    for (const auto& [name, op] : std::vector<std::pair<std::string, Tensor (*)(const Tensor&, const Tensor&)>>{
             {"add", &nm::add}, {"sub", &nm::sub}, {"mul", &nm::mul}}) {
        cases.push_back({name, [op = op](Rng& rng) {
                             const Shape s{dim(rng, 1, 4), dim(rng, 1, 4)};
                             Tensor a = random(s, rng), b = random(s, rng), w = random(s, rng);
                             return relative_error([&] { return project(op(a, b), w); }, {a, b});
                         }});
    }
    cases.push_back({"add_bias", [](Rng& rng) {
                         const Shape s{dim(rng, 1, 3), dim(rng, 1, 3), dim(rng, 1, 4)};
                         Tensor x = random(s, rng), b = random({s[2]}, rng), w = random(s, rng);
                         return relative_error([&] { return project(nm::add_bias(x, b), w); }, {x, b});
                     }});
    cases.push_back({"scale", [](Rng& rng) {
                         const Shape s{dim(rng, 1, 4), dim(rng, 1, 4)};
                         const auto factor = static_cast<nm::real>(rng.uniform(-2, 2));
                         Tensor x = random(s, rng), w = random(s, rng);
                         return relative_error([&] { return project(nm::scale(x, factor), w); }, {x});
                     }});
    cases.push_back({"sum", [](Rng& rng) {
                         Tensor x = random({dim(rng, 1, 4), dim(rng, 1, 4)}, rng);
                         return relative_error([&] { return nm::mul(nm::sum(x), nm::sum(x)); }, {x});
                     }});
    cases.push_back({"mean", [](Rng& rng) {
                         Tensor x = random({dim(rng, 1, 4), dim(rng, 1, 4)}, rng);
                         return relative_error([&] { return nm::mul(nm::mean(x), nm::mean(x)); }, {x});
                     }});
    cases.push_back({"concat", [](Rng& rng) {
                         const std::size_t axis = rng.below(2);
                         const auto m = dim(rng, 1, 3), n1 = dim(rng, 1, 3), n2 = dim(rng, 1, 3);
                         const Shape sa = axis ? Shape{m, n1} : Shape{n1, m};
                         const Shape sb = axis ? Shape{m, n2} : Shape{n2, m};
                         const Shape so = axis ? Shape{m, n1 + n2} : Shape{n1 + n2, m};
                         Tensor a = random(sa, rng), b = random(sb, rng), w = random(so, rng);
                         return relative_error([&] { return project(nm::concat({a, b}, axis), w); }, {a, b});
                     }});
    cases.push_back({"slice", [](Rng& rng) {
                         const auto m = dim(rng, 1, 3), n = dim(rng, 2, 6);
                         const auto begin = rng.below(n - 1), end = begin + 1 + rng.below(n - begin - 1);
                         Tensor a = random({m, n}, rng), w = random({m, end - begin}, rng);
                         return relative_error([&] { return project(nm::slice(a, 1, begin, end), w); }, {a});
                     }});
    cases.push_back({"reshape", [](Rng& rng) {
                         const auto m = dim(rng, 1, 3), n = dim(rng, 1, 3), k = dim(rng, 1, 3);
                         Tensor a = random({m, n * k}, rng), w = random({m * n, k}, rng);
                         return relative_error([&] { return project(nm::reshape(a, {m * n, k}), w); }, {a});
                     }});
    cases.push_back(unary_case("tanh", &nm::tanh));
    cases.push_back(unary_case("sigmoid", &nm::sigmoid));
    cases.push_back(unary_case("gelu", &nm::gelu));
    cases.push_back(unary_case("exp", &nm::exp));
    cases.push_back(unary_case("log", &nm::log, 0.3, 2.5));
    cases.push_back({"relu", [](Rng& rng) {
                         const Shape s{dim(rng, 1, 4), dim(rng, 1, 5)};
                         Tensor x = away_from_zero(s, rng), w = random(s, rng);
                         return relative_error([&] { return project(nm::relu(x), w); }, {x});
                     }});
    for (const auto& [name, op] : std::vector<std::pair<std::string, Tensor (*)(const Tensor&, std::size_t)>>{
             {"softmax", &nm::softmax}, {"log_softmax", &nm::log_softmax}}) {
        cases.push_back({name, [op = op](Rng& rng) {
                             const Shape s{dim(rng, 1, 3), dim(rng, 1, 3), dim(rng, 2, 5)};
                             const std::size_t axis = rng.below(3);
                             Tensor x = random(s, rng), w = random(s, rng);
                             return relative_error([&] { return project(op(x, axis), w); }, {x});
                         }});
    }
    cases.push_back({"causal_mask", [](Rng& rng) {
                         const auto B = dim(rng, 1, 2), T = dim(rng, 1, 5);
                         Tensor x = random({B, T, T}, rng), w = random({B, T, T}, rng);
                         return relative_error([&] { return project(nm::softmax(nm::causal_mask(x), 2), w); }, {x});
                     }});
    cases.push_back({"embedding", [](Rng& rng) {
                         const auto V = dim(rng, 2, 6), D = dim(rng, 1, 4), B = dim(rng, 1, 3), T = dim(rng, 1, 4);
                         const auto ids = random_ids(B * T, V, rng);
                         Tensor table = random({V, D}, rng), w = random({B, T, D}, rng);
                         return relative_error([&] { return project(nm::embedding(table, ids, {B, T}), w); }, {table});
                     }});
    cases.push_back({"embedding_bag_mean", [](Rng& rng) {
                         const auto V = dim(rng, 2, 6), D = dim(rng, 1, 4), N = dim(rng, 1, 4);
                         std::vector<std::vector<TokenId>> bags(N);
                         for (auto& bag : bags) bag = random_ids(dim(rng, 1, 5), V, rng);
                         Tensor table = random({V, D}, rng), w = random({N, D}, rng);
                         return relative_error([&] { return project(nm::embedding_bag_mean(table, bags), w); }, {table});
                     }});
    cases.push_back({"layer_norm", [](Rng& rng) {
                         const auto m = dim(rng, 1, 4), n = dim(rng, 2, 6);
                         Tensor x = random({m, n}, rng), g = random({n}, rng), b = random({n}, rng),
                                w = random({m, n}, rng);
                         // A row spread comparable to the step makes central differences
                         // meaningless, so redraw rows with tiny variance.
                         for (std::size_t r = 0; r < m; ++r) {
                             auto row = x.data().subspan(r * n, n);
                             for (;;) {
                                 double mu = 0, var = 0;
                                 for (auto v : row) mu += v / static_cast<double>(n);
                                 for (auto v : row) var += (v - mu) * (v - mu) / static_cast<double>(n);
                                 if (var > 0.05) break;
                                 for (auto& v : row) v = static_cast<nm::real>(rng.uniform(-1.5, 1.5));
                             }
                         }
                         return relative_error([&] { return project(nm::layer_norm(x, g, b), w); }, {x, g, b});
                     }});
    cases.push_back({"dropout", [](Rng& rng) {
                         const Shape s{dim(rng, 1, 4), dim(rng, 1, 5)};
                         const auto seed = rng.next_u64();
                         Tensor x = random(s, rng), w = random(s, rng);
                         return relative_error(
                             [&] {
                                 Rng mask_rng(seed);  // same mask on every evaluation
                                 return project(nm::dropout(x, nm::real(0.3), true, mask_rng), w);
                             },
                             {x});
                     }});
    cases.push_back({"cross_entropy", [](Rng& rng) {
                         const auto N = dim(rng, 1, 5), V = dim(rng, 2, 6);
                         const auto targets = random_ids(N, V, rng);
                         Tensor logits = random({N, V}, rng, -3, 3);
                         return relative_error([&] { return nm::cross_entropy(logits, targets); }, {logits});
                     }});
    cases.push_back({"retrieval_loss", [](Rng& rng) {
                         const auto N = dim(rng, 1, 6);
                         Tensor scores = random({N, N}, rng, -3, 3);
                         return relative_error([&] { return cf::retrieval::eq1_loss(scores); }, {scores});
                     }});
    return cases;
}

inline std::vector<Case> model_cases() {
    std::vector<Case> cases;
    for (auto cell : {cf::models::CellKind::lstm, cf::models::CellKind::gru, cf::models::CellKind::rnn}) {
        cases.push_back({"char_lm_" + cf::models::to_string(cell), [cell](Rng& rng) {
                             cf::models::CharLmConfig c;
                             c.cell = cell;
                             c.hidden = 4;
                             c.layers = 2;
                             c.vocab = 5;
                             c.init_stddev = 0.5;
                             cf::models::CharLm model(c, rng.next_u64());
                             return check_model(model, 2, 3, rng);
                         }});
    }
    for (bool tied : {true, false}) {
        cases.push_back({tied ? "transformer_tied" : "transformer_untied", [tied](Rng& rng) {
                             cf::models::TransformerConfig c;
                             c.layers = 2;
                             c.heads = 2;
                             c.width = 8;
                             c.ffn_width = 16;
                             c.context = 6;
                             c.vocab = 7;
                             c.tied_embeddings = tied;
                             cf::models::TransformerLm model(c, rng.next_u64());
                             // Default init is tiny; widen it so every path carries gradient.
                             for (auto& p : model.parameters().items())
                                 for (auto& v : p.tensor.data()) v += static_cast<nm::real>(rng.uniform(-0.3, 0.3));
                             return check_model(model, 2, 4, rng);
                         }});
    }
    for (auto kind : {cf::models::EncoderKind::nbow, cf::models::EncoderKind::rnn}) {
        cases.push_back({"dual_encoder_" + cf::models::to_string(kind), [kind](Rng& rng) {
                             cf::models::EncoderConfig c;
                             c.kind = kind;
                             c.vocab = 6;
                             c.embed_dim = 3;
                             c.hidden = 3;
                             c.output_dim = 4;
                             cf::models::DualEncoder model(c, c, rng.next_u64());
                             std::vector<std::vector<TokenId>> queries(3), code(3);
                             for (auto& q : queries) q = random_ids(dim(rng, 1, 4), 6, rng);
                             for (auto& s : code) s = random_ids(dim(rng, 1, 4), 6, rng);
                             for (auto& p : model.parameters().items())
                                 for (auto& v : p.tensor.data()) v += static_cast<nm::real>(rng.uniform(-0.5, 0.5));
                             std::vector<Tensor> params;
                             for (auto& p : model.parameters().items()) params.push_back(p.tensor);
                             return relative_error(
                                 [&] {
                                     return cf::retrieval::eq1_loss(cf::models::DualEncoder::score_matrix(
                                         model.encode_queries(queries), model.encode_code(code)));
                                 },
                                 params);
                         }});
    }
    return cases;
}

struct CaseResult {
    std::string name;
    int instances = 0;
    double worst = 0.0;
};

inline std::vector<CaseResult> run_all(const std::vector<Case>& cases, std::uint64_t seed) {
    std::vector<CaseResult> out;
    for (const auto& c : cases) {
        Rng rng(seed);
        CaseResult r{c.name, 0, 0.0};
        for (int i = 0; i < kInstances; ++i) {
            const double err = c.instance(rng);
            r.worst = std::isnan(err) ? 1e300 : std::max(r.worst, err);
            ++r.instances;
        }
        out.push_back(r);
    }
    return out;
}

}  // namespace gradcheck

// SPDX-License-Identifier: Apache-2.0

#include "codeforge/models/transformer.hpp"

#include <cmath>
#include <stdexcept>

namespace codeforge::models {

using namespace numeric;

namespace {

constexpr double kEmbeddingLimit = 0.05;
constexpr double kWeightStddev = 0.02;

std::string block(std::size_t l) { return "h" + std::to_string(l) + "."; }

bool is_embedding(const std::string& name) { return name == "tok_emb" || name == "pos_emb"; }
bool is_gain(const std::string& name) { return name.ends_with(".gain"); }
bool is_bias(const std::string& name) { return name.ends_with(".bias"); }

class TransformerDecoder final : public Decoder {
public:
    explicit TransformerDecoder(const TransformerLm& model) : model_(model) {}

    std::vector<real> feed(TokenId token) override {
        history_.push_back(token);
        const std::size_t ctx = model_.config().context;
        if (history_.size() > ctx) history_.erase(history_.begin());
        NoGradGuard no_grad;
        const Tensor logits = model_.infer(TokenBatch::single(history_));
        const std::size_t V = model_.config().vocab;
        auto d = logits.data();
        return {d.end() - static_cast<std::ptrdiff_t>(V), d.end()};
    }

private:
    const TransformerLm& model_;
    std::vector<TokenId> history_;
};

}  // namespace

TransformerConfig TransformerConfig::gpt2_small() {
    TransformerConfig c;
    c.layers = 12;
    c.heads = 12;
    c.width = 768;
    c.ffn_width = 3072;
    c.context = 1024;
    c.vocab = 50257;
    c.tied_embeddings = true;
    return c;
}

void TransformerConfig::validate() const {
    if (layers == 0 || heads == 0 || width == 0 || ffn_width == 0 || context == 0 || vocab == 0)
        throw std::invalid_argument("transformer dimensions must be positive");
    if (width % heads != 0)
        throw std::invalid_argument("model width " + std::to_string(width) + " is not divisible by head count " +
                                    std::to_string(heads));
    if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("dropout must lie in [0, 1)");
}

nlohmann::json TransformerConfig::to_json() const {
    return {{"kind", "transformer"}, {"layers", layers},   {"heads", heads},
            {"width", width},        {"ffn_width", ffn_width}, {"context", context},
            {"vocab", vocab},        {"tied_embeddings", tied_embeddings}, {"dropout", dropout}};
}

TransformerConfig TransformerConfig::from_json(const nlohmann::json& j) {
    TransformerConfig c;
    c.layers = j.value("layers", c.layers);
    c.heads = j.value("heads", c.heads);
    c.width = j.value("width", c.width);
    c.ffn_width = j.value("ffn_width", 4 * c.width);
    c.context = j.value("context", c.context);
    c.vocab = j.value("vocab", c.vocab);
    c.tied_embeddings = j.value("tied_embeddings", c.tied_embeddings);
    c.dropout = j.value("dropout", c.dropout);
    return c;
}

std::vector<std::pair<std::string, Shape>> transformer_parameter_shapes(const TransformerConfig& c) {
    std::vector<std::pair<std::string, Shape>> shapes;
    shapes.emplace_back("tok_emb", Shape{c.vocab, c.width});
    shapes.emplace_back("pos_emb", Shape{c.context, c.width});
    for (std::size_t l = 0; l < c.layers; ++l) {
        const std::string p = block(l);
        shapes.emplace_back(p + "ln1.gain", Shape{c.width});
        shapes.emplace_back(p + "ln1.bias", Shape{c.width});
        shapes.emplace_back(p + "attn.qkv.weight", Shape{c.width, 3 * c.width});
        shapes.emplace_back(p + "attn.qkv.bias", Shape{3 * c.width});
        shapes.emplace_back(p + "attn.proj.weight", Shape{c.width, c.width});
        shapes.emplace_back(p + "attn.proj.bias", Shape{c.width});
        shapes.emplace_back(p + "ln2.gain", Shape{c.width});
        shapes.emplace_back(p + "ln2.bias", Shape{c.width});
        shapes.emplace_back(p + "mlp.fc.weight", Shape{c.width, c.ffn_width});
        shapes.emplace_back(p + "mlp.fc.bias", Shape{c.ffn_width});
        shapes.emplace_back(p + "mlp.proj.weight", Shape{c.ffn_width, c.width});
        shapes.emplace_back(p + "mlp.proj.bias", Shape{c.width});
    }
    shapes.emplace_back("ln_f.gain", Shape{c.width});
    shapes.emplace_back("ln_f.bias", Shape{c.width});
    if (!c.tied_embeddings) shapes.emplace_back("lm_head.weight", Shape{c.vocab, c.width});
    return shapes;
}

std::size_t transformer_parameter_count(const TransformerConfig& config) {
    std::size_t n = 0;
    for (const auto& [name, shape] : transformer_parameter_shapes(config)) n += shape_numel(shape);
    return n;
}

Tensor causal_attention_weights(const Tensor& q, const Tensor& k) {
    const real inv_sqrt = real(1) / std::sqrt(static_cast<real>(q.shape().back()));
    return softmax(causal_mask(scale(bmm_nt(q, k), inv_sqrt)), 2);
}

TransformerLm::TransformerLm(TransformerConfig config, std::uint64_t seed) : config_(config) {
    config_.validate();
    Rng rng(seed);
    for (auto& [name, shape] : transformer_parameter_shapes(config_)) {
        Tensor t;
        if (is_embedding(name)) t = init_uniform(shape, kEmbeddingLimit, rng);
        else if (is_gain(name)) t = init_constant(shape, real(1));
        else if (is_bias(name)) t = init_constant(shape, real(0));
        else t = init_normal(shape, kWeightStddev, rng);
        params_.add(name, std::move(t));
    }
}

Tensor TransformerLm::forward(const TokenBatch& input, bool training, Rng* rng) { return run(input, training, rng); }

Tensor TransformerLm::infer(const TokenBatch& input) const { return run(input, false, nullptr); }

Tensor TransformerLm::run(const TokenBatch& input, bool training, Rng* rng) const {
    const std::size_t B = input.batch, T = input.steps, D = config_.width, Hn = config_.heads;
    const std::size_t hd = D / Hn;
    if (T == 0 || B == 0) throw std::invalid_argument("transformer input must have at least one step");
    if (T > config_.context)
        throw std::invalid_argument("input length " + std::to_string(T) + " exceeds context length " +
                                    std::to_string(config_.context));
    const bool drop = training && config_.dropout > 0.0;
    if (drop && !rng) throw std::invalid_argument("dropout requires a random generator");
    const auto rate = static_cast<real>(config_.dropout);
    auto maybe_drop = [&](const Tensor& x) { return drop ? dropout(x, rate, true, *rng) : x; };
    const auto& P = params_;

    std::vector<TokenId> positions(B * T);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < T; ++t) positions[b * T + t] = static_cast<TokenId>(t);

    Tensor x = add(embedding(P.get("tok_emb"), input.ids, {B, T}), embedding(P.get("pos_emb"), positions, {B, T}));
    x = maybe_drop(x);

    for (std::size_t l = 0; l < config_.layers; ++l) {
        const std::string p = block(l);
        const Tensor a = layer_norm(x, P.get(p + "ln1.gain"), P.get(p + "ln1.bias"));
        const Tensor qkv = add_bias(matmul(a, P.get(p + "attn.qkv.weight")), P.get(p + "attn.qkv.bias"));
        std::vector<Tensor> heads;
        heads.reserve(Hn);
        for (std::size_t h = 0; h < Hn; ++h) {
            const Tensor q = slice(qkv, 2, h * hd, (h + 1) * hd);
            const Tensor k = slice(qkv, 2, D + h * hd, D + (h + 1) * hd);
            const Tensor v = slice(qkv, 2, 2 * D + h * hd, 2 * D + (h + 1) * hd);
            heads.push_back(bmm(maybe_drop(causal_attention_weights(q, k)), v));
        }
        const Tensor attn = add_bias(matmul(concat(heads, 2), P.get(p + "attn.proj.weight")), P.get(p + "attn.proj.bias"));
        x = add(x, maybe_drop(attn));

        const Tensor m = layer_norm(x, P.get(p + "ln2.gain"), P.get(p + "ln2.bias"));
        const Tensor f = gelu(add_bias(matmul(m, P.get(p + "mlp.fc.weight")), P.get(p + "mlp.fc.bias")));
        x = add(x, maybe_drop(add_bias(matmul(f, P.get(p + "mlp.proj.weight")), P.get(p + "mlp.proj.bias"))));
    }
    x = layer_norm(x, P.get("ln_f.gain"), P.get("ln_f.bias"));
    return matmul_nt(x, config_.tied_embeddings ? P.get("tok_emb") : P.get("lm_head.weight"));
}

std::unique_ptr<Decoder> TransformerLm::decoder() const { return std::make_unique<TransformerDecoder>(*this); }

}  // namespace codeforge::models

// SPDX-License-Identifier: Apache-2.0

#include "codeforge/models/char_lm.hpp"

#include <stdexcept>

namespace codeforge::models {

using namespace numeric;

namespace {

std::string layer_prefix(std::size_t l) { return "layer" + std::to_string(l); }

class CharLmDecoder final : public Decoder {
public:
    explicit CharLmDecoder(const CharLm& model) : model_(model) {
        for (std::size_t l = 0; l < model.config().layers; ++l)
            states_.push_back(zero_state(model.config().cell, 1, model.config().hidden));
    }

    std::vector<real> feed(TokenId token) override {
        NoGradGuard no_grad;
        states_ = model_.step(token, states_);
        const Tensor logits = model_.output_logits(states_.back().h);
        return {logits.data().begin(), logits.data().end()};
    }

private:
    const CharLm& model_;
    std::vector<CellState> states_;
};

}  // namespace

void CharLmConfig::validate() const {
    if (vocab == 0) throw std::invalid_argument("char LM vocabulary is empty");
    if (hidden == 0 || layers == 0) throw std::invalid_argument("char LM hidden size and layer count must be positive");
    if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("dropout must lie in [0, 1)");
}

nlohmann::json CharLmConfig::to_json() const {
    return {{"kind", "char_rnn"}, {"cell", to_string(cell)}, {"hidden", hidden},          {"layers", layers},
            {"vocab", vocab},     {"dropout", dropout},      {"init_stddev", init_stddev}};
}

CharLmConfig CharLmConfig::from_json(const nlohmann::json& j) {
    CharLmConfig c;
    c.cell = parse_cell_kind(j.value("cell", std::string("lstm")));
    c.hidden = j.value("hidden", c.hidden);
    c.layers = j.value("layers", c.layers);
    c.vocab = j.value("vocab", c.vocab);
    c.dropout = j.value("dropout", c.dropout);
    c.init_stddev = j.value("init_stddev", c.init_stddev);
    return c;
}

CharLm::CharLm(CharLmConfig config, std::uint64_t seed) : config_(config) {
    config_.validate();
    Rng rng(seed);
    for (std::size_t l = 0; l < config_.layers; ++l) {
        const std::size_t input = l == 0 ? config_.vocab : config_.hidden;
        add_cell_parameters(params_, layer_prefix(l), config_.cell, input, config_.hidden, config_.init_stddev, rng);
    }
    params_.add("out.weight", init_normal({config_.hidden, config_.vocab}, config_.init_stddev, rng));
    params_.add("out.bias", init_constant({config_.vocab}, real(0)));
}

Tensor CharLm::output_logits(const Tensor& top_hidden) const {
    return add_bias(matmul(top_hidden, params_.get("out.weight")), params_.get("out.bias"));
}

Tensor CharLm::forward(const TokenBatch& input, bool training, Rng* rng) {
    if (input.steps == 0 || input.batch == 0) throw std::invalid_argument("char LM input must have at least one step");
    for (auto id : input.ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab)
            throw std::out_of_range("input id " + std::to_string(id) + " outside vocabulary of " +
                                    std::to_string(config_.vocab));
    }
    const bool drop = training && config_.dropout > 0.0;
    if (drop && !rng) throw std::invalid_argument("dropout requires a random generator");
    const auto rate = static_cast<real>(config_.dropout);
    const std::size_t B = input.batch, H = config_.hidden;

    std::vector<CellWeights> weights;
    for (std::size_t l = 0; l < config_.layers; ++l) weights.push_back(cell_weights(params_, layer_prefix(l), config_.cell));
    std::vector<CellState> states;
    for (std::size_t l = 0; l < config_.layers; ++l) states.push_back(zero_state(config_.cell, B, H));

    std::vector<Tensor> tops;
    tops.reserve(input.steps);
    std::vector<TokenId> column(B);
    for (std::size_t t = 0; t < input.steps; ++t) {
        for (std::size_t b = 0; b < B; ++b) column[b] = input.at(b, t);
        Tensor below;
        for (std::size_t l = 0; l < config_.layers; ++l) {
            Tensor xp = l == 0 ? embedding(weights[l].w_in, column, {B})
                               : matmul(drop ? dropout(below, rate, true, *rng) : below, weights[l].w_in);
            xp = add_bias(xp, weights[l].bias);
            states[l] = cell_step(config_.cell, xp, states[l], weights[l], H);
            below = states[l].h;
        }
        tops.push_back(reshape(drop ? dropout(below, rate, true, *rng) : below, {B, 1, H}));
    }
    return output_logits(concat(tops, 1));
}

std::vector<CellState> CharLm::step(TokenId token, const std::vector<CellState>& states) const {
    if (token < 0 || static_cast<std::size_t>(token) >= config_.vocab)
        throw std::out_of_range("input id " + std::to_string(token) + " outside vocabulary of " +
                                std::to_string(config_.vocab));
    std::vector<CellState> next;
    Tensor below;
    const TokenId ids[1] = {token};
    for (std::size_t l = 0; l < config_.layers; ++l) {
        const CellWeights w = cell_weights(params_, layer_prefix(l), config_.cell);
        Tensor xp = l == 0 ? embedding(w.w_in, ids, {1}) : matmul(below, w.w_in);
        xp = add_bias(xp, w.bias);
        next.push_back(cell_step(config_.cell, xp, states[l], w, config_.hidden));
        below = next.back().h;
    }
    return next;
}

std::unique_ptr<Decoder> CharLm::decoder() const { return std::make_unique<CharLmDecoder>(*this); }

}  // namespace codeforge::models

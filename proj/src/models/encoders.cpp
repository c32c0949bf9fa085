// SPDX-License-Identifier: Apache-2.0

#include "codeforge/models/encoders.hpp"

#include <algorithm>
#include <stdexcept>

namespace codeforge::models {

using namespace numeric;

namespace {

constexpr double kEmbeddingLimit = 0.05;
constexpr double kWeightStddev = 0.02;

void check_sequences(const TokenSequences& sequences, std::size_t vocab) {
    if (sequences.empty()) throw std::invalid_argument("encoder batch is empty");
    for (const auto& seq : sequences) {
        if (seq.empty()) throw std::invalid_argument("cannot encode an empty token sequence");
        for (auto id : seq)
            if (id < 0 || static_cast<std::size_t>(id) >= vocab)
                throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary of " +
                                        std::to_string(vocab));
    }
}

}  // namespace

EncoderKind parse_encoder_kind(const std::string& text) {
    if (text == "nbow") return EncoderKind::nbow;
    if (text == "rnn") return EncoderKind::rnn;
    throw std::invalid_argument("unknown encoder kind '" + text + "' (expected nbow or rnn)");
}

std::string to_string(EncoderKind kind) { return kind == EncoderKind::nbow ? "nbow" : "rnn"; }

void EncoderConfig::validate() const {
    if (vocab == 0) throw std::invalid_argument("encoder vocabulary is empty");
    if (embed_dim == 0 || output_dim == 0) throw std::invalid_argument("encoder dimensions must be positive");
    if (kind == EncoderKind::rnn && hidden == 0) throw std::invalid_argument("rnn encoder hidden size must be positive");
}

nlohmann::json EncoderConfig::to_json() const {
    nlohmann::json j{{"kind", to_string(kind)}, {"vocab", vocab}, {"embed_dim", embed_dim}, {"output_dim", output_dim}};
    if (kind == EncoderKind::rnn) j["hidden"] = hidden;
    return j;
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json& j) {
    EncoderConfig c;
    c.kind = parse_encoder_kind(j.value("kind", std::string("nbow")));
    c.vocab = j.value("vocab", c.vocab);
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.hidden = j.value("hidden", c.hidden);
    c.output_dim = j.value("output_dim", c.output_dim);
    return c;
}

Encoder::Encoder(EncoderConfig config, std::string prefix) : config_(config), prefix_(std::move(prefix)) {
    config_.validate();
}

void Encoder::add_parameters(ParameterSet& params, Rng& rng) const {
    const auto& c = config_;
    params.add(prefix_ + "embedding", init_uniform({c.vocab, c.embed_dim}, kEmbeddingLimit, rng));
    std::size_t proj_in = c.embed_dim;
    if (c.kind == EncoderKind::rnn) {
        add_cell_parameters(params, prefix_ + "gru_fwd", CellKind::gru, c.embed_dim, c.hidden, kWeightStddev, rng);
        add_cell_parameters(params, prefix_ + "gru_bwd", CellKind::gru, c.embed_dim, c.hidden, kWeightStddev, rng);
        proj_in = 2 * c.hidden;
    }
    params.add(prefix_ + "proj.weight", init_normal({proj_in, c.output_dim}, kWeightStddev, rng));
    params.add(prefix_ + "proj.bias", init_constant({c.output_dim}, real(0)));
}

Tensor Encoder::rnn_finals(const ParameterSet& params, const TokenSequences& sequences,
                           const std::string& direction) const {
    const std::size_t B = sequences.size(), H = config_.hidden;
    const bool reverse = direction == "gru_bwd";
    std::size_t longest = 0;
    for (const auto& s : sequences) longest = std::max(longest, s.size());

    const CellWeights w = cell_weights(params, prefix_ + direction, CellKind::gru);
    const Tensor& table = params.get(prefix_ + "embedding");
    CellState state = zero_state(CellKind::gru, B, H);
    std::vector<TokenId> column(B);
    for (std::size_t t = 0; t < longest; ++t) {
        // Sequences shorter than `longest` stop updating once exhausted.
        std::vector<real> live(B * H, real(0));
        bool all_live = true;
        for (std::size_t b = 0; b < B; ++b) {
            const auto& s = sequences[b];
            if (t < s.size()) {
                column[b] = reverse ? s[s.size() - 1 - t] : s[t];
                std::fill_n(live.begin() + static_cast<std::ptrdiff_t>(b * H), H, real(1));
            } else {
                column[b] = 0;
                all_live = false;
            }
        }
        const Tensor xp = add_bias(matmul(embedding(table, column, {B}), w.w_in), w.bias);
        const CellState next = cell_step(CellKind::gru, xp, state, w, H);
        state.h = all_live ? next.h : add(state.h, mul(Tensor({B, H}, std::move(live)), sub(next.h, state.h)));
    }
    return state.h;
}

Tensor Encoder::encode_batch(const ParameterSet& params, const TokenSequences& sequences) const {
    check_sequences(sequences, config_.vocab);
    const Tensor& w = params.get(prefix_ + "proj.weight");
    const Tensor& b = params.get(prefix_ + "proj.bias");
    if (config_.kind == EncoderKind::nbow)
        return tanh(add_bias(matmul(embedding_bag_mean(params.get(prefix_ + "embedding"), sequences), w), b));
    const Tensor joined = concat({rnn_finals(params, sequences, "gru_fwd"), rnn_finals(params, sequences, "gru_bwd")}, 1);
    return add_bias(matmul(joined, w), b);
}

DualEncoder::DualEncoder(EncoderConfig query, EncoderConfig code, std::uint64_t seed)
    : query_(query, "query."), code_(code, "code.") {
    if (query.output_dim != code.output_dim)
        throw std::invalid_argument("query and code encoders must share an output dimension (" +
                                    std::to_string(query.output_dim) + " vs " + std::to_string(code.output_dim) + ")");
    Rng rng(seed);
    query_.add_parameters(params_, rng);
    code_.add_parameters(params_, rng);
}

Tensor DualEncoder::encode_queries(const TokenSequences& queries) const { return query_.encode_batch(params_, queries); }

Tensor DualEncoder::encode_code(const TokenSequences& code) const { return code_.encode_batch(params_, code); }

Tensor DualEncoder::score_matrix(const Tensor& queries, const Tensor& code) { return matmul_nt(queries, code); }

nlohmann::json DualEncoder::architecture() const {
    return {{"kind", "dual_encoder"}, {"query", query_.config().to_json()}, {"code", code_.config().to_json()}};
}

DualEncoder DualEncoder::from_architecture(const nlohmann::json& j, std::uint64_t seed) {
    if (j.value("kind", std::string()) != "dual_encoder")
        throw std::invalid_argument("architecture is not a dual encoder");
    return DualEncoder(EncoderConfig::from_json(j.at("query")), EncoderConfig::from_json(j.at("code")), seed);
}

}  // namespace codeforge::models

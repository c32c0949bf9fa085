// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "codeforge/models/recurrent.hpp"

namespace codeforge::models {

using numeric::TokenId;
using TokenSequences = std::vector<std::vector<TokenId>>;

enum class EncoderKind { nbow, rnn };

EncoderKind parse_encoder_kind(const std::string& text);
std::string to_string(EncoderKind kind);

struct EncoderConfig {
    EncoderKind kind = EncoderKind::nbow;
    std::size_t vocab = 0;
    std::size_t embed_dim = 128;
    std::size_t hidden = 64;  // per direction, rnn only
    std::size_t output_dim = 128;

    void validate() const;
    nlohmann::json to_json() const;
    static EncoderConfig from_json(const nlohmann::json& j);
};

/// Maps a token sequence to one vector. Parameters live in a caller-owned
/// set under `prefix`, so two encoders can share one optimizer.
///
///   nbow: tanh(mean(embed(tokens)) W + b)
///   rnn:  [gru_fwd final ; gru_bwd final] W + b
class Encoder {
public:
    Encoder(EncoderConfig config, std::string prefix);

    void add_parameters(numeric::ParameterSet& params, numeric::Rng& rng) const;

    /// [N, output_dim]; every sequence must be non-empty.
    numeric::Tensor encode_batch(const numeric::ParameterSet& params, const TokenSequences& sequences) const;

    const EncoderConfig& config() const { return config_; }
    const std::string& prefix() const { return prefix_; }

private:
    numeric::Tensor rnn_finals(const numeric::ParameterSet& params, const TokenSequences& sequences,
                               const std::string& direction) const;

    EncoderConfig config_;
    std::string prefix_;
};

/// Query and code encoders scored by dot product.
class DualEncoder {
public:
    DualEncoder(EncoderConfig query, EncoderConfig code, std::uint64_t seed);

    numeric::Tensor encode_queries(const TokenSequences& queries) const;
    numeric::Tensor encode_code(const TokenSequences& code) const;
    /// scores[i][j] = query_i . code_j
    static numeric::Tensor score_matrix(const numeric::Tensor& queries, const numeric::Tensor& code);

    numeric::ParameterSet& parameters() { return params_; }
    const numeric::ParameterSet& parameters() const { return params_; }
    const Encoder& query_encoder() const { return query_; }
    const Encoder& code_encoder() const { return code_; }
    nlohmann::json architecture() const;
    static DualEncoder from_architecture(const nlohmann::json& j, std::uint64_t seed);

private:
    Encoder query_;
    Encoder code_;
    numeric::ParameterSet params_;
};

}  // namespace codeforge::models

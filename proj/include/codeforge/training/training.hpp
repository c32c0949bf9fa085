// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "codeforge/models/encoders.hpp"
#include "codeforge/models/language_model.hpp"
#include "codeforge/numeric/optim.hpp"
#include "codeforge/retrieval/retrieval.hpp"

namespace codeforge::training {

using numeric::TokenId;

struct TrainConfig {
    std::size_t batch_size = 50;
    std::size_t seq_len = 128;
    double starter_lr = 0.002;
    double lr_decay = 0.97;
    double clip = 5.0;
    numeric::ClipMode clip_mode = numeric::ClipMode::element;
    std::size_t epochs = 50;
    double dropout = 0.0;
    double reg_weight = 0.0;  // L2 coefficient on every trainable weight
    std::uint64_t seed = 0;
    numeric::OptimizerKind optimizer = numeric::OptimizerKind::adam;

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
    nlohmann::json to_json() const;
    /// Fields present in `j` override those of `base`; unknown keys are rejected.
    static TrainConfig from_json(const nlohmann::json& j, const TrainConfig& base);
    static TrainConfig from_json(const nlohmann::json& j) { return from_json(j, TrainConfig()); }
};

/// starter_lr * decay^epoch, epochs counted from 0.
double lr_at(std::size_t epoch, const TrainConfig& cfg);

struct LmBatch {
    models::TokenBatch input;       // [B, T]
    std::vector<TokenId> targets;   // [B * T], input shifted left by one
    std::uint64_t hash() const;
};

/// Endless stream of windows drawn at seeded random offsets.
class LmBatchStream {
public:
    /// Throws when the corpus holds fewer than seq_len + 2 ids.
    LmBatchStream(std::span<const TokenId> ids, std::size_t seq_len, std::size_t batch_size, std::uint64_t seed);
    LmBatch next();

private:
    std::span<const TokenId> ids_;
    std::size_t seq_len_, batch_size_;
    numeric::Rng rng_;
};

std::vector<LmBatch> make_lm_batches(std::span<const TokenId> ids, std::size_t seq_len, std::size_t batch_size,
                                     std::uint64_t seed, std::size_t count);

/// Window starting at `offset`; the building block of every batch.
LmBatch window_batch(std::span<const TokenId> ids, std::span<const std::size_t> offsets, std::size_t seq_len);

/// ceil(corpus_ids / (batch_size * seq_len)).
std::size_t steps_per_epoch(std::size_t corpus_ids, const TrainConfig& cfg);

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct StepRecord {
    std::size_t step = 0;
    std::size_t epoch = 0;
    double lr = 0.0;
    double loss = 0.0;
    double max_abs_grad = 0.0;  // after clipping
};

struct EpochRecord {
    std::size_t epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    std::optional<double> valid_loss;
    double perplexity = 0.0;  // of valid loss when present, else train loss
    std::optional<double> train_mrr;
    std::optional<double> valid_mrr;
    double max_abs_grad = 0.0;
    double wall_seconds = 0.0;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    std::vector<StepRecord> steps;
    std::optional<std::size_t> best_epoch;
    std::filesystem::path best_checkpoint;

    nlohmann::json to_json() const;
    /// "step loss perplexity" lines, one per step.
    std::string curve_text() const;
};

/// Where and what to persist. An empty directory disables checkpoints.
struct TrainOutputs {
    std::filesystem::path dir;
    nlohmann::json codec;
    std::function<void(const EpochRecord&)> on_epoch;
};

/// Per step: forward, cross-entropy, backward, L2 gradient, clip, optimizer
/// step at lr_at(epoch). Writes checkpoint.ckpt each epoch and best.ckpt on
/// a new minimum of the validation loss (train loss when no valid ids).
TrainReport train_lm(models::LanguageModel& model, std::span<const TokenId> train_ids,
                     std::span<const TokenId> valid_ids, const TrainConfig& cfg, const TrainOutputs& outputs = {});

/// Mean cross-entropy over consecutive windows of `valid_ids`, at most
/// `max_windows` of them; nullopt when the ids are too short for one window.
std::optional<double> lm_eval_loss(models::LanguageModel& model, std::span<const TokenId> ids, std::size_t seq_len,
                                   std::size_t batch_size, std::size_t max_windows = 256);

/// In-batch softmax training over shuffled batches; records train and valid
/// MRR per epoch. Best checkpoint = highest valid MRR (train MRR without valid pairs).
TrainReport train_dual_encoder(models::DualEncoder& model, const retrieval::EncodedPairs& train,
                               const retrieval::EncodedPairs& valid, const TrainConfig& cfg,
                               const TrainOutputs& outputs = {});

/// Adds 2 * weight * w to every trainable gradient and returns weight * sum(w^2).
double apply_l2(std::span<numeric::Parameter> params, double weight);

struct SweepMetrics {
    double train_metric = 0.0;
    double eval_metric = 0.0;
};

struct SweepRow {
    TrainConfig config;
    std::optional<SweepMetrics> metrics;
    std::string error;
};

struct SweepTable {
    std::vector<SweepRow> rows;      // grid order
    std::vector<std::size_t> ranking;  // row indices by eval metric, descending; failures last

    std::optional<std::size_t> best() const;
    nlohmann::json to_json(const std::string& train_label, const std::string& eval_label) const;
};

using SweepEval = std::function<SweepMetrics(const TrainConfig&)>;

/// Runs every configuration in order; an exception fails only its own row.
SweepTable run_sweep(std::span<const TrainConfig> grid, const SweepEval& eval);

/// Cartesian product over `axes` (each {"name": field, "values": [...]}),
/// the first axis varying slowest. Each point overrides `base`.
std::vector<TrainConfig> expand_grid(const TrainConfig& base, const nlohmann::json& axes);

}  // namespace codeforge::training

// SPDX-License-Identifier: Apache-2.0

#include "codeforge/training/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "codeforge/numeric/checkpoint.hpp"

namespace codeforge::training {

using namespace numeric;

namespace {

constexpr std::uint64_t kDropoutStream = 0x64726f706f7574ULL;
constexpr std::uint64_t kShuffleStream = 0x73687566666c65ULL;

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void require(bool ok, const std::string& message) {
    if (!ok) throw std::invalid_argument(message);
}

std::string fixed(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

void check_finite(double loss, double lr, std::size_t step, std::uint64_t batch_hash) {
    if (std::isfinite(loss)) return;
    char hash[32];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(batch_hash));
    throw TrainingError("non-finite loss " + fixed(loss) + " at step " + std::to_string(step) + " (lr " + fixed(lr) +
                        ", batch " + hash + ")");
}

struct Checkpointer {
    const TrainOutputs& outputs;
    nlohmann::json architecture;

    bool enabled() const { return !outputs.dir.empty(); }

    void write(const std::string& file, std::span<const Parameter> params, const nlohmann::json& extra) const {
        save_checkpoint(outputs.dir / file, architecture, outputs.codec, params, extra);
    }
};

nlohmann::json checkpoint_extra(const TrainConfig& cfg, const EpochRecord& r) {
    return {{"epoch", r.epoch},
            {"train_config", cfg.to_json()},
            {"train_loss", r.train_loss},
            {"valid_loss", optional_json(r.valid_loss)},
            {"train_mrr", optional_json(r.train_mrr)},
            {"valid_mrr", optional_json(r.valid_mrr)}};
}

models::TokenSequences gather(const models::TokenSequences& from, std::span<const std::size_t> rows) {
    models::TokenSequences out;
    out.reserve(rows.size());
    for (auto r : rows) out.push_back(from[r]);
    return out;
}

}  // namespace

void TrainConfig::validate() const {
    require(batch_size > 0, "batch_size must be positive");
    require(seq_len > 0, "seq_len must be positive");
    require(starter_lr > 0.0 && std::isfinite(starter_lr), "starter_lr must be positive");
    require(lr_decay > 0.0 && lr_decay <= 1.0, "lr_decay must lie in (0, 1]");
    require(clip > 0.0, "clip must be positive");
    require(epochs > 0, "epochs must be positive");
    require(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
    require(reg_weight >= 0.0, "reg_weight must be non-negative");
}

nlohmann::json TrainConfig::to_json() const {
    return {{"batch_size", batch_size}, {"seq_len", seq_len}, {"starter_lr", starter_lr},
            {"lr_decay", lr_decay},     {"clip", clip},       {"clip_mode", numeric::to_string(clip_mode)},
            {"epochs", epochs},         {"dropout", dropout}, {"reg_weight", reg_weight},
            {"seed", seed},             {"optimizer", numeric::to_string(optimizer)}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j, const TrainConfig& base) {
    if (!j.is_object()) throw std::invalid_argument("training config must be a JSON object");
    TrainConfig c = base;
    for (const auto& [key, value] : j.items()) {
        if (key == "batch_size") c.batch_size = value.get<std::size_t>();
        else if (key == "seq_len") c.seq_len = value.get<std::size_t>();
        else if (key == "starter_lr") c.starter_lr = value.get<double>();
        else if (key == "lr_decay") c.lr_decay = value.get<double>();
        else if (key == "clip") c.clip = value.get<double>();
        else if (key == "clip_mode") c.clip_mode = parse_clip_mode(value.get<std::string>());
        else if (key == "epochs") c.epochs = value.get<std::size_t>();
        else if (key == "dropout") c.dropout = value.get<double>();
        else if (key == "reg_weight") c.reg_weight = value.get<double>();
        else if (key == "seed") c.seed = value.get<std::uint64_t>();
        else if (key == "optimizer") c.optimizer = parse_optimizer(value.get<std::string>());
        else throw std::invalid_argument("unknown training config key '" + key + "'");
    }
    return c;
}

double lr_at(std::size_t epoch, const TrainConfig& cfg) {
    return cfg.starter_lr * std::pow(cfg.lr_decay, static_cast<double>(epoch));
}

std::uint64_t LmBatch::hash() const {
    std::uint64_t h = mix64(input.batch * 1315423911ULL + input.steps);
    for (auto id : input.ids) h = mix64(h ^ static_cast<std::uint32_t>(id));
    return h;
}

LmBatch window_batch(std::span<const TokenId> ids, std::span<const std::size_t> offsets, std::size_t seq_len) {
    LmBatch b;
    b.input.batch = offsets.size();
    b.input.steps = seq_len;
    b.input.ids.reserve(offsets.size() * seq_len);
    b.targets.reserve(offsets.size() * seq_len);
    for (auto off : offsets) {
        if (off + seq_len + 1 > ids.size())
            throw std::out_of_range("window at " + std::to_string(off) + " runs past the corpus end");
        b.input.ids.insert(b.input.ids.end(), ids.begin() + static_cast<std::ptrdiff_t>(off),
                           ids.begin() + static_cast<std::ptrdiff_t>(off + seq_len));
        b.targets.insert(b.targets.end(), ids.begin() + static_cast<std::ptrdiff_t>(off + 1),
                         ids.begin() + static_cast<std::ptrdiff_t>(off + seq_len + 1));
    }
    return b;
}

LmBatchStream::LmBatchStream(std::span<const TokenId> ids, std::size_t seq_len, std::size_t batch_size,
                             std::uint64_t seed)
    : ids_(ids), seq_len_(seq_len), batch_size_(batch_size), rng_(seed) {
    if (seq_len == 0 || batch_size == 0) throw std::invalid_argument("seq_len and batch_size must be positive");
    if (ids.size() <= seq_len + 1)
        throw std::invalid_argument("corpus of " + std::to_string(ids.size()) + " tokens is too short for windows of " +
                                    std::to_string(seq_len) + " (needs more than " + std::to_string(seq_len + 1) + ")");
}

LmBatch LmBatchStream::next() {
    std::vector<std::size_t> offsets(batch_size_);
    for (auto& off : offsets) off = static_cast<std::size_t>(rng_.below(ids_.size() - seq_len_));
    return window_batch(ids_, offsets, seq_len_);
}

std::vector<LmBatch> make_lm_batches(std::span<const TokenId> ids, std::size_t seq_len, std::size_t batch_size,
                                     std::uint64_t seed, std::size_t count) {
    LmBatchStream stream(ids, seq_len, batch_size, seed);
    std::vector<LmBatch> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(stream.next());
    return out;
}

std::size_t steps_per_epoch(std::size_t corpus_ids, const TrainConfig& cfg) {
    const std::size_t per_step = cfg.batch_size * cfg.seq_len;
    return std::max<std::size_t>(1, (corpus_ids + per_step - 1) / per_step);
}

double apply_l2(std::span<Parameter> params, double weight) {
    if (weight == 0.0) return 0.0;
    double penalty = 0.0;
    for (auto& p : params) {
        if (!p.trainable) continue;
        auto w = p.tensor.data();
        auto g = p.tensor.grad();
        for (std::size_t i = 0; i < w.size(); ++i) {
            penalty += static_cast<double>(w[i]) * w[i];
            g[i] += static_cast<real>(2.0 * weight * w[i]);
        }
    }
    return weight * penalty;
}

std::optional<double> lm_eval_loss(models::LanguageModel& model, std::span<const TokenId> ids, std::size_t seq_len,
                                   std::size_t batch_size, std::size_t max_windows) {
    std::vector<std::size_t> offsets;
    for (std::size_t off = 0; off + seq_len + 1 <= ids.size() && offsets.size() < max_windows; off += seq_len)
        offsets.push_back(off);
    if (offsets.empty()) return std::nullopt;
    NoGradGuard no_grad;
    double total = 0.0;
    for (std::size_t begin = 0; begin < offsets.size(); begin += batch_size) {
        const std::size_t end = std::min(offsets.size(), begin + batch_size);
        const auto chunk = std::span<const std::size_t>(offsets).subspan(begin, end - begin);
        const LmBatch b = window_batch(ids, chunk, seq_len);
        total += static_cast<double>(cross_entropy(model.forward(b.input, false, nullptr), b.targets).item()) *
                 static_cast<double>(chunk.size());
    }
    return total / static_cast<double>(offsets.size());
}

TrainReport train_lm(models::LanguageModel& model, std::span<const TokenId> train_ids,
                     std::span<const TokenId> valid_ids, const TrainConfig& cfg, const TrainOutputs& outputs) {
    cfg.validate();
    const std::size_t vocab = model.vocab_size();
    for (auto ids : {train_ids, valid_ids})
        for (auto id : ids)
            if (id < 0 || static_cast<std::size_t>(id) >= vocab)
                throw std::invalid_argument("corpus id " + std::to_string(id) + " outside model vocabulary of " +
                                            std::to_string(vocab));
    if (auto ctx = model.context_length(); ctx && cfg.seq_len > *ctx)
        throw std::invalid_argument("seq_len " + std::to_string(cfg.seq_len) + " exceeds model context " +
                                    std::to_string(*ctx));

    auto& params = model.parameters();
    const auto optimizer = make_optimizer(cfg.optimizer);
    LmBatchStream stream(train_ids, cfg.seq_len, cfg.batch_size, cfg.seed);
    Rng drop_rng(mix64(cfg.seed ^ kDropoutStream));
    const Checkpointer ckpt{outputs, model.architecture()};
    const std::size_t steps = steps_per_epoch(train_ids.size(), cfg);

    TrainReport report;
    double best_loss = std::numeric_limits<double>::infinity();
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = lr_at(epoch, cfg);
        double loss_sum = 0.0;
        for (std::size_t s = 0; s < steps; ++s, ++step) {
            const LmBatch batch = stream.next();
            params.zero_grad();
            const Tensor loss = cross_entropy(model.forward(batch.input, true, &drop_rng), batch.targets);
            const double value = loss.item();
            check_finite(value, rec.lr, step, batch.hash());
            loss.backward();
            apply_l2(params.items(), cfg.reg_weight);
            const ClipStats clip = clip_gradients(params.items(), static_cast<real>(cfg.clip), cfg.clip_mode);
            optimizer->step(params.items(), rec.lr);
            loss_sum += value;
            rec.max_abs_grad = std::max(rec.max_abs_grad, clip.max_abs_after);
            report.steps.push_back({step, epoch, rec.lr, value, clip.max_abs_after});
        }
        rec.train_loss = loss_sum / static_cast<double>(steps);
        rec.valid_loss = lm_eval_loss(model, valid_ids, cfg.seq_len, cfg.batch_size);
        const double tracked = rec.valid_loss.value_or(rec.train_loss);
        rec.perplexity = std::exp(tracked);
        rec.wall_seconds = seconds_since(start);

        if (ckpt.enabled()) ckpt.write("checkpoint.ckpt", params.items(), checkpoint_extra(cfg, rec));
        if (tracked < best_loss) {
            best_loss = tracked;
            report.best_epoch = epoch;
            if (ckpt.enabled()) {
                ckpt.write("best.ckpt", params.items(), checkpoint_extra(cfg, rec));
                report.best_checkpoint = outputs.dir / "best.ckpt";
            }
        }
        report.epochs.push_back(rec);
        if (outputs.on_epoch) outputs.on_epoch(rec);
    }
    return report;
}

TrainReport train_dual_encoder(models::DualEncoder& model, const retrieval::EncodedPairs& train,
                               const retrieval::EncodedPairs& valid, const TrainConfig& cfg,
                               const TrainOutputs& outputs) {
    cfg.validate();
    if (train.size() == 0) throw std::invalid_argument("no training pairs");
    if (train.queries.size() != train.code.size() || valid.queries.size() != valid.code.size())
        throw std::invalid_argument("query and code lists differ in length");

    auto& params = model.parameters();
    const auto optimizer = make_optimizer(cfg.optimizer);
    Rng shuffle_rng(mix64(cfg.seed ^ kShuffleStream));
    const Checkpointer ckpt{outputs, model.architecture()};
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);

    TrainReport report;
    double best_mrr = -1.0;
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = lr_at(epoch, cfg);
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);

        double loss_sum = 0.0;
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size, ++step) {
            const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
            const auto rows = std::span<const std::size_t>(order).subspan(begin, end - begin);
            params.zero_grad();
            const Tensor scores = models::DualEncoder::score_matrix(model.encode_queries(gather(train.queries, rows)),
                                                                    model.encode_code(gather(train.code, rows)));
            const Tensor loss = retrieval::eq1_loss(scores);
            const double value = loss.item();
            std::uint64_t h = mix64(step);
            for (auto r : rows) h = mix64(h ^ r);
            check_finite(value, rec.lr, step, h);
            loss.backward();
            apply_l2(params.items(), cfg.reg_weight);
            const ClipStats clip = clip_gradients(params.items(), static_cast<real>(cfg.clip), cfg.clip_mode);
            optimizer->step(params.items(), rec.lr);
            loss_sum += value * static_cast<double>(rows.size());
            rec.max_abs_grad = std::max(rec.max_abs_grad, clip.max_abs_after);
            report.steps.push_back({step, epoch, rec.lr, value, clip.max_abs_after});
        }
        rec.train_loss = loss_sum / static_cast<double>(order.size());
        rec.perplexity = std::exp(rec.train_loss);
        rec.train_mrr = retrieval::chunked_mrr(model, train, cfg.batch_size);
        if (valid.size() > 0) rec.valid_mrr = retrieval::chunked_mrr(model, valid, cfg.batch_size);
        rec.wall_seconds = seconds_since(start);

        if (ckpt.enabled()) ckpt.write("checkpoint.ckpt", params.items(), checkpoint_extra(cfg, rec));
        const double tracked = rec.valid_mrr.value_or(*rec.train_mrr);
        if (tracked > best_mrr) {
            best_mrr = tracked;
            report.best_epoch = epoch;
            if (ckpt.enabled()) {
                ckpt.write("best.ckpt", params.items(), checkpoint_extra(cfg, rec));
                report.best_checkpoint = outputs.dir / "best.ckpt";
            }
        }
        report.epochs.push_back(rec);
        if (outputs.on_epoch) outputs.on_epoch(rec);
    }
    return report;
}

nlohmann::json TrainReport::to_json() const {
    nlohmann::json epochs_json = nlohmann::json::array();
    for (const auto& e : epochs) {
        epochs_json.push_back({{"epoch", e.epoch},
                               {"lr", e.lr},
                               {"train_loss", e.train_loss},
                               {"valid_loss", optional_json(e.valid_loss)},
                               {"perplexity", e.perplexity},
                               {"train_mrr", optional_json(e.train_mrr)},
                               {"valid_mrr", optional_json(e.valid_mrr)},
                               {"max_abs_grad", e.max_abs_grad},
                               {"wall_seconds", e.wall_seconds}});
    }
    return {{"epochs", epochs_json},
            {"steps", steps.size()},
            {"best_epoch", best_epoch ? nlohmann::json(*best_epoch) : nlohmann::json()},
            {"best_checkpoint", best_checkpoint.empty() ? nlohmann::json() : nlohmann::json(best_checkpoint.string())}};
}

std::string TrainReport::curve_text() const {
    std::ostringstream out;
    out << "# step loss perplexity\n";
    for (const auto& s : steps) out << s.step << ' ' << fixed(s.loss) << ' ' << fixed(std::exp(s.loss)) << '\n';
    return out.str();
}

std::optional<std::size_t> SweepTable::best() const {
    if (ranking.empty() || !rows[ranking.front()].metrics) return std::nullopt;
    return ranking.front();
}

nlohmann::json SweepTable::to_json(const std::string& train_label, const std::string& eval_label) const {
    nlohmann::json rows_json = nlohmann::json::array();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        nlohmann::json row{{"row", i}, {"config", r.config.to_json()}};
        row[train_label] = r.metrics ? nlohmann::json(r.metrics->train_metric) : nlohmann::json();
        row[eval_label] = r.metrics ? nlohmann::json(r.metrics->eval_metric) : nlohmann::json();
        row["error"] = r.error.empty() ? nlohmann::json() : nlohmann::json(r.error);
        rows_json.push_back(std::move(row));
    }
    const auto b = best();
    return {{"rows", rows_json}, {"ranking", ranking}, {"best_row", b ? nlohmann::json(*b) : nlohmann::json()}};
}

SweepTable run_sweep(std::span<const TrainConfig> grid, const SweepEval& eval) {
    if (grid.empty()) throw std::invalid_argument("sweep grid is empty");
    SweepTable table;
    for (const auto& cfg : grid) {
        SweepRow row{cfg, std::nullopt, {}};
        try {
            cfg.validate();
            row.metrics = eval(cfg);
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        table.rows.push_back(std::move(row));
    }
    table.ranking.resize(table.rows.size());
    std::iota(table.ranking.begin(), table.ranking.end(), 0);
    std::stable_sort(table.ranking.begin(), table.ranking.end(), [&](std::size_t a, std::size_t b) {
        const auto& ma = table.rows[a].metrics;
        const auto& mb = table.rows[b].metrics;
        if (ma && mb) return ma->eval_metric > mb->eval_metric;
        return ma.has_value() && !mb.has_value();
    });
    return table;
}

std::vector<TrainConfig> expand_grid(const TrainConfig& base, const nlohmann::json& axes) {
    std::vector<std::pair<std::string, nlohmann::json>> dims;
    if (axes.is_array()) {
        for (const auto& a : axes) dims.emplace_back(a.at("name").get<std::string>(), a.at("values"));
    } else if (axes.is_object()) {
        for (const auto& [name, values] : axes.items()) dims.emplace_back(name, values);
    } else {
        throw std::invalid_argument("grid axes must be an array or object");
    }
    for (const auto& [name, values] : dims)
        if (!values.is_array() || values.empty()) throw std::invalid_argument("grid axis '" + name + "' has no values");

    std::vector<TrainConfig> grid;
    std::vector<std::size_t> pos(dims.size(), 0);
    while (true) {
        nlohmann::json point = nlohmann::json::object();
        for (std::size_t d = 0; d < dims.size(); ++d) point[dims[d].first] = dims[d].second[pos[d]];
        grid.push_back(TrainConfig::from_json(point, base));
        std::size_t d = dims.size();
        while (d > 0) {
            --d;
            if (++pos[d] < dims[d].second.size()) break;
            pos[d] = 0;
            if (d == 0) return grid;
        }
        if (dims.empty()) return grid;
    }
}

}  // namespace codeforge::training

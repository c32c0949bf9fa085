// SPDX-License-Identifier: Apache-2.0

#include "codeforge/retrieval/retrieval.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "codeforge/numeric/checkpoint.hpp"
#include "codeforge/tokenizers/code_tokens.hpp"

namespace codeforge::retrieval {

using namespace numeric;

namespace {

std::size_t square_size(const Tensor& scores) {
    if (scores.rank() != 2 || scores.dim(0) != scores.dim(1))
        throw ShapeError("score matrix must be square, got " + shape_str(scores.shape()));
    if (scores.dim(0) == 0) throw ShapeError("score matrix is empty");
    return scores.dim(0);
}

std::vector<TokenId> lookup(const std::vector<std::string>& tokens, const tokenizers::WordVocab& vocab) {
    std::vector<std::string> folded;
    folded.reserve(tokens.size());
    for (const auto& t : tokens) folded.push_back(tokenizers::fold_case(t));
    return vocab.encode(folded);
}

std::filesystem::path sidecar(const std::filesystem::path& path) {
    auto p = path;
    p += ".jsonl";
    return p;
}

}  // namespace

Tensor eq1_loss(const Tensor& scores) {
    const std::size_t n = square_size(scores);
    std::vector<TokenId> diagonal(n);
    std::iota(diagonal.begin(), diagonal.end(), 0);
    return cross_entropy(scores, diagonal);
}

std::vector<std::size_t> batch_ranks(const Tensor& scores) {
    const std::size_t n = square_size(scores);
    const auto s = scores.data();
    std::vector<std::size_t> ranks(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
        const real truth = s[i * n + i];
        for (std::size_t j = 0; j < n; ++j)
            if (j != i && s[i * n + j] >= truth) ++ranks[i];
    }
    return ranks;
}

double mrr(std::span<const std::size_t> ranks) {
    if (ranks.empty()) throw std::invalid_argument("MRR of an empty query set");
    double total = 0.0;
    for (auto r : ranks) {
        if (r == 0) throw std::invalid_argument("ranks start at 1");
        total += 1.0 / static_cast<double>(r);
    }
    return total / static_cast<double>(ranks.size());
}

EncodedPairs encode_pairs(std::span<const corpus::Sample> samples, const tokenizers::WordVocab& vocab) {
    EncodedPairs pairs;
    for (const auto& s : samples) {
        if (!s.is_paired()) continue;
        pairs.queries.push_back(lookup(s.docstring_tokens, vocab));
        pairs.code.push_back(lookup(s.code_tokens, vocab));
    }
    return pairs;
}

double chunked_mrr(const models::DualEncoder& model, const EncodedPairs& pairs, std::size_t batch) {
    if (pairs.size() == 0) throw std::invalid_argument("MRR of an empty query set");
    if (batch == 0) throw std::invalid_argument("batch size must be positive");
    NoGradGuard no_grad;
    std::vector<std::size_t> ranks;
    for (std::size_t begin = 0; begin < pairs.size();) {
        std::size_t end = std::min(pairs.size(), begin + batch);
        if (pairs.size() - end == 1) end = pairs.size();
        const models::TokenSequences q(pairs.queries.begin() + static_cast<std::ptrdiff_t>(begin),
                                       pairs.queries.begin() + static_cast<std::ptrdiff_t>(end));
        const models::TokenSequences c(pairs.code.begin() + static_cast<std::ptrdiff_t>(begin),
                                       pairs.code.begin() + static_cast<std::ptrdiff_t>(end));
        const auto r = batch_ranks(models::DualEncoder::score_matrix(model.encode_queries(q), model.encode_code(c)));
        ranks.insert(ranks.end(), r.begin(), r.end());
        begin = end;
    }
    return mrr(ranks);
}

SnippetIndex SnippetIndex::build(std::vector<corpus::Sample> samples, const models::DualEncoder& model,
                                 const tokenizers::WordVocab& vocab, std::size_t batch) {
    if (batch == 0) throw std::invalid_argument("batch size must be positive");
    NoGradGuard no_grad;
    SnippetIndex index;
    index.dim_ = model.code_encoder().config().output_dim;
    index.vectors_.reserve(samples.size() * index.dim_);
    for (std::size_t begin = 0; begin < samples.size(); begin += batch) {
        const std::size_t end = std::min(samples.size(), begin + batch);
        models::TokenSequences code;
        for (std::size_t i = begin; i < end; ++i) {
            const auto& s = samples[i];
            auto ids = lookup(s.code_tokens.empty() ? tokenizers::split_code_tokens(s.code) : s.code_tokens, vocab);
            if (ids.empty()) ids.push_back(tokenizers::WordVocab::kUnknown);
            code.push_back(std::move(ids));
        }
        const Tensor v = model.encode_code(code);
        index.vectors_.insert(index.vectors_.end(), v.data().begin(), v.data().end());
    }
    index.samples_ = std::move(samples);
    return index;
}

std::span<const real> SnippetIndex::vector(std::size_t i) const {
    if (i >= samples_.size()) throw std::out_of_range("index entry " + std::to_string(i) + " out of range");
    return std::span<const real>(vectors_).subspan(i * dim_, dim_);
}

SearchResult SnippetIndex::search(std::span<const real> query, std::size_t k) const {
    if (query.size() != dim_)
        throw ShapeError("query vector has dimension " + std::to_string(query.size()) + ", index has " +
                         std::to_string(dim_));
    SearchResult result;
    result.truncated = k > samples_.size();
    k = std::min(k, samples_.size());
    if (k == 0) return result;
    std::vector<SearchHit> all(samples_.size());
    for (std::size_t i = 0; i < samples_.size(); ++i) {
        double dot = 0.0;
        const auto v = vector(i);
        for (std::size_t d = 0; d < dim_; ++d) dot += static_cast<double>(query[d]) * v[d];
        all[i] = {i, dot};
    }
    std::stable_sort(all.begin(), all.end(), [](const SearchHit& a, const SearchHit& b) { return a.score > b.score; });
    all.resize(k);
    result.hits = std::move(all);
    return result;
}

void SnippetIndex::save(const std::filesystem::path& path, const nlohmann::json& manifest_extra) const {
    NamedArray vectors{"vectors", {samples_.size(), dim_}, {}};
    vectors.values.assign(vectors_.begin(), vectors_.end());
    nlohmann::json manifest{{"architecture", {{"kind", "snippet_index"}, {"dim", dim_}, {"entries", samples_.size()}}},
                            {"codec", nullptr},
                            {"parameters", nlohmann::json::array({{{"name", "vectors"}, {"shape", vectors.shape}}})}};
    if (!manifest_extra.is_null()) manifest["extra"] = manifest_extra;
    write_jsonl(sidecar(path), samples_);
    save_checkpoint(path, std::move(manifest), std::span<const NamedArray>(&vectors, 1));
}

SnippetIndex SnippetIndex::load(const std::filesystem::path& path) {
    const CheckpointData data = load_checkpoint(path);
    const NamedArray& vectors = data.array("vectors");
    if (vectors.shape.size() != 2) throw CheckpointError("index vectors must be a matrix");
    auto entries = corpus::load_jsonl(sidecar(path), "");
    if (entries.samples.size() != vectors.shape[0] || entries.skipped() != 0)
        throw CheckpointError("index sidecar holds " + std::to_string(entries.samples.size()) + " entries, vectors hold " +
                              std::to_string(vectors.shape[0]));
    SnippetIndex index;
    index.samples_ = std::move(entries.samples);
    index.dim_ = vectors.shape[1];
    index.vectors_.assign(vectors.values.begin(), vectors.values.end());
    index.extra_ = data.manifest.value("extra", nlohmann::json());
    return index;
}

LoadedDualEncoder load_dual_encoder(const std::filesystem::path& checkpoint) {
    const auto data = load_checkpoint(checkpoint);
    LoadedDualEncoder out{models::DualEncoder::from_architecture(data.manifest.at("architecture"), 0),
                          tokenizers::WordVocab::from_json(data.manifest.at("codec")), data.manifest};
    restore_parameters(data, out.model.parameters());
    return out;
}

std::vector<real> encode_query(const std::string& text, const models::DualEncoder& model,
                               const tokenizers::WordVocab& vocab) {
    auto ids = lookup(tokenizers::split_code_tokens(text), vocab);
    if (ids.empty()) throw std::invalid_argument("query has no tokens");
    NoGradGuard no_grad;
    const Tensor v = model.encode_queries({ids});
    return {v.data().begin(), v.data().end()};
}

}  // namespace codeforge::retrieval

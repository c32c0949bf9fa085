// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "codeforge/corpus/corpus.hpp"
#include "codeforge/models/encoders.hpp"
#include "codeforge/tokenizers/word_vocab.hpp"

namespace codeforge::retrieval {

using numeric::Tensor;

/// In-batch softmax loss over a square score matrix: the mean over rows of
/// -log softmax(row)[i], so each query competes its true code against the
/// other codes of the batch.
Tensor eq1_loss(const Tensor& scores);

/// 1-based rank of each diagonal entry within its row, descending. Entries
/// equal to the diagonal count as ahead of it.
std::vector<std::size_t> batch_ranks(const Tensor& scores);

/// Mean of 1/rank. Throws on an empty set or a rank of 0.
double mrr(std::span<const std::size_t> ranks);

/// Query and code token sequences for a dual encoder, already mapped to ids.
struct EncodedPairs {
    models::TokenSequences queries;
    models::TokenSequences code;

    std::size_t size() const { return queries.size(); }
};

/// Docstring tokens become queries and code tokens become code, both
/// case-folded and looked up in `vocab`. Pairs with an empty side are dropped.
EncodedPairs encode_pairs(std::span<const corpus::Sample> samples, const tokenizers::WordVocab& vocab);

/// MRR over consecutive chunks of `batch` pairs, each chunk scored as one
/// candidate pool. A trailing chunk of size 1 is folded into its predecessor.
double chunked_mrr(const models::DualEncoder& model, const EncodedPairs& pairs, std::size_t batch);

struct SearchHit {
    std::size_t entry = 0;
    double score = 0.0;
};

struct SearchResult {
    std::vector<SearchHit> hits;
    bool truncated = false;  // k exceeded the index size
};

/// Code vectors for a fixed set of snippets. Immutable after build.
class SnippetIndex {
public:
    static SnippetIndex build(std::vector<corpus::Sample> samples, const models::DualEncoder& model,
                              const tokenizers::WordVocab& vocab, std::size_t batch = 256);

    /// Top-k by dot product, descending; equal scores keep index order.
    SearchResult search(std::span<const numeric::real> query, std::size_t k) const;

    std::size_t size() const { return samples_.size(); }
    std::size_t dim() const { return dim_; }
    const corpus::Sample& sample(std::size_t i) const { return samples_.at(i); }
    std::span<const numeric::real> vector(std::size_t i) const;

    /// `<path>` holds the vectors in checkpoint format; `<path>.jsonl` holds
    /// the entries in index order.
    void save(const std::filesystem::path& path, const nlohmann::json& manifest_extra = nullptr) const;
    static SnippetIndex load(const std::filesystem::path& path);
    const nlohmann::json& manifest_extra() const { return extra_; }

private:
    std::vector<corpus::Sample> samples_;
    std::vector<numeric::real> vectors_;
    std::size_t dim_ = 0;
    nlohmann::json extra_;
};

struct LoadedDualEncoder {
    models::DualEncoder model;
    tokenizers::WordVocab vocab;
    nlohmann::json manifest;
};

/// Rebuilds a dual encoder and its word vocabulary from a checkpoint.
LoadedDualEncoder load_dual_encoder(const std::filesystem::path& checkpoint);

/// Encodes one free-text query with the query encoder.
std::vector<numeric::real> encode_query(const std::string& text, const models::DualEncoder& model,
                                        const tokenizers::WordVocab& vocab);

}  // namespace codeforge::retrieval

#ifndef AREA_PIPELINE_HPP
#define AREA_PIPELINE_HPP

#include "area/corpus.hpp"
#include "area/encoder.hpp"

#include <atomic>
#include <cstdint>
#include <string>
#include <vector>

namespace area {

struct RankedList {
    std::string query_id;
    std::vector<std::string> doc_ids;
    std::vector<double> scores; // non-increasing, aligned to doc_ids
    std::size_t k = 0;          // candidate-set size requested
};

void save_ranked_list(const RankedList& list, const std::string& path);

// The full "retrieval and re-ranking" system: a target DR encoder for
// first-stage top-K retrieval and a reranker for final ordering. This is
// the evaluator-side object; attackers see it only through BlackBox.
class Pipeline {
public:
    Pipeline(const RecordStore& corpus, DualEncoder target, DualEncoder reranker,
             std::size_t k, double overlap_alpha);

    const RecordStore& corpus() const { return *corpus_; }
    std::size_t k() const { return k_; }
    const DualEncoder& target_encoder() const { return target_; }
    const DualEncoder& reranker_encoder() const { return reranker_; }

    // Exact exhaustive DR ranking truncated to k; ties broken by
    // ascending doc_id; k clamped to the corpus size.
    RankedList retrieve_topk(const TextRecord& query, std::size_t k) const;

    // Same doc set reordered by reranker score, deterministic tie-break.
    RankedList rerank(const TextRecord& query, const RankedList& candidates) const;

    RankedList full_ranking(const TextRecord& query) const;

    // 1-based position of doc in the full DR ordering, with doc's current
    // token content substituted into the corpus view.
    std::size_t recall_rank(const TextRecord& query, const TextRecord& doc) const;

    // Second-stage score: dot product plus a token-overlap feature.
    double reranker_score(const TextRecord& query, const TextRecord& doc) const;

private:
    const RecordStore* corpus_;
    DualEncoder target_;
    DualEncoder reranker_;
    std::size_t k_;
    double overlap_alpha_;
    std::vector<Vec> doc_embeddings_; // target-side, aligned to corpus order
};

// Attacker-facing view: final ranked lists and a budgeted rank probe only.
// Every call increments the query counter.
class BlackBox {
public:
    explicit BlackBox(const Pipeline& pipeline) : pipeline_(&pipeline) {}

    RankedList query(const TextRecord& query) const;
    std::size_t recall_rank(const TextRecord& query, const TextRecord& doc) const;
    std::uint64_t queries_issued() const { return counter_.load(); }
    std::size_t k() const { return pipeline_->k(); }

private:
    const Pipeline* pipeline_;
    mutable std::atomic<std::uint64_t> counter_{0};
};

} // namespace area

#endif

#ifndef AREA_SURROGATE_HPP
#define AREA_SURROGATE_HPP

#include "area/corpus.hpp"
#include "area/encoder.hpp"
#include "area/pipeline.hpp"

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace area {

struct ImitationQuery {
    std::string query_id;
    std::vector<std::string> positives;      // top-l ranked doc ids
    std::vector<std::string> hard_negatives; // ranks l+1 .. K
};

struct ImitationDataset {
    std::vector<ImitationQuery> queries;

    // Random-negative pool of one query: the ranked docs of every other query.
    std::vector<std::string> random_pool_for(std::size_t query_index) const;
};

struct SurrogateConfig {
    std::size_t ell = 1; // positive cutoff
    std::size_t epochs = 10;
    double learning_rate = 1.0;
    std::size_t batch_size = 1; // queries per SGD step
    std::size_t random_negatives = 8;
    std::uint64_t seed = 1;
};

// One black-box call per query; queries returning fewer than ell+1 docs are
// skipped with a warning on stderr.
ImitationDataset build_imitation_dataset(const std::vector<TextRecord>& queries,
                                         const BlackBox& blackbox, std::size_t ell);

void save_imitation(const ImitationDataset& dataset, const std::string& path);
ImitationDataset load_imitation(const std::string& path);

// One query's imitation softmax group: the positive at docs[0] against
// every other doc. Returns the negative log-likelihood and, when grads is
// non-null, accumulates the analytic table-row gradients.
double imitation_group_loss(const DualEncoder& surrogate, const TextRecord& query,
                            const std::vector<const TextRecord*>& docs,
                            GradientAccumulator* grads);

// Train a fresh surrogate encoder on pseudo-labels by minimizing the
// softmax negative log-likelihood of each positive against its hard and
// sampled random negatives. Returns the per-epoch mean loss trace.
std::vector<double> train_surrogate(DualEncoder& surrogate,
                                    const ImitationDataset& dataset,
                                    const RecordStore& corpus,
                                    const RecordStore& queries,
                                    const SurrogateConfig& config);

// Mean Jaccard overlap of top-k sets under two encoders, in [0, 1].
double agreement(const DualEncoder& a, const DualEncoder& b, const RecordStore& corpus,
                 const std::vector<TextRecord>& queries, std::size_t k);

// Exhaustive ranking support for one encoder over a fixed corpus, with
// per-query score caching. Cache fills are not thread-safe; share only
// after warm-up or use one instance per worker.
class CorpusRanker {
public:
    CorpusRanker(const DualEncoder& encoder, const RecordStore& corpus);

    // 1-based rank of doc (current content substituted for its corpus
    // entry) among all corpus docs for this query; ties by ascending id.
    std::size_t rank(const TextRecord& query, const TextRecord& doc) const;

    // Rank plus the doc's own relevance score for this query.
    std::pair<std::size_t, double> rank_and_score(const TextRecord& query,
                                                  const TextRecord& doc) const;

    // Top-k corpus indices by dot product against an arbitrary vector,
    // ties by ascending doc id, optionally skipping excluded indices.
    std::vector<std::size_t> topk(const Vec& query_vec, std::size_t k,
                                  const std::vector<bool>* excluded = nullptr) const;

    const Vec& doc_embedding(std::size_t i) const { return doc_embeddings_[i]; }
    const RecordStore& corpus() const { return *corpus_; }
    const DualEncoder& encoder() const { return *encoder_; }

private:
    const std::vector<double>& query_scores(const TextRecord& query) const;

    const DualEncoder* encoder_;
    const RecordStore* corpus_;
    std::vector<Vec> doc_embeddings_;
    mutable std::unordered_map<std::string, std::vector<double>> score_cache_;
};

} // namespace area

#endif

#ifndef AREA_ENCODER_HPP
#define AREA_ENCODER_HPP

#include "area/corpus.hpp"
#include "area/vecmath.hpp"

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace area {

// Vocabulary-indexed matrix of trainable token vectors. Row count is
// vocab size + 1; the final row is the shared OOV embedding, initialized
// to zero and trainable like any other row.
class EmbeddingTable {
public:
    EmbeddingTable() = default;
    // Rows for in-vocabulary tokens drawn uniform in [-0.5/dim, +0.5/dim].
    EmbeddingTable(std::size_t vocab_size, std::size_t dim, std::uint64_t init_seed);

    std::size_t rows() const { return matrix_.size(); }
    std::size_t vocab_size() const { return rows() == 0 ? 0 : rows() - 1; }
    std::size_t dim() const { return dim_; }
    std::uint64_t init_seed() const { return init_seed_; }

    const Vec& row(std::size_t i) const { return matrix_[i]; }
    Vec& row(std::size_t i) { return matrix_[i]; }

    void save(const std::string& path) const;
    static EmbeddingTable load(const std::string& path);

private:
    std::size_t dim_ = 0;
    std::uint64_t init_seed_ = 0;
    std::vector<Vec> matrix_;
};

// Per-occurrence gradients aligned to a record's token positions.
struct GradientBuffer {
    std::vector<Vec> per_position;
};

// Sparse accumulator of gradients w.r.t. table rows.
class GradientAccumulator {
public:
    explicit GradientAccumulator(std::size_t dim) : dim_(dim) {}

    void add(std::size_t row, const Vec& g);
    void add_scaled(std::size_t row, double alpha, const Vec& g);
    const std::unordered_map<std::size_t, Vec>& entries() const { return grads_; }
    std::size_t dim() const { return dim_; }
    void clear() { grads_.clear(); }

private:
    std::size_t dim_;
    std::unordered_map<std::size_t, Vec> grads_;
};

// Mean-pooled bag-of-embeddings dual encoder. Query and document sides
// share one table by default; pass a second table for a split encoder.
class DualEncoder {
public:
    DualEncoder() = default;
    DualEncoder(Vocabulary vocab, EmbeddingTable table)
        : vocab_(std::move(vocab)), query_table_(std::move(table)), shared_(true) {}
    DualEncoder(Vocabulary vocab, EmbeddingTable query_table, EmbeddingTable doc_table)
        : vocab_(std::move(vocab)),
          query_table_(std::move(query_table)),
          doc_table_(std::move(doc_table)),
          shared_(false) {}

    std::size_t dim() const { return query_table_.dim(); }
    const Vocabulary& vocab() const { return vocab_; }
    bool shared_tables() const { return shared_; }

    const EmbeddingTable& query_table() const { return query_table_; }
    const EmbeddingTable& doc_table() const { return shared_ ? query_table_ : doc_table_; }
    EmbeddingTable& query_table() { return query_table_; }
    EmbeddingTable& doc_table() { return shared_ ? query_table_ : doc_table_; }

    Vec encode_query(const TextRecord& record) const { return encode_with(query_table(), record); }
    Vec encode_doc(const TextRecord& record) const { return encode_with(doc_table(), record); }
    Vec encode_doc_tokens(const std::vector<std::string>& tokens) const;

    double score(const TextRecord& query, const TextRecord& doc) const;

private:
    Vec encode_with(const EmbeddingTable& table, const TextRecord& record) const;

    Vocabulary vocab_;
    EmbeddingTable query_table_;
    EmbeddingTable doc_table_;
    bool shared_ = true;
};

// Dot-product relevance score.
double score(const Vec& q_vec, const Vec& d_vec);

// Gradient of `upstream * score` w.r.t. each token-position embedding of
// `record`: every position receives upstream * other_side / L.
GradientBuffer backward_score_to_tokens(const TextRecord& record, const Vec& other_side, double upstream);

// row <- row - lr * grad for every accumulated row. Throws "diverged" on
// non-finite gradients.
void sgd_step(EmbeddingTable& table, const GradientAccumulator& grads, double learning_rate);

// Numerically stable -log softmax over one score group with the positive
// at pos_index, plus the gradient of the loss w.r.t. each score.
struct SoftmaxGroup {
    double loss;
    std::vector<double> dloss_dscore;
};
SoftmaxGroup softmax_nll(const std::vector<double>& scores, std::size_t pos_index);

struct EncoderTrainConfig {
    std::size_t epochs = 12;
    double learning_rate = 2.0;
    std::size_t negatives = 16;
    std::uint64_t seed = 1;
};

// Train a retrieval encoder on gold (query, relevant doc) pairs with
// sampled random negatives under a softmax NLL objective. Returns the
// per-epoch mean loss trace.
std::vector<double> train_encoder(DualEncoder& enc,
                                  const RecordStore& corpus,
                                  const RecordStore& queries,
                                  const std::vector<std::pair<std::string, std::string>>& qrels,
                                  const EncoderTrainConfig& config);

} // namespace area

#endif

#include "area/encoder.hpp"

#include "area/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace area {

EmbeddingTable::EmbeddingTable(std::size_t vocab_size, std::size_t dim, std::uint64_t init_seed)
    : dim_(dim), init_seed_(init_seed) {
    if (dim < 2) throw std::invalid_argument("embedding table: dim must be >= 2");
    Rng rng(mix_seed(init_seed, "embedding-init"));
    double half = 0.5 / static_cast<double>(dim);
    matrix_.assign(vocab_size + 1, Vec(dim, 0.0));
    for (std::size_t r = 0; r < vocab_size; ++r) {
        for (std::size_t c = 0; c < dim; ++c) matrix_[r][c] = rng.uniform(-half, half);
    }
    // Final row is the OOV embedding, kept at zero until trained.
}

namespace {

constexpr char kMagic[8] = {'A', 'R', 'E', 'A', 'E', 'M', 'B', '1'};

void put_u32(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ofstream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::ifstream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(std::ifstream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

void put_f64(std::ofstream& out, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    put_u64(out, bits);
}

double get_f64(std::ifstream& in) {
    std::uint64_t bits = get_u64(in);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
}

} // namespace

void EmbeddingTable::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out.write(kMagic, 8);
    put_u32(out, 1u);
    put_u64(out, static_cast<std::uint64_t>(vocab_size()));
    put_u32(out, static_cast<std::uint32_t>(dim_));
    put_u64(out, init_seed_);
    for (const auto& r : matrix_) {
        for (double v : r) put_f64(out, v);
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

EmbeddingTable EmbeddingTable::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for reading: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("bad embedding file magic: " + path);
    std::uint32_t version = get_u32(in);
    if (version != 1u) throw std::runtime_error("unsupported embedding file version: " + path);
    std::uint64_t vocab_size = get_u64(in);
    std::uint32_t dim = get_u32(in);
    std::uint64_t seed = get_u64(in);

    EmbeddingTable table;
    table.dim_ = dim;
    table.init_seed_ = seed;
    table.matrix_.assign(vocab_size + 1, Vec(dim, 0.0));
    for (auto& r : table.matrix_) {
        for (double& v : r) v = get_f64(in);
    }
    if (!in) throw std::runtime_error("truncated embedding file: " + path);
    return table;
}

void GradientAccumulator::add(std::size_t row, const Vec& g) { add_scaled(row, 1.0, g); }

void GradientAccumulator::add_scaled(std::size_t row, double alpha, const Vec& g) {
    if (g.size() != dim_) throw std::invalid_argument("gradient accumulator: dimension mismatch");
    auto it = grads_.find(row);
    if (it == grads_.end()) it = grads_.emplace(row, Vec(dim_, 0.0)).first;
    axpy(alpha, g, it->second);
}

Vec DualEncoder::encode_with(const EmbeddingTable& table, const TextRecord& record) const {
    if (record.tokens.empty()) throw std::invalid_argument("cannot encode empty text");
    Vec out(table.dim(), 0.0);
    for (const auto& tok : record.tokens) axpy(1.0, table.row(vocab_.index_of(tok)), out);
    scale(out, 1.0 / static_cast<double>(record.tokens.size()));
    return out;
}

Vec DualEncoder::encode_doc_tokens(const std::vector<std::string>& tokens) const {
    TextRecord tmp;
    tmp.tokens = tokens;
    return encode_with(doc_table(), tmp);
}

double DualEncoder::score(const TextRecord& query, const TextRecord& doc) const {
    return area::score(encode_query(query), encode_doc(doc));
}

double score(const Vec& q_vec, const Vec& d_vec) {
    if (q_vec.size() != d_vec.size()) throw std::invalid_argument("score: dimension mismatch");
    return dot(q_vec, d_vec);
}

GradientBuffer backward_score_to_tokens(const TextRecord& record, const Vec& other_side, double upstream) {
    if (record.tokens.empty()) throw std::invalid_argument("cannot encode empty text");
    double inv_len = 1.0 / static_cast<double>(record.tokens.size());
    Vec g = other_side;
    scale(g, upstream * inv_len);
    GradientBuffer buf;
    buf.per_position.assign(record.tokens.size(), g);
    return buf;
}

void sgd_step(EmbeddingTable& table, const GradientAccumulator& grads, double learning_rate) {
    if (grads.dim() != table.dim()) throw std::invalid_argument("sgd: dimension mismatch");
    for (const auto& [row, g] : grads.entries()) {
        if (row >= table.rows()) throw std::out_of_range("sgd: row out of range");
        if (!all_finite(g)) throw std::runtime_error("diverged");
    }
    for (const auto& [row, g] : grads.entries()) axpy(-learning_rate, g, table.row(row));
}

SoftmaxGroup softmax_nll(const std::vector<double>& scores, std::size_t pos_index) {
    if (scores.empty() || pos_index >= scores.size())
        throw std::invalid_argument("softmax group: bad positive index");
    double max_s = *std::max_element(scores.begin(), scores.end());
    double z = 0.0;
    std::vector<double> e(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        e[i] = std::exp(scores[i] - max_s);
        z += e[i];
    }
    SoftmaxGroup out;
    out.loss = -(scores[pos_index] - max_s) + std::log(z);
    out.dloss_dscore.resize(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        out.dloss_dscore[i] = e[i] / z - (i == pos_index ? 1.0 : 0.0);
    }
    return out;
}

std::vector<double> train_encoder(DualEncoder& enc,
                                  const RecordStore& corpus,
                                  const RecordStore& queries,
                                  const std::vector<std::pair<std::string, std::string>>& qrels,
                                  const EncoderTrainConfig& config) {
    if (corpus.size() == 0) throw std::invalid_argument("empty corpus");
    if (qrels.empty()) throw std::invalid_argument("no relevance pairs");

    struct Pair {
        std::size_t query_index;
        std::size_t doc_index;
    };
    std::vector<Pair> pairs;
    pairs.reserve(qrels.size());
    for (const auto& [qid, did] : qrels)
        pairs.push_back({queries.index_of_id(qid), corpus.index_of_id(did)});

    Rng rng(mix_seed(config.seed, "encoder-train"));
    std::vector<double> epoch_losses;
    epoch_losses.reserve(config.epochs);

    std::vector<std::size_t> order(pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;
        for (std::size_t oi : order) {
            const auto& pr = pairs[oi];
            const TextRecord& q = queries.at(pr.query_index);
            Vec q_vec = enc.encode_query(q);

            std::vector<std::size_t> doc_indices;
            doc_indices.push_back(pr.doc_index);
            for (std::size_t n = 0; n < config.negatives && corpus.size() > 1; ++n) {
                std::size_t cand = rng.below(corpus.size());
                while (cand == pr.doc_index) cand = rng.below(corpus.size());
                doc_indices.push_back(cand);
            }

            std::vector<Vec> doc_vecs;
            std::vector<double> scores;
            doc_vecs.reserve(doc_indices.size());
            scores.reserve(doc_indices.size());
            for (std::size_t di : doc_indices) {
                doc_vecs.push_back(enc.encode_doc(corpus.at(di)));
                scores.push_back(dot(q_vec, doc_vecs.back()));
            }

            SoftmaxGroup group = softmax_nll(scores, 0);
            if (!std::isfinite(group.loss)) throw std::runtime_error("diverged");
            loss_sum += group.loss;

            GradientAccumulator q_grads(enc.dim());
            GradientAccumulator d_grads(enc.dim());
            double inv_lq = 1.0 / static_cast<double>(q.tokens.size());
            for (std::size_t j = 0; j < doc_indices.size(); ++j) {
                double coeff = group.dloss_dscore[j];
                if (coeff == 0.0) continue;
                const TextRecord& doc = corpus.at(doc_indices[j]);
                double inv_ld = 1.0 / static_cast<double>(doc.tokens.size());
                for (const auto& tok : q.tokens)
                    q_grads.add_scaled(enc.vocab().index_of(tok), coeff * inv_lq, doc_vecs[j]);
                for (const auto& tok : doc.tokens)
                    d_grads.add_scaled(enc.vocab().index_of(tok), coeff * inv_ld, q_vec);
            }
            if (enc.shared_tables()) {
                for (const auto& [row, g] : d_grads.entries()) q_grads.add(row, g);
                sgd_step(enc.query_table(), q_grads, config.learning_rate);
            } else {
                sgd_step(enc.query_table(), q_grads, config.learning_rate);
                sgd_step(enc.doc_table(), d_grads, config.learning_rate);
            }
        }
        epoch_losses.push_back(loss_sum / static_cast<double>(pairs.size()));
    }
    return epoch_losses;
}

} // namespace area

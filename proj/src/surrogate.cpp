#include "area/surrogate.hpp"

#include "area/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <unordered_set>

namespace area {

std::vector<std::string> ImitationDataset::random_pool_for(std::size_t query_index) const {
    std::vector<std::string> pool;
    for (std::size_t i = 0; i < queries.size(); ++i) {
        if (i == query_index) continue;
        const auto& q = queries[i];
        pool.insert(pool.end(), q.positives.begin(), q.positives.end());
        pool.insert(pool.end(), q.hard_negatives.begin(), q.hard_negatives.end());
    }
    return pool;
}

ImitationDataset build_imitation_dataset(const std::vector<TextRecord>& queries,
                                         const BlackBox& blackbox, std::size_t ell) {
    if (queries.empty()) throw std::invalid_argument("no collection queries");
    if (ell < 1) throw std::invalid_argument("ell must be >= 1");
    ImitationDataset dataset;
    dataset.queries.reserve(queries.size());
    for (const auto& q : queries) {
        RankedList ranked = blackbox.query(q);
        if (ranked.doc_ids.size() < ell + 1) {
            std::cerr << "warning: query " << q.id << " returned " << ranked.doc_ids.size()
                      << " docs (< ell+1), skipped\n";
            continue;
        }
        ImitationQuery iq;
        iq.query_id = q.id;
        iq.positives.assign(ranked.doc_ids.begin(), ranked.doc_ids.begin() + ell);
        iq.hard_negatives.assign(ranked.doc_ids.begin() + ell, ranked.doc_ids.end());
        dataset.queries.push_back(std::move(iq));
    }
    return dataset;
}

void save_imitation(const ImitationDataset& dataset, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    for (const auto& q : dataset.queries) {
        for (const auto& d : q.positives) out << q.query_id << '\t' << d << "\tpos\n";
        for (const auto& d : q.hard_negatives) out << q.query_id << '\t' << d << "\thneg\n";
    }
}

ImitationDataset load_imitation(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for reading: " + path);
    ImitationDataset dataset;
    std::string line;
    std::size_t line_no = 0;
    ImitationQuery* current = nullptr;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto t1 = line.find('\t');
        auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
        if (t1 == std::string::npos || t2 == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": missing tab separator");
        std::string qid = line.substr(0, t1);
        std::string did = line.substr(t1 + 1, t2 - t1 - 1);
        std::string label = line.substr(t2 + 1);
        if (current == nullptr || current->query_id != qid) {
            dataset.queries.push_back(ImitationQuery{qid, {}, {}});
            current = &dataset.queries.back();
        }
        if (label == "pos")
            current->positives.push_back(did);
        else if (label == "hneg")
            current->hard_negatives.push_back(did);
        else
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": unknown label '" + label + "'");
    }
    return dataset;
}

double imitation_group_loss(const DualEncoder& surrogate, const TextRecord& query,
                            const std::vector<const TextRecord*>& docs,
                            GradientAccumulator* grads) {
    if (docs.empty()) throw std::invalid_argument("imitation group: no docs");
    Vec q_vec = surrogate.encode_query(query);
    double inv_lq = 1.0 / static_cast<double>(query.tokens.size());

    std::vector<Vec> doc_vecs;
    std::vector<double> scores;
    doc_vecs.reserve(docs.size());
    scores.reserve(docs.size());
    for (const TextRecord* d : docs) {
        doc_vecs.push_back(surrogate.encode_doc(*d));
        scores.push_back(dot(q_vec, doc_vecs.back()));
    }

    SoftmaxGroup group = softmax_nll(scores, 0);
    if (grads) {
        for (std::size_t j = 0; j < docs.size(); ++j) {
            double coeff = group.dloss_dscore[j];
            if (coeff == 0.0) continue;
            double inv_ld = 1.0 / static_cast<double>(docs[j]->tokens.size());
            for (const auto& tok : query.tokens)
                grads->add_scaled(surrogate.vocab().index_of(tok), coeff * inv_lq, doc_vecs[j]);
            for (const auto& tok : docs[j]->tokens)
                grads->add_scaled(surrogate.vocab().index_of(tok), coeff * inv_ld, q_vec);
        }
    }
    return group.loss;
}

std::vector<double> train_surrogate(DualEncoder& surrogate,
                                    const ImitationDataset& dataset,
                                    const RecordStore& corpus,
                                    const RecordStore& queries,
                                    const SurrogateConfig& config) {
    if (dataset.queries.empty()) throw std::invalid_argument("empty imitation dataset");
    if (config.epochs < 1) throw std::invalid_argument("epochs must be >= 1");

    Rng rng(mix_seed(config.seed, "surrogate-train"));
    std::vector<double> epoch_losses;
    epoch_losses.reserve(config.epochs);

    std::vector<std::size_t> order(dataset.queries.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::size_t batch = std::max<std::size_t>(1, config.batch_size);

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t group_count = 0;

        GradientAccumulator grads(surrogate.dim());
        std::size_t in_batch = 0;

        for (std::size_t oi : order) {
            const ImitationQuery& iq = dataset.queries[oi];
            const TextRecord& q = queries.by_id(iq.query_id);

            auto pool = dataset.random_pool_for(oi);
            std::vector<std::string> sampled;
            for (std::size_t s = 0; s < config.random_negatives && !pool.empty(); ++s)
                sampled.push_back(pool[rng.below(pool.size())]);

            for (const auto& pos_id : iq.positives) {
                std::vector<const TextRecord*> docs;
                docs.push_back(&corpus.by_id(pos_id));
                for (const auto& d : iq.hard_negatives) docs.push_back(&corpus.by_id(d));
                for (const auto& d : sampled) docs.push_back(&corpus.by_id(d));

                double loss = imitation_group_loss(surrogate, q, docs, &grads);
                if (!std::isfinite(loss)) throw std::runtime_error("diverged");
                loss_sum += loss;
                ++group_count;
            }

            if (++in_batch == batch) {
                sgd_step(surrogate.query_table(), grads, config.learning_rate);
                grads.clear();
                in_batch = 0;
            }
        }
        if (in_batch > 0) sgd_step(surrogate.query_table(), grads, config.learning_rate);
        epoch_losses.push_back(loss_sum / static_cast<double>(group_count));
    }
    return epoch_losses;
}

CorpusRanker::CorpusRanker(const DualEncoder& encoder, const RecordStore& corpus)
    : encoder_(&encoder), corpus_(&corpus) {
    doc_embeddings_.reserve(corpus.size());
    for (const auto& rec : corpus.records()) doc_embeddings_.push_back(encoder.encode_doc(rec));
}

const std::vector<double>& CorpusRanker::query_scores(const TextRecord& query) const {
    auto it = score_cache_.find(query.id);
    if (it != score_cache_.end()) return it->second;
    Vec q_vec = encoder_->encode_query(query);
    std::vector<double> scores(corpus_->size());
    for (std::size_t i = 0; i < corpus_->size(); ++i) scores[i] = dot(q_vec, doc_embeddings_[i]);
    return score_cache_.emplace(query.id, std::move(scores)).first->second;
}

std::size_t CorpusRanker::rank(const TextRecord& query, const TextRecord& doc) const {
    return rank_and_score(query, doc).first;
}

std::pair<std::size_t, double> CorpusRanker::rank_and_score(const TextRecord& query,
                                                            const TextRecord& doc) const {
    const auto& scores = query_scores(query);
    Vec q_vec = encoder_->encode_query(query);
    double s = dot(q_vec, encoder_->encode_doc(doc));
    std::size_t skip = corpus_->has_id(doc.id) ? corpus_->index_of_id(doc.id) : static_cast<std::size_t>(-1);
    std::size_t rank = 1;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (i == skip) continue;
        if (scores[i] > s || (scores[i] == s && corpus_->at(i).id < doc.id)) ++rank;
    }
    return {rank, s};
}

std::vector<std::size_t> CorpusRanker::topk(const Vec& query_vec, std::size_t k,
                                            const std::vector<bool>* excluded) const {
    std::vector<std::size_t> idx;
    idx.reserve(corpus_->size());
    for (std::size_t i = 0; i < corpus_->size(); ++i) {
        if (excluded && (*excluded)[i]) continue;
        idx.push_back(i);
    }
    std::vector<double> scores(corpus_->size(), 0.0);
    for (std::size_t i : idx) scores[i] = dot(query_vec, doc_embeddings_[i]);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return corpus_->at(a).id < corpus_->at(b).id;
    });
    if (idx.size() > k) idx.resize(k);
    return idx;
}

double agreement(const DualEncoder& a, const DualEncoder& b, const RecordStore& corpus,
                 const std::vector<TextRecord>& queries, std::size_t k) {
    if (queries.empty()) throw std::invalid_argument("agreement: no queries");
    CorpusRanker ra(a, corpus);
    CorpusRanker rb(b, corpus);
    double total = 0.0;
    for (const auto& q : queries) {
        auto ta = ra.topk(a.encode_query(q), k);
        auto tb = rb.topk(b.encode_query(q), k);
        std::unordered_set<std::size_t> sa(ta.begin(), ta.end());
        std::size_t inter = 0;
        for (std::size_t i : tb) inter += sa.count(i);
        std::size_t uni = ta.size() + tb.size() - inter;
        total += uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
    }
    return total / static_cast<double>(queries.size());
}

} // namespace area

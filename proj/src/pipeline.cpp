#include "area/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <unordered_set>

namespace area {

void save_ranked_list(const RankedList& list, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    char buf[64];
    for (std::size_t i = 0; i < list.doc_ids.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.6f", list.scores[i]);
        out << list.query_id << '\t' << list.doc_ids[i] << '\t' << (i + 1) << '\t' << buf << '\n';
    }
}

Pipeline::Pipeline(const RecordStore& corpus, DualEncoder target, DualEncoder reranker,
                   std::size_t k, double overlap_alpha)
    : corpus_(&corpus),
      target_(std::move(target)),
      reranker_(std::move(reranker)),
      k_(k),
      overlap_alpha_(overlap_alpha) {
    if (k_ < 1) throw std::invalid_argument("pipeline: K must be >= 1");
    doc_embeddings_.reserve(corpus_->size());
    for (const auto& rec : corpus_->records()) doc_embeddings_.push_back(target_.encode_doc(rec));
}

namespace {

struct ScoredDoc {
    double score;
    const std::string* id;
};

void sort_scored(std::vector<ScoredDoc>& scored) {
    std::sort(scored.begin(), scored.end(), [](const ScoredDoc& a, const ScoredDoc& b) {
        if (a.score != b.score) return a.score > b.score;
        return *a.id < *b.id;
    });
}

} // namespace

RankedList Pipeline::retrieve_topk(const TextRecord& query, std::size_t k) const {
    if (k < 1) throw std::invalid_argument("retrieve_topk: K must be >= 1");
    k = std::min(k, corpus_->size());
    Vec q_vec = target_.encode_query(query);

    std::vector<ScoredDoc> scored;
    scored.reserve(corpus_->size());
    for (std::size_t i = 0; i < corpus_->size(); ++i)
        scored.push_back({dot(q_vec, doc_embeddings_[i]), &corpus_->at(i).id});
    sort_scored(scored);

    RankedList out;
    out.query_id = query.id;
    out.k = k;
    out.doc_ids.reserve(k);
    out.scores.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        out.doc_ids.push_back(*scored[i].id);
        out.scores.push_back(scored[i].score);
    }
    return out;
}

double Pipeline::reranker_score(const TextRecord& query, const TextRecord& doc) const {
    double base = reranker_.score(query, doc);
    std::unordered_set<std::string> q_tokens(query.tokens.begin(), query.tokens.end());
    std::unordered_set<std::string> d_tokens(doc.tokens.begin(), doc.tokens.end());
    std::size_t shared = 0;
    for (const auto& tok : q_tokens) shared += d_tokens.count(tok);
    double overlap = q_tokens.empty() ? 0.0 : static_cast<double>(shared) / static_cast<double>(q_tokens.size());
    return base + overlap_alpha_ * overlap;
}

RankedList Pipeline::rerank(const TextRecord& query, const RankedList& candidates) const {
    std::vector<ScoredDoc> scored;
    scored.reserve(candidates.doc_ids.size());
    std::vector<double> values(candidates.doc_ids.size());
    for (std::size_t i = 0; i < candidates.doc_ids.size(); ++i) {
        values[i] = reranker_score(query, corpus_->by_id(candidates.doc_ids[i]));
        scored.push_back({values[i], &candidates.doc_ids[i]});
    }
    sort_scored(scored);

    RankedList out;
    out.query_id = candidates.query_id;
    out.k = candidates.k;
    out.doc_ids.reserve(scored.size());
    out.scores.reserve(scored.size());
    for (const auto& sd : scored) {
        out.doc_ids.push_back(*sd.id);
        out.scores.push_back(sd.score);
    }
    return out;
}

RankedList Pipeline::full_ranking(const TextRecord& query) const {
    return retrieve_topk(query, corpus_->size());
}

std::size_t Pipeline::recall_rank(const TextRecord& query, const TextRecord& doc) const {
    Vec q_vec = target_.encode_query(query);
    Vec d_vec = target_.encode_doc(doc);
    double s = dot(q_vec, d_vec);

    std::size_t rank = 1;
    bool substituted = corpus_->has_id(doc.id);
    std::size_t skip = substituted ? corpus_->index_of_id(doc.id) : static_cast<std::size_t>(-1);
    for (std::size_t i = 0; i < corpus_->size(); ++i) {
        if (i == skip) continue;
        double other = dot(q_vec, doc_embeddings_[i]);
        if (other > s || (other == s && corpus_->at(i).id < doc.id)) ++rank;
    }
    return rank;
}

RankedList BlackBox::query(const TextRecord& query) const {
    counter_.fetch_add(1);
    return pipeline_->rerank(query, pipeline_->retrieve_topk(query, pipeline_->k()));
}

std::size_t BlackBox::recall_rank(const TextRecord& query, const TextRecord& doc) const {
    counter_.fetch_add(1);
    return pipeline_->recall_rank(query, doc);
}

} // namespace area

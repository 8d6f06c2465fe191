#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "area/corpus.hpp"
#include "area/encoder.hpp"
#include "area/pipeline.hpp"
#include "area/rng.hpp"
#include "area/surrogate.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>

using namespace area;

namespace {

Vocabulary vocab_of(std::size_t n) {
    std::vector<std::string> toks;
    for (std::size_t i = 0; i < n; ++i) toks.push_back("w" + std::to_string(i));
    return Vocabulary(std::move(toks));
}

TextRecord record_of(std::string id, std::vector<std::string> tokens) {
    TextRecord rec;
    rec.id = std::move(id);
    rec.tokens = std::move(tokens);
    return rec;
}

struct World {
    Vocabulary vocab;
    RecordStore corpus;
    RecordStore queries;
    DualEncoder target;
    DualEncoder reranker;

    explicit World(std::size_t n_docs = 60, std::size_t n_queries = 6, std::uint64_t seed = 3) {
        vocab = vocab_of(50);
        Rng rng(seed);
        std::vector<TextRecord> docs;
        for (std::size_t i = 0; i < n_docs; ++i) {
            std::vector<std::string> toks;
            std::size_t len = 4 + rng.below(8);
            for (std::size_t t = 0; t < len; ++t) toks.push_back("w" + std::to_string(rng.below(50)));
            char buf[16];
            std::snprintf(buf, sizeof(buf), "d%03zu", i);
            docs.push_back(record_of(buf, toks));
        }
        corpus = RecordStore(std::move(docs));
        std::vector<TextRecord> qs;
        for (std::size_t i = 0; i < n_queries; ++i) {
            std::vector<std::string> toks;
            for (int t = 0; t < 3; ++t) toks.push_back("w" + std::to_string(rng.below(50)));
            qs.push_back(record_of("q" + std::to_string(i), toks));
        }
        queries = RecordStore(std::move(qs));
        target = DualEncoder(vocab, EmbeddingTable(50, 8, seed + 10));
        reranker = DualEncoder(vocab, EmbeddingTable(50, 8, seed + 11));
    }
};

} // namespace

TEST_CASE("imitation dataset partitions one query per the cutoff") {
    World world;
    Pipeline pipeline(world.corpus, world.target, world.reranker, 10, 0.5);
    BlackBox box(pipeline);
    std::vector<TextRecord> one = {world.queries.at(0)};

    ImitationDataset dataset = build_imitation_dataset(one, box, 1);
    REQUIRE(dataset.queries.size() == 1);
    CHECK(dataset.queries[0].positives.size() == 1);
    CHECK(dataset.queries[0].hard_negatives.size() == 9);
    CHECK(dataset.random_pool_for(0).empty());

    // Positives and hard negatives are disjoint.
    std::set<std::string> pos(dataset.queries[0].positives.begin(),
                              dataset.queries[0].positives.end());
    for (const auto& d : dataset.queries[0].hard_negatives) CHECK(pos.count(d) == 0);
}

TEST_CASE("two queries: each random pool is the other query's ranked docs") {
    World world;
    Pipeline pipeline(world.corpus, world.target, world.reranker, 10, 0.5);
    BlackBox box(pipeline);
    std::vector<TextRecord> two = {world.queries.at(0), world.queries.at(1)};
    ImitationDataset dataset = build_imitation_dataset(two, box, 1);
    REQUIRE(dataset.queries.size() == 2);

    auto ranked_docs = [&](std::size_t i) {
        std::multiset<std::string> all(dataset.queries[i].positives.begin(),
                                       dataset.queries[i].positives.end());
        all.insert(dataset.queries[i].hard_negatives.begin(),
                   dataset.queries[i].hard_negatives.end());
        return all;
    };
    auto pool0 = dataset.random_pool_for(0);
    CHECK(std::multiset<std::string>(pool0.begin(), pool0.end()) == ranked_docs(1));
    auto pool1 = dataset.random_pool_for(1);
    CHECK(std::multiset<std::string>(pool1.begin(), pool1.end()) == ranked_docs(0));
}

TEST_CASE("queries with too few ranked docs are skipped with a warning") {
    // A one-doc corpus returns single-doc lists, below the ell+1 minimum.
    Vocabulary vocab({"w0"});
    RecordStore corpus({record_of("only", {"w0"})});
    DualEncoder enc(vocab, EmbeddingTable(1, 2, 1));
    Pipeline pipeline(corpus, enc, enc, 5, 0.0);
    BlackBox box(pipeline);
    std::vector<TextRecord> queries = {record_of("q0", {"w0"})};
    ImitationDataset dataset = build_imitation_dataset(queries, box, 1);
    CHECK(dataset.queries.empty());
    CHECK(box.queries_issued() == 1);
}

TEST_CASE("dataset construction issues exactly one black-box call per query") {
    World world(80, 6, 5);
    Pipeline pipeline(world.corpus, world.target, world.reranker, 10, 0.5);
    BlackBox box(pipeline);
    std::vector<TextRecord> queries(world.queries.records().begin(), world.queries.records().end());
    // 50 queries via repetition with fresh ids.
    std::vector<TextRecord> fifty;
    for (int i = 0; i < 50; ++i) {
        TextRecord q = queries[i % queries.size()];
        q.id = "qq" + std::to_string(i);
        fifty.push_back(std::move(q));
    }
    build_imitation_dataset(fifty, box, 1);
    CHECK(box.queries_issued() == 50);
}

TEST_CASE("imitation group loss matches softmax identities") {
    // One positive and M uniform-scoring negatives: loss = ln(M+1).
    Vocabulary vocab = vocab_of(4);
    EmbeddingTable table(4, 2, 0);
    table.row(0) = {1.0, 0.0}; // query token
    table.row(1) = {0.3, 0.0}; // equal-score doc tokens
    DualEncoder enc(vocab, table);
    TextRecord q = record_of("q", {"w0"});
    TextRecord d1 = record_of("d1", {"w1"});
    TextRecord d2 = record_of("d2", {"w1"});
    TextRecord d3 = record_of("d3", {"w1"});
    std::vector<const TextRecord*> docs = {&d1, &d2, &d3};
    CHECK(imitation_group_loss(enc, q, docs, nullptr) == doctest::Approx(std::log(3.0)));

    // Positive far above the negatives saturates to ~0.
    EmbeddingTable table2(4, 2, 0);
    table2.row(0) = {1.0, 0.0};
    table2.row(1) = {15.0, 0.0};
    table2.row(2) = {0.0, 0.0};
    DualEncoder enc2(vocab, std::move(table2));
    TextRecord pos = record_of("p", {"w1"});
    TextRecord neg = record_of("n", {"w2"});
    std::vector<const TextRecord*> group = {&pos, &neg, &neg};
    CHECK(imitation_group_loss(enc2, q, group, nullptr) <= 1e-3);
}

TEST_CASE("group loss is invariant to a constant shift of all scores") {
    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> scores(5);
        for (auto& s : scores) s = rng.uniform(-4.0, 4.0);
        double base = softmax_nll(scores, 0).loss;
        double c = rng.uniform(-10.0, 10.0);
        std::vector<double> shifted(5);
        for (std::size_t i = 0; i < 5; ++i) shifted[i] = scores[i] + c;
        CHECK(softmax_nll(shifted, 0).loss == doctest::Approx(base));
    }
}

TEST_CASE("per-query loss strictly decreases in the positive score") {
    Rng rng(14);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> scores(6);
        for (auto& s : scores) s = rng.uniform(-2.0, 2.0);
        double before = softmax_nll(scores, 0).loss;
        scores[0] += 0.25;
        CHECK(softmax_nll(scores, 0).loss < before);
    }
}

TEST_CASE("training on pseudo-labels reduces the mean loss") {
    World world(100, 10, 21);
    Pipeline pipeline(world.corpus, world.target, world.reranker, 10, 0.5);
    BlackBox box(pipeline);
    std::vector<TextRecord> queries(world.queries.records().begin(), world.queries.records().end());
    ImitationDataset dataset = build_imitation_dataset(queries, box, 1);

    DualEncoder surrogate(world.vocab, EmbeddingTable(50, 8, 777));
    SurrogateConfig cfg;
    cfg.epochs = 8;
    cfg.learning_rate = 1.0;
    cfg.random_negatives = 4;
    cfg.seed = 2;
    auto trace = train_surrogate(surrogate, dataset, world.corpus, world.queries, cfg);
    REQUIRE(trace.size() == 8);
    CHECK(trace.back() < trace.front());
}

TEST_CASE("agreement is 1 for identical encoders and 0 for disjoint top sets") {
    World world(40, 4, 8);
    std::vector<TextRecord> queries(world.queries.records().begin(), world.queries.records().end());
    CHECK(agreement(world.target, world.target, world.corpus, queries, 10) == doctest::Approx(1.0));

    // Force disjoint top-k sets with two hand-built encoders: one scores
    // docs by +first-coordinate, the other by -first-coordinate.
    Vocabulary vocab = vocab_of(3);
    std::vector<TextRecord> docs;
    for (int i = 0; i < 10; ++i)
        docs.push_back(record_of("d" + std::to_string(i), {i < 5 ? "w1" : "w2"}));
    RecordStore small(std::move(docs));
    EmbeddingTable up(3, 2, 0), down(3, 2, 0);
    up.row(0) = {1.0, 0.0};
    up.row(1) = {1.0, 0.0};
    up.row(2) = {-1.0, 0.0};
    down.row(0) = {1.0, 0.0};
    down.row(1) = {-1.0, 0.0};
    down.row(2) = {1.0, 0.0};
    DualEncoder enc_up(vocab, std::move(up));
    DualEncoder enc_down(vocab, std::move(down));
    TextRecord q = record_of("q", {"w0"});
    CHECK(agreement(enc_up, enc_down, small, {q}, 5) == doctest::Approx(0.0));
}

TEST_CASE("dataset persistence round-trips") {
    World world;
    Pipeline pipeline(world.corpus, world.target, world.reranker, 10, 0.5);
    BlackBox box(pipeline);
    std::vector<TextRecord> queries(world.queries.records().begin(), world.queries.records().end());
    ImitationDataset dataset = build_imitation_dataset(queries, box, 2);

    std::string path = (std::filesystem::temp_directory_path() / "area_imitation.tsv").string();
    save_imitation(dataset, path);
    ImitationDataset loaded = load_imitation(path);
    REQUIRE(loaded.queries.size() == dataset.queries.size());
    for (std::size_t i = 0; i < dataset.queries.size(); ++i) {
        CHECK(loaded.queries[i].query_id == dataset.queries[i].query_id);
        CHECK(loaded.queries[i].positives == dataset.queries[i].positives);
        CHECK(loaded.queries[i].hard_negatives == dataset.queries[i].hard_negatives);
    }
    std::remove(path.c_str());
}

TEST_CASE("corpus ranker rank and topk agree with pipeline orderings") {
    World world(120, 5, 33);
    Pipeline pipeline(world.corpus, world.target, world.reranker, 10, 0.0);
    CorpusRanker ranker(world.target, world.corpus);
    for (std::size_t i = 0; i < world.queries.size(); ++i) {
        const TextRecord& q = world.queries.at(i);
        RankedList full = pipeline.full_ranking(q);
        for (std::size_t pos = 0; pos < full.doc_ids.size(); pos += 17)
            CHECK(ranker.rank(q, world.corpus.by_id(full.doc_ids[pos])) == pos + 1);
    }
}

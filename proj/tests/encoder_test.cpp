#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "area/corpus.hpp"
#include "area/encoder.hpp"
#include "area/rng.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

using namespace area;

namespace {

// Oracle: recompute a mean-pooled encoding by direct row summation.
Vec oracle_encode(const EmbeddingTable& table, const Vocabulary& vocab,
                  const std::vector<std::string>& tokens) {
    Vec out(table.dim(), 0.0);
    for (const auto& tok : tokens) {
        const Vec& row = table.row(vocab.index_of(tok));
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += row[i];
    }
    for (double& v : out) v /= static_cast<double>(tokens.size());
    return out;
}

double oracle_dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

Vocabulary small_vocab(std::size_t n) {
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

} // namespace

TEST_CASE("encode of identical tokens returns the row itself") {
    DualEncoder enc(small_vocab(4), EmbeddingTable(4, 3, 1));
    TextRecord rec = record_of("d", {"w2", "w2", "w2"});
    Vec out = enc.encode_doc(rec);
    const Vec& row = enc.doc_table().row(2);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == doctest::Approx(row[i]));
}

TEST_CASE("encode averages distinct rows") {
    Vocabulary vocab = small_vocab(2);
    EmbeddingTable table(2, 2, 1);
    table.row(0) = {1.0, 0.0};
    table.row(1) = {0.0, 1.0};
    DualEncoder enc(vocab, std::move(table));
    Vec out = enc.encode_doc(record_of("d", {"w0", "w1"}));
    CHECK(out[0] == doctest::Approx(0.5));
    CHECK(out[1] == doctest::Approx(0.5));
}

TEST_CASE("encode rejects empty records") {
    DualEncoder enc(small_vocab(2), EmbeddingTable(2, 2, 1));
    CHECK_THROWS_WITH_AS(enc.encode_doc(record_of("d", {})), "cannot encode empty text",
                         std::invalid_argument);
}

TEST_CASE("encode matches the row-summation oracle on random records") {
    Vocabulary vocab = small_vocab(60);
    EmbeddingTable table(60, 16, 9);
    DualEncoder enc(vocab, table);
    Rng rng(1234);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<std::string> tokens;
        std::size_t len = 1 + rng.below(25);
        for (std::size_t i = 0; i < len; ++i) tokens.push_back("w" + std::to_string(rng.below(60)));
        Vec got = enc.encode_doc(record_of("d", tokens));
        Vec want = oracle_encode(table, vocab, tokens);
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]));
    }
}

TEST_CASE("score arithmetic and symmetry") {
    CHECK(score({1.0, 0.0}, {0.0, 1.0}) == 0.0);
    CHECK(score({1.0, 2.0}, {3.0, 4.0}) == 11.0);
    CHECK_THROWS_AS(score({1.0}, {1.0, 2.0}), std::invalid_argument);

    Rng rng(55);
    for (int trial = 0; trial < 20; ++trial) {
        Vec a(8), b(8);
        for (std::size_t i = 0; i < 8; ++i) {
            a[i] = rng.uniform(-2.0, 2.0);
            b[i] = rng.uniform(-2.0, 2.0);
        }
        CHECK(std::abs(score(a, b) - oracle_dot(a, b)) <= 1e-12);
        CHECK(score(a, b) == score(b, a));
    }
}

TEST_CASE("backward distributes the other-side vector across positions") {
    Vec q = {0.5, -1.0, 2.0};
    GradientBuffer single = backward_score_to_tokens(record_of("d", {"w0"}), q, 1.0);
    REQUIRE(single.per_position.size() == 1);
    CHECK(single.per_position[0] == q);

    GradientBuffer pair = backward_score_to_tokens(record_of("d", {"w0", "w1"}), q, 1.0);
    REQUIRE(pair.per_position.size() == 2);
    for (const auto& g : pair.per_position) {
        for (std::size_t i = 0; i < q.size(); ++i) CHECK(g[i] == doctest::Approx(q[i] / 2.0));
    }
}

TEST_CASE("backward matches central finite differences on the score") {
    Vocabulary vocab = small_vocab(30);
    Rng rng(321);
    for (int trial = 0; trial < 10; ++trial) {
        EmbeddingTable table(30, 8, 100 + trial);
        DualEncoder enc(vocab, table);
        std::vector<std::string> tokens;
        std::size_t len = 1 + rng.below(10);
        for (std::size_t i = 0; i < len; ++i) tokens.push_back("w" + std::to_string(rng.below(30)));
        TextRecord doc = record_of("d", tokens);
        TextRecord query = record_of("q", {"w1", "w5"});
        Vec q_vec = enc.encode_query(query);

        GradientBuffer grads = backward_score_to_tokens(doc, q_vec, 1.0);

        // Finite differences on the table row of position 0's token,
        // counting every occurrence of that token.
        std::size_t row = vocab.index_of(tokens[0]);
        double occurrences = 0;
        for (const auto& t : tokens) occurrences += vocab.index_of(t) == row ? 1.0 : 0.0;
        const double step = 1e-4;
        for (std::size_t c = 0; c < 8; ++c) {
            EmbeddingTable bumped = table;
            bumped.row(row)[c] += step;
            DualEncoder enc_hi(vocab, bumped);
            bumped.row(row)[c] -= 2 * step;
            DualEncoder enc_lo(vocab, std::move(bumped));
            double fd = (dot(q_vec, enc_hi.encode_doc(doc)) - dot(q_vec, enc_lo.encode_doc(doc))) /
                        (2 * step);
            double analytic = grads.per_position[0][c] * occurrences;
            if (std::abs(analytic) > 1e-8)
                CHECK(std::abs(fd - analytic) / std::abs(analytic) <= 1e-5);
        }
    }
}

TEST_CASE("sgd leaves the table unchanged for zero gradients or zero rate") {
    EmbeddingTable table(5, 4, 2);
    EmbeddingTable before = table;

    GradientAccumulator empty(4);
    sgd_step(table, empty, 0.5);
    for (std::size_t r = 0; r < table.rows(); ++r) CHECK(table.row(r) == before.row(r));

    GradientAccumulator grads(4);
    grads.add(1, {1.0, 1.0, 1.0, 1.0});
    sgd_step(table, grads, 0.0);
    for (std::size_t r = 0; r < table.rows(); ++r) CHECK(table.row(r) == before.row(r));
}

TEST_CASE("sgd rejects non-finite gradients") {
    EmbeddingTable table(3, 2, 2);
    GradientAccumulator grads(2);
    grads.add(0, {std::numeric_limits<double>::quiet_NaN(), 0.0});
    CHECK_THROWS_WITH_AS(sgd_step(table, grads, 0.1), "diverged", std::runtime_error);
}

TEST_CASE("one sgd step reduces a convex quadratic loss") {
    // loss = 0.5 * |row0 - target|^2, gradient = row0 - target.
    EmbeddingTable table(2, 3, 4);
    Vec target = {1.0, -2.0, 0.5};
    auto loss = [&]() {
        double s = 0.0;
        for (std::size_t i = 0; i < 3; ++i) {
            double d = table.row(0)[i] - target[i];
            s += 0.5 * d * d;
        }
        return s;
    };
    double before = loss();
    GradientAccumulator grads(3);
    Vec g = table.row(0);
    axpy(-1.0, target, g);
    grads.add(0, g);
    sgd_step(table, grads, 0.1);
    CHECK(loss() < before);
}

TEST_CASE("encoding scales linearly with the table") {
    Vocabulary vocab = small_vocab(10);
    EmbeddingTable table(10, 4, 6);
    DualEncoder enc(vocab, table);
    TextRecord rec = record_of("d", {"w3", "w7", "w3"});
    Vec base = enc.encode_doc(rec);

    EmbeddingTable scaled = table;
    for (std::size_t r = 0; r < scaled.rows(); ++r) scale(scaled.row(r), 2.5);
    DualEncoder enc2(vocab, std::move(scaled));
    Vec out = enc2.encode_doc(rec);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == doctest::Approx(2.5 * base[i]));
}

TEST_CASE("softmax group: uniform scores give ln(M+1), saturated gives ~0") {
    std::vector<double> uniform(7, 1.25);
    SoftmaxGroup g = softmax_nll(uniform, 0);
    CHECK(g.loss == doctest::Approx(std::log(7.0)));

    std::vector<double> saturated = {20.0, 0.0, 0.0};
    CHECK(softmax_nll(saturated, 0).loss <= 1e-3);
}

TEST_CASE("softmax group loss is invariant to constant shifts") {
    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> scores(5);
        for (auto& s : scores) s = rng.uniform(-3.0, 3.0);
        double base = softmax_nll(scores, 2).loss;
        for (auto& s : scores) s += 17.5;
        CHECK(softmax_nll(scores, 2).loss == doctest::Approx(base));
    }
}

TEST_CASE("embedding table init is deterministic, OOV row zero") {
    EmbeddingTable a(20, 6, 42);
    EmbeddingTable b(20, 6, 42);
    for (std::size_t r = 0; r < a.rows(); ++r) CHECK(a.row(r) == b.row(r));
    for (double v : a.row(a.vocab_size())) CHECK(v == 0.0);
    double bound = 0.5 / 6.0;
    for (std::size_t r = 0; r < a.vocab_size(); ++r) {
        for (double v : a.row(r)) {
            CHECK(v >= -bound);
            CHECK(v <= bound);
        }
    }
}

TEST_CASE("embedding table binary round-trip is exact") {
    EmbeddingTable table(37, 12, 99);
    table.row(5)[3] = -0.123456789012345;
    std::string path =
        (std::filesystem::temp_directory_path() / "area_table_test.emb").string();
    table.save(path);
    EmbeddingTable loaded = EmbeddingTable::load(path);
    REQUIRE(loaded.rows() == table.rows());
    REQUIRE(loaded.dim() == table.dim());
    CHECK(loaded.init_seed() == table.init_seed());
    for (std::size_t r = 0; r < table.rows(); ++r) CHECK(loaded.row(r) == table.row(r));
    std::remove(path.c_str());
}

TEST_CASE("train_encoder reduces the retrieval loss on synthetic data") {
    SyntheticSpec spec;
    spec.num_topics = 4;
    spec.docs_per_topic = 15;
    spec.vocab_size = 150;
    spec.queries_per_topic = 5;
    spec.seed = 17;
    SyntheticData data = generate_synthetic(spec);
    Vocabulary vocab = build_vocab(data.corpus.records(), 1);

    DualEncoder enc(vocab, EmbeddingTable(vocab.size(), 12, 3));
    EncoderTrainConfig cfg;
    cfg.epochs = 6;
    cfg.learning_rate = 1.5;
    cfg.negatives = 8;
    cfg.seed = 5;
    auto trace = train_encoder(enc, data.corpus, data.queries, data.qrels, cfg);
    REQUIRE(trace.size() == 6);
    CHECK(trace.back() < trace.front());
}

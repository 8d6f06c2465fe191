#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "area/evaluation.hpp"
#include "area/rng.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>

using namespace area;

namespace {

namespace fs = std::filesystem;

TextRecord record_of(std::string id, std::vector<std::string> tokens) {
    TextRecord rec;
    rec.id = std::move(id);
    rec.tokens = std::move(tokens);
    return rec;
}

AttackOutcome outcome_of(std::size_t orig, std::size_t fin, std::size_t k) {
    AttackOutcome o;
    o.query_id = "q";
    o.doc_id = "d";
    o.original_rank = orig;
    o.final_rank = fin;
    o.success = fin <= k;
    return o;
}

std::string small_config_text(std::uint64_t seed, const std::string& extra = "") {
    std::ostringstream ss;
    ss << "seed = " << seed << "\n"
       << "num_topics = 5\nvocab_size = 200\ndocs_per_topic = 40\n"
       << "doc_len_min = 15\ndoc_len_max = 25\nqueries_per_topic = 8\n"
       << "background_rate = 0.2\ndim = 12\nK = 10\n"
       << "collection_queries = 25\neval_queries = 6\n"
       << "pipeline_epochs = 5\npipeline_lr = 2.0\npipeline_negatives = 8\n"
       << "surrogate_epochs = 6\nsurrogate_lr = 1.0\nrandom_negatives = 8\n"
       << "n = 3\nviewgen_epochs = 10\nviewgen_lr = 0.002\n"
       << "tau = 2.0\neta = 2\nm = 8\nrho = 100000\npgd_step = 1.0\npgd_radius = 2.0\n"
       << "synonyms_per_word = 40\ndocs_per_stratum = 3\nmixture_size = 3\n"
       << "methods = ts, tfidf, mcara\nstrata = mixture\nsrr_ks = 5, 10\n"
       << "timing = none\n"
       << extra;
    return ss.str();
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string fresh_dir(const std::string& name) {
    std::string dir = (fs::temp_directory_path() / name).string();
    fs::remove_all(dir);
    return dir;
}

// A pipeline over a corpus whose DR ordering is fixed by construction:
// doc i scores -i, so rank(doc i) == i + 1 for the probe query.
struct OrderedWorld {
    Vocabulary vocab;
    RecordStore corpus;
    TextRecord query = record_of("z-query", {"probe"});
    std::unique_ptr<Pipeline> pipeline;

    explicit OrderedWorld(std::size_t n_docs, std::size_t k) {
        std::vector<std::string> toks = {"probe"};
        for (std::size_t i = 0; i < n_docs; ++i) toks.push_back("t" + std::to_string(i));
        vocab = Vocabulary(std::move(toks));

        std::vector<TextRecord> docs;
        for (std::size_t i = 0; i < n_docs; ++i) {
            char buf[16];
            std::snprintf(buf, sizeof(buf), "d%05zu", i);
            docs.push_back(record_of(buf, {"t" + std::to_string(i)}));
        }
        corpus = RecordStore(std::move(docs));

        EmbeddingTable table(vocab.size(), 2, 0);
        table.row(0) = {1.0, 0.0};
        for (std::size_t i = 0; i < n_docs; ++i)
            table.row(vocab.index_of("t" + std::to_string(i))) = {-static_cast<double>(i), 0.0};
        DualEncoder enc(vocab, std::move(table));
        pipeline = std::make_unique<Pipeline>(corpus, enc, enc, k, 0.0);
    }
};

} // namespace

TEST_CASE("even lattice sampling of the easy stratum") {
    // K=100 makes the easy range exactly [101, 200].
    OrderedWorld world(2000, 100);
    StrataConfig cfg{100, 10, 10};
    auto targets = sample_targets({world.query}, *world.pipeline, cfg, 1);

    std::vector<std::size_t> easy;
    for (const auto& t : targets) {
        if (t.stratum == Stratum::easy) easy.push_back(t.original_rank);
    }
    CHECK(easy == std::vector<std::size_t>{101, 112, 123, 134, 145, 156, 167, 178, 189, 200});

    // Sampled positions map to the docs actually at those ranks.
    for (const auto& t : targets) {
        CHECK(world.pipeline->recall_rank(world.query, world.corpus.by_id(t.doc_id)) ==
              t.original_rank);
        CHECK(t.original_rank > 100);
    }
}

TEST_CASE("infeasible strata shrink with a warning") {
    OrderedWorld world(30, 10); // hard would need rank > 100
    StrataConfig cfg{10, 5, 5};
    auto targets = sample_targets({world.query}, *world.pipeline, cfg, 1);
    for (const auto& t : targets) CHECK(t.stratum != Stratum::hard);
}

TEST_CASE("target sampling is deterministic under a fixed seed") {
    OrderedWorld world(500, 20);
    StrataConfig cfg{20, 6, 6};
    auto a = sample_targets({world.query}, *world.pipeline, cfg, 9);
    auto b = sample_targets({world.query}, *world.pipeline, cfg, 9);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].doc_id == b[i].doc_id);
        CHECK(a[i].original_rank == b[i].original_rank);
        CHECK(a[i].stratum == b[i].stratum);
    }
    // Mixture picks come from the pooled strata of the same query.
    std::set<std::string> pooled;
    for (const auto& t : a) {
        if (t.stratum != Stratum::mixture) pooled.insert(t.doc_id);
    }
    for (const auto& t : a) {
        if (t.stratum == Stratum::mixture) CHECK(pooled.count(t.doc_id) == 1);
    }
}

TEST_CASE("srr percentages") {
    std::vector<AttackOutcome> outs = {outcome_of(50, 3, 10), outcome_of(50, 9, 10),
                                       outcome_of(50, 10, 10), outcome_of(50, 30, 10)};
    CHECK(srr_at_k(outs, 10) == doctest::Approx(75.0));
    CHECK(srr_at_k(outs, 2) == doctest::Approx(0.0));
    std::vector<AttackOutcome> all = {outcome_of(50, 1, 10)};
    CHECK(srr_at_k(all, 10) == doctest::Approx(100.0));
    CHECK_THROWS_AS(srr_at_k({}, 10), std::invalid_argument);
}

TEST_CASE("srr is non-decreasing in k") {
    Rng rng(3);
    std::vector<AttackOutcome> outs;
    for (int i = 0; i < 40; ++i) outs.push_back(outcome_of(300, 1 + rng.below(150), 20));
    double prev = 0.0;
    for (std::size_t k = 1; k <= 150; k += 7) {
        double cur = srr_at_k(outs, k);
        CHECK(cur >= prev);
        prev = cur;
    }
}

TEST_CASE("nrs formula and the zero rule") {
    std::vector<AttackOutcome> outs = {outcome_of(200, 100, 150)};
    CHECK(nrs_at_k(outs, 150) == doctest::Approx(50.0));

    // A second recalled outcome contributes its own shift; pushing it
    // outside the top-K zeroes that contribution.
    outs.push_back(outcome_of(200, 140, 150));
    CHECK(nrs_at_k(outs, 150) == doctest::Approx((50.0 + 30.0) / 2.0));
    outs[1].final_rank = 151;
    CHECK(nrs_at_k(outs, 150) == doctest::Approx(25.0));

    // Recalled at an unchanged rank: zero shift.
    std::vector<AttackOutcome> unchanged = {outcome_of(100, 100, 150)};
    CHECK(nrs_at_k(unchanged, 150) == doctest::Approx(0.0));
    CHECK_THROWS_AS(nrs_at_k({}, 10), std::invalid_argument);
}

TEST_CASE("nrs is zero iff no outcome is both recalled and improved") {
    std::vector<AttackOutcome> outs = {outcome_of(100, 100, 20), outcome_of(50, 200, 20)};
    outs[0].final_rank = 15; // recalled but... improved: 100 -> 15
    CHECK(nrs_at_k(outs, 20) > 0.0);
    outs[0].final_rank = 100; // no longer recalled
    CHECK(nrs_at_k(outs, 20) == doctest::Approx(0.0));
}

TEST_CASE("spamicity trivial and oracle cases") {
    TextRecord query = record_of("q", {"x", "y"});
    CHECK(spamicity({"x", "y", "x"}, query) == doctest::Approx(1.0));
    CHECK(spamicity({"a", "b", "c"}, query) == doctest::Approx(0.0));
    CHECK(spamicity({}, query) == 0.0);

    // Max over all windows, verified by exhaustive scan.
    Rng rng(8);
    for (int trial = 0; trial < 15; ++trial) {
        std::vector<std::string> tokens;
        std::size_t len = 5 + rng.below(60);
        for (std::size_t i = 0; i < len; ++i)
            tokens.push_back(rng.unit() < 0.3 ? (rng.unit() < 0.5 ? "x" : "y")
                                              : "w" + std::to_string(rng.below(20)));
        std::size_t w = std::min<std::size_t>(20, tokens.size());
        double best = 0.0;
        for (std::size_t start = 0; start + w <= tokens.size(); ++start) {
            std::size_t hits = 0;
            for (std::size_t i = start; i < start + w; ++i)
                hits += tokens[i] == "x" || tokens[i] == "y" ? 1 : 0;
            best = std::max(best, static_cast<double>(hits) / static_cast<double>(w));
        }
        CHECK(spamicity(tokens, query, 20) == doctest::Approx(best));
    }
}

TEST_CASE("spamicity is invariant under in-window permutation and monotone in query terms") {
    TextRecord query = record_of("q", {"x"});
    std::vector<std::string> tokens;
    for (int i = 0; i < 15; ++i) tokens.push_back(i % 4 == 0 ? "x" : "w" + std::to_string(i));
    double base = spamicity(tokens, query, 20);

    // The whole doc fits one window; any permutation keeps the score.
    Rng rng(4);
    auto shuffled = tokens;
    rng.shuffle(shuffled);
    CHECK(spamicity(shuffled, query, 20) == doctest::Approx(base));

    // Swapping one filler for a query term cannot lower the score.
    auto more = tokens;
    more[1] = "x";
    CHECK(spamicity(more, query, 20) >= base);
}

TEST_CASE("transfer thresholds are nested") {
    // Build outcomes against the ordered world; successful outcomes only.
    OrderedWorld world(120, 20);
    std::vector<AttackOutcome> outs;
    for (int i = 0; i < 10; ++i) {
        AttackOutcome o;
        o.query_id = world.query.id;
        char buf[16];
        std::snprintf(buf, sizeof(buf), "d%05d", 30 + i);
        o.doc_id = buf;
        o.original_rank = 31 + i;
        o.final_rank = 5 + i;
        o.success = true;
        // Content that recalls into the top-K: clone a top doc's token.
        o.final_tokens = {"t0"};
        outs.push_back(o);
    }
    RecordStore queries({world.query});
    RerankTransferReport report = rerank_transfer(outs, queries, *world.pipeline);
    CHECK(report.count == 10);
    CHECK(report.t50 >= report.t10);

    DrTransferReport dr = dr_transfer(outs, 20);
    CHECK(dr.count == 10);
    CHECK(dr.lost == doctest::Approx(0.0));

    // All adv docs outside the top-K: Lost = 100.
    for (auto& o : outs) o.final_rank = 90;
    CHECK(dr_transfer(outs, 20).lost == doctest::Approx(100.0));
}

TEST_CASE("config parsing, overrides and validation errors") {
    ExperimentConfig cfg = parse_config_text(small_config_text(5));
    CHECK(cfg.seed == 5);
    CHECK(cfg.synthetic.seed == 5);
    CHECK(cfg.k == 10);
    CHECK(cfg.methods == std::vector<std::string>{"ts", "tfidf", "mcara"});
    CHECK(cfg.srr_ks == std::vector<std::size_t>{5, 10});
    CHECK(cfg.log_timing == false);

    CHECK_THROWS_WITH_AS(parse_config_text("nonsense_key = 1\n"),
                         doctest::Contains("unknown config key"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config_text("seed 5\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config_text(small_config_text(1, "methods = bogus\n")),
                    std::invalid_argument);
    CHECK_THROWS_AS(parse_config_text(small_config_text(1, "srr_ks = 99\n")),
                    std::invalid_argument);
    CHECK_THROWS_AS(parse_config_text(small_config_text(1, "timing = maybe\n")),
                    std::invalid_argument);
}

TEST_CASE("outcome log round-trip via load_outcome_log") {
    std::string path = (fs::temp_directory_path() / "area_outcomes_rt.tsv").string();
    {
        std::ofstream out(path, std::ios::binary);
        AttackOutcome o = outcome_of(222, 8, 20);
        o.query_id = "q1";
        o.doc_id = "d1";
        o.queries_spent = 14;
        o.seconds = 1.25;
        append_outcome_log(o, out, true);
    }
    auto loaded = load_outcome_log(path);
    REQUIRE(loaded.size() == 1);
    CHECK(loaded[0].query_id == "q1");
    CHECK(loaded[0].original_rank == 222);
    CHECK(loaded[0].final_rank == 8);
    CHECK(loaded[0].success);
    CHECK(loaded[0].queries_spent == 14);
    CHECK(loaded[0].seconds == doctest::Approx(1.25));
    std::remove(path.c_str());
}

TEST_CASE("experiment stages persist artifacts and reload across instances") {
    std::string dir = fresh_dir("area_exp_stages");
    ExperimentConfig cfg = parse_config_text(small_config_text(3));
    {
        Experiment ex(cfg, dir);
        ex.gen_data();
        ex.train_pipeline();
    }
    CHECK(fs::exists(fs::path(dir) / "corpus.tsv"));
    CHECK(fs::exists(fs::path(dir) / "target.emb"));
    {
        // A fresh instance picks the artifacts up from disk.
        Experiment ex(cfg, dir);
        ex.train_surrogate();
        auto outcomes = ex.attack("ts", Stratum::mixture);
        CHECK(!outcomes.empty());
        CHECK(fs::exists(ex.outcome_path("ts", Stratum::mixture)));
        CHECK(fs::exists(ex.adv_docs_path("ts", Stratum::mixture)));
    }
    fs::remove_all(dir);
}

TEST_CASE("missing stage artifacts give stage-labeled errors") {
    std::string dir = fresh_dir("area_exp_missing");
    ExperimentConfig cfg = parse_config_text(small_config_text(3));
    Experiment ex(cfg, dir);
    CHECK_THROWS_WITH_AS(ex.train_pipeline(), doctest::Contains("gen-data"), std::runtime_error);
    ex.gen_data();
    CHECK_THROWS_WITH_AS(ex.train_surrogate(), doctest::Contains("train-pipeline"),
                         std::runtime_error);
    ex.train_pipeline();
    CHECK_THROWS_WITH_AS(ex.attack("ts", Stratum::mixture), doctest::Contains("train-surrogate"),
                         std::runtime_error);
    fs::remove_all(dir);
}

TEST_CASE("run_experiment is byte-deterministic and reports all method rows") {
    std::string dir_a = fresh_dir("area_exp_det_a");
    std::string dir_b = fresh_dir("area_exp_det_b");
    ExperimentConfig cfg = parse_config_text(small_config_text(11));

    MetricReport report_a = Experiment(cfg, dir_a).run_all();
    MetricReport report_b = Experiment(cfg, dir_b).run_all();

    // Three methods, one stratum.
    CHECK(report_a.rows.size() == 3);
    CHECK(report_a.find("ts", "mixture") != nullptr);
    CHECK(report_a.find("tfidf", "mixture") != nullptr);
    CHECK(report_a.find("mcara", "mixture") != nullptr);

    for (const auto& name : {"outcomes_ts_mixture.tsv", "outcomes_tfidf_mixture.tsv",
                             "outcomes_mcara_mixture.tsv", "report.txt"}) {
        CAPTURE(name);
        CHECK(read_file((fs::path(dir_a) / name).string()) ==
              read_file((fs::path(dir_b) / name).string()));
    }
    CHECK(report_a.rendered == report_b.rendered);
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
}

TEST_CASE("split query/doc tables run end to end and change the rankings") {
    std::string dir_shared = fresh_dir("area_exp_shared");
    std::string dir_split = fresh_dir("area_exp_split");
    ExperimentConfig shared_cfg = parse_config_text(small_config_text(19));
    ExperimentConfig split_cfg = parse_config_text(small_config_text(19, "split_tables = 1\n"));

    Experiment shared(shared_cfg, dir_shared);
    shared.gen_data();
    shared.train_pipeline();
    Experiment split(split_cfg, dir_split);
    split.gen_data();
    split.train_pipeline();
    CHECK(fs::exists(fs::path(dir_split) / "target_doc.emb"));
    CHECK(!fs::exists(fs::path(dir_shared) / "target_doc.emb"));
    CHECK(split.pipeline().target_encoder().shared_tables() == false);

    const TextRecord& q = split.queries().at(0);
    RankedList a = shared.pipeline().retrieve_topk(q, 10);
    RankedList b = split.pipeline().retrieve_topk(q, 10);
    CHECK(a.doc_ids != b.doc_ids);

    // Artifacts reload across instances with the flag set.
    Experiment reloaded(split_cfg, dir_split);
    CHECK(reloaded.pipeline().target_encoder().shared_tables() == false);
    fs::remove_all(dir_shared);
    fs::remove_all(dir_split);
}

TEST_CASE("transfer flag appends the cross-stage section to the report") {
    std::string dir = fresh_dir("area_exp_transfer");
    ExperimentConfig cfg = parse_config_text(small_config_text(29, "transfer = 1\n"));
    Experiment ex(cfg, dir);
    MetricReport report = ex.run_all();
    CHECK(report.rendered.find("transfer") != std::string::npos);
    CHECK(report.rendered.find("Avg.rank") != std::string::npos);
    CHECK(report.rendered.find("Lost") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("whitebox mode installs the target model as the surrogate") {
    std::string dir = fresh_dir("area_exp_whitebox");
    ExperimentConfig cfg = parse_config_text(small_config_text(23, "whitebox = 1\n"));
    Experiment ex(cfg, dir);
    ex.gen_data();
    ex.train_pipeline();
    ex.train_surrogate();
    auto eval_qs = ex.eval_queries();
    CHECK(agreement(ex.surrogate(), ex.pipeline().target_encoder(), ex.corpus(), eval_qs, 5) ==
          doctest::Approx(1.0));
    fs::remove_all(dir);
}

TEST_CASE("report metrics are rates within range and reflect the outcome logs") {
    std::string dir = fresh_dir("area_exp_report");
    ExperimentConfig cfg = parse_config_text(small_config_text(17));
    Experiment ex(cfg, dir);
    MetricReport report = ex.run_all();
    for (const auto& row : report.rows) {
        for (double v : row.srr) {
            CHECK(v >= 0.0);
            CHECK(v <= 100.0);
        }
        for (double v : row.spam_rates) {
            CHECK(v >= 0.0);
            CHECK(v <= 100.0);
        }
        CHECK(row.count > 0);
    }

    // Report is a pure function of the on-disk artifacts: a fresh instance
    // recomputes the identical rendering.
    Experiment again(cfg, dir);
    CHECK(again.report().rendered == report.rendered);
    fs::remove_all(dir);
}

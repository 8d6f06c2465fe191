#include "area/evaluation.hpp"

#include "area/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace fs = std::filesystem;

namespace area {

Stratum stratum_from_string(const std::string& s) {
    if (s == "easy") return Stratum::easy;
    if (s == "middle") return Stratum::middle;
    if (s == "hard") return Stratum::hard;
    if (s == "mixture") return Stratum::mixture;
    throw std::invalid_argument("unknown stratum: " + s);
}

std::string to_string(Stratum stratum) {
    switch (stratum) {
        case Stratum::easy: return "easy";
        case Stratum::middle: return "middle";
        case Stratum::hard: return "hard";
        case Stratum::mixture: return "mixture";
    }
    return "mixture";
}

namespace {

// Even lattice of `count` integer positions across [lo, hi]; all positions
// when the range is narrower than the request.
std::vector<std::size_t> lattice_positions(std::size_t lo, std::size_t hi, std::size_t count) {
    std::vector<std::size_t> out;
    if (lo > hi || count == 0) return out;
    std::size_t width = hi - lo + 1;
    if (width <= count) {
        for (std::size_t p = lo; p <= hi; ++p) out.push_back(p);
        return out;
    }
    if (count == 1) return {lo};
    for (std::size_t i = 0; i < count; ++i) {
        double frac = static_cast<double>(i) * static_cast<double>(hi - lo) /
                      static_cast<double>(count - 1);
        out.push_back(lo + static_cast<std::size_t>(std::llround(frac)));
    }
    return out;
}

} // namespace

std::vector<TargetPair> sample_targets(const std::vector<TextRecord>& queries,
                                       const Pipeline& pipeline, const StrataConfig& config,
                                       std::uint64_t seed) {
    if (queries.empty()) throw std::invalid_argument("sample_targets: no queries");
    std::size_t n_docs = pipeline.corpus().size();
    std::size_t k = config.k;

    struct Range {
        Stratum stratum;
        std::size_t lo, hi;
        bool random;
    };
    std::vector<Range> ranges = {
        {Stratum::easy, k + 1, std::min(2 * k, n_docs), false},
        {Stratum::middle, 2 * k + 1, std::min(10 * k, n_docs), false},
        {Stratum::hard, 10 * k + 1, n_docs, true},
    };
    for (const auto& r : ranges) {
        if (r.lo > r.hi)
            std::cerr << "warning: stratum " << to_string(r.stratum)
                      << " infeasible for corpus of " << n_docs << " docs\n";
    }

    Rng rng(mix_seed(seed, "targets"));
    std::vector<TargetPair> out;
    for (const auto& query : queries) {
        RankedList full = pipeline.full_ranking(query);
        std::vector<TargetPair> per_query;
        for (const auto& r : ranges) {
            if (r.lo > r.hi) continue;
            std::vector<std::size_t> positions;
            if (r.random) {
                std::size_t width = r.hi - r.lo + 1;
                std::size_t take = std::min(config.docs_per_stratum, width);
                if (take < config.docs_per_stratum)
                    std::cerr << "warning: stratum " << to_string(r.stratum) << " shrunk to "
                              << take << " docs\n";
                auto picks = rng.sample_without_replacement(width, take);
                for (std::size_t p : picks) positions.push_back(r.lo + p);
                std::sort(positions.begin(), positions.end());
            } else {
                positions = lattice_positions(r.lo, r.hi, config.docs_per_stratum);
                if (positions.size() < config.docs_per_stratum)
                    std::cerr << "warning: stratum " << to_string(r.stratum) << " shrunk to "
                              << positions.size() << " docs\n";
            }
            for (std::size_t p : positions)
                per_query.push_back({query.id, full.doc_ids[p - 1], p, r.stratum});
        }

        // Mixture: a random subset of this query's pooled targets.
        std::size_t take = std::min(config.mixture_size, per_query.size());
        auto picks = rng.sample_without_replacement(per_query.size(), take);
        std::sort(picks.begin(), picks.end());
        std::vector<TargetPair> mixture;
        for (std::size_t p : picks) {
            TargetPair tp = per_query[p];
            tp.stratum = Stratum::mixture;
            mixture.push_back(tp);
        }
        out.insert(out.end(), per_query.begin(), per_query.end());
        out.insert(out.end(), mixture.begin(), mixture.end());
    }
    return out;
}

double srr_at_k(const std::vector<AttackOutcome>& outcomes, std::size_t k) {
    if (outcomes.empty()) throw std::invalid_argument("srr: empty outcome set");
    std::size_t hits = 0;
    for (const auto& o : outcomes) hits += o.final_rank <= k ? 1 : 0;
    return 100.0 * static_cast<double>(hits) / static_cast<double>(outcomes.size());
}

double nrs_at_k(const std::vector<AttackOutcome>& outcomes, std::size_t k) {
    if (outcomes.empty()) throw std::invalid_argument("nrs: empty outcome set");
    double total = 0.0;
    for (const auto& o : outcomes) {
        if (o.final_rank == 0 || o.original_rank == 0)
            throw std::invalid_argument("nrs: outcome without ranks");
        if (o.final_rank <= k) {
            total += (static_cast<double>(o.original_rank) - static_cast<double>(o.final_rank)) /
                     static_cast<double>(o.original_rank) * 100.0;
        }
    }
    return total / static_cast<double>(outcomes.size());
}

double spamicity(const std::vector<std::string>& doc_tokens, const TextRecord& query,
                 std::size_t window) {
    if (doc_tokens.empty() || window == 0) return 0.0;
    std::unordered_set<std::string> q_tokens(query.tokens.begin(), query.tokens.end());
    std::size_t w = std::min(window, doc_tokens.size());
    std::vector<int> hit(doc_tokens.size());
    for (std::size_t i = 0; i < doc_tokens.size(); ++i)
        hit[i] = q_tokens.count(doc_tokens[i]) ? 1 : 0;
    std::size_t in_window = 0;
    for (std::size_t i = 0; i < w; ++i) in_window += hit[i];
    std::size_t best = in_window;
    for (std::size_t i = w; i < doc_tokens.size(); ++i) {
        in_window += hit[i] - hit[i - w];
        best = std::max(best, in_window);
    }
    return static_cast<double>(best) / static_cast<double>(w);
}

RerankTransferReport rerank_transfer(const std::vector<AttackOutcome>& outcomes,
                                     const RecordStore& queries, const Pipeline& pipeline) {
    RerankTransferReport report;
    const RecordStore& corpus = pipeline.corpus();
    CorpusRanker dr(pipeline.target_encoder(), corpus);
    std::size_t k = pipeline.k();
    std::size_t half = std::max<std::size_t>(1, k / 2);
    std::size_t tenth = std::max<std::size_t>(1, k / 10);

    double rank_sum = 0.0;
    std::size_t in_half = 0, in_tenth = 0;
    for (const auto& o : outcomes) {
        if (!o.success) continue;
        const TextRecord& query = queries.by_id(o.query_id);
        TextRecord adv;
        adv.id = o.doc_id;
        adv.tokens = o.final_tokens;

        // Candidate set under the DR stage with the adversarial content.
        Vec q_vec = pipeline.target_encoder().encode_query(query);
        double adv_score = dot(q_vec, pipeline.target_encoder().encode_doc(adv));
        struct Cand {
            double score;
            const std::string* id;
        };
        std::vector<Cand> cands;
        cands.reserve(corpus.size());
        std::size_t adv_index = corpus.has_id(o.doc_id) ? corpus.index_of_id(o.doc_id)
                                                        : static_cast<std::size_t>(-1);
        for (std::size_t i = 0; i < corpus.size(); ++i) {
            if (i == adv_index) continue;
            cands.push_back({dot(q_vec, dr.doc_embedding(i)), &corpus.at(i).id});
        }
        cands.push_back({adv_score, &adv.id});
        std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
            if (a.score != b.score) return a.score > b.score;
            return *a.id < *b.id;
        });
        if (cands.size() > k) cands.resize(k);

        // Rerank the candidate set with the adversarial content in place.
        struct Rr {
            double score;
            const std::string* id;
        };
        std::vector<Rr> reranked;
        reranked.reserve(cands.size());
        bool adv_present = false;
        for (const auto& c : cands) {
            const TextRecord& rec = (*c.id == o.doc_id) ? adv : corpus.by_id(*c.id);
            if (*c.id == o.doc_id) adv_present = true;
            reranked.push_back({pipeline.reranker_score(query, rec), c.id});
        }
        if (!adv_present) continue;
        std::sort(reranked.begin(), reranked.end(), [](const Rr& a, const Rr& b) {
            if (a.score != b.score) return a.score > b.score;
            return *a.id < *b.id;
        });
        std::size_t pos = 0;
        for (std::size_t i = 0; i < reranked.size(); ++i) {
            if (*reranked[i].id == o.doc_id) {
                pos = i + 1;
                break;
            }
        }
        ++report.count;
        rank_sum += static_cast<double>(pos);
        if (pos <= half) ++in_half;
        if (pos <= tenth) ++in_tenth;
    }
    if (report.count > 0) {
        report.avg_rank = rank_sum / static_cast<double>(report.count);
        report.t50 = 100.0 * static_cast<double>(in_half) / static_cast<double>(report.count);
        report.t10 = 100.0 * static_cast<double>(in_tenth) / static_cast<double>(report.count);
    }
    return report;
}

DrTransferReport dr_transfer(const std::vector<AttackOutcome>& outcomes, std::size_t k) {
    DrTransferReport report;
    if (outcomes.empty()) return report;
    std::size_t dropped = 0, lost = 0;
    double nrs_sum = 0.0;
    for (const auto& o : outcomes) {
        if (o.final_rank > o.original_rank) ++dropped;
        if (o.final_rank > k) ++lost;
        nrs_sum += (static_cast<double>(o.original_rank) - static_cast<double>(o.final_rank)) /
                   static_cast<double>(o.original_rank) * 100.0;
    }
    report.count = outcomes.size();
    report.drop = 100.0 * static_cast<double>(dropped) / static_cast<double>(report.count);
    report.lost = 100.0 * static_cast<double>(lost) / static_cast<double>(report.count);
    report.nrs = nrs_sum / static_cast<double>(report.count);
    return report;
}

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!trim(cur).empty()) out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!trim(cur).empty()) out.push_back(trim(cur));
    return out;
}

std::size_t to_count(const std::string& v, const std::string& key) {
    try {
        return static_cast<std::size_t>(std::stoull(v));
    } catch (const std::exception&) {
        throw std::invalid_argument("config: bad count for " + key + ": " + v);
    }
}

double to_real(const std::string& v, const std::string& key) {
    try {
        return std::stod(v);
    } catch (const std::exception&) {
        throw std::invalid_argument("config: bad number for " + key + ": " + v);
    }
}

bool to_flag(const std::string& v, const std::string& key) {
    if (v == "1" || v == "true" || v == "on") return true;
    if (v == "0" || v == "false" || v == "off") return false;
    throw std::invalid_argument("config: bad flag for " + key + ": " + v);
}

} // namespace

void ExperimentConfig::set(const std::string& key, const std::string& value) {
    if (key == "seed") {
        seed = to_count(value, key);
        synthetic.seed = seed;
    } else if (key == "num_topics") {
        synthetic.num_topics = to_count(value, key);
    } else if (key == "docs_per_topic") {
        synthetic.docs_per_topic = to_count(value, key);
    } else if (key == "vocab_size") {
        synthetic.vocab_size = to_count(value, key);
    } else if (key == "doc_len_min") {
        synthetic.doc_len_min = to_count(value, key);
    } else if (key == "doc_len_max") {
        synthetic.doc_len_max = to_count(value, key);
    } else if (key == "queries_per_topic") {
        synthetic.queries_per_topic = to_count(value, key);
    } else if (key == "background_rate") {
        synthetic.background_rate = to_real(value, key);
    } else if (key == "dim") {
        dim = to_count(value, key);
    } else if (key == "K") {
        k = to_count(value, key);
    } else if (key == "alpha") {
        alpha = to_real(value, key);
    } else if (key == "split_tables") {
        split_tables = to_flag(value, key);
    } else if (key == "pipeline_epochs") {
        pipeline_train.epochs = to_count(value, key);
    } else if (key == "pipeline_lr") {
        pipeline_train.learning_rate = to_real(value, key);
    } else if (key == "pipeline_negatives") {
        pipeline_train.negatives = to_count(value, key);
    } else if (key == "ell") {
        surrogate.ell = to_count(value, key);
    } else if (key == "surrogate_epochs") {
        surrogate.epochs = to_count(value, key);
    } else if (key == "surrogate_lr") {
        surrogate.learning_rate = to_real(value, key);
    } else if (key == "surrogate_batch") {
        surrogate.batch_size = to_count(value, key);
    } else if (key == "random_negatives") {
        surrogate.random_negatives = to_count(value, key);
    } else if (key == "lambda") {
        attack.viewgen.lambda = to_real(value, key);
    } else if (key == "n") {
        attack.viewgen.n = to_count(value, key);
    } else if (key == "viewgen_epochs") {
        attack.viewgen.epochs = to_count(value, key);
    } else if (key == "viewgen_lr") {
        attack.viewgen.learning_rate = to_real(value, key);
    } else if (key == "kmeans_iters") {
        attack.viewgen.kmeans_iters = to_count(value, key);
    } else if (key == "distinct_views") {
        attack.viewgen.distinct_views = to_flag(value, key);
    } else if (key == "viewgen_relu") {
        attack.viewgen.relu = to_flag(value, key);
    } else if (key == "tau") {
        attack.tau = to_real(value, key);
    } else if (key == "eta") {
        attack.eta = to_count(value, key);
    } else if (key == "m") {
        attack.m = to_count(value, key);
    } else if (key == "rho") {
        attack.rho = to_real(value, key);
    } else if (key == "pgd_step") {
        attack.pgd_step = to_real(value, key);
    } else if (key == "pgd_radius") {
        attack.pgd_radius = to_real(value, key);
    } else if (key == "synonyms_per_word") {
        attack.synonyms_per_word = to_count(value, key);
    } else if (key == "rank_check") {
        attack.rank_check = rank_check_from_string(value);
    } else if (key == "blackbox_budget") {
        attack.blackbox_budget = to_count(value, key);
    } else if (key == "collection_queries") {
        collection_queries = to_count(value, key);
    } else if (key == "eval_queries") {
        eval_queries = to_count(value, key);
    } else if (key == "docs_per_stratum") {
        docs_per_stratum = to_count(value, key);
    } else if (key == "mixture_size") {
        mixture_size = to_count(value, key);
    } else if (key == "methods") {
        methods = split_list(value);
    } else if (key == "strata") {
        strata = split_list(value);
    } else if (key == "srr_ks") {
        srr_ks.clear();
        for (const auto& v : split_list(value)) srr_ks.push_back(to_count(v, key));
    } else if (key == "spam_thresholds") {
        spam_thresholds.clear();
        for (const auto& v : split_list(value)) spam_thresholds.push_back(to_real(v, key));
    } else if (key == "spam_window") {
        spam_window = to_count(value, key);
    } else if (key == "timing") {
        if (value == "wall")
            log_timing = true;
        else if (value == "none")
            log_timing = false;
        else
            throw std::invalid_argument("config: timing must be wall or none");
    } else if (key == "transfer") {
        transfer = to_flag(value, key);
    } else if (key == "whitebox") {
        whitebox = to_flag(value, key);
    } else {
        throw std::invalid_argument("unknown config key: " + key);
    }
}

void ExperimentConfig::validate() const {
    synthetic.validate();
    if (dim < 2) throw std::invalid_argument("config: dim must be >= 2");
    if (k < 1) throw std::invalid_argument("config: K must be >= 1");
    if (collection_queries < 1 || eval_queries < 1)
        throw std::invalid_argument("config: query counts must be >= 1");
    if (methods.empty() || strata.empty())
        throw std::invalid_argument("config: methods and strata must be non-empty");
    for (const auto& m : methods) {
        if (m != "ts" && m != "tfidf") attack_mode_from_string(m);
    }
    for (const auto& s : strata) stratum_from_string(s);
    if (srr_ks.empty()) throw std::invalid_argument("config: srr_ks must be non-empty");
    for (std::size_t kk : srr_ks) {
        if (kk < 1 || kk > k) throw std::invalid_argument("config: srr_ks entries must be in [1, K]");
    }
    AttackConfig a = attack;
    a.k = k;
    a.validate();
}

ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig config;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        auto eq = t.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(line_no) +
                                        ": expected key=value");
        config.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    config.validate();
    return config;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

const MethodStratumMetrics* MetricReport::find(const std::string& method,
                                               const std::string& stratum) const {
    for (const auto& r : rows) {
        if (r.method == method && r.stratum == stratum) return &r;
    }
    return nullptr;
}

std::vector<AttackOutcome> load_outcome_log(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open outcome log: " + path);
    std::vector<AttackOutcome> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            auto tab = line.find('\t', start);
            fields.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (fields.size() != 8)
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": expected 8 tab-separated fields");
        AttackOutcome o;
        o.query_id = fields[0];
        o.doc_id = fields[1];
        o.original_rank = to_count(fields[2], "orig_rank");
        o.final_rank = to_count(fields[3], "final_rank");
        o.success = fields[4] == "1";
        o.substitutions.resize(to_count(fields[5], "num_subs"));
        o.queries_spent = to_count(fields[6], "queries_spent");
        o.seconds = to_real(fields[7], "seconds");
        out.push_back(std::move(o));
    }
    return out;
}

namespace {

std::string join_path(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

std::string fmt(const char* format, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), format, v);
    return buf;
}

} // namespace

Experiment::Experiment(ExperimentConfig config, std::string out_dir)
    : config_(std::move(config)), out_dir_(std::move(out_dir)) {
    config_.validate();
    fs::create_directories(out_dir_);
}

std::string Experiment::outcome_path(const std::string& method, Stratum stratum) const {
    return join_path(out_dir_, "outcomes_" + method + "_" + to_string(stratum) + ".tsv");
}

std::string Experiment::adv_docs_path(const std::string& method, Stratum stratum) const {
    return join_path(out_dir_, "advdocs_" + method + "_" + to_string(stratum) + ".tsv");
}

void Experiment::gen_data() {
    SyntheticData data = generate_synthetic(config_.synthetic);
    Store store;
    store.vocab = build_vocab(data.corpus.records(), 1);
    store.records = std::move(data.corpus);
    save_store(store, join_path(out_dir_, "corpus.tsv"), join_path(out_dir_, "vocab.tsv"));
    save_records(data.queries, join_path(out_dir_, "queries.tsv"));
    save_qrels(data.qrels, join_path(out_dir_, "qrels.tsv"));

    // Later-stage state refers into the store; rebuild it all.
    pipeline_.reset();
    surrogate_.reset();
    surrogate_ranker_.reset();
    lm_.reset();
    targets_.reset();
    surrogate_loss_trace_.clear();
    store_ = std::move(store);
    queries_ = std::move(data.queries);
    qrels_ = std::move(data.qrels);
    query_order_.clear();
}

void Experiment::ensure_data() {
    if (store_.has_value()) return;
    std::string corpus_path = join_path(out_dir_, "corpus.tsv");
    if (!fs::exists(corpus_path))
        throw std::runtime_error("gen-data stage artifacts missing; run gen-data first");
    store_ = load_store(corpus_path, join_path(out_dir_, "vocab.tsv"));
    queries_ = load_records(join_path(out_dir_, "queries.tsv"));
    qrels_ = load_qrels(join_path(out_dir_, "qrels.tsv"));
}

std::vector<TextRecord> Experiment::query_slice(std::size_t offset, std::size_t count) {
    ensure_data();
    if (query_order_.empty()) {
        query_order_.resize(queries_->size());
        for (std::size_t i = 0; i < query_order_.size(); ++i) query_order_[i] = i;
        Rng rng(mix_seed(config_.seed, "query-split"));
        rng.shuffle(query_order_);
    }
    if (offset + count > query_order_.size())
        throw std::runtime_error("not enough queries for the configured collection/eval split");
    std::vector<TextRecord> out;
    out.reserve(count);
    for (std::size_t i = offset; i < offset + count; ++i)
        out.push_back(queries_->at(query_order_[i]));
    return out;
}

std::vector<TextRecord> Experiment::collection_queries() {
    return query_slice(0, config_.collection_queries);
}

std::vector<TextRecord> Experiment::eval_queries() {
    return query_slice(config_.collection_queries, config_.eval_queries);
}

void Experiment::train_pipeline() {
    ensure_data();
    const Vocabulary& vocab = store_->vocab;

    auto fresh_encoder = [&](const char* tag) {
        EmbeddingTable q_table(vocab.size(), config_.dim,
                               mix_seed(config_.seed, std::string(tag) + "-init"));
        if (!config_.split_tables) return DualEncoder(vocab, std::move(q_table));
        EmbeddingTable d_table(vocab.size(), config_.dim,
                               mix_seed(config_.seed, std::string(tag) + "-doc-init"));
        return DualEncoder(vocab, std::move(q_table), std::move(d_table));
    };

    DualEncoder target = fresh_encoder("target");
    EncoderTrainConfig tc = config_.pipeline_train;
    tc.seed = mix_seed(config_.seed, "target-train");
    auto target_trace = train_encoder(target, store_->records, *queries_, qrels_, tc);

    DualEncoder reranker = fresh_encoder("reranker");
    EncoderTrainConfig rc = config_.pipeline_train;
    rc.seed = mix_seed(config_.seed, "reranker-train");
    auto reranker_trace = train_encoder(reranker, store_->records, *queries_, qrels_, rc);

    target.query_table().save(join_path(out_dir_, "target.emb"));
    reranker.query_table().save(join_path(out_dir_, "reranker.emb"));
    if (config_.split_tables) {
        target.doc_table().save(join_path(out_dir_, "target_doc.emb"));
        reranker.doc_table().save(join_path(out_dir_, "reranker_doc.emb"));
    }
    std::cerr << "info: pipeline trained, target loss " << target_trace.front() << " -> "
              << target_trace.back() << ", reranker loss " << reranker_trace.front() << " -> "
              << reranker_trace.back() << "\n";

    pipeline_.emplace(store_->records, std::move(target), std::move(reranker), config_.k,
                      config_.alpha);
    targets_.reset();
}

void Experiment::ensure_pipeline() {
    if (pipeline_.has_value()) return;
    ensure_data();
    std::string target_path = join_path(out_dir_, "target.emb");
    if (!fs::exists(target_path))
        throw std::runtime_error("train-pipeline stage artifacts missing; run train-pipeline first");
    auto load_encoder = [&](const char* base, const char* doc) {
        EmbeddingTable q_table = EmbeddingTable::load(join_path(out_dir_, base));
        if (!config_.split_tables) return DualEncoder(store_->vocab, std::move(q_table));
        return DualEncoder(store_->vocab, std::move(q_table),
                           EmbeddingTable::load(join_path(out_dir_, doc)));
    };
    DualEncoder target = load_encoder("target.emb", "target_doc.emb");
    DualEncoder reranker = load_encoder("reranker.emb", "reranker_doc.emb");
    pipeline_.emplace(store_->records, std::move(target), std::move(reranker), config_.k,
                      config_.alpha);
}

void Experiment::train_surrogate() {
    ensure_pipeline();
    if (config_.whitebox) {
        // White-box setting: the attacker uses the target model itself.
        pipeline_->target_encoder().query_table().save(join_path(out_dir_, "surrogate.emb"));
        if (config_.split_tables)
            pipeline_->target_encoder().doc_table().save(join_path(out_dir_, "surrogate_doc.emb"));
        surrogate_loss_trace_.assign(1, 0.0);
        std::ofstream loss_out(join_path(out_dir_, "surrogate_loss.tsv"), std::ios::binary);
        loss_out << 0 << '\t' << fmt("%.6f", 0.0) << '\n';
        std::cerr << "info: whitebox mode, surrogate is a copy of the target model\n";
        surrogate_.emplace(pipeline_->target_encoder());
        surrogate_ranker_.reset();
        return;
    }
    BlackBox blackbox(*pipeline_);
    auto coll = collection_queries();
    ImitationDataset dataset = build_imitation_dataset(coll, blackbox, config_.surrogate.ell);
    save_imitation(dataset, join_path(out_dir_, "imitation.tsv"));

    DualEncoder surrogate(store_->vocab, EmbeddingTable(store_->vocab.size(), config_.dim,
                                                        mix_seed(config_.seed, "surrogate-init")));
    SurrogateConfig sc = config_.surrogate;
    sc.seed = mix_seed(config_.seed, "surrogate-train");
    surrogate_loss_trace_ = area::train_surrogate(surrogate, dataset, store_->records, *queries_, sc);

    surrogate.query_table().save(join_path(out_dir_, "surrogate.emb"));
    std::ofstream loss_out(join_path(out_dir_, "surrogate_loss.tsv"), std::ios::binary);
    for (std::size_t e = 0; e < surrogate_loss_trace_.size(); ++e)
        loss_out << e << '\t' << fmt("%.6f", surrogate_loss_trace_[e]) << '\n';
    std::cerr << "info: surrogate trained on " << dataset.queries.size() << " queries ("
              << blackbox.queries_issued() << " black-box calls), loss "
              << surrogate_loss_trace_.front() << " -> " << surrogate_loss_trace_.back() << "\n";

    surrogate_ = std::move(surrogate);
    surrogate_ranker_.reset();
}

void Experiment::ensure_surrogate() {
    ensure_pipeline();
    if (!surrogate_.has_value()) {
        std::string path = join_path(out_dir_, "surrogate.emb");
        if (!fs::exists(path))
            throw std::runtime_error(
                "train-surrogate stage artifacts missing; run train-surrogate first");
        if (config_.whitebox && config_.split_tables) {
            surrogate_.emplace(store_->vocab, EmbeddingTable::load(path),
                               EmbeddingTable::load(join_path(out_dir_, "surrogate_doc.emb")));
        } else {
            surrogate_.emplace(store_->vocab, EmbeddingTable::load(path));
        }
    }
    if (!surrogate_ranker_.has_value())
        surrogate_ranker_.emplace(*surrogate_, store_->records);
    if (!lm_.has_value()) lm_.emplace(store_->records, store_->vocab);
}

const std::vector<double>& Experiment::surrogate_loss_trace() {
    if (surrogate_loss_trace_.empty()) {
        std::string path = join_path(out_dir_, "surrogate_loss.tsv");
        if (fs::exists(path)) {
            std::ifstream in(path, std::ios::binary);
            std::string line;
            while (std::getline(in, line)) {
                auto tab = line.find('\t');
                if (tab != std::string::npos)
                    surrogate_loss_trace_.push_back(std::stod(line.substr(tab + 1)));
            }
        }
    }
    return surrogate_loss_trace_;
}

const std::vector<TargetPair>& Experiment::targets() {
    if (!targets_.has_value()) {
        ensure_pipeline();
        StrataConfig sc{config_.k, config_.docs_per_stratum, config_.mixture_size};
        targets_ = sample_targets(eval_queries(), *pipeline_, sc, mix_seed(config_.seed, "targets"));
    }
    return *targets_;
}

std::vector<AttackOutcome> Experiment::attack(const std::string& method, Stratum stratum) {
    ensure_surrogate();
    BlackBox blackbox(*pipeline_);

    AttackContext ctx;
    ctx.corpus = &store_->records;
    ctx.vocab = &store_->vocab;
    ctx.surrogate = &*surrogate_;
    ctx.surrogate_ranker = &*surrogate_ranker_;
    ctx.blackbox = &blackbox;
    ctx.lm = &*lm_;
    ctx.kmeans_audit = &kmeans_audit_;

    AttackConfig acfg = config_.attack;
    acfg.k = config_.k;
    acfg.seed = mix_seed(config_.seed, "attack:" + method);
    bool is_mcara = method != "ts" && method != "tfidf";
    if (is_mcara) acfg.mode = attack_mode_from_string(method);

    std::vector<AttackOutcome> outcomes;
    for (const auto& pair : targets()) {
        if (pair.stratum != stratum) continue;
        const TextRecord& query = queries_->by_id(pair.query_id);
        const TextRecord& doc = store_->records.by_id(pair.doc_id);

        AttackOutcome outcome;
        if (method == "ts") {
            outcome = baseline_ts(query, doc, config_.attack.m,
                                  mix_seed(acfg.seed, pair.query_id + ":" + pair.doc_id));
        } else if (method == "tfidf") {
            outcome = baseline_tfidf(query, doc, store_->records, surrogate_->doc_table(),
                                     store_->vocab, config_.attack.m);
        } else {
            outcome = attack_mcara(query, doc, ctx, acfg);
        }

        outcome.original_rank = pair.original_rank;
        TextRecord final_rec;
        final_rec.id = pair.doc_id;
        final_rec.tokens = outcome.final_tokens;
        outcome.final_rank = pipeline_->recall_rank(query, final_rec);
        outcome.success = outcome.final_rank <= config_.k;
        outcomes.push_back(std::move(outcome));
    }

    std::ofstream log(outcome_path(method, stratum), std::ios::binary);
    if (!log) throw std::runtime_error("cannot open outcome log for writing");
    std::ofstream adv(adv_docs_path(method, stratum), std::ios::binary);
    if (!adv) throw std::runtime_error("cannot open adv docs file for writing");
    for (const auto& o : outcomes) {
        append_outcome_log(o, log, config_.log_timing);
        adv << o.query_id << '\t' << o.doc_id << '\t';
        for (std::size_t i = 0; i < o.final_tokens.size(); ++i) {
            if (i) adv << ' ';
            adv << o.final_tokens[i];
        }
        adv << '\n';
    }
    return outcomes;
}

void Experiment::attack_all() {
    for (const auto& method : config_.methods) {
        for (const auto& s : config_.strata) attack(method, stratum_from_string(s));
    }
}

MetricReport Experiment::report() {
    ensure_data();
    if (!lm_.has_value()) lm_.emplace(store_->records, store_->vocab);

    MetricReport report;
    report.srr_ks = config_.srr_ks;
    report.spam_thresholds = config_.spam_thresholds;

    for (const auto& method : config_.methods) {
        for (const auto& s : config_.strata) {
            Stratum stratum = stratum_from_string(s);
            std::string opath = outcome_path(method, stratum);
            if (!fs::exists(opath))
                throw std::runtime_error("missing outcome log " + opath + "; run attack first");
            auto outcomes = load_outcome_log(opath);

            std::unordered_map<std::string, std::vector<std::string>> adv_tokens;
            {
                std::ifstream in(adv_docs_path(method, stratum), std::ios::binary);
                if (!in) throw std::runtime_error("missing adv docs for " + method + "/" + s);
                std::string line;
                while (std::getline(in, line)) {
                    if (line.empty()) continue;
                    auto t1 = line.find('\t');
                    auto t2 = line.find('\t', t1 + 1);
                    if (t1 == std::string::npos || t2 == std::string::npos)
                        throw std::runtime_error("malformed adv docs line");
                    adv_tokens[line.substr(0, t1) + "\t" + line.substr(t1 + 1, t2 - t1 - 1)] =
                        tokenize(line.substr(t2 + 1));
                }
            }

            MethodStratumMetrics row;
            row.method = method;
            row.stratum = s;
            row.count = outcomes.size();
            if (!outcomes.empty()) {
                for (std::size_t kk : config_.srr_ks) row.srr.push_back(srr_at_k(outcomes, kk));
                row.nrs = nrs_at_k(outcomes, config_.k);

                std::vector<double> spam_scores;
                double ppl_sum = 0.0;
                std::size_t ppl_count = 0;
                double sec_sum = 0.0;
                for (const auto& o : outcomes) {
                    auto it = adv_tokens.find(o.query_id + "\t" + o.doc_id);
                    if (it == adv_tokens.end())
                        throw std::runtime_error("adv doc missing for outcome " + o.query_id +
                                                 "/" + o.doc_id);
                    spam_scores.push_back(
                        spamicity(it->second, queries_->by_id(o.query_id), config_.spam_window));
                    if (it->second.size() >= 2) {
                        ppl_sum += lm_->perplexity(it->second);
                        ++ppl_count;
                    }
                    sec_sum += o.seconds;
                }
                for (double th : config_.spam_thresholds) {
                    std::size_t flagged = 0;
                    for (double sc : spam_scores) flagged += sc > th ? 1 : 0;
                    row.spam_rates.push_back(100.0 * static_cast<double>(flagged) /
                                             static_cast<double>(spam_scores.size()));
                }
                row.mean_perplexity = ppl_count ? ppl_sum / static_cast<double>(ppl_count) : 0.0;
                row.mean_seconds = sec_sum / static_cast<double>(outcomes.size());
            } else {
                row.srr.assign(config_.srr_ks.size(), 0.0);
                row.spam_rates.assign(config_.spam_thresholds.size(), 0.0);
            }
            report.rows.push_back(std::move(row));
        }
    }

    std::ostringstream table;
    table << "spamicity columns: windowed query-term density proxy, window "
          << config_.spam_window << "; PPL: corpus bigram model\n";
    table << "method        stratum ";
    for (std::size_t kk : config_.srr_ks) {
        std::string h = "SRR@" + std::to_string(kk);
        table << ' ' << std::string(8 > h.size() ? 8 - h.size() : 0, ' ') << h;
    }
    table << "   NRS@" << config_.k;
    for (double th : config_.spam_thresholds) table << "  spam>" << fmt("%.2f", th);
    table << "       PPL   sec/attack     n\n";
    for (const auto& row : report.rows) {
        char line[512];
        std::snprintf(line, sizeof(line), "%-13s %-8s", row.method.c_str(), row.stratum.c_str());
        table << line;
        for (double v : row.srr) table << ' ' << fmt("%8.1f", v);
        table << ' ' << fmt("%8.1f", row.nrs);
        for (double v : row.spam_rates) table << ' ' << fmt("%9.1f", v);
        table << ' ' << fmt("%9.2f", row.mean_perplexity) << ' ' << fmt("%12.3f", row.mean_seconds);
        std::snprintf(line, sizeof(line), " %5zu", row.count);
        table << line << '\n';
    }

    if (config_.transfer) {
        ensure_pipeline();
        table << "\ntransfer (reranker stage / DR stage)\n";
        table << "method        stratum   Avg.rank     T50%     T10%     Drop      NRS     Lost\n";
        for (const auto& method : config_.methods) {
            for (const auto& s : config_.strata) {
                Stratum stratum = stratum_from_string(s);
                auto outcomes = load_outcome_log(outcome_path(method, stratum));
                std::unordered_map<std::string, std::vector<std::string>> adv_tokens;
                std::ifstream in(adv_docs_path(method, stratum), std::ios::binary);
                std::string line;
                while (std::getline(in, line)) {
                    if (line.empty()) continue;
                    auto t1 = line.find('\t');
                    auto t2 = line.find('\t', t1 + 1);
                    adv_tokens[line.substr(0, t1) + "\t" + line.substr(t1 + 1, t2 - t1 - 1)] =
                        tokenize(line.substr(t2 + 1));
                }
                for (auto& o : outcomes) {
                    auto it = adv_tokens.find(o.query_id + "\t" + o.doc_id);
                    if (it != adv_tokens.end()) o.final_tokens = it->second;
                }
                auto rt = rerank_transfer(outcomes, *queries_, *pipeline_);
                auto dt = dr_transfer(outcomes, config_.k);
                char buf[256];
                std::snprintf(buf, sizeof(buf),
                              "%-13s %-8s %9.2f %8.1f %8.1f %8.1f %8.1f %8.1f\n", method.c_str(),
                              s.c_str(), rt.avg_rank, rt.t50, rt.t10, dt.drop, dt.nrs, dt.lost);
                table << buf;
            }
        }
    }

    report.rendered = table.str();
    std::ofstream out(join_path(out_dir_, "report.txt"), std::ios::binary);
    if (!out) throw std::runtime_error("cannot write report.txt");
    out << report.rendered;
    return report;
}

MetricReport Experiment::run_all() {
    try {
        gen_data();
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("gen-data stage failed: ") + e.what());
    }
    try {
        train_pipeline();
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("train-pipeline stage failed: ") + e.what());
    }
    try {
        train_surrogate();
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("train-surrogate stage failed: ") + e.what());
    }
    try {
        attack_all();
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("attack stage failed: ") + e.what());
    }
    try {
        return report();
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("report stage failed: ") + e.what());
    }
}

const Pipeline& Experiment::pipeline() {
    ensure_pipeline();
    return *pipeline_;
}

const DualEncoder& Experiment::surrogate() {
    ensure_surrogate();
    return *surrogate_;
}

const RecordStore& Experiment::corpus() {
    ensure_data();
    return store_->records;
}

const RecordStore& Experiment::queries() {
    ensure_data();
    return *queries_;
}

const Vocabulary& Experiment::vocab() {
    ensure_data();
    return store_->vocab;
}

const BigramLm& Experiment::lm() {
    ensure_data();
    if (!lm_.has_value()) lm_.emplace(store_->records, store_->vocab);
    return *lm_;
}

MetricReport run_experiment(const std::string& config_path, const std::string& out_dir) {
    Experiment experiment(parse_config_file(config_path), out_dir);
    return experiment.run_all();
}

} // namespace area

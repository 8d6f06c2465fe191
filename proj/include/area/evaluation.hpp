#ifndef AREA_EVALUATION_HPP
#define AREA_EVALUATION_HPP

#include "area/attack.hpp"
#include "area/corpus.hpp"
#include "area/encoder.hpp"
#include "area/lm.hpp"
#include "area/pipeline.hpp"
#include "area/surrogate.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace area {

enum class Stratum { easy, middle, hard, mixture };

Stratum stratum_from_string(const std::string& s);
std::string to_string(Stratum stratum);

struct TargetPair {
    std::string query_id;
    std::string doc_id;
    std::size_t original_rank = 0; // exact exhaustive DR position
    Stratum stratum = Stratum::mixture;
};

struct StrataConfig {
    std::size_t k = 20;
    std::size_t docs_per_stratum = 10;
    std::size_t mixture_size = 10;
};

// Per query: Easy positions on an even lattice over (K, 2K], Middle over
// (2K, 10K], Hard randomly from (10K, N], Mixture a random subset of the
// three. Ranges are shrunk with a warning when the corpus is too small.
std::vector<TargetPair> sample_targets(const std::vector<TextRecord>& queries,
                                       const Pipeline& pipeline, const StrataConfig& config,
                                       std::uint64_t seed);

// Percentage of outcomes with final_rank <= k. Errors on empty input.
double srr_at_k(const std::vector<AttackOutcome>& outcomes, std::size_t k);

// Mean of (orig - final)/orig * 100 over outcomes recalled into the top-K,
// zero contribution otherwise. Errors on empty input.
double nrs_at_k(const std::vector<AttackOutcome>& outcomes, std::size_t k);

// Windowed query-term density: max over sliding windows of the fraction of
// positions covered by query terms.
double spamicity(const std::vector<std::string>& doc_tokens, const TextRecord& query,
                 std::size_t window = 20);

struct RerankTransferReport {
    double avg_rank = 0.0;
    double t50 = 0.0; // % entering the top 50% of the final list
    double t10 = 0.0; // % entering the top 10%
    std::size_t count = 0;
};

// Feeds successful adversarial docs through the reranker stage.
RerankTransferReport rerank_transfer(const std::vector<AttackOutcome>& outcomes,
                                     const RecordStore& queries, const Pipeline& pipeline);

struct DrTransferReport {
    double drop = 0.0; // % whose DR rank worsened
    double nrs = 0.0;  // mean relative rank change, unconstrained sign
    double lost = 0.0; // % not recalled into the top-K
    std::size_t count = 0;
};

DrTransferReport dr_transfer(const std::vector<AttackOutcome>& outcomes, std::size_t k);

struct ExperimentConfig {
    SyntheticSpec synthetic;
    std::size_t dim = 32;
    std::size_t k = 20;
    double alpha = 0.5;        // reranker token-overlap weight
    bool split_tables = false; // separate query/doc tables for the pipeline encoders
    EncoderTrainConfig pipeline_train;
    SurrogateConfig surrogate;
    AttackConfig attack;
    std::size_t collection_queries = 200;
    std::size_t eval_queries = 50;
    std::size_t docs_per_stratum = 10;
    std::size_t mixture_size = 10;
    std::vector<std::string> methods = {"ts", "tfidf", "mcara"};
    std::vector<std::string> strata = {"mixture"};
    std::vector<std::size_t> srr_ks = {10, 20};
    std::vector<double> spam_thresholds = {0.08, 0.06, 0.04, 0.02};
    std::size_t spam_window = 20;
    bool log_timing = true;
    bool transfer = false;
    bool whitebox = false; // surrogate := target, skipping imitation
    std::uint64_t seed = 1;

    void set(const std::string& key, const std::string& value);
    void validate() const;
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);

struct MethodStratumMetrics {
    std::string method;
    std::string stratum;
    std::size_t count = 0;
    std::vector<double> srr;        // aligned to srr_ks
    double nrs = 0.0;
    std::vector<double> spam_rates; // aligned to spam_thresholds
    double mean_perplexity = 0.0;
    double mean_seconds = 0.0;
};

struct MetricReport {
    std::vector<std::size_t> srr_ks;
    std::vector<double> spam_thresholds;
    std::vector<MethodStratumMetrics> rows;
    std::string rendered;

    const MethodStratumMetrics* find(const std::string& method, const std::string& stratum) const;
};

std::vector<AttackOutcome> load_outcome_log(const std::string& path);

// Stage-oriented orchestrator. Every stage persists its artifacts under
// out_dir and later stages reload them, so stages can run in separate
// processes. All stages are deterministic under the config seed.
class Experiment {
public:
    Experiment(ExperimentConfig config, std::string out_dir);

    // Loaded stages hold pointers into the store; keep the object pinned.
    Experiment(const Experiment&) = delete;
    Experiment& operator=(const Experiment&) = delete;
    Experiment(Experiment&&) = delete;
    Experiment& operator=(Experiment&&) = delete;

    void gen_data();
    void train_pipeline();
    void train_surrogate();
    std::vector<AttackOutcome> attack(const std::string& method, Stratum stratum);
    void attack_all();
    MetricReport report();
    MetricReport run_all();

    const ExperimentConfig& config() const { return config_; }
    const std::string& out_dir() const { return out_dir_; }

    // Loaded-state accessors (lazy; load from artifacts when needed).
    const Pipeline& pipeline();
    const DualEncoder& surrogate();
    const RecordStore& corpus();
    const RecordStore& queries();
    const Vocabulary& vocab();
    const BigramLm& lm();
    std::vector<TextRecord> collection_queries();
    std::vector<TextRecord> eval_queries();
    const std::vector<TargetPair>& targets();
    const std::vector<double>& surrogate_loss_trace();
    const KMeansAudit& kmeans_audit() const { return kmeans_audit_; }

    std::string outcome_path(const std::string& method, Stratum stratum) const;
    std::string adv_docs_path(const std::string& method, Stratum stratum) const;

private:
    void ensure_data();
    void ensure_pipeline();
    void ensure_surrogate();
    std::vector<TextRecord> query_slice(std::size_t offset, std::size_t count);

    ExperimentConfig config_;
    std::string out_dir_;

    std::optional<Store> store_;
    std::optional<RecordStore> queries_;
    std::vector<std::pair<std::string, std::string>> qrels_;
    std::optional<Pipeline> pipeline_;
    std::optional<DualEncoder> surrogate_;
    std::optional<CorpusRanker> surrogate_ranker_;
    std::optional<BigramLm> lm_;
    std::optional<std::vector<TargetPair>> targets_;
    std::vector<double> surrogate_loss_trace_;
    std::vector<std::size_t> query_order_;
    KMeansAudit kmeans_audit_;
};

// Full end-to-end run: data, training, every configured method and
// stratum, report. Returns the computed metrics.
MetricReport run_experiment(const std::string& config_path, const std::string& out_dir);

} // namespace area

#endif

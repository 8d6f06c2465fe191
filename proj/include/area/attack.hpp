#ifndef AREA_ATTACK_HPP
#define AREA_ATTACK_HPP

#include "area/corpus.hpp"
#include "area/encoder.hpp"
#include "area/lm.hpp"
#include "area/multiview.hpp"
#include "area/pipeline.hpp"
#include "area/surrogate.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace area {

enum class AttackMode { mcara, single, ind };
enum class RankCheck { surrogate, blackbox };

AttackMode attack_mode_from_string(const std::string& s);
std::string to_string(AttackMode mode);
RankCheck rank_check_from_string(const std::string& s);

struct AttackConfig {
    std::size_t k = 20;           // candidate-set size K
    double tau = 0.1;             // contrastive temperature
    std::size_t eta = 3;          // attack iterations (outer and PGD steps)
    std::size_t m = 50;           // substitutable words; also the budget epsilon
    double rho = 50.0;            // perplexity gate
    double pgd_step = -1.0;       // negative selects the default 0.1 * radius / eta
    double pgd_radius = 1.0;      // L2 ball per perturbed word
    std::size_t synonyms_per_word = 8;
    AttackMode mode = AttackMode::mcara;
    RankCheck rank_check = RankCheck::surrogate;
    std::size_t blackbox_budget = 20; // rank probes per document when rank_check=blackbox
    std::uint64_t seed = 1;
    ViewGenConfig viewgen;

    double effective_pgd_step() const;
    void validate() const;
};

struct Substitution {
    std::size_t position;
    std::string old_token;
    std::string new_token;
};

struct AttackOutcome {
    std::string query_id;
    std::string doc_id;
    std::size_t original_rank = 0; // under the target DR model; filled by the harness
    std::size_t final_rank = 0;    // under the target DR model; filled by the harness
    bool success = false;          // final_rank <= K
    std::vector<Substitution> substitutions;
    std::vector<double> loss_trace; // contrastive loss at the start of each iteration
    std::uint64_t queries_spent = 0;
    double seconds = 0.0;
    std::vector<std::string> final_tokens;
    // Ranks under the configured rank_check scorer, maintained by the attack.
    std::size_t check_original_rank = 0;
    std::size_t check_final_rank = 0;
    bool aborted = false; // non-finite gradients; document left unchanged
};

void append_outcome_log(const AttackOutcome& outcome, std::ostream& out, bool log_timing);

// Per-position table-row gradients of the contrastive loss and the
// importance-selected positions O.
struct TokenImportance {
    std::vector<Vec> per_position_gradient; // gradient w.r.t. the token's table row
    std::vector<double> importance;         // squared L2 norm per position
    std::vector<std::size_t> selected;      // top-m positions, descending importance
};

struct PerturbedEmbeddings {
    std::vector<std::size_t> positions; // aligned to TokenImportance::selected
    std::vector<Vec> embeddings;
};

// View-wise contrastive loss over a bundle; empty counter-viewer sets
// contribute zero with a warning.
double contrastive_loss(const ViewBundle& bundle, double tau);

struct ContrastiveGrads {
    double loss;
    std::vector<Vec> dviews; // dL/dw_i
};
ContrastiveGrads contrastive_loss_grads(const std::vector<Vec>& views,
                                        const std::vector<Vec>& viewers,
                                        const std::vector<Vec>& counter_viewers, double tau);

// Full chain rule from the contrastive loss through the (frozen) view
// generator and mean pooling to every token position; selects the top-m
// positions by squared gradient norm, ties broken by earlier position.
// `generator` must be null exactly when mode == single.
TokenImportance token_gradients(const std::vector<std::string>& doc_tokens,
                                const ViewBundle& bundle, const ViewGenerator* generator,
                                const DualEncoder& surrogate, double tau, std::size_t m,
                                AttackMode mode);

// Iterated projected gradient descent on the embeddings of the selected
// positions; each cumulative perturbation stays within the L2 ball.
PerturbedEmbeddings pgd_perturb(const std::vector<std::string>& doc_tokens,
                                const std::vector<std::size_t>& positions,
                                const ViewBundle& bundle, const ViewGenerator* generator,
                                const DualEncoder& surrogate, const AttackConfig& config);

// Ranked synonym candidates for one position: distinct candidate-set tokens
// minus the current token, ordered by embedding cosine to the current token,
// truncated and then filtered by the windowed perplexity gate.
std::vector<std::string> synonym_candidates(std::size_t position,
                                            const std::vector<std::string>& doc_tokens,
                                            const std::vector<std::string>& pool,
                                            const EmbeddingTable& table, const Vocabulary& vocab,
                                            const BigramLm& lm, double rho, std::size_t count);

// Running tally of clustering invariant checks performed inline.
struct KMeansAudit {
    std::size_t clusterings = 0;
    std::size_t fixed_point_failures = 0;
    std::size_t monotonic_failures = 0;
};

// Attacker-visible handles for one attack run.
struct AttackContext {
    const RecordStore* corpus = nullptr;
    const Vocabulary* vocab = nullptr;
    const DualEncoder* surrogate = nullptr;
    const CorpusRanker* surrogate_ranker = nullptr;
    const BlackBox* blackbox = nullptr;
    const BigramLm* lm = nullptr;
    KMeansAudit* kmeans_audit = nullptr; // optional sink
};

// The MCARA attack loop; also runs the single and ind variants per config.
AttackOutcome attack_mcara(const TextRecord& query, const TextRecord& target_doc,
                           const AttackContext& ctx, const AttackConfig& config);

// Term-spamming baseline: a seeded random start position, then up to m
// consecutive tokens replaced with samples from the query.
AttackOutcome baseline_ts(const TextRecord& query, const TextRecord& target_doc, std::size_t m,
                          std::uint64_t seed);

// TF-IDF baseline: query-overlapping doc tokens ranked by tf * log(N/df),
// each replaced by its nearest table-embedding neighbor.
AttackOutcome baseline_tfidf(const TextRecord& query, const TextRecord& target_doc,
                             const RecordStore& corpus, const EmbeddingTable& table,
                             const Vocabulary& vocab, std::size_t m);

// Distinct tokens of the candidate-set documents, sorted; the synonym pool.
std::vector<std::string> candidate_token_pool(const std::vector<const TextRecord*>& candidate_docs);

} // namespace area

#endif

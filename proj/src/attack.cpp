#include "area/attack.hpp"

#include "area/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <set>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace area {

AttackMode attack_mode_from_string(const std::string& s) {
    if (s == "mcara") return AttackMode::mcara;
    if (s == "mcara-single" || s == "single") return AttackMode::single;
    if (s == "mcara-ind" || s == "ind") return AttackMode::ind;
    throw std::invalid_argument("unknown attack mode: " + s);
}

std::string to_string(AttackMode mode) {
    switch (mode) {
        case AttackMode::mcara: return "mcara";
        case AttackMode::single: return "mcara-single";
        case AttackMode::ind: return "mcara-ind";
    }
    return "mcara";
}

RankCheck rank_check_from_string(const std::string& s) {
    if (s == "surrogate") return RankCheck::surrogate;
    if (s == "blackbox") return RankCheck::blackbox;
    throw std::invalid_argument("unknown rank_check: " + s);
}

double AttackConfig::effective_pgd_step() const {
    if (pgd_step >= 0.0) return pgd_step;
    return 0.1 * pgd_radius / static_cast<double>(std::max<std::size_t>(1, eta));
}

void AttackConfig::validate() const {
    if (tau <= 0.0) throw std::invalid_argument("attack config: tau must be > 0");
    if (eta < 1) throw std::invalid_argument("attack config: eta must be >= 1");
    if (m < 1) throw std::invalid_argument("attack config: m must be >= 1");
    if (rho <= 0.0) throw std::invalid_argument("attack config: rho must be > 0");
    if (k < 1) throw std::invalid_argument("attack config: K must be >= 1");
    if (pgd_radius <= 0.0) throw std::invalid_argument("attack config: pgd_radius must be > 0");
    if (synonyms_per_word < 1) throw std::invalid_argument("attack config: synonyms_per_word must be >= 1");
    if (viewgen.n < 1) throw std::invalid_argument("attack config: n must be >= 1");
    if (viewgen.n > k)
        throw std::invalid_argument("attack config: n viewers cannot exceed the candidate set K");
}

void append_outcome_log(const AttackOutcome& outcome, std::ostream& out, bool log_timing) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", log_timing ? outcome.seconds : 0.0);
    out << outcome.query_id << '\t' << outcome.doc_id << '\t' << outcome.original_rank << '\t'
        << outcome.final_rank << '\t' << (outcome.success ? 1 : 0) << '\t'
        << outcome.substitutions.size() << '\t' << outcome.queries_spent << '\t' << buf << '\n';
}

ContrastiveGrads contrastive_loss_grads(const std::vector<Vec>& views,
                                        const std::vector<Vec>& viewers,
                                        const std::vector<Vec>& counter_viewers, double tau) {
    if (views.size() != viewers.size())
        throw std::invalid_argument("contrastive loss: view/viewer count mismatch");
    ContrastiveGrads out;
    out.loss = 0.0;
    out.dviews.assign(views.size(), Vec(views.empty() ? 0 : views[0].size(), 0.0));
    if (counter_viewers.empty()) {
        std::cerr << "warning: empty counter-viewer set, contrastive loss is 0\n";
        return out;
    }
    for (std::size_t i = 0; i < views.size(); ++i) {
        std::vector<double> logits;
        logits.reserve(1 + counter_viewers.size());
        logits.push_back(dot(views[i], viewers[i]) / tau);
        for (const auto& u : counter_viewers) logits.push_back(dot(views[i], u) / tau);

        double max_l = *std::max_element(logits.begin(), logits.end());
        double z = 0.0;
        std::vector<double> e(logits.size());
        for (std::size_t j = 0; j < logits.size(); ++j) {
            e[j] = std::exp(logits[j] - max_l);
            z += e[j];
        }
        out.loss += -(logits[0] - max_l) + std::log(z);

        double p0 = e[0] / z;
        axpy((p0 - 1.0) / tau, viewers[i], out.dviews[i]);
        for (std::size_t j = 0; j < counter_viewers.size(); ++j)
            axpy((e[j + 1] / z) / tau, counter_viewers[j], out.dviews[i]);
    }
    return out;
}

double contrastive_loss(const ViewBundle& bundle, double tau) {
    return contrastive_loss_grads(bundle.views, bundle.viewers, bundle.counter_viewers, tau).loss;
}

namespace {

// dL/dw_d for the given view gradients, routed through the generator for
// the multi-view modes or summed directly when views are w_d copies.
Vec backprop_to_target(const std::vector<Vec>& dviews, const ViewBundle& bundle,
                       const ViewGenerator* generator, AttackMode mode) {
    std::size_t dim = bundle.target_embedding.size();
    Vec dwd(dim, 0.0);
    if (mode == AttackMode::single) {
        for (const auto& g : dviews) axpy(1.0, g, dwd);
        return dwd;
    }
    if (!generator) throw std::invalid_argument("multi-view mode requires a generator");
    for (std::size_t i = 0; i < dviews.size(); ++i) {
        Vec g = generator->backward_to_target(bundle.target_embedding, bundle.viewers[i], dviews[i]);
        axpy(1.0, g, dwd);
    }
    return dwd;
}

std::vector<std::size_t> order_by_importance(const std::vector<double>& importance) {
    std::vector<std::size_t> order(importance.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (importance[a] != importance[b]) return importance[a] > importance[b];
        return a < b;
    });
    return order;
}

} // namespace

TokenImportance token_gradients(const std::vector<std::string>& doc_tokens,
                                const ViewBundle& bundle, const ViewGenerator* generator,
                                const DualEncoder& surrogate, double tau, std::size_t m,
                                AttackMode mode) {
    if (doc_tokens.empty()) throw std::invalid_argument("cannot encode empty text");
    std::size_t len = doc_tokens.size();
    double inv_len = 1.0 / static_cast<double>(len);

    ContrastiveGrads cg =
        contrastive_loss_grads(bundle.views, bundle.viewers, bundle.counter_viewers, tau);
    Vec dwd = backprop_to_target(cg.dviews, bundle, mode == AttackMode::single ? nullptr : generator, mode);

    // Occurrences per table row; OOV tokens share the OOV row.
    const Vocabulary& vocab = surrogate.vocab();
    std::unordered_map<std::size_t, double> row_count;
    for (const auto& tok : doc_tokens) row_count[vocab.index_of(tok)] += 1.0;

    TokenImportance ti;
    ti.per_position_gradient.reserve(len);
    ti.importance.reserve(len);
    double dwd_sq = sq_nrm2(dwd);
    for (std::size_t z = 0; z < len; ++z) {
        double c = row_count[vocab.index_of(doc_tokens[z])];
        Vec g = dwd;
        scale(g, c * inv_len);
        ti.per_position_gradient.push_back(std::move(g));
        ti.importance.push_back(c * inv_len * c * inv_len * dwd_sq);
    }

    std::size_t want = std::min(m, len);
    if (mode == AttackMode::ind) {
        // Per-view importance rankings; O is the intersection of per-view
        // top-m sets, filled by best average per-view rank when small.
        std::vector<std::vector<std::size_t>> per_view_order;
        per_view_order.reserve(bundle.views.size());
        for (std::size_t i = 0; i < bundle.views.size(); ++i) {
            std::vector<Vec> one_dview(bundle.views.size(), Vec(bundle.target_embedding.size(), 0.0));
            one_dview[i] = cg.dviews[i];
            Vec dwd_i = backprop_to_target(one_dview, bundle,
                                           mode == AttackMode::single ? nullptr : generator,
                                           AttackMode::ind);
            double di_sq = sq_nrm2(dwd_i);
            std::vector<double> imp(len);
            for (std::size_t z = 0; z < len; ++z) {
                double c = row_count[vocab.index_of(doc_tokens[z])];
                imp[z] = c * inv_len * c * inv_len * di_sq;
            }
            per_view_order.push_back(order_by_importance(imp));
        }

        std::vector<std::size_t> in_topm_count(len, 0);
        std::vector<double> rank_sum(len, 0.0);
        for (const auto& order : per_view_order) {
            for (std::size_t r = 0; r < order.size(); ++r) {
                rank_sum[order[r]] += static_cast<double>(r);
                if (r < want) ++in_topm_count[order[r]];
            }
        }
        std::vector<std::size_t> intersection;
        for (std::size_t z = 0; z < len; ++z) {
            if (in_topm_count[z] == per_view_order.size()) intersection.push_back(z);
        }
        auto full_order = order_by_importance(ti.importance);
        std::vector<std::size_t> selected;
        if (intersection.size() * 2 >= want) {
            for (std::size_t z : full_order) {
                if (std::find(intersection.begin(), intersection.end(), z) != intersection.end())
                    selected.push_back(z);
                if (selected.size() == want) break;
            }
        } else {
            std::vector<std::size_t> by_avg(len);
            for (std::size_t z = 0; z < len; ++z) by_avg[z] = z;
            std::stable_sort(by_avg.begin(), by_avg.end(), [&](std::size_t a, std::size_t b) {
                if (rank_sum[a] != rank_sum[b]) return rank_sum[a] < rank_sum[b];
                return a < b;
            });
            std::unordered_set<std::size_t> chosen(intersection.begin(), intersection.end());
            selected = intersection;
            for (std::size_t z : by_avg) {
                if (selected.size() >= want) break;
                if (chosen.insert(z).second) selected.push_back(z);
            }
        }
        ti.selected = std::move(selected);
    } else {
        auto order = order_by_importance(ti.importance);
        order.resize(want);
        ti.selected = std::move(order);
    }
    return ti;
}

PerturbedEmbeddings pgd_perturb(const std::vector<std::string>& doc_tokens,
                                const std::vector<std::size_t>& positions,
                                const ViewBundle& bundle, const ViewGenerator* generator,
                                const DualEncoder& surrogate, const AttackConfig& config) {
    if (positions.empty()) throw std::invalid_argument("pgd: no positions selected");
    const Vocabulary& vocab = surrogate.vocab();
    const EmbeddingTable& table = surrogate.doc_table();
    std::size_t len = doc_tokens.size();
    double inv_len = 1.0 / static_cast<double>(len);
    double step = config.effective_pgd_step();
    double radius = config.pgd_radius;

    PerturbedEmbeddings out;
    out.positions = positions;
    out.embeddings.reserve(positions.size());
    for (std::size_t p : positions) out.embeddings.push_back(table.row(vocab.index_of(doc_tokens[p])));
    std::vector<Vec> original = out.embeddings;

    std::vector<bool> perturbed(len, false);
    for (std::size_t p : positions) perturbed[p] = true;

    // Mean embedding of the unperturbed positions, reused every step.
    Vec base(table.dim(), 0.0);
    for (std::size_t z = 0; z < len; ++z) {
        if (!perturbed[z]) axpy(inv_len, table.row(vocab.index_of(doc_tokens[z])), base);
    }

    for (std::size_t t = 0; t < config.eta; ++t) {
        Vec w_d = base;
        for (const auto& e : out.embeddings) axpy(inv_len, e, w_d);

        std::vector<Vec> views;
        if (config.mode == AttackMode::single) {
            views.assign(bundle.viewers.size(), w_d);
        } else {
            if (!generator) throw std::invalid_argument("multi-view mode requires a generator");
            views = generator->views(w_d, bundle.viewers);
        }
        ContrastiveGrads cg =
            contrastive_loss_grads(views, bundle.viewers, bundle.counter_viewers, config.tau);
        ViewBundle local;
        local.viewers = bundle.viewers;
        local.counter_viewers = bundle.counter_viewers;
        local.target_embedding = w_d;
        Vec dwd = backprop_to_target(cg.dviews, local, generator, config.mode);
        if (!all_finite(dwd)) throw std::runtime_error("pgd: non-finite gradient");

        // Descent step of length pgd_step along the (shared) position
        // gradient direction; a raw-gradient step would be hostage to the
        // loss scale.
        double gnorm = nrm2(dwd);
        if (gnorm < 1e-12) break;
        double coeff = -step / gnorm;

        for (std::size_t i = 0; i < out.embeddings.size(); ++i) {
            axpy(coeff, dwd, out.embeddings[i]);
            Vec delta = out.embeddings[i];
            axpy(-1.0, original[i], delta);
            double norm = nrm2(delta);
            if (norm > radius) {
                double shrink = radius / norm;
                for (std::size_t j = 0; j < delta.size(); ++j)
                    out.embeddings[i][j] = original[i][j] + delta[j] * shrink;
            }
        }
    }
    return out;
}

std::vector<std::string> candidate_token_pool(const std::vector<const TextRecord*>& candidate_docs) {
    std::set<std::string> pool;
    for (const TextRecord* doc : candidate_docs) pool.insert(doc->tokens.begin(), doc->tokens.end());
    return std::vector<std::string>(pool.begin(), pool.end());
}

std::vector<std::string> synonym_candidates(std::size_t position,
                                            const std::vector<std::string>& doc_tokens,
                                            const std::vector<std::string>& pool,
                                            const EmbeddingTable& table, const Vocabulary& vocab,
                                            const BigramLm& lm, double rho, std::size_t count) {
    if (position >= doc_tokens.size()) throw std::out_of_range("synonym candidates: bad position");
    const std::string& current = doc_tokens[position];
    const Vec& cur_emb = table.row(vocab.index_of(current));

    struct Scored {
        double sim;
        const std::string* token;
    };
    std::vector<Scored> scored;
    scored.reserve(pool.size());
    for (const auto& tok : pool) {
        if (tok == current) continue;
        std::size_t row = vocab.find(tok);
        if (row == Vocabulary::npos) continue;
        scored.push_back({cosine(table.row(row), cur_emb), &tok});
    }
    std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
        if (a.sim != b.sim) return a.sim > b.sim;
        return *a.token < *b.token;
    });
    if (scored.size() > count) scored.resize(count);

    std::size_t lo = position >= 5 ? position - 5 : 0;
    std::size_t hi = std::min(doc_tokens.size() - 1, position + 5);
    std::vector<std::string> window(doc_tokens.begin() + lo, doc_tokens.begin() + hi + 1);

    std::vector<std::string> out;
    out.reserve(scored.size());
    for (const auto& s : scored) {
        if (window.size() >= 2) {
            window[position - lo] = *s.token;
            if (lm.perplexity(window) > rho) continue;
        }
        out.push_back(*s.token);
    }
    return out;
}

namespace {

struct RankState {
    std::size_t rank;
    double score; // surrogate relevance; 0 under black-box probing
};

struct RankProbe {
    const AttackContext* ctx;
    const AttackConfig* cfg;
    const TextRecord* query;
    std::string doc_id;
    std::uint64_t probes = 0;
    std::uint64_t spent = 0;

    // Rank of the doc with the given content under the configured checker;
    // nullopt when the black-box probe budget is exhausted.
    std::optional<RankState> rank(const std::vector<std::string>& tokens) {
        TextRecord rec;
        rec.id = doc_id;
        rec.tokens = tokens;
        if (cfg->rank_check == RankCheck::surrogate) {
            auto [r, s] = ctx->surrogate_ranker->rank_and_score(*query, rec);
            return RankState{r, s};
        }
        if (probes >= cfg->blackbox_budget) return std::nullopt;
        ++probes;
        ++spent;
        // The attacker's own surrogate score rides along for free.
        double s = ctx->surrogate_ranker->rank_and_score(*query, rec).second;
        return RankState{ctx->blackbox->recall_rank(*query, rec), s};
    }

    // Whether a probed state is an improvement. Corpus-scale rankings are
    // coarse, so rank ties with a strict score gain also count: the score
    // is the surrogate's own, which the attacker can always consult.
    bool improved(const RankState& next, const RankState& cur) const {
        if (next.rank < cur.rank) return true;
        return next.rank == cur.rank && next.score > cur.score;
    }
};

} // namespace

AttackOutcome attack_mcara(const TextRecord& query, const TextRecord& target_doc,
                           const AttackContext& ctx, const AttackConfig& config) {
    config.validate();
    if (!ctx.corpus || !ctx.vocab || !ctx.surrogate || !ctx.surrogate_ranker || !ctx.blackbox || !ctx.lm)
        throw std::invalid_argument("attack context incomplete");
    if (target_doc.tokens.empty()) throw std::invalid_argument("cannot attack empty document");

    auto t_start = std::chrono::steady_clock::now();

    AttackOutcome out;
    out.query_id = query.id;
    out.doc_id = target_doc.id;
    out.final_tokens = target_doc.tokens;

    std::size_t len = target_doc.tokens.size();
    std::size_t m_eff = std::min(config.m, len);
    std::size_t epsilon = m_eff;

    RankedList ranked = ctx.blackbox->query(query);
    std::uint64_t spent = 1;

    std::vector<const TextRecord*> r_docs;
    r_docs.reserve(ranked.doc_ids.size());
    for (const auto& id : ranked.doc_ids) r_docs.push_back(&ctx.corpus->by_id(id));

    RankProbe probe{&ctx, &config, &query, target_doc.id, 0, 0};

    bool already_in = std::find(ranked.doc_ids.begin(), ranked.doc_ids.end(), target_doc.id) !=
                      ranked.doc_ids.end();
    auto initial = probe.rank(out.final_tokens);
    out.check_original_rank = initial.has_value() ? initial->rank : 0;
    out.check_final_rank = out.check_original_rank;
    if (already_in) {
        out.queries_spent = spent + probe.spent;
        out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        return out;
    }
    if (!initial.has_value()) {
        out.queries_spent = spent + probe.spent;
        out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        return out;
    }

    std::vector<Vec> r_embeddings;
    r_embeddings.reserve(r_docs.size());
    for (const TextRecord* d : r_docs)
        r_embeddings.push_back(ctx.surrogate_ranker->doc_embedding(ctx.corpus->index_of_id(d->id)));

    auto pool = candidate_token_pool(r_docs);
    const EmbeddingTable& table = ctx.surrogate->doc_table();

    std::uint64_t kmeans_seed = mix_seed(config.seed, "kmeans:" + query.id + ":" + target_doc.id);
    std::size_t n = config.viewgen.n;

    std::vector<std::string> cur_tokens = out.final_tokens;
    RankState cur = *initial;
    // Black-box probes are authoritative and cost budget, so success ends
    // the attack; surrogate checks are free proxies and the loop keeps
    // improving through all iterations.
    bool early_stop = config.rank_check == RankCheck::blackbox;
    bool done = early_stop && cur.rank <= config.k;

    try {
        for (std::size_t iter = 0; iter < config.eta && !done; ++iter) {
            Vec w_d = ctx.surrogate->encode_doc_tokens(cur_tokens);
            CounterViewers cv =
                counter_viewers(w_d, target_doc.id, ranked.doc_ids, *ctx.surrogate_ranker, n);

            ViewBundle bundle;
            bundle.n = n;
            bundle.target_embedding = w_d;
            KMeansResult km;
            bundle.viewers =
                derive_viewers(r_embeddings, n, kmeans_seed, config.viewgen.kmeans_iters, &km);
            if (ctx.kmeans_audit) {
                ++ctx.kmeans_audit->clusterings;
                if (!km.fixed_point) ++ctx.kmeans_audit->fixed_point_failures;
                for (std::size_t i = 1; i < km.inertia_trace.size(); ++i) {
                    double prev = km.inertia_trace[i - 1];
                    if (km.inertia_trace[i] > prev + 1e-9 * std::max(1.0, prev)) {
                        ++ctx.kmeans_audit->monotonic_failures;
                        break;
                    }
                }
            }
            bundle.counter_viewers = cv.embeddings;
            bundle.counter_ids = cv.doc_ids;

            ViewGenerator generator(ctx.surrogate->dim(),
                                    mix_seed(config.seed, "viewgen:" + query.id + ":" + target_doc.id),
                                    config.viewgen.relu ? ViewGenerator::Activation::relu
                                                        : ViewGenerator::Activation::identity);
            const ViewGenerator* gen_ptr = nullptr;
            if (config.mode == AttackMode::single) {
                bundle.views.assign(n, w_d);
            } else {
                ViewGenConfig vg = config.viewgen;
                vg.n = n;
                generator.train(w_d, bundle.viewers, vg);
                bundle.views = generator.views(w_d, bundle.viewers);
                gen_ptr = &generator;
            }

            out.loss_trace.push_back(contrastive_loss(bundle, config.tau));

            TokenImportance ti = token_gradients(cur_tokens, bundle, gen_ptr, *ctx.surrogate,
                                                 config.tau, m_eff, config.mode);
            PerturbedEmbeddings ep =
                pgd_perturb(cur_tokens, ti.selected, bundle, gen_ptr, *ctx.surrogate, config);

            for (std::size_t si = 0; si < ti.selected.size() && !done; ++si) {
                if (out.substitutions.size() >= epsilon) break;
                std::size_t pos = ti.selected[si];
                auto cands = synonym_candidates(pos, cur_tokens, pool, table, *ctx.vocab, *ctx.lm,
                                                config.rho, config.synonyms_per_word);
                if (cands.empty()) continue;

                const std::string* best = nullptr;
                double best_sim = 0.0;
                for (const auto& cand : cands) {
                    double sim = cosine(table.row(ctx.vocab->index_of(cand)), ep.embeddings[si]);
                    if (!best || sim > best_sim || (sim == best_sim && cand < *best)) {
                        best = &cand;
                        best_sim = sim;
                    }
                }

                std::string old_token = cur_tokens[pos];
                cur_tokens[pos] = *best;
                auto next = probe.rank(cur_tokens);
                if (!next.has_value()) {
                    cur_tokens[pos] = old_token;
                    done = true;
                    break;
                }
                if (probe.improved(*next, cur)) {
                    cur = *next;
                    out.substitutions.push_back({pos, old_token, *best});
                    if (early_stop && cur.rank <= config.k) done = true;
                } else {
                    cur_tokens[pos] = old_token;
                }
            }
        }
    } catch (const std::runtime_error& e) {
        std::cerr << "warning: attack aborted for " << query.id << "/" << target_doc.id << ": "
                  << e.what() << "\n";
        out.aborted = true;
    }

    out.final_tokens = cur_tokens;
    out.check_final_rank = cur.rank;
    out.queries_spent = spent + probe.spent;
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return out;
}

AttackOutcome baseline_ts(const TextRecord& query, const TextRecord& target_doc, std::size_t m,
                          std::uint64_t seed) {
    if (target_doc.tokens.empty()) throw std::invalid_argument("cannot attack empty document");
    if (query.tokens.empty()) throw std::invalid_argument("empty query");
    auto t_start = std::chrono::steady_clock::now();

    AttackOutcome out;
    out.query_id = query.id;
    out.doc_id = target_doc.id;
    out.final_tokens = target_doc.tokens;

    Rng rng(mix_seed(seed, "ts"));
    std::size_t len = out.final_tokens.size();
    std::size_t start = rng.below(len);
    std::size_t span = std::min(m, len - start);
    for (std::size_t i = 0; i < span; ++i) {
        const std::string& pick = query.tokens[rng.below(query.tokens.size())];
        std::size_t pos = start + i;
        if (out.final_tokens[pos] != pick) {
            out.substitutions.push_back({pos, out.final_tokens[pos], pick});
            out.final_tokens[pos] = pick;
        }
    }
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return out;
}

AttackOutcome baseline_tfidf(const TextRecord& query, const TextRecord& target_doc,
                             const RecordStore& corpus, const EmbeddingTable& table,
                             const Vocabulary& vocab, std::size_t m) {
    if (target_doc.tokens.empty()) throw std::invalid_argument("cannot attack empty document");
    auto t_start = std::chrono::steady_clock::now();

    AttackOutcome out;
    out.query_id = query.id;
    out.doc_id = target_doc.id;
    out.final_tokens = target_doc.tokens;

    std::unordered_set<std::string> q_tokens(query.tokens.begin(), query.tokens.end());
    std::map<std::string, std::size_t> tf;
    for (const auto& tok : target_doc.tokens) {
        if (q_tokens.count(tok)) ++tf[tok];
    }
    if (tf.empty()) {
        out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        return out;
    }

    std::unordered_map<std::string, std::size_t> df;
    for (const auto& rec : corpus.records()) {
        std::unordered_set<std::string> seen(rec.tokens.begin(), rec.tokens.end());
        for (const auto& [tok, cnt] : tf) {
            (void)cnt;
            if (seen.count(tok)) ++df[tok];
        }
    }

    double n_docs = static_cast<double>(corpus.size());
    std::vector<std::pair<double, std::string>> ranked;
    for (const auto& [tok, count] : tf) {
        double d = static_cast<double>(std::max<std::size_t>(1, df[tok]));
        ranked.emplace_back(static_cast<double>(count) * std::log(n_docs / d), tok);
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    if (ranked.size() > m) ranked.resize(m);

    for (const auto& [score, tok] : ranked) {
        (void)score;
        if (out.substitutions.size() >= m) break;
        std::size_t row = vocab.find(tok);
        if (row == Vocabulary::npos) continue;

        // Nearest in-vocabulary embedding, excluding the token itself.
        std::size_t best_row = Vocabulary::npos;
        double best_sim = 0.0;
        for (std::size_t r = 0; r < vocab.size(); ++r) {
            if (r == row) continue;
            double sim = cosine(table.row(r), table.row(row));
            if (best_row == Vocabulary::npos || sim > best_sim ||
                (sim == best_sim && vocab.token_at(r) < vocab.token_at(best_row))) {
                best_row = r;
                best_sim = sim;
            }
        }
        if (best_row == Vocabulary::npos) continue;
        const std::string& replacement = vocab.token_at(best_row);
        for (std::size_t pos = 0; pos < out.final_tokens.size(); ++pos) {
            if (out.substitutions.size() >= m) break;
            if (out.final_tokens[pos] == tok) {
                out.substitutions.push_back({pos, tok, replacement});
                out.final_tokens[pos] = replacement;
            }
        }
    }
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return out;
}

} // namespace area

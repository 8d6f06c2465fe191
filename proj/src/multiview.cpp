#include "area/multiview.hpp"

#include "area/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <stdexcept>
#include <unordered_set>

namespace area {

namespace {

std::size_t nearest_centroid(const Vec& point, const std::vector<Vec>& centroids) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.size(); ++c) {
        double d = sq_dist(point, centroids[c]);
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

double total_inertia(const std::vector<Vec>& points, const std::vector<Vec>& centroids,
                     const std::vector<std::size_t>& assignment) {
    double s = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) s += sq_dist(points[i], centroids[assignment[i]]);
    return s;
}

std::vector<Vec> kmeanspp_init(const std::vector<Vec>& points, std::size_t n, Rng& rng) {
    std::vector<Vec> centroids;
    centroids.reserve(n);
    centroids.push_back(points[rng.below(points.size())]);
    std::vector<double> d2(points.size());
    while (centroids.size() < n) {
        double total = 0.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : centroids) best = std::min(best, sq_dist(points[i], c));
            d2[i] = best;
            total += best;
        }
        std::size_t pick;
        if (total <= 0.0) {
            pick = rng.below(points.size());
        } else {
            double r = rng.unit() * total;
            double acc = 0.0;
            pick = points.size() - 1;
            for (std::size_t i = 0; i < points.size(); ++i) {
                acc += d2[i];
                if (r < acc) {
                    pick = i;
                    break;
                }
            }
        }
        centroids.push_back(points[pick]);
    }
    return centroids;
}

// Promote the point farthest from its centroid into each empty cluster.
void repair_empty_clusters(const std::vector<Vec>& points, std::vector<Vec>& centroids,
                           std::vector<std::size_t>& assignment) {
    std::vector<std::size_t> counts(centroids.size(), 0);
    for (std::size_t a : assignment) ++counts[a];
    for (std::size_t c = 0; c < centroids.size(); ++c) {
        if (counts[c] != 0) continue;
        std::size_t worst = points.size();
        double worst_d = -1.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (counts[assignment[i]] <= 1) continue; // do not empty another cluster
            double d = sq_dist(points[i], centroids[assignment[i]]);
            if (d > worst_d) {
                worst_d = d;
                worst = i;
            }
        }
        if (worst == points.size()) continue;
        --counts[assignment[worst]];
        centroids[c] = points[worst];
        assignment[worst] = c;
        counts[c] = 1;
    }
}

} // namespace

KMeansResult kmeans(const std::vector<Vec>& points, std::size_t n, std::uint64_t seed,
                    std::size_t max_iters, double rel_tol) {
    if (n < 1) throw std::invalid_argument("kmeans: n must be >= 1");
    if (points.size() < n) throw std::invalid_argument("fewer candidates than viewers");

    Rng rng(mix_seed(seed, "kmeans"));
    KMeansResult result;
    result.centroids = kmeanspp_init(points, n, rng);
    result.assignment.resize(points.size());
    for (std::size_t i = 0; i < points.size(); ++i)
        result.assignment[i] = nearest_centroid(points[i], result.centroids);
    repair_empty_clusters(points, result.centroids, result.assignment);
    result.inertia_trace.push_back(total_inertia(points, result.centroids, result.assignment));

    for (std::size_t iter = 0; iter < max_iters; ++iter) {
        // Update step.
        std::vector<Vec> sums(n, Vec(points[0].size(), 0.0));
        std::vector<std::size_t> counts(n, 0);
        for (std::size_t i = 0; i < points.size(); ++i) {
            axpy(1.0, points[i], sums[result.assignment[i]]);
            ++counts[result.assignment[i]];
        }
        for (std::size_t c = 0; c < n; ++c) {
            if (counts[c] > 0) {
                scale(sums[c], 1.0 / static_cast<double>(counts[c]));
                result.centroids[c] = std::move(sums[c]);
            }
        }

        // Assignment step.
        std::vector<std::size_t> next(points.size());
        for (std::size_t i = 0; i < points.size(); ++i)
            next[i] = nearest_centroid(points[i], result.centroids);
        repair_empty_clusters(points, result.centroids, next);

        bool unchanged = next == result.assignment;
        result.assignment = std::move(next);
        result.inertia_trace.push_back(total_inertia(points, result.centroids, result.assignment));
        result.iterations = iter + 1;
        if (unchanged) break;

        std::size_t t = result.inertia_trace.size();
        double prev = result.inertia_trace[t - 2];
        double cur = result.inertia_trace[t - 1];
        if (prev > 0.0 && (prev - cur) / prev < rel_tol) break;
    }

    result.fixed_point = true;
    for (std::size_t i = 0; i < points.size(); ++i) {
        double assigned = sq_dist(points[i], result.centroids[result.assignment[i]]);
        double best = std::numeric_limits<double>::infinity();
        for (const auto& c : result.centroids) best = std::min(best, sq_dist(points[i], c));
        if (assigned > best) {
            result.fixed_point = false;
            break;
        }
    }
    return result;
}

std::vector<Vec> derive_viewers(const std::vector<Vec>& candidate_embeddings, std::size_t n,
                                std::uint64_t seed, std::size_t max_iters,
                                KMeansResult* diagnostics) {
    KMeansResult result = kmeans(candidate_embeddings, n, seed, max_iters);
    if (diagnostics) *diagnostics = result;
    return result.centroids;
}

ViewGenerator::ViewGenerator(std::size_t dim, std::uint64_t seed, Activation act)
    : dim_(dim), act_(act) {
    if (dim < 1) throw std::invalid_argument("view generator: dim must be >= 1");
    // Warm start at the averaging map w = (w_d + v) / 2, the minimizer of
    // the square objective, plus seeded noise. Random init tends to land in
    // the all-dead ReLU fixed point once the cosine term kicks in.
    Rng rng(mix_seed(seed, "viewgen-init"));
    double a = 0.05 / std::sqrt(static_cast<double>(2 * dim));
    double beta = 0.5;
    weights_.assign(dim, Vec(2 * dim, 0.0));
    for (std::size_t r = 0; r < dim_; ++r) {
        for (std::size_t c = 0; c < 2 * dim_; ++c) weights_[r][c] = rng.uniform(-a, a);
        weights_[r][r] += 0.5;
        weights_[r][dim_ + r] += beta;
    }
    bias_.assign(dim, 0.0);
}

ViewGenerator ViewGenerator::identity_map(std::size_t dim) {
    ViewGenerator gen(dim, 0, Activation::identity);
    for (std::size_t r = 0; r < dim; ++r) {
        std::fill(gen.weights_[r].begin(), gen.weights_[r].end(), 0.0);
        gen.weights_[r][r] = 1.0;
    }
    std::fill(gen.bias_.begin(), gen.bias_.end(), 0.0);
    return gen;
}

Vec ViewGenerator::preactivation(const Vec& target_embedding, const Vec& viewer) const {
    if (target_embedding.size() != dim_ || viewer.size() != dim_)
        throw std::invalid_argument("view generator: dimension mismatch");
    Vec z = bias_;
    for (std::size_t r = 0; r < dim_; ++r) {
        double s = z[r];
        const Vec& row = weights_[r];
        for (std::size_t j = 0; j < dim_; ++j) s += row[j] * target_embedding[j];
        for (std::size_t j = 0; j < dim_; ++j) s += row[dim_ + j] * viewer[j];
        z[r] = s;
    }
    return z;
}

Vec ViewGenerator::forward(const Vec& target_embedding, const Vec& viewer) const {
    Vec z = preactivation(target_embedding, viewer);
    if (act_ == Activation::relu) {
        for (double& v : z) v = v > 0.0 ? v : 0.0;
    }
    return z;
}

std::vector<Vec> ViewGenerator::views(const Vec& target_embedding, const std::vector<Vec>& viewers) const {
    std::vector<Vec> out;
    out.reserve(viewers.size());
    for (const auto& v : viewers) out.push_back(forward(target_embedding, v));
    return out;
}

Vec ViewGenerator::backward_to_target(const Vec& target_embedding, const Vec& viewer,
                                      const Vec& dloss_dview) const {
    Vec z = preactivation(target_embedding, viewer);
    Vec out(dim_, 0.0);
    for (std::size_t r = 0; r < dim_; ++r) {
        double delta = dloss_dview[r];
        if (act_ == Activation::relu && z[r] <= 0.0) delta = 0.0;
        if (delta == 0.0) continue;
        for (std::size_t j = 0; j < dim_; ++j) out[j] += delta * weights_[r][j];
    }
    return out;
}

double view_square_loss(const std::vector<Vec>& views, const std::vector<Vec>& viewers,
                        const Vec& target_embedding) {
    double s = 0.0;
    for (std::size_t i = 0; i < views.size(); ++i)
        s += sq_dist(views[i], viewers[i]) + sq_dist(views[i], target_embedding);
    return s;
}

double view_cosine_loss(const std::vector<Vec>& views) {
    double s = 0.0;
    for (std::size_t i = 0; i < views.size(); ++i) {
        for (std::size_t j = 0; j < views.size(); ++j) {
            if (i == j) continue;
            s += cosine(views[i], views[j]);
        }
    }
    return -s;
}

namespace {

// d cos(a, b) / d a; zero when either norm vanishes.
Vec cosine_grad_first(const Vec& a, const Vec& b) {
    double na = nrm2(a), nb = nrm2(b);
    Vec g(a.size(), 0.0);
    if (na < 1e-12 || nb < 1e-12) return g;
    double ab = dot(a, b);
    for (std::size_t i = 0; i < a.size(); ++i)
        g[i] = b[i] / (na * nb) - ab * a[i] / (na * na * na * nb);
    return g;
}

} // namespace

ViewGenerator::LossGrads ViewGenerator::loss_gradients(const Vec& target_embedding,
                                                       const std::vector<Vec>& viewers,
                                                       const ViewGenConfig& config) const {
    std::vector<Vec> w = views(target_embedding, viewers);
    double cos_sign = config.distinct_views ? 1.0 : -1.0;

    double loss = view_square_loss(w, viewers, target_embedding);
    double cos_sum = -view_cosine_loss(w); // sum_{i != j} cos(w_i, w_j)
    loss += config.lambda * cos_sign * cos_sum;

    // dL/dw_i
    std::vector<Vec> dviews(w.size(), Vec(dim_, 0.0));
    for (std::size_t i = 0; i < w.size(); ++i) {
        for (std::size_t j = 0; j < dim_; ++j)
            dviews[i][j] = 2.0 * (w[i][j] - viewers[i][j]) + 2.0 * (w[i][j] - target_embedding[j]);
        for (std::size_t j = 0; j < w.size(); ++j) {
            if (i == j) continue;
            Vec g = cosine_grad_first(w[i], w[j]);
            axpy(config.lambda * cos_sign * 2.0, g, dviews[i]);
        }
    }

    LossGrads out;
    out.loss = loss;
    out.dweights.assign(dim_, Vec(2 * dim_, 0.0));
    out.dbias.assign(dim_, 0.0);
    for (std::size_t i = 0; i < w.size(); ++i) {
        Vec z = preactivation(target_embedding, viewers[i]);
        for (std::size_t r = 0; r < dim_; ++r) {
            double delta = dviews[i][r];
            if (act_ == Activation::relu && z[r] <= 0.0) delta = 0.0;
            if (delta == 0.0) continue;
            out.dbias[r] += delta;
            for (std::size_t j = 0; j < dim_; ++j) {
                out.dweights[r][j] += delta * target_embedding[j];
                out.dweights[r][dim_ + j] += delta * viewers[i][j];
            }
        }
    }
    return out;
}

std::vector<double> ViewGenerator::train(const Vec& target_embedding, const std::vector<Vec>& viewers,
                                         const ViewGenConfig& config) {
    std::vector<double> trace;
    trace.reserve(config.epochs);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        LossGrads lg = loss_gradients(target_embedding, viewers, config);
        if (!std::isfinite(lg.loss)) throw std::runtime_error("view generator diverged");
        trace.push_back(lg.loss);
        for (std::size_t r = 0; r < dim_; ++r) {
            axpy(-config.learning_rate, lg.dweights[r], weights_[r]);
            bias_[r] -= config.learning_rate * lg.dbias[r];
        }
    }
    return trace;
}

void dump_view_bundle(const ViewBundle& bundle, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    std::size_t dim = bundle.target_embedding.size();
    out << bundle.n << ' ' << dim << '\n';
    char buf[32];
    auto emit = [&](const char* tag, std::size_t i, const Vec& v) {
        out << tag << '_' << i << '\t';
        for (std::size_t j = 0; j < v.size(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.6f", v[j]);
            if (j) out << ',';
            out << buf;
        }
        out << '\n';
    };
    for (std::size_t i = 0; i < bundle.viewers.size(); ++i) emit("V", i, bundle.viewers[i]);
    for (std::size_t i = 0; i < bundle.views.size(); ++i) emit("W", i, bundle.views[i]);
    for (std::size_t i = 0; i < bundle.counter_viewers.size(); ++i) emit("U", i, bundle.counter_viewers[i]);
}

CounterViewers counter_viewers(const Vec& current_doc_embedding, const std::string& target_id,
                               const std::vector<std::string>& candidate_ids,
                               const CorpusRanker& ranker, std::size_t n) {
    const RecordStore& corpus = ranker.corpus();
    std::vector<bool> excluded(corpus.size(), false);
    for (const auto& id : candidate_ids) {
        if (corpus.has_id(id)) excluded[corpus.index_of_id(id)] = true;
    }
    if (corpus.has_id(target_id)) excluded[corpus.index_of_id(target_id)] = true;

    auto picks = ranker.topk(current_doc_embedding, n, &excluded);
    if (picks.size() < n)
        std::cerr << "warning: only " << picks.size() << " eligible counter-viewer docs (< " << n << ")\n";

    CounterViewers out;
    out.doc_ids.reserve(picks.size());
    out.embeddings.reserve(picks.size());
    for (std::size_t i : picks) {
        out.doc_ids.push_back(corpus.at(i).id);
        out.embeddings.push_back(ranker.doc_embedding(i));
    }
    return out;
}

} // namespace area

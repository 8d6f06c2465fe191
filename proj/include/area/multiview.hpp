#ifndef AREA_MULTIVIEW_HPP
#define AREA_MULTIVIEW_HPP

#include "area/corpus.hpp"
#include "area/surrogate.hpp"
#include "area/vecmath.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace area {

struct KMeansResult {
    std::vector<Vec> centroids;
    std::vector<std::size_t> assignment;
    std::vector<double> inertia_trace; // recorded after every assignment pass
    bool fixed_point = false;          // each point assigned to its nearest centroid
    std::size_t iterations = 0;
};

// Lloyd's algorithm with k-means++ seeding. Empty clusters are repaired by
// promoting the point currently farthest from its centroid. Deterministic
// under seed.
KMeansResult kmeans(const std::vector<Vec>& points, std::size_t n, std::uint64_t seed,
                    std::size_t max_iters = 50, double rel_tol = 1e-6);

// Viewer vectors: the n centroids of the candidate-set embeddings.
// Throws when fewer candidates than viewers.
std::vector<Vec> derive_viewers(const std::vector<Vec>& candidate_embeddings, std::size_t n,
                                std::uint64_t seed, std::size_t max_iters = 50,
                                KMeansResult* diagnostics = nullptr);

struct ViewGenConfig {
    double lambda = 10.0;
    std::size_t n = 5;
    std::size_t epochs = 1;
    double learning_rate = 1e-6;
    std::size_t kmeans_iters = 50;
    std::uint64_t seed = 1;
    // The combined objective is L_squ + lambda * L_cos with
    // L_cos = -sum_{i != j} cos(w_i, w_j); setting distinct_views flips the
    // L_cos sign so that minimizing pushes views apart.
    bool distinct_views = false;
    // At low embedding dimensionality the ReLU backward mask wrecks the
    // gradient direction through the generator; linear is the default.
    bool relu = false;
};

// One fully-connected layer with ReLU (or identity) activation mapping the
// concatenation of the target-document embedding and a viewer to a view.
class ViewGenerator {
public:
    enum class Activation { relu, identity };

    ViewGenerator(std::size_t dim, std::uint64_t seed, Activation act = Activation::relu);

    // Generator computing w_i = w_d exactly: weights [I | 0], zero bias,
    // identity activation.
    static ViewGenerator identity_map(std::size_t dim);

    std::size_t dim() const { return dim_; }
    Activation activation() const { return act_; }

    Vec forward(const Vec& target_embedding, const Vec& viewer) const;
    std::vector<Vec> views(const Vec& target_embedding, const std::vector<Vec>& viewers) const;

    // Chain rule from a view gradient back to the target embedding.
    Vec backward_to_target(const Vec& target_embedding, const Vec& viewer,
                           const Vec& dloss_dview) const;

    // Trains on L_squ + lambda * L_cos by full-batch SGD; returns the
    // per-epoch loss trace. Aborts on non-finite loss.
    std::vector<double> train(const Vec& target_embedding, const std::vector<Vec>& viewers,
                              const ViewGenConfig& config);

    // Parameter access (weights are row-major dim x 2*dim).
    std::vector<Vec>& weights() { return weights_; }
    const std::vector<Vec>& weights() const { return weights_; }
    Vec& bias() { return bias_; }
    const Vec& bias() const { return bias_; }

    // Loss and parameter gradients at the current parameters; used by the
    // trainer and by gradient checks.
    struct LossGrads {
        double loss;
        std::vector<Vec> dweights;
        Vec dbias;
    };
    LossGrads loss_gradients(const Vec& target_embedding, const std::vector<Vec>& viewers,
                             const ViewGenConfig& config) const;

private:
    Vec preactivation(const Vec& target_embedding, const Vec& viewer) const;

    std::size_t dim_ = 0;
    Activation act_ = Activation::relu;
    std::vector<Vec> weights_; // dim rows, 2*dim columns
    Vec bias_;
};

// Generator-objective pieces: L_squ = sum_i(|w_i - v_i|^2 + |w_i - w_d|^2),
// L_cos = -sum_{i != j} cos(w_i, w_j). Both differentiable w.r.t. views.
double view_square_loss(const std::vector<Vec>& views, const std::vector<Vec>& viewers,
                        const Vec& target_embedding);
double view_cosine_loss(const std::vector<Vec>& views);

struct ViewBundle {
    std::vector<Vec> viewers;           // V
    std::vector<Vec> views;             // W
    std::vector<Vec> counter_viewers;   // U
    std::vector<std::string> counter_ids;
    Vec target_embedding;               // w_d
    std::size_t n = 0;
};

void dump_view_bundle(const ViewBundle& bundle, const std::string& path);

struct CounterViewers {
    std::vector<std::string> doc_ids;
    std::vector<Vec> embeddings;
};

// Embeddings of the n docs nearest (dot product under the ranker's encoder)
// to the current document embedding, excluding candidate-set members and
// the target itself. Returns fewer with a warning when not enough eligible.
CounterViewers counter_viewers(const Vec& current_doc_embedding, const std::string& target_id,
                               const std::vector<std::string>& candidate_ids,
                               const CorpusRanker& ranker, std::size_t n);

} // namespace area

#endif

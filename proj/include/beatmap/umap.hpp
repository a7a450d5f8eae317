#pragma once

// UMAP: fuzzy simplicial set over the exact k-NN graph, (a, b) output kernel,
// and the edge-sampling SGD layout with negative sampling.

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "beatmap/embedding.hpp"
#include "beatmap/matrix.hpp"

namespace beatmap::manifold {

enum class UmapInit { pca, spectral, random };

struct UmapParams {
    /// Neighborhood size counting the point itself.
    std::size_t n_neighbors = 15;
    double min_dist = 0.1;
    double spread = 1.0;
    int n_epochs = 500;
    int negative_sample_rate = 5;
    double repulsion_strength = 1.0;
    std::uint64_t seed = 0;
    UmapInit init = UmapInit::pca;
};

struct SmoothKnn {
    double rho = 0.0;
    double sigma = 0.0;
    double membership_sum = 0.0;
    int iterations = 0;
    bool converged = false;
    /// Target unreachable because the neighbors at rho already exceed it.
    bool saturated = false;
    /// Every distance is zero.
    bool degenerate = false;
};

inline constexpr double kSmoothKnnTolerance = 1e-5;
inline constexpr int kSmoothKnnMaxIter = 64;
inline constexpr double kMinimalSigma = 1e-3;

/// rho = smallest positive distance; sigma by bisection so that
/// sum_i exp(-max(0, d_i - rho) / sigma) equals `target`.
SmoothKnn smooth_knn_calibrate(std::span<const double> knn_dists, double target);
/// Target log2(k) for k = knn_dists.size().
SmoothKnn smooth_knn_calibrate(std::span<const double> knn_dists);

double membership(double distance, double rho, double sigma) noexcept;

struct WeightedEdge {
    std::size_t u = 0;
    std::size_t v = 0;
    double w = 0.0;

    bool operator==(const WeightedEdge&) const = default;
};

/// Sparse symmetric graph stored once per unordered pair (u < v), sorted.
struct FuzzyGraph {
    std::size_t n = 0;
    std::vector<WeightedEdge> edges;
    std::size_t saturated_rows = 0;
    std::size_t degenerate_rows = 0;
    std::size_t unconverged_rows = 0;

    Matrix dense() const;
};

/// Directed memberships w_{i->j} over the n_neighbors - 1 nearest other
/// points, before symmetrization. Row i holds (j, w) pairs, nearest first.
std::vector<std::vector<std::pair<std::size_t, double>>> directed_memberships(const Matrix& x, std::size_t n_neighbors,
                                                                             FuzzyGraph* flags = nullptr);

/// Probabilistic union a + b - a*b of the directed memberships.
FuzzyGraph fuzzy_graph(const Matrix& x, const UmapParams& params);

struct CurveParams {
    double a = 0.0;
    double b = 0.0;
    double rms_residual = 0.0;
    int iterations = 0;
};

/// Levenberg-Marquardt fit of 1 / (1 + a x^(2b)) to the piecewise target
/// (1 up to min_dist, exp(-(x - min_dist) / spread) beyond) on 300 points
/// over [0, 3 spread].
CurveParams fit_ab(double min_dist, double spread);

/// SGD layout. `init` is N x 2 and is used as the starting point.
Embedding umap_optimize(const FuzzyGraph& graph, const Matrix& init, const UmapParams& params);

/// Canonical ordering, graph, PCA init scaled to max-abs 10, layout.
Embedding umap_embed(const Matrix& x, const UmapParams& params);

std::string_view to_string(UmapInit init) noexcept;

} // namespace beatmap::manifold

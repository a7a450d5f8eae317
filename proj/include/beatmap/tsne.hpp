#pragma once

// Exact t-SNE: Gaussian input affinities calibrated per row to a target
// perplexity, Student-t (one degree of freedom) output kernel, KL objective.

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "beatmap/embedding.hpp"
#include "beatmap/matrix.hpp"

namespace beatmap::manifold {

enum class TsneInit { pca, random };

struct TsneParams {
    double perplexity = 30.0;
    double learning_rate = 200.0;
    int n_iter = 1000;
    double early_exaggeration = 12.0;
    int exaggeration_iters = 250;
    double initial_momentum = 0.5;
    double final_momentum = 0.8;
    int log_every = 50;
    std::uint64_t seed = 0;
    TsneInit init = TsneInit::pca;
};

struct PerplexityResult {
    double sigma = 0.0;
    double perplexity = 0.0;
    int iterations = 0;
    bool converged = false;
};

inline constexpr double kPerplexityTolerance = 1e-5;
inline constexpr int kPerplexityMaxIter = 200;

/// Perplexity 2^H of the row p_j ∝ exp(-d_j / (2 sigma^2)).
double row_perplexity(std::span<const double> sq_dists, double sigma);

/// Bisection on sigma. When the target cannot be reached the closest
/// sigma found is returned with converged = false.
PerplexityResult perplexity_search(std::span<const double> sq_dists, double target_perplexity);

/// Symmetric joint affinities stored as the strict upper triangle, row by
/// row: entry (i, j), i < j, lives at i*n - i*(i+1)/2 + (j - i - 1).
/// Each stored value is p_ij = (p_{j|i} + p_{i|j}) / 2n, so the full matrix
/// (both triangles) sums to 1.
struct JointProbabilities {
    std::size_t n = 0;
    std::vector<double> upper;
    std::size_t unconverged_rows = 0;

    std::size_t slot(std::size_t i, std::size_t j) const noexcept {
        if (i > j) {
            std::swap(i, j);
        }
        return i * n - i * (i + 1) / 2 + (j - i - 1);
    }
    double operator()(std::size_t i, std::size_t j) const noexcept { return i == j ? 0.0 : upper[slot(i, j)]; }
};

JointProbabilities joint_probabilities(const Matrix& x, double perplexity);

/// KL(P || Q) for an N x 2 layout.
double tsne_kl(const JointProbabilities& p, const Matrix& y);

/// Gradient with respect to y (N x 2) of -exaggeration * sum p log w + log Z,
/// which is the KL gradient with only the attractive term scaled.
Matrix tsne_gradient(const JointProbabilities& p, const Matrix& y, double exaggeration = 1.0);

Embedding tsne_embed(const Matrix& x, const TsneParams& params);

std::string_view to_string(TsneInit init) noexcept;

} // namespace beatmap::manifold

#pragma once

// Brute-force Euclidean neighbors and the canonical row ordering shared by
// the nonlinear reducers.

#include <cstdint>
#include <string>
#include <vector>

#include "beatmap/matrix.hpp"

namespace beatmap::manifold {

/// k neighbors per row, nearest first. Equal distances are ordered by index.
struct KnnGraph {
    std::size_t n = 0;
    std::size_t k = 0;
    std::vector<std::size_t> indices;  // n * k
    std::vector<double> distances;     // n * k, Euclidean

    std::size_t index(std::size_t i, std::size_t j) const noexcept { return indices[i * k + j]; }
    double distance(std::size_t i, std::size_t j) const noexcept { return distances[i * k + j]; }
};

/// With include_self, row i lists i itself first (distance 0) followed by
/// its k - 1 nearest other rows.
KnnGraph knn_brute_force(const Matrix& x, std::size_t k, bool include_self);

/// Rows of x sorted lexicographically, with exact duplicates separated by
/// seeded jitter of magnitude 1e-9. `order[r]` is the input row placed at
/// position r. Throws "duplicate point row" when every row is identical.
struct CanonicalInput {
    Matrix x;
    std::vector<std::size_t> order;
    std::size_t jittered = 0;
};

CanonicalInput canonicalize(const Matrix& x, std::uint64_t seed);

/// Inverse of the canonical permutation: row r of `y` goes to order[r].
Matrix restore_order(const Matrix& y, const std::vector<std::size_t>& order);

} // namespace beatmap::manifold

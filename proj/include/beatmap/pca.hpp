#pragma once

#include <vector>

#include "beatmap/matrix.hpp"

namespace beatmap::manifold {

struct PcaModel {
    std::vector<double> mean;
    Matrix components; // d x n, orthonormal rows
    std::vector<double> eigenvalues; // descending, clamped at zero
};

/// Top-d eigenvectors of the sample covariance (divisor N - 1). Each
/// component is signed so that its largest-magnitude entry is positive.
PcaModel pca_fit(const Matrix& x, std::size_t d);

/// (x - mean) * components^T.
Matrix pca_transform(const PcaModel& model, const Matrix& x);

} // namespace beatmap::manifold

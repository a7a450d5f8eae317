#include "beatmap/neighbors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "beatmap/rng.hpp"

namespace beatmap::manifold {

KnnGraph knn_brute_force(const Matrix& x, std::size_t k, bool include_self) {
    const std::size_t n = x.rows();
    const std::size_t others = include_self ? k - 1 : k;
    if (k == 0 || others >= n) {
        throw std::invalid_argument("knn: k=" + std::to_string(k) + " too large for " + std::to_string(n) + " rows");
    }
    KnnGraph g;
    g.n = n;
    g.k = k;
    g.indices.resize(n * k);
    g.distances.resize(n * k);
    std::vector<std::pair<double, std::size_t>> row;
    row.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        row.clear();
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) {
                row.emplace_back(squared_distance(x.row(i), x.row(j)), j);
            }
        }
        std::partial_sort(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(others), row.end());
        std::size_t slot = i * k;
        if (include_self) {
            g.indices[slot] = i;
            g.distances[slot] = 0.0;
            ++slot;
        }
        for (std::size_t j = 0; j < others; ++j, ++slot) {
            g.indices[slot] = row[j].second;
            g.distances[slot] = std::sqrt(row[j].first);
        }
    }
    return g;
}

CanonicalInput canonicalize(const Matrix& x, std::uint64_t seed) {
    const std::size_t n = x.rows();
    CanonicalInput out;
    out.order.resize(n);
    std::iota(out.order.begin(), out.order.end(), std::size_t{0});
    std::stable_sort(out.order.begin(), out.order.end(), [&](std::size_t a, std::size_t b) {
        const auto ra = x.row(a);
        const auto rb = x.row(b);
        return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
    });
    out.x = x.select_rows(out.order);
    if (n < 2) {
        return out;
    }

    std::vector<bool> duplicate(n, false);
    for (std::size_t r = 1; r < n; ++r) {
        const auto a = x.row(out.order[r - 1]);
        const auto b = x.row(out.order[r]);
        duplicate[r] = std::equal(a.begin(), a.end(), b.begin());
    }
    if (std::all_of(duplicate.begin() + 1, duplicate.end(), [](bool d) { return d; })) {
        throw std::invalid_argument("duplicate point row: all input rows are identical");
    }
    Rng rng(seed ^ 0x6a09e667f3bcc909ULL);
    for (std::size_t r = 1; r < n; ++r) {
        if (!duplicate[r]) {
            continue;
        }
        for (double& v : out.x.row(r)) {
            v += 1e-9 * rng.normal();
        }
        ++out.jittered;
    }
    return out;
}

Matrix restore_order(const Matrix& y, const std::vector<std::size_t>& order) {
    Matrix out(y.rows(), y.cols());
    for (std::size_t r = 0; r < order.size(); ++r) {
        std::copy(y.row(r).begin(), y.row(r).end(), out.row(order[r]).begin());
    }
    return out;
}

} // namespace beatmap::manifold

#include "beatmap/umap.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "beatmap/csv.hpp"
#include "beatmap/neighbors.hpp"
#include "beatmap/pca.hpp"
#include "beatmap/rng.hpp"

namespace beatmap::manifold {

namespace {

double membership_sum(std::span<const double> dists, double rho, double sigma) {
    double sum = 0.0;
    for (double d : dists) {
        sum += membership(d, rho, sigma);
    }
    return sum;
}

double clip4(double v) { return std::clamp(v, -4.0, 4.0); }

void check_params(std::size_t n, const UmapParams& p) {
    if (p.n_neighbors < 2 || p.n_neighbors > n) {
        throw std::invalid_argument("UMAP: n_neighbors=" + std::to_string(p.n_neighbors) + " out of range [2, " +
                                    std::to_string(n) + "]");
    }
    if (!(p.min_dist > 0.0) || !(p.min_dist < p.spread)) {
        throw std::invalid_argument("UMAP: need 0 < min_dist < spread");
    }
    if (p.n_epochs < 1 || p.negative_sample_rate < 0) {
        throw std::invalid_argument("UMAP: n_epochs must be positive and negative_sample_rate non-negative");
    }
}

} // namespace

std::string_view to_string(UmapInit init) noexcept {
    switch (init) {
    case UmapInit::pca: return "pca";
    case UmapInit::spectral: return "spectral";
    case UmapInit::random: break;
    }
    return "random";
}

double membership(double distance, double rho, double sigma) noexcept {
    const double excess = distance - rho;
    return excess <= 0.0 ? 1.0 : std::exp(-excess / sigma);
}

SmoothKnn smooth_knn_calibrate(std::span<const double> knn_dists) {
    return smooth_knn_calibrate(knn_dists, std::log2(static_cast<double>(knn_dists.size())));
}

SmoothKnn smooth_knn_calibrate(std::span<const double> dists, double target) {
    if (dists.empty()) {
        throw std::invalid_argument("smooth_knn_calibrate: no distances");
    }
    SmoothKnn out;
    const auto positive = std::find_if(dists.begin(), dists.end(), [](double d) { return d > 0.0; });
    if (positive == dists.end()) {
        out.degenerate = true;
        out.sigma = kMinimalSigma;
        out.membership_sum = static_cast<double>(dists.size());
        return out;
    }
    out.rho = *positive;
    const double mean = std::accumulate(dists.begin(), dists.end(), 0.0) / static_cast<double>(dists.size());

    const auto at_rho = std::count_if(dists.begin(), dists.end(), [&](double d) { return d <= out.rho; });
    if (static_cast<double>(at_rho) >= target - kSmoothKnnTolerance) {
        out.saturated = true;
        out.sigma = kMinimalSigma * mean;
        out.membership_sum = membership_sum(dists, out.rho, out.sigma);
        out.converged = std::abs(out.membership_sum - target) <= kSmoothKnnTolerance;
        return out;
    }

    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    double sigma = 1.0;
    for (int it = 1; it <= kSmoothKnnMaxIter; ++it) {
        const double sum = membership_sum(dists, out.rho, sigma);
        out.iterations = it;
        out.sigma = sigma;
        out.membership_sum = sum;
        if (std::abs(sum - target) <= kSmoothKnnTolerance) {
            out.converged = true;
            break;
        }
        if (sum > target) {
            hi = sigma;
            sigma = 0.5 * (lo + hi);
        } else {
            lo = sigma;
            sigma = std::isinf(hi) ? 2.0 * sigma : 0.5 * (lo + hi);
        }
    }
    return out;
}

Matrix FuzzyGraph::dense() const {
    Matrix m(n, n);
    for (const auto& e : edges) {
        m(e.u, e.v) = e.w;
        m(e.v, e.u) = e.w;
    }
    return m;
}

std::vector<std::vector<std::pair<std::size_t, double>>> directed_memberships(const Matrix& x, std::size_t n_neighbors,
                                                                             FuzzyGraph* flags) {
    const auto knn = knn_brute_force(x, n_neighbors, true);
    const double target = std::log2(static_cast<double>(n_neighbors));
    std::vector<std::vector<std::pair<std::size_t, double>>> rows(x.rows());
    std::vector<double> dists(n_neighbors - 1);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t j = 1; j < n_neighbors; ++j) {
            dists[j - 1] = knn.distance(i, j);
        }
        const auto cal = smooth_knn_calibrate(dists, target);
        if (flags != nullptr) {
            flags->saturated_rows += cal.saturated ? 1 : 0;
            flags->degenerate_rows += cal.degenerate ? 1 : 0;
            flags->unconverged_rows += (!cal.converged && !cal.saturated && !cal.degenerate) ? 1 : 0;
        }
        for (std::size_t j = 1; j < n_neighbors; ++j) {
            const double w = membership(dists[j - 1], cal.rho, cal.sigma);
            if (w > 0.0) {
                rows[i].emplace_back(knn.index(i, j), w);
            }
        }
    }
    return rows;
}

FuzzyGraph fuzzy_graph(const Matrix& x, const UmapParams& params) {
    check_params(x.rows(), params);
    FuzzyGraph graph;
    graph.n = x.rows();
    const auto rows = directed_memberships(x, params.n_neighbors, &graph);

    struct Directed {
        std::size_t u, v;
        double w;
    };
    std::vector<Directed> all;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (const auto& [j, w] : rows[i]) {
            all.push_back({std::min(i, j), std::max(i, j), w});
        }
    }
    std::sort(all.begin(), all.end(), [](const Directed& a, const Directed& b) {
        return a.u != b.u ? a.u < b.u : a.v != b.v ? a.v < b.v : a.w < b.w;
    });
    for (std::size_t k = 0; k < all.size();) {
        double w = all[k].w;
        if (k + 1 < all.size() && all[k + 1].u == all[k].u && all[k + 1].v == all[k].v) {
            const double other = all[k + 1].w;
            w = w + other - w * other;
            graph.edges.push_back({all[k].u, all[k].v, w});
            k += 2;
        } else {
            graph.edges.push_back({all[k].u, all[k].v, w});
            k += 1;
        }
    }
    return graph;
}

CurveParams fit_ab(double min_dist, double spread) {
    if (!(min_dist > 0.0) || !(min_dist < spread)) {
        throw std::invalid_argument("fit_ab: need 0 < min_dist < spread");
    }
    constexpr int kPoints = 300;
    constexpr int kMaxIter = 200;
    std::vector<double> xs(kPoints);
    std::vector<double> ys(kPoints);
    for (int k = 0; k < kPoints; ++k) {
        xs[k] = 3.0 * spread * k / (kPoints - 1);
        ys[k] = xs[k] <= min_dist ? 1.0 : std::exp(-(xs[k] - min_dist) / spread);
    }
    auto cost_of = [&](double a, double b) {
        double c = 0.0;
        for (int k = 0; k < kPoints; ++k) {
            const double f = xs[k] > 0.0 ? 1.0 / (1.0 + a * std::pow(xs[k], 2.0 * b)) : 1.0;
            c += (f - ys[k]) * (f - ys[k]);
        }
        return c;
    };

    double a = 1.0;
    double b = 1.0;
    double lambda = 1e-3;
    double cost = cost_of(a, b);
    for (int it = 1; it <= kMaxIter; ++it) {
        Eigen::Matrix2d jtj = Eigen::Matrix2d::Zero();
        Eigen::Vector2d jtr = Eigen::Vector2d::Zero();
        for (int k = 0; k < kPoints; ++k) {
            if (xs[k] <= 0.0) {
                continue;
            }
            const double p = std::pow(xs[k], 2.0 * b);
            const double denom = 1.0 + a * p;
            const double f = 1.0 / denom;
            const Eigen::Vector2d g(-p / (denom * denom), -a * p * 2.0 * std::log(xs[k]) / (denom * denom));
            jtj += g * g.transpose();
            jtr += g * (f - ys[k]);
        }
        bool stepped = false;
        while (lambda < 1e16) {
            Eigen::Matrix2d damped = jtj;
            damped.diagonal() *= 1.0 + lambda;
            const Eigen::Vector2d delta = damped.ldlt().solve(-jtr);
            const double na = a + delta(0);
            const double nb = b + delta(1);
            const double nc = (na > 0.0 && nb > 0.0) ? cost_of(na, nb) : std::numeric_limits<double>::infinity();
            if (nc < cost) {
                const bool tiny = std::abs(delta(0)) <= 1e-12 * (1.0 + a) && std::abs(delta(1)) <= 1e-12 * (1.0 + b);
                const bool flat = cost - nc <= 1e-15 * cost;
                a = na;
                b = nb;
                cost = nc;
                lambda = std::max(lambda / 10.0, 1e-12);
                stepped = true;
                if (tiny || flat) {
                    return {a, b, std::sqrt(cost / kPoints), it};
                }
                break;
            }
            lambda *= 10.0;
        }
        if (!stepped) {
            // No descent direction left at machine precision: a minimum.
            return {a, b, std::sqrt(cost / kPoints), it};
        }
    }
    throw std::runtime_error("fit_ab: no convergence after " + std::to_string(kMaxIter) +
                             " iterations, RMS residual " + std::to_string(std::sqrt(cost / kPoints)));
}

Embedding umap_optimize(const FuzzyGraph& graph, const Matrix& init, const UmapParams& params) {
    if (init.rows() != graph.n || init.cols() != 2) {
        throw std::invalid_argument("umap_optimize: init must be N x 2");
    }
    const auto curve = fit_ab(params.min_dist, params.spread);
    const double a = curve.a;
    const double b = curve.b;
    const double gamma = params.repulsion_strength;
    const double n_epochs = static_cast<double>(params.n_epochs);

    double max_w = 0.0;
    for (const auto& e : graph.edges) {
        max_w = std::max(max_w, e.w);
    }
    struct Edge {
        std::size_t head, tail;
        double epochs_per_sample;
    };
    std::vector<Edge> edges;
    for (const auto& e : graph.edges) {
        if (e.w < max_w / n_epochs) {
            continue;
        }
        const double eps = max_w / e.w;
        edges.push_back({e.u, e.v, eps});
        edges.push_back({e.v, e.u, eps});
    }
    std::sort(edges.begin(), edges.end(),
              [](const Edge& x, const Edge& y) { return x.head != y.head ? x.head < y.head : x.tail < y.tail; });

    const double neg_rate = static_cast<double>(params.negative_sample_rate);
    std::vector<double> next_sample(edges.size());
    std::vector<double> neg_per_sample(edges.size());
    std::vector<double> next_negative(edges.size());
    for (std::size_t i = 0; i < edges.size(); ++i) {
        next_sample[i] = edges[i].epochs_per_sample;
        neg_per_sample[i] = neg_rate > 0.0 ? edges[i].epochs_per_sample / neg_rate : 0.0;
        next_negative[i] = neg_per_sample[i];
    }

    Embedding result;
    result.y = init;
    auto& y = result.y;
    Rng rng(params.seed);
    const std::size_t n = graph.n;
    for (int epoch = 0; epoch < params.n_epochs; ++epoch) {
        const double alpha = 1.0 - epoch / n_epochs;
        for (std::size_t i = 0; i < edges.size(); ++i) {
            if (next_sample[i] > epoch) {
                continue;
            }
            const std::size_t j = edges[i].head;
            const std::size_t k = edges[i].tail;
            double d0 = y(j, 0) - y(k, 0);
            double d1 = y(j, 1) - y(k, 1);
            double dist_sq = d0 * d0 + d1 * d1;
            double coeff = 0.0;
            if (dist_sq > 0.0) {
                const double pb = std::pow(dist_sq, b);
                coeff = -2.0 * a * b * (pb / dist_sq) / (a * pb + 1.0);
            }
            const double g0 = clip4(coeff * d0) * alpha;
            const double g1 = clip4(coeff * d1) * alpha;
            y(j, 0) += g0;
            y(j, 1) += g1;
            y(k, 0) -= g0;
            y(k, 1) -= g1;
            next_sample[i] += edges[i].epochs_per_sample;

            if (neg_per_sample[i] <= 0.0) {
                continue;
            }
            const auto n_neg = static_cast<long>((epoch - next_negative[i]) / neg_per_sample[i]);
            for (long s = 0; s < n_neg; ++s) {
                const auto other = static_cast<std::size_t>(rng.index(n));
                if (other == j) {
                    continue;
                }
                d0 = y(j, 0) - y(other, 0);
                d1 = y(j, 1) - y(other, 1);
                dist_sq = d0 * d0 + d1 * d1;
                if (dist_sq <= 0.0) {
                    continue;
                }
                coeff = 2.0 * gamma * b / ((0.001 + dist_sq) * (a * std::pow(dist_sq, b) + 1.0));
                y(j, 0) += clip4(coeff * d0) * alpha;
                y(j, 1) += clip4(coeff * d1) * alpha;
            }
            next_negative[i] += static_cast<double>(n_neg) * neg_per_sample[i];
        }
        for (std::size_t r = 0; r < n; ++r) {
            if (!std::isfinite(y(r, 0)) || !std::isfinite(y(r, 1))) {
                throw std::runtime_error("UMAP: non-finite coordinate for row " + std::to_string(r) + " at epoch " +
                                         std::to_string(epoch + 1));
            }
        }
    }

    result.provenance.algorithm = "umap";
    result.provenance.seed = params.seed;
    result.provenance.params = {
        {"n_neighbors", std::to_string(params.n_neighbors)},
        {"min_dist", csv::format_double(params.min_dist)},
        {"spread", csv::format_double(params.spread)},
        {"n_epochs", std::to_string(params.n_epochs)},
        {"negative_sample_rate", std::to_string(params.negative_sample_rate)},
        {"init", std::string(to_string(params.init))},
        {"a", csv::format_double(a)},
        {"b", csv::format_double(b)},
    };
    return result;
}

Embedding umap_embed(const Matrix& x, const UmapParams& params) {
    check_params(x.rows(), params);
    if (params.n_neighbors >= x.rows()) {
        throw std::invalid_argument("UMAP: n_neighbors must be below the number of rows");
    }
    if (params.init == UmapInit::spectral) {
        throw std::invalid_argument("UMAP: spectral initialization is not supported, use pca or random");
    }
    const auto canon = canonicalize(x, params.seed);
    const auto graph = fuzzy_graph(canon.x, params);
    const std::size_t n = x.rows();

    Matrix init(n, 2);
    bool initialized = false;
    if (params.init == UmapInit::pca) {
        init = pca_transform(pca_fit(canon.x, 2), canon.x);
        double max_abs = 0.0;
        for (double v : init.values()) {
            max_abs = std::max(max_abs, std::abs(v));
        }
        if (max_abs > 0.0) {
            for (double& v : init.values()) {
                v *= 10.0 / max_abs;
            }
            initialized = true;
        }
    }
    if (!initialized) {
        Rng rng(params.seed ^ 0xbb67ae8584caa73bULL);
        for (double& v : init.values()) {
            v = 20.0 * rng.uniform() - 10.0;
        }
    }

    auto result = umap_optimize(graph, init, params);
    if (canon.jittered > 0) {
        result.warnings.push_back("UMAP: jittered " + std::to_string(canon.jittered) + " duplicate rows");
    }
    if (graph.saturated_rows + graph.degenerate_rows + graph.unconverged_rows > 0) {
        result.warnings.push_back("UMAP: calibration flags: " + std::to_string(graph.saturated_rows) +
                                  " saturated, " + std::to_string(graph.degenerate_rows) + " degenerate, " +
                                  std::to_string(graph.unconverged_rows) + " unconverged rows");
    }
    result.y = restore_order(result.y, canon.order);
    return result;
}

} // namespace beatmap::manifold

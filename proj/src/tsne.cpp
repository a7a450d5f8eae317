#include "beatmap/tsne.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "beatmap/csv.hpp"
#include "beatmap/neighbors.hpp"
#include "beatmap/pca.hpp"
#include "beatmap/rng.hpp"

namespace beatmap::manifold {

namespace {

double scaled_offset(double d, double dmin, double beta) {
    const double delta = d - dmin;
    return delta == 0.0 ? 0.0 : delta * beta;
}

/// Fills `row` with the conditional distribution p_{j|i} for one sigma.
void conditional_row(std::span<const double> sq_dists, double sigma, std::span<double> row) {
    const double beta = 1.0 / (2.0 * sigma * sigma);
    const double dmin = *std::min_element(sq_dists.begin(), sq_dists.end());
    double sum = 0.0;
    for (std::size_t j = 0; j < sq_dists.size(); ++j) {
        row[j] = std::exp(-scaled_offset(sq_dists[j], dmin, beta));
        sum += row[j];
    }
    for (double& v : row) {
        v /= sum;
    }
}

void check_params(const Matrix& x, const TsneParams& p) {
    if (x.rows() < 4) {
        throw std::invalid_argument("t-SNE: need at least 4 rows");
    }
    if (!(p.perplexity > 1.0) || p.perplexity >= static_cast<double>(x.rows())) {
        throw std::invalid_argument("t-SNE: perplexity must lie in (1, N), got " + std::to_string(p.perplexity));
    }
    if (p.n_iter < p.exaggeration_iters || p.exaggeration_iters < 0) {
        throw std::invalid_argument("t-SNE: n_iter must be at least the early exaggeration length");
    }
    if (!(p.learning_rate > 0.0)) {
        throw std::invalid_argument("t-SNE: learning rate must be positive");
    }
}

} // namespace

std::string_view to_string(TsneInit init) noexcept { return init == TsneInit::pca ? "pca" : "random"; }

double row_perplexity(std::span<const double> sq_dists, double sigma) {
    const double beta = 1.0 / (2.0 * sigma * sigma);
    const double dmin = *std::min_element(sq_dists.begin(), sq_dists.end());
    double sum = 0.0;
    double weighted = 0.0;
    for (double d : sq_dists) {
        const double e = scaled_offset(d, dmin, beta);
        const double w = std::exp(-e);
        sum += w;
        weighted += w * e;
    }
    return std::exp(std::log(sum) + weighted / sum);
}

PerplexityResult perplexity_search(std::span<const double> sq_dists, double target) {
    if (sq_dists.empty() || std::none_of(sq_dists.begin(), sq_dists.end(), [](double d) { return d > 0.0; })) {
        throw std::invalid_argument("duplicate point row: all distances are zero");
    }
    PerplexityResult best;
    double best_gap = std::numeric_limits<double>::infinity();
    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    double sigma = 1.0;
    for (int it = 1; it <= kPerplexityMaxIter; ++it) {
        const double perp = row_perplexity(sq_dists, sigma);
        const double gap = std::abs(perp - target);
        if (gap < best_gap) {
            best_gap = gap;
            best.sigma = sigma;
            best.perplexity = perp;
        }
        best.iterations = it;
        if (gap <= kPerplexityTolerance) {
            best.converged = true;
            break;
        }
        if (perp > target) {
            hi = sigma;
            sigma = 0.5 * (lo + hi);
        } else {
            lo = sigma;
            sigma = std::isinf(hi) ? 2.0 * sigma : 0.5 * (lo + hi);
        }
    }
    return best;
}

JointProbabilities joint_probabilities(const Matrix& x, double perplexity) {
    const std::size_t n = x.rows();
    JointProbabilities p;
    p.n = n;
    p.upper.assign(n * (n - 1) / 2, 0.0);
    std::vector<double> dists(n - 1);
    std::vector<double> row(n - 1);
    const double scale = 1.0 / (2.0 * static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0, c = 0; j < n; ++j) {
            if (j != i) {
                dists[c++] = squared_distance(x.row(i), x.row(j));
            }
        }
        const auto found = perplexity_search(dists, perplexity);
        if (!found.converged) {
            ++p.unconverged_rows;
        }
        conditional_row(dists, found.sigma, row);
        for (std::size_t j = 0, c = 0; j < n; ++j) {
            if (j != i) {
                p.upper[p.slot(i, j)] += row[c++] * scale;
            }
        }
    }
    return p;
}

double tsne_kl(const JointProbabilities& p, const Matrix& y) {
    const std::size_t n = p.n;
    double z = 0.0;
    double cross = 0.0;
    std::size_t s = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j, ++s) {
            const double dx = y(i, 0) - y(j, 0);
            const double dy = y(i, 1) - y(j, 1);
            const double w = 1.0 / (1.0 + dx * dx + dy * dy);
            z += 2.0 * w;
            const double pij = p.upper[s];
            if (pij > 0.0) {
                cross += 2.0 * pij * (std::log(pij) - std::log(w));
            }
        }
    }
    return cross + std::log(z);
}

Matrix tsne_gradient(const JointProbabilities& p, const Matrix& y, double exaggeration) {
    const std::size_t n = p.n;
    Matrix attract(n, 2);
    Matrix repulse(n, 2);
    double z = 0.0;
    std::size_t s = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double yi0 = y(i, 0);
        const double yi1 = y(i, 1);
        double a0 = 0.0, a1 = 0.0, r0 = 0.0, r1 = 0.0;
        for (std::size_t j = i + 1; j < n; ++j, ++s) {
            const double dx = yi0 - y(j, 0);
            const double dy = yi1 - y(j, 1);
            const double w = 1.0 / (1.0 + dx * dx + dy * dy);
            z += 2.0 * w;
            const double pw = exaggeration * p.upper[s] * w;
            const double ww = w * w;
            a0 += pw * dx;
            a1 += pw * dy;
            r0 += ww * dx;
            r1 += ww * dy;
            attract(j, 0) -= pw * dx;
            attract(j, 1) -= pw * dy;
            repulse(j, 0) -= ww * dx;
            repulse(j, 1) -= ww * dy;
        }
        attract(i, 0) += a0;
        attract(i, 1) += a1;
        repulse(i, 0) += r0;
        repulse(i, 1) += r1;
    }
    Matrix grad(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < 2; ++c) {
            grad(i, c) = 4.0 * (attract(i, c) - repulse(i, c) / z);
        }
    }
    return grad;
}

Embedding tsne_embed(const Matrix& x, const TsneParams& params) {
    check_params(x, params);
    const std::size_t n = x.rows();
    Embedding result;
    result.provenance.algorithm = "tsne";
    result.provenance.seed = params.seed;
    result.provenance.params = {
        {"perplexity", csv::format_double(params.perplexity)},
        {"learning_rate", csv::format_double(params.learning_rate)},
        {"n_iter", std::to_string(params.n_iter)},
        {"early_exaggeration", csv::format_double(params.early_exaggeration)},
        {"exaggeration_iters", std::to_string(params.exaggeration_iters)},
        {"init", std::string(to_string(params.init))},
    };

    const auto canon = canonicalize(x, params.seed);
    if (canon.jittered > 0) {
        result.warnings.push_back("t-SNE: jittered " + std::to_string(canon.jittered) + " duplicate rows");
    }
    const auto p = joint_probabilities(canon.x, params.perplexity);
    if (p.unconverged_rows > 0) {
        result.warnings.push_back("t-SNE: perplexity target not reached for " + std::to_string(p.unconverged_rows) +
                                  " rows");
    }

    Rng rng(params.seed);
    Matrix y(n, 2);
    bool initialized = false;
    if (params.init == TsneInit::pca) {
        y = pca_transform(pca_fit(canon.x, 2), canon.x);
        double mean = 0.0, var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            mean += y(i, 0);
        }
        mean /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            var += (y(i, 0) - mean) * (y(i, 0) - mean);
        }
        const double sd = std::sqrt(var / static_cast<double>(n - 1));
        if (sd > 0.0) {
            for (double& v : y.values()) {
                v *= 1e-4 / sd;
            }
            initialized = true;
        } else {
            result.warnings.push_back("t-SNE: PCA init has zero variance, using random init");
        }
    }
    if (!initialized) {
        for (double& v : y.values()) {
            v = 1e-4 * rng.normal();
        }
    }

    Matrix update(n, 2);
    Matrix gains(n, 2, 1.0);
    for (int it = 0; it < params.n_iter; ++it) {
        const bool early = it < params.exaggeration_iters;
        const double momentum = early ? params.initial_momentum : params.final_momentum;
        const auto grad = tsne_gradient(p, y, early ? params.early_exaggeration : 1.0);
        for (std::size_t k = 0; k < 2 * n; ++k) {
            const double g = grad.values()[k];
            if (!std::isfinite(g)) {
                throw std::runtime_error("t-SNE: non-finite gradient at iteration " + std::to_string(it + 1) +
                                         ", row " + std::to_string(k / 2));
            }
            double& gain = gains.values()[k];
            double& u = update.values()[k];
            gain = (u * g < 0.0) ? gain + 0.2 : gain * 0.8;
            gain = std::max(gain, 0.01);
            u = momentum * u - params.learning_rate * gain * g;
            y.values()[k] += u;
        }
        double m0 = 0.0, m1 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            m0 += y(i, 0);
            m1 += y(i, 1);
        }
        m0 /= static_cast<double>(n);
        m1 /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            y(i, 0) -= m0;
            y(i, 1) -= m1;
        }
        if (params.log_every > 0 && ((it + 1) % params.log_every == 0 || it + 1 == params.n_iter)) {
            result.objective_log.emplace_back(it + 1, tsne_kl(p, y));
        }
    }
    result.y = restore_order(y, canon.order);
    return result;
}

} // namespace beatmap::manifold

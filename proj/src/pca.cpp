#include "beatmap/pca.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <string>

namespace beatmap::manifold {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMajor> view(const Matrix& m) {
    return {m.values().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

} // namespace

PcaModel pca_fit(const Matrix& x, std::size_t d) {
    const std::size_t n = x.rows();
    const std::size_t dim = x.cols();
    if (n < 2) {
        throw std::invalid_argument("pca_fit: need at least 2 rows");
    }
    if (d == 0 || d > std::min(n, dim)) {
        throw std::invalid_argument("pca_fit: d=" + std::to_string(d) + " out of range [1, " +
                                    std::to_string(std::min(n, dim)) + "]");
    }
    const auto xm = view(x);
    const Eigen::RowVectorXd mean = xm.colwise().mean();
    const Eigen::MatrixXd centered = xm.rowwise() - mean;
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    cov.selfadjointView<Eigen::Lower>().rankUpdate(centered.transpose());
    cov = cov.selfadjointView<Eigen::Lower>();
    cov /= static_cast<double>(n - 1);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) {
        throw std::runtime_error("pca_fit: eigendecomposition failed");
    }

    PcaModel model;
    model.mean.assign(mean.data(), mean.data() + dim);
    model.components = Matrix(d, dim);
    for (std::size_t c = 0; c < d; ++c) {
        const auto col = static_cast<Eigen::Index>(dim - 1 - c); // solver sorts ascending
        model.eigenvalues.push_back(std::max(0.0, solver.eigenvalues()(col)));
        Eigen::VectorXd v = solver.eigenvectors().col(col);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0.0) {
            v = -v;
        }
        for (std::size_t j = 0; j < dim; ++j) {
            model.components(c, j) = v(static_cast<Eigen::Index>(j));
        }
    }
    return model;
}

Matrix pca_transform(const PcaModel& model, const Matrix& x) {
    if (x.cols() != model.mean.size()) {
        throw std::invalid_argument("pca_transform: expected " + std::to_string(model.mean.size()) +
                                    " columns, got " + std::to_string(x.cols()));
    }
    const Eigen::Map<const Eigen::RowVectorXd> mean(model.mean.data(), static_cast<Eigen::Index>(model.mean.size()));
    Matrix out(x.rows(), model.components.rows());
    Eigen::Map<RowMajor> scores(out.values().data(), static_cast<Eigen::Index>(out.rows()),
                                static_cast<Eigen::Index>(out.cols()));
    scores.noalias() = (view(x).rowwise() - mean) * view(model.components).transpose();
    return out;
}

} // namespace beatmap::manifold

#include "metagraphloc/pca.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <string>

#include "metagraphloc/errors.hpp"

namespace mgl::meta {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void check_width(std::size_t cols, std::size_t expected, const char* what) {
    if (cols != expected)
        throw DimensionError(std::string(what) + ": expected " + std::to_string(expected) + " columns, got " +
                             std::to_string(cols));
}

}  // namespace

PcaProjection pca_fit(const Matrix& x, std::size_t m, bool standardize) {
    const std::size_t n = x.rows(), d = x.cols();
    if (n < 2) throw DomainError("pca_fit: need at least two samples");
    if (m == 0 || m > d)
        throw DimensionError("pca_fit: m=" + std::to_string(m) + " must lie in [1, " + std::to_string(d) + "]");
    if (!x.all_finite()) throw DomainError("pca_fit: non-finite feature");

    PcaProjection p;
    p.standardize = standardize;
    p.mean.assign(d, 0.0);
    p.scale.assign(d, 1.0);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) p.mean[c] += x(r, c);
    for (double& v : p.mean) v /= static_cast<double>(n);
    if (standardize) {
        for (std::size_t c = 0; c < d; ++c) {
            double var = 0.0;
            for (std::size_t r = 0; r < n; ++r) var += (x(r, c) - p.mean[c]) * (x(r, c) - p.mean[c]);
            const double sd = std::sqrt(var / static_cast<double>(n));
            p.scale[c] = sd > 0.0 ? sd : 1.0;
        }
    }

    const Matrix xn = pca_normalize(p, x);
    Eigen::Map<const RowMajor> xm(xn.values().data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    const Eigen::MatrixXd cov = (xm.transpose() * xm) / static_cast<double>(n);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) throw DomainError("pca_fit: eigendecomposition failed");

    // Eigen sorts ascending; walk backwards.
    p.eigenvalues.resize(d);
    for (std::size_t i = 0; i < d; ++i) {
        const double lambda = solver.eigenvalues()(static_cast<Eigen::Index>(d - 1 - i));
        p.eigenvalues[i] = lambda < 0.0 ? 0.0 : lambda;
    }
    p.components = Matrix(d, m);
    for (std::size_t j = 0; j < m; ++j) {
        const auto v = solver.eigenvectors().col(static_cast<Eigen::Index>(d - 1 - j));
        // Orient each axis so its entries sum positive; fall back to the
        // largest-magnitude entry when the sum is negligible.
        double sign = 1.0;
        const double total = v.sum();
        if (std::abs(total) > 1e-8) {
            sign = total < 0.0 ? -1.0 : 1.0;
        } else {
            Eigen::Index lead = 0;
            for (Eigen::Index i = 1; i < v.size(); ++i)
                if (std::abs(v(i)) > std::abs(v(lead))) lead = i;
            sign = v(lead) < 0.0 ? -1.0 : 1.0;
        }
        for (std::size_t i = 0; i < d; ++i) p.components(i, j) = sign * v(static_cast<Eigen::Index>(i));
    }
    return p;
}

Matrix pca_normalize(const PcaProjection& p, const Matrix& x) {
    check_width(x.cols(), p.input_dims(), "pca_normalize");
    Matrix out(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = (x(r, c) - p.mean[c]) / p.scale[c];
    return out;
}

Matrix pca_apply(const PcaProjection& p, const Matrix& x) { return matmul(pca_normalize(p, x), p.components); }

Matrix pca_reconstruct(const PcaProjection& p, const Matrix& z) {
    check_width(z.cols(), p.output_dims(), "pca_reconstruct");
    Matrix out = matmul(z, p.components.transposed());
    for (std::size_t r = 0; r < out.rows(); ++r)
        for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) = out(r, c) * p.scale[c] + p.mean[c];
    return out;
}

}  // namespace mgl::meta

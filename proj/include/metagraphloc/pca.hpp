#pragma once

#include <cstddef>
#include <vector>

#include "metagraphloc/matrix.hpp"

namespace mgl::meta {

/// Principal-component projection fitted on the rows of a feature matrix.
///
/// Features are centred and, when `standardize` is set, divided by their
/// standard deviation (zero deviations are treated as 1). `components` is
/// d x m with orthonormal columns; `eigenvalues` holds all d covariance
/// eigenvalues in descending order.
struct PcaProjection {
    std::vector<double> mean;
    std::vector<double> scale;
    Matrix components;
    std::vector<double> eigenvalues;
    bool standardize = true;

    std::size_t input_dims() const noexcept { return mean.size(); }
    std::size_t output_dims() const noexcept { return components.cols(); }

    friend bool operator==(const PcaProjection&, const PcaProjection&) = default;
};

/// Requires 1 <= m <= X.cols() and at least two rows. Each eigenvector is
/// oriented so its entries sum positive (largest-magnitude entry positive
/// when the sum vanishes).
PcaProjection pca_fit(const Matrix& x, std::size_t m, bool standardize = true);

/// Rows of `x` (n x d) to latent coordinates (n x m).
Matrix pca_apply(const PcaProjection& p, const Matrix& x);

/// Latent rows (n x m) back to the original feature space (n x d).
Matrix pca_reconstruct(const PcaProjection& p, const Matrix& z);

/// Rows of `x` after centring and scaling, before projection.
Matrix pca_normalize(const PcaProjection& p, const Matrix& x);

}  // namespace mgl::meta

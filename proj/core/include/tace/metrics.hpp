#pragma once

#include "tace/numerics.hpp"

namespace tace {

/// Mean and covariance of a set of feature vectors (population covariance,
/// needs at least two samples).
struct GaussStats {
    Vector mean;
    Matrix cov;
    long count = 0;
};

GaussStats fit_gauss_stats(const std::vector<Vector>& samples);

/// Fréchet distance between two Gaussians:
/// |mu_a - mu_b|^2 + tr(Sa + Sb - 2 (Sa^1/2 Sb Sa^1/2)^1/2).
/// Covariances must be symmetric; tiny negative eigenvalues (estimation
/// noise) are clamped to zero.
double frechet_distance(const GaussStats& a, const GaussStats& b);

/// Symmetric PSD square root via eigendecomposition (dim <= 64).
Matrix sym_sqrt(const Matrix& a);

}  // namespace tace

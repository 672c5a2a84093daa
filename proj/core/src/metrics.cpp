#include "tace/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace tace {

GaussStats fit_gauss_stats(const std::vector<Vector>& samples) {
    if (samples.size() < 2)
        throw std::invalid_argument("fit_gauss_stats: need at least two samples");
    const std::size_t dim = samples.front().size();
    if (dim == 0) throw std::invalid_argument("fit_gauss_stats: empty feature vectors");
    for (const Vector& s : samples)
        if (s.size() != dim) throw std::invalid_argument("fit_gauss_stats: ragged samples");

    GaussStats stats;
    stats.count = static_cast<long>(samples.size());
    stats.mean.assign(dim, 0.0);
    for (const Vector& s : samples)
        for (std::size_t i = 0; i < dim; ++i) stats.mean[i] += s[i];
    for (double& m : stats.mean) m /= static_cast<double>(samples.size());

    stats.cov = Matrix(static_cast<int>(dim), static_cast<int>(dim));
    for (const Vector& s : samples) {
        for (std::size_t i = 0; i < dim; ++i) {
            const double di = s[i] - stats.mean[i];
            for (std::size_t j = i; j < dim; ++j)
                stats.cov(static_cast<int>(i), static_cast<int>(j)) += di * (s[j] - stats.mean[j]);
        }
    }
    const double inv = 1.0 / static_cast<double>(samples.size());
    for (std::size_t i = 0; i < dim; ++i)
        for (std::size_t j = i; j < dim; ++j) {
            const double v = stats.cov(static_cast<int>(i), static_cast<int>(j)) * inv;
            stats.cov(static_cast<int>(i), static_cast<int>(j)) = v;
            stats.cov(static_cast<int>(j), static_cast<int>(i)) = v;
        }
    return stats;
}

namespace {

Matrix multiply(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw std::invalid_argument("multiply: shape mismatch");
    Matrix out(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i)
        for (int k = 0; k < a.cols; ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (int j = 0; j < b.cols; ++j) out(i, j) += aik * b(k, j);
        }
    return out;
}

// eigenvalues clamped at zero; values materially below -1e-10 (beyond
// estimation noise) are an error
Vector clamped_eig(const Matrix& m, Matrix& q) {
    Vector w;
    sym_eig(m, w, q);
    double scale = 1.0;
    for (double v : w) scale = std::max(scale, std::abs(v));
    for (double& v : w) {
        if (v < -1e-10 * scale)
            throw std::invalid_argument("frechet_distance: covariance is not PSD");
        v = std::max(v, 0.0);
    }
    return w;
}

}  // namespace

Matrix sym_sqrt(const Matrix& a) {
    Matrix q;
    const Vector w = clamped_eig(a, q);
    const int n = a.rows;
    Matrix out(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int k = 0; k < n; ++k) acc += q(i, k) * std::sqrt(w[k]) * q(j, k);
            out(i, j) = acc;
        }
    return out;
}

double frechet_distance(const GaussStats& a, const GaussStats& b) {
    if (a.mean.size() != b.mean.size())
        throw std::invalid_argument("frechet_distance: dimension mismatch");
    const int n = static_cast<int>(a.mean.size());
    if (a.cov.rows != n || b.cov.rows != n)
        throw std::invalid_argument("frechet_distance: covariance dimension mismatch");

    const auto check_symmetric = [n](const Matrix& m, const char* which) {
        double scale = 0.0;
        for (double x : m.data) scale = std::max(scale, std::abs(x));
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j)
                if (std::abs(m(i, j) - m(j, i)) > 1e-10 * std::max(1.0, scale))
                    throw std::invalid_argument(std::string("frechet_distance: asymmetric ") + which);
    };
    check_symmetric(a.cov, "first covariance");
    check_symmetric(b.cov, "second covariance");

    double mean_term = 0.0;
    for (int i = 0; i < n; ++i) {
        const double d = a.mean[i] - b.mean[i];
        mean_term += d * d;
    }

    // tr((Sa^1/2 Sb Sa^1/2)^1/2) computed on the symmetrized product, which
    // has the same spectrum as Sa Sb but stays within sym_eig's remit
    const Matrix ra = sym_sqrt(a.cov);
    Matrix inner = multiply(multiply(ra, b.cov), ra);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const double v = 0.5 * (inner(i, j) + inner(j, i));
            inner(i, j) = v;
            inner(j, i) = v;
        }
    Matrix q;
    const Vector w = clamped_eig(inner, q);

    double trace_term = 0.0;
    for (int i = 0; i < n; ++i) trace_term += a.cov(i, i) + b.cov(i, i);
    for (double v : w) trace_term -= 2.0 * std::sqrt(v);
    return mean_term + trace_term;
}

}  // namespace tace

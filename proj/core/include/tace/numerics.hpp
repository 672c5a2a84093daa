#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

namespace tace {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
struct Matrix {
    int rows = 0;
    int cols = 0;
    Vector data;

    Matrix() = default;
    Matrix(int r, int c, double fill = 0.0)
        : rows(r), cols(c), data(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {}

    double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

// Counter-based SplitMix64 generator. The raw u64 stream for a given seed is
// bit-identical across platforms, which is what makes end-to-end runs
// reproducible. split(k) derives an independent child stream from the seed
// (not the current state), so the same k always yields the same child.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), state_(seed) {}

    std::uint64_t next_u64();
    double uniform();                      // [0, 1)
    double uniform(double lo, double hi);  // [lo, hi)
    double normal();                       // standard normal (Box-Muller)
    int uniform_int(int lo, int hi);       // inclusive bounds
    Rng split(std::uint64_t stream) const;

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

struct AdamConfig {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    AdamConfig config;
    Vector m;
    Vector v;
    long t = 0;

    AdamState() = default;
    explicit AdamState(std::size_t n, AdamConfig cfg = {}) : config(cfg), m(n, 0.0), v(n, 0.0) {}
    void reset();
};

/// One Adam update in place. Throws std::invalid_argument on size mismatch or
/// non-finite gradient entries.
void adam_step(Vector& params, const Vector& grads, AdamState& state);

/// Adam update that skips coordinates with mask == 0 entirely: their value,
/// first and second moments are left untouched (bit-identical).
void adam_step_masked(Vector& params, const Vector& grads, AdamState& state,
                      const std::vector<std::uint8_t>& free_mask);

/// Worst-case relative error between analytic_grad and a central finite
/// difference of loss at point: max_i |g_a[i] - g_fd[i]| / max(1, |g_fd[i]|).
double finite_diff_check(const std::function<double(const Vector&)>& loss, const Vector& point,
                         const Vector& analytic_grad, double step = 1e-4);

/// Same check restricted to a subset of coordinates (for large parameter
/// vectors where probing every coordinate is too slow).
double finite_diff_check(const std::function<double(const Vector&)>& loss, const Vector& point,
                         const Vector& analytic_grad, const std::vector<int>& coords,
                         double step = 1e-4);

/// Cyclic Jacobi eigendecomposition for small symmetric matrices (dim <= 64).
/// Eigenvalues come out ascending with matching eigenvector columns, so
/// A = Q diag(w) Q^T. Throws on non-square, oversized or asymmetric input.
void sym_eig(const Matrix& a, Vector& eigenvalues, Matrix& eigenvectors);

bool all_finite(const Vector& v);
double dot(const Vector& a, const Vector& b);
double sum_sq(const Vector& v);

}  // namespace tace

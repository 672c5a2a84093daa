#include "tace/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace tace {

std::uint64_t Rng::next_u64() {
    // splitmix64 (Steele, Lea, Flood 2014)
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double Rng::uniform() {
    // top 53 bits -> [0, 1)
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    // Box-Muller; uniform() can return exactly 0, so flip to 1-u for the log.
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double phi = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(phi);
    has_spare_ = true;
    return r * std::cos(phi);
}

int Rng::uniform_int(int lo, int hi) {
    if (lo > hi) throw std::invalid_argument("uniform_int: lo > hi");
    std::uint64_t n = static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo) + 1;
    return lo + static_cast<int>(next_u64() % n);
}

Rng Rng::split(std::uint64_t stream) const {
    // run one splitmix64 step on a key derived from (seed, stream)
    std::uint64_t z = seed_ + 0xA0761D6478BD642FULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return Rng(z ^ (z >> 31));
}

void AdamState::reset() {
    std::fill(m.begin(), m.end(), 0.0);
    std::fill(v.begin(), v.end(), 0.0);
    t = 0;
}

namespace {

void check_adam_args(const Vector& params, const Vector& grads, const AdamState& state) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw std::invalid_argument("adam_step: size mismatch");
    for (std::size_t i = 0; i < grads.size(); ++i)
        if (!std::isfinite(grads[i]))
            throw std::invalid_argument("adam_step: non-finite gradient at index " + std::to_string(i));
}

}  // namespace

void adam_step(Vector& params, const Vector& grads, AdamState& s) {
    check_adam_args(params, grads, s);
    ++s.t;
    const double b1 = s.config.beta1, b2 = s.config.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(s.t));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(s.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        s.m[i] = b1 * s.m[i] + (1.0 - b1) * g;
        s.v[i] = b2 * s.v[i] + (1.0 - b2) * g * g;
        params[i] -= s.config.lr * (s.m[i] / bc1) / (std::sqrt(s.v[i] / bc2) + s.config.eps);
    }
}

void adam_step_masked(Vector& params, const Vector& grads, AdamState& s,
                      const std::vector<std::uint8_t>& free_mask) {
    check_adam_args(params, grads, s);
    if (free_mask.size() != params.size())
        throw std::invalid_argument("adam_step_masked: mask size mismatch");
    ++s.t;
    const double b1 = s.config.beta1, b2 = s.config.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(s.t));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(s.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!free_mask[i]) continue;
        const double g = grads[i];
        s.m[i] = b1 * s.m[i] + (1.0 - b1) * g;
        s.v[i] = b2 * s.v[i] + (1.0 - b2) * g * g;
        params[i] -= s.config.lr * (s.m[i] / bc1) / (std::sqrt(s.v[i] / bc2) + s.config.eps);
    }
}

double finite_diff_check(const std::function<double(const Vector&)>& loss, const Vector& point,
                         const Vector& analytic_grad, double step) {
    std::vector<int> coords(point.size());
    std::iota(coords.begin(), coords.end(), 0);
    return finite_diff_check(loss, point, analytic_grad, coords, step);
}

double finite_diff_check(const std::function<double(const Vector&)>& loss, const Vector& point,
                         const Vector& analytic_grad, const std::vector<int>& coords, double step) {
    if (point.size() != analytic_grad.size())
        throw std::invalid_argument("finite_diff_check: gradient size mismatch");
    Vector p = point;
    double worst = 0.0;
    for (int i : coords) {
        if (i < 0 || static_cast<std::size_t>(i) >= p.size())
            throw std::invalid_argument("finite_diff_check: coordinate out of range");
        const double saved = p[i];
        p[i] = saved + step;
        const double lp = loss(p);
        p[i] = saved - step;
        const double lm = loss(p);
        p[i] = saved;
        if (!std::isfinite(lp) || !std::isfinite(lm))
            throw std::runtime_error("finite_diff_check: loss non-finite at probe point");
        const double g_fd = (lp - lm) / (2.0 * step);
        const double err = std::abs(analytic_grad[i] - g_fd) / std::max(1.0, std::abs(g_fd));
        worst = std::max(worst, err);
    }
    return worst;
}

void sym_eig(const Matrix& a, Vector& eigenvalues, Matrix& eigenvectors) {
    if (a.rows != a.cols) throw std::invalid_argument("sym_eig: matrix not square");
    const int n = a.rows;
    if (n <= 0 || n > 64) throw std::invalid_argument("sym_eig: dimension must be in [1, 64]");

    double scale = 0.0;
    for (double x : a.data) scale = std::max(scale, std::abs(x));
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (std::abs(a(i, j) - a(j, i)) > 1e-10 * std::max(1.0, scale))
                throw std::invalid_argument("sym_eig: matrix not symmetric");

    Matrix b = a;
    Matrix q(n, n);
    for (int i = 0; i < n; ++i) q(i, i) = 1.0;

    const int max_sweeps = 100;
    bool converged = false;
    for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
        double off = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) off += b(i, j) * b(i, j);
        if (std::sqrt(off) <= 1e-14 * std::max(1.0, scale)) {
            converged = true;
            break;
        }
        for (int p = 0; p < n - 1; ++p) {
            for (int r = p + 1; r < n; ++r) {
                const double apr = b(p, r);
                if (std::abs(apr) <= 1e-300) continue;
                const double theta = (b(r, r) - b(p, p)) / (2.0 * apr);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double bkp = b(k, p), bkr = b(k, r);
                    b(k, p) = c * bkp - s * bkr;
                    b(k, r) = s * bkp + c * bkr;
                }
                for (int k = 0; k < n; ++k) {
                    const double bpk = b(p, k), brk = b(r, k);
                    b(p, k) = c * bpk - s * brk;
                    b(r, k) = s * bpk + c * brk;
                }
                for (int k = 0; k < n; ++k) {
                    const double qkp = q(k, p), qkr = q(k, r);
                    q(k, p) = c * qkp - s * qkr;
                    q(k, r) = s * qkp + c * qkr;
                }
            }
        }
    }
    double off = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) off += b(i, j) * b(i, j);
    if (std::sqrt(off) > 1e-10 * std::max(1.0, scale))
        throw std::runtime_error("sym_eig: Jacobi iteration failed to converge");

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int i, int j) { return b(i, i) < b(j, j); });

    eigenvalues.assign(n, 0.0);
    eigenvectors = Matrix(n, n);
    for (int j = 0; j < n; ++j) {
        eigenvalues[j] = b(order[j], order[j]);
        for (int i = 0; i < n; ++i) eigenvectors(i, j) = q(i, order[j]);
    }
}

bool all_finite(const Vector& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

double dot(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) throw std::invalid_argument("dot: size mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double sum_sq(const Vector& v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return acc;
}

}  // namespace tace

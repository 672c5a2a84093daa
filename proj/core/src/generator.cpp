#include "tace/generator.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace tace {

namespace {

// opacity is cut to exactly 0 once exp(-q/2) < ~1e-13; the jump is far below
// optimization noise and keeps footprints small
constexpr double kCutoffQ = 60.0;

struct Geometry {
    double cx, cy, cos_t, sin_t, sa, sb, sp;
};

Geometry blob_geometry(const BlobSpatial& b) {
    const double s = std::exp(b.log_s);
    const double a = std::exp(b.log_a);
    Geometry g;
    g.cx = b.cx;
    g.cy = b.cy;
    g.cos_t = std::cos(b.theta);
    g.sin_t = std::sin(b.theta);
    g.sa = s * a;
    g.sb = s / a;
    g.sp = logistic(b.p);
    return g;
}

double mahalanobis_sq(const Geometry& g, double ux, double uy) {
    const double dx = ux - g.cx;
    const double dy = uy - g.cy;
    const double A = (dx * g.cos_t + dy * g.sin_t) / g.sa;
    const double B = (-dx * g.sin_t + dy * g.cos_t) / g.sb;
    return A * A + B * B;
}

// pixel index range covering the q <= kCutoffQ ellipse along one axis
void cutoff_range(double center, double half_extent, int res, int& lo, int& hi) {
    lo = static_cast<int>(std::ceil((center - half_extent) * res - 0.5));
    hi = static_cast<int>(std::floor((center + half_extent) * res - 0.5));
    lo = std::max(lo, 0);
    hi = std::min(hi, res - 1);
}

const double* blur_kernel() {
    static const std::array<double, 5> k = [] {
        std::array<double, 5> raw{};
        double sum = 0.0;
        for (int i = 0; i < 5; ++i) {
            const double x = i - 2;
            raw[i] = std::exp(-0.5 * x * x);
            sum += raw[i];
        }
        for (double& v : raw) v /= sum;
        return raw;
    }();
    return k.data();
}

inline int reflect(int i, int n) { return i < 0 ? -1 - i : (i >= n ? 2 * n - 1 - i : i); }

void pass_rows(const Vector& in, Vector& out, int width, int height, const double* k, bool adjoint) {
    std::fill(out.begin(), out.end(), 0.0);
    for (int y = 0; y < height; ++y) {
        const double* src = in.data() + static_cast<std::size_t>(y) * width;
        double* dst = out.data() + static_cast<std::size_t>(y) * width;
        for (int x = 0; x < width; ++x) {
            if (adjoint) {
                for (int t = -2; t <= 2; ++t) dst[reflect(x + t, width)] += k[t + 2] * src[x];
            } else {
                double acc = 0.0;
                for (int t = -2; t <= 2; ++t) acc += k[t + 2] * src[reflect(x + t, width)];
                dst[x] = acc;
            }
        }
    }
}

void pass_cols(const Vector& in, Vector& out, int width, int height, const double* k, bool adjoint) {
    std::fill(out.begin(), out.end(), 0.0);
    for (int x = 0; x < width; ++x) {
        for (int y = 0; y < height; ++y) {
            const std::size_t src_i = static_cast<std::size_t>(y) * width + x;
            if (adjoint) {
                for (int t = -2; t <= 2; ++t)
                    out[static_cast<std::size_t>(reflect(y + t, height)) * width + x] +=
                        k[t + 2] * in[src_i];
            } else {
                double acc = 0.0;
                for (int t = -2; t <= 2; ++t)
                    acc += k[t + 2] * in[static_cast<std::size_t>(reflect(y + t, height)) * width + x];
                out[src_i] = acc;
            }
        }
    }
}

}  // namespace

double logistic(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

GeneratorConfig GeneratorConfig::seeded(std::uint64_t seed, int resolution, int style_dim,
                                        int blob_count) {
    GeneratorConfig cfg;
    cfg.resolution = resolution;
    cfg.style_dim = style_dim;
    cfg.default_blob_count = blob_count;
    cfg.seed = seed;
    Rng rng = Rng(seed).split(0xD3C0DE);
    cfg.decode_w.resize(style_dim);
    cfg.decode_w[0] = 1.0 + 0.25 * std::abs(rng.normal());
    for (int i = 1; i < style_dim; ++i) cfg.decode_w[i] = 0.35 * rng.normal();
    cfg.decode_b = -1.1 + 0.1 * rng.normal();
    cfg.validate();
    return cfg;
}

void GeneratorConfig::validate() const {
    if (resolution < 16) throw std::invalid_argument("GeneratorConfig: resolution must be >= 16");
    if (style_dim < 1) throw std::invalid_argument("GeneratorConfig: style_dim must be >= 1");
    if (default_blob_count < 1)
        throw std::invalid_argument("GeneratorConfig: blob count must be >= 1");
    if (static_cast<int>(decode_w.size()) != style_dim)
        throw std::invalid_argument("GeneratorConfig: decode_w size != style_dim");
    if (!(decode_w[0] > 0.0)) throw std::invalid_argument("GeneratorConfig: decode_w[0] must be > 0");
    if (!all_finite(decode_w) || !std::isfinite(decode_b) || !std::isfinite(blur_sigma))
        throw std::invalid_argument("GeneratorConfig: non-finite parameters");
}

double blob_mahalanobis_sq(const BlobSpatial& blob, double ux, double uy) {
    return mahalanobis_sq(blob_geometry(blob), ux, uy);
}

double blob_opacity(const BlobSpatial& blob, double ux, double uy) {
    const Geometry g = blob_geometry(blob);
    const double q = mahalanobis_sq(g, ux, uy);
    if (q > kCutoffQ) return 0.0;
    return g.sp * std::exp(-0.5 * q);
}

void composite_features(const BlobScene& scene, int resolution, Vector& features, Vector* weights) {
    if (resolution < 1) throw std::invalid_argument("composite_features: bad resolution");
    const int K = scene.blob_count();
    const int ds = scene.style_dim();
    const std::size_t npx = static_cast<std::size_t>(resolution) * resolution;
    features.assign(npx * ds, 0.0);
    if (weights) weights->assign(npx * (K + 1), 0.0);

    Vector weight_sum(npx, 1.0);
    for (std::size_t px = 0; px < npx; ++px)
        for (int c = 0; c < ds; ++c) features[px * ds + c] = scene.bg_style[c];

    for (int k = 0; k < K; ++k) {
        const Blob& blob = scene.blobs[k];
        const Geometry g = blob_geometry(blob.spatial);
        for (int y = 0; y < resolution; ++y) {
            const double uy = (y + 0.5) / resolution;
            for (int x = 0; x < resolution; ++x) {
                const double ux = (x + 0.5) / resolution;
                const double q = mahalanobis_sq(g, ux, uy);
                if (q > kCutoffQ) continue;
                const double o = g.sp * std::exp(-0.5 * q);
                const std::size_t px = static_cast<std::size_t>(y) * resolution + x;
                weight_sum[px] += o;
                for (int c = 0; c < ds; ++c) features[px * ds + c] += o * blob.style[c];
                if (weights) (*weights)[px * (K + 1) + 1 + k] = o;
            }
        }
    }
    for (std::size_t px = 0; px < npx; ++px) {
        const double inv = 1.0 / weight_sum[px];
        for (int c = 0; c < ds; ++c) features[px * ds + c] *= inv;
        if (weights) {
            (*weights)[px * (K + 1)] = 1.0;
            for (int j = 0; j <= K; ++j) (*weights)[px * (K + 1) + j] *= inv;
        }
    }
}

Image render(const BlobScene& scene, const GeneratorConfig& config) {
    RenderCache cache;
    return render(scene, config, cache);
}

const Image& render(const BlobScene& scene, const GeneratorConfig& config, RenderCache& cache) {
    config.validate();
    if (scene.style_dim() != config.style_dim)
        throw std::invalid_argument("render: scene style_dim != generator style_dim");
    if (scene.blob_count() < 1) throw std::invalid_argument("render: scene has no blobs");
    const Vector flat = scene.flatten();
    if (!all_finite(flat)) throw std::invalid_argument("render: non-finite scene parameters");

    const int res = config.resolution;
    const int K = scene.blob_count();
    const int ds = config.style_dim;
    const std::size_t npx = static_cast<std::size_t>(res) * res;

    cache.resolution = res;
    cache.footprints.resize(K);
    cache.weight_sum.assign(npx, 1.0);
    cache.logit.resize(npx);
    cache.pre_blur.resize(npx);
    cache.features.assign(npx * ds, 0.0);
    for (std::size_t px = 0; px < npx; ++px)
        for (int c = 0; c < ds; ++c) cache.features[px * ds + c] = scene.bg_style[c];

    for (int k = 0; k < K; ++k) {
        const Blob& blob = scene.blobs[k];
        const Geometry g = blob_geometry(blob.spatial);
        BlobFootprint& fp = cache.footprints[k];

        // bounding box of the q <= cutoff ellipse: half extents sqrt(q * Sigma_xx/yy)
        const double sxx = g.sa * g.sa * g.cos_t * g.cos_t + g.sb * g.sb * g.sin_t * g.sin_t;
        const double syy = g.sa * g.sa * g.sin_t * g.sin_t + g.sb * g.sb * g.cos_t * g.cos_t;
        cutoff_range(g.cx, std::sqrt(kCutoffQ * sxx), res, fp.x0, fp.x1);
        cutoff_range(g.cy, std::sqrt(kCutoffQ * syy), res, fp.y0, fp.y1);
        if (fp.empty()) {
            fp.opac.clear();
            continue;
        }
        fp.opac.assign(static_cast<std::size_t>(fp.width()) * fp.height(), 0.0);

        for (int y = fp.y0; y <= fp.y1; ++y) {
            const double uy = (y + 0.5) / res;
            for (int x = fp.x0; x <= fp.x1; ++x) {
                const double ux = (x + 0.5) / res;
                const double q = mahalanobis_sq(g, ux, uy);
                if (q > kCutoffQ) continue;
                const double o = g.sp * std::exp(-0.5 * q);
                fp.opac[static_cast<std::size_t>(y - fp.y0) * fp.width() + (x - fp.x0)] = o;
                const std::size_t px = static_cast<std::size_t>(y) * res + x;
                cache.weight_sum[px] += o;
                for (int c = 0; c < ds; ++c) cache.features[px * ds + c] += o * blob.style[c];
            }
        }
    }

    for (std::size_t px = 0; px < npx; ++px) {
        const double inv = 1.0 / cache.weight_sum[px];
        double z = config.decode_b;
        for (int c = 0; c < ds; ++c) {
            cache.features[px * ds + c] *= inv;
            z += config.decode_w[c] * cache.features[px * ds + c];
        }
        cache.logit[px] = z;
        cache.pre_blur[px] = logistic(z);
    }

    cache.output.width = res;
    cache.output.height = res;
    cache.output.pixels.resize(npx);
    Vector tmp(npx);
    pass_rows(cache.pre_blur, tmp, res, res, blur_kernel(), false);
    pass_cols(tmp, cache.output.pixels, res, res, blur_kernel(), false);
    return cache.output;
}

Vector render_backward(const BlobScene& scene, const GeneratorConfig& config,
                       const RenderCache& cache, const Vector& d_output) {
    const int res = config.resolution;
    const int K = scene.blob_count();
    const int ds = config.style_dim;
    const std::size_t npx = static_cast<std::size_t>(res) * res;
    if (cache.resolution != res || cache.footprints.size() != static_cast<std::size_t>(K))
        throw std::invalid_argument("render_backward: cache does not match scene/config");
    if (d_output.size() != npx)
        throw std::invalid_argument("render_backward: d_output has wrong size");

    // blur adjoint: transpose of (rows then cols) is (cols^T then rows^T)
    Vector tmp(npx), d_pre(npx);
    pass_cols(d_output, tmp, res, res, blur_kernel(), true);
    pass_rows(tmp, d_pre, res, res, blur_kernel(), true);

    // alpha = dL/d(logit) / weight_sum; with F entering the logit only through
    // decode_w, every downstream feature gradient is alpha-scaled decode_w
    Vector alpha(npx);
    double alpha_sum = 0.0;
    for (std::size_t px = 0; px < npx; ++px) {
        const double pre = cache.pre_blur[px];
        alpha[px] = d_pre[px] * pre * (1.0 - pre) / cache.weight_sum[px];
        alpha_sum += alpha[px];
    }

    Vector grad(static_cast<std::size_t>(scene.flat_size()), 0.0);
    const int stride = kSpatialParams + ds;
    const std::size_t bg_off = static_cast<std::size_t>(K) * stride;
    for (int c = 0; c < ds; ++c) grad[bg_off + c] = alpha_sum * config.decode_w[c];

    for (int k = 0; k < K; ++k) {
        const BlobFootprint& fp = cache.footprints[k];
        if (fp.empty()) continue;
        const Blob& blob = scene.blobs[k];
        const Geometry g = blob_geometry(blob.spatial);
        const double a2 = std::exp(2.0 * blob.spatial.log_a);
        const double w_dot_style = dot(config.decode_w, blob.style);

        double d_cx = 0.0, d_cy = 0.0, d_log_s = 0.0, d_log_a = 0.0, d_theta = 0.0, d_p = 0.0;
        double beta = 0.0;  // sum of alpha * opacity, scales the style gradient
        for (int y = fp.y0; y <= fp.y1; ++y) {
            const double uy = (y + 0.5) / res;
            for (int x = fp.x0; x <= fp.x1; ++x) {
                const double o =
                    fp.opac[static_cast<std::size_t>(y - fp.y0) * fp.width() + (x - fp.x0)];
                if (o == 0.0) continue;
                const std::size_t px = static_cast<std::size_t>(y) * res + x;
                const double al = alpha[px];
                beta += al * o;

                // d(total)/d(o_k) = alpha * (w.psi_k - w.F); w.F = logit - b
                const double d_o = al * (w_dot_style - (cache.logit[px] - config.decode_b));
                d_p += d_o * o * (1.0 - g.sp);
                const double d_q = -0.5 * d_o * o;

                const double dx = (x + 0.5) / res - g.cx;
                const double dy = uy - g.cy;
                const double A = (dx * g.cos_t + dy * g.sin_t) / g.sa;
                const double B = (-dx * g.sin_t + dy * g.cos_t) / g.sb;
                const double q = A * A + B * B;
                d_log_s += d_q * (-2.0 * q);
                d_log_a += d_q * 2.0 * (B * B - A * A);
                d_theta += d_q * 2.0 * A * B * (1.0 / a2 - a2);
                const double gx = 2.0 * (A * g.cos_t / g.sa - B * g.sin_t / g.sb);
                const double gy = 2.0 * (A * g.sin_t / g.sa + B * g.cos_t / g.sb);
                d_cx -= d_q * gx;
                d_cy -= d_q * gy;
            }
        }
        const std::size_t off = static_cast<std::size_t>(k) * stride;
        grad[off + 0] = d_cx;
        grad[off + 1] = d_cy;
        grad[off + 2] = d_log_s;
        grad[off + 3] = d_log_a;
        grad[off + 4] = d_theta;
        grad[off + 5] = d_p;
        for (int c = 0; c < ds; ++c) grad[off + kSpatialParams + c] = beta * config.decode_w[c];
    }
    return grad;
}

void gaussian_blur_5(const Vector& in, Vector& out, int width, int height) {
    Vector tmp(in.size());
    out.resize(in.size());
    pass_rows(in, tmp, width, height, blur_kernel(), false);
    pass_cols(tmp, out, width, height, blur_kernel(), false);
}

void gaussian_blur_5_adjoint(const Vector& in, Vector& out, int width, int height) {
    Vector tmp(in.size());
    out.resize(in.size());
    pass_cols(in, tmp, width, height, blur_kernel(), true);
    pass_rows(tmp, out, width, height, blur_kernel(), true);
}

}  // namespace tace

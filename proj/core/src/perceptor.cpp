#include "tace/perceptor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tace {

namespace {

constexpr double kNormEps = 1e-8;

// strided conv, zero padding, no bias; in/out channel-major
void conv_forward(const Vector& in, int in_ch, int in_h, int in_w, const Vector& weights,
                  int out_ch, Vector& out, int out_h, int out_w) {
    out.assign(static_cast<std::size_t>(out_ch) * out_h * out_w, 0.0);
    const int K = FeatureExtractor::kKernel, S = FeatureExtractor::kStride,
              P = FeatureExtractor::kPad;
    for (int oc = 0; oc < out_ch; ++oc) {
        for (int oy = 0; oy < out_h; ++oy) {
            const int iy0 = oy * S - P;
            for (int ox = 0; ox < out_w; ++ox) {
                const int ix0 = ox * S - P;
                double acc = 0.0;
                for (int ic = 0; ic < in_ch; ++ic) {
                    const double* w =
                        weights.data() + ((static_cast<std::size_t>(oc) * in_ch + ic) * K * K);
                    const double* src = in.data() + static_cast<std::size_t>(ic) * in_h * in_w;
                    for (int ky = 0; ky < K; ++ky) {
                        const int iy = iy0 + ky;
                        if (iy < 0 || iy >= in_h) continue;
                        for (int kx = 0; kx < K; ++kx) {
                            const int ix = ix0 + kx;
                            if (ix < 0 || ix >= in_w) continue;
                            acc += w[ky * K + kx] * src[iy * in_w + ix];
                        }
                    }
                }
                out[(static_cast<std::size_t>(oc) * out_h + oy) * out_w + ox] = acc;
            }
        }
    }
}

// transpose of conv_forward: scatters output-side gradients back to the input
void conv_backward(const Vector& d_out, int out_ch, int out_h, int out_w, const Vector& weights,
                   int in_ch, Vector& d_in, int in_h, int in_w) {
    d_in.assign(static_cast<std::size_t>(in_ch) * in_h * in_w, 0.0);
    const int K = FeatureExtractor::kKernel, S = FeatureExtractor::kStride,
              P = FeatureExtractor::kPad;
    for (int oc = 0; oc < out_ch; ++oc) {
        for (int oy = 0; oy < out_h; ++oy) {
            const int iy0 = oy * S - P;
            for (int ox = 0; ox < out_w; ++ox) {
                const int ix0 = ox * S - P;
                const double g = d_out[(static_cast<std::size_t>(oc) * out_h + oy) * out_w + ox];
                if (g == 0.0) continue;
                for (int ic = 0; ic < in_ch; ++ic) {
                    const double* w =
                        weights.data() + ((static_cast<std::size_t>(oc) * in_ch + ic) * K * K);
                    double* dst = d_in.data() + static_cast<std::size_t>(ic) * in_h * in_w;
                    for (int ky = 0; ky < K; ++ky) {
                        const int iy = iy0 + ky;
                        if (iy < 0 || iy >= in_h) continue;
                        for (int kx = 0; kx < K; ++kx) {
                            const int ix = ix0 + kx;
                            if (ix < 0 || ix >= in_w) continue;
                            dst[iy * in_w + ix] += g * w[ky * K + kx];
                        }
                    }
                }
            }
        }
    }
}

double layer_distance(const Vector& a, const Vector& b, int channels, int h, int w) {
    const std::size_t npx = static_cast<std::size_t>(h) * w;
    const std::size_t plane = npx;
    double acc = 0.0;
    for (std::size_t px = 0; px < npx; ++px) {
        double na = kNormEps, nb = kNormEps;
        for (int c = 0; c < channels; ++c) {
            na += a[c * plane + px] * a[c * plane + px];
            nb += b[c * plane + px] * b[c * plane + px];
        }
        na = std::sqrt(na);
        nb = std::sqrt(nb);
        for (int c = 0; c < channels; ++c) {
            const double d = a[c * plane + px] / na - b[c * plane + px] / nb;
            acc += d * d;
        }
    }
    return acc / (static_cast<double>(channels) * static_cast<double>(npx));
}

// gradient of layer_distance w.r.t. b
void layer_distance_backward(const Vector& a, const Vector& b, int channels, int h, int w,
                             Vector& d_b) {
    const std::size_t npx = static_cast<std::size_t>(h) * w;
    const std::size_t plane = npx;
    d_b.assign(b.size(), 0.0);
    const double scale = 1.0 / (static_cast<double>(channels) * static_cast<double>(npx));
    for (std::size_t px = 0; px < npx; ++px) {
        double na = kNormEps, nb = kNormEps;
        for (int c = 0; c < channels; ++c) {
            na += a[c * plane + px] * a[c * plane + px];
            nb += b[c * plane + px] * b[c * plane + px];
        }
        na = std::sqrt(na);
        nb = std::sqrt(nb);
        // v = dL/d(b_hat); chain through b_hat = b / sqrt(|b|^2 + eps)
        double v_dot_b = 0.0;
        for (int c = 0; c < channels; ++c) {
            const double v = -2.0 * scale * (a[c * plane + px] / na - b[c * plane + px] / nb);
            d_b[c * plane + px] = v / nb;
            v_dot_b += v * b[c * plane + px];
        }
        const double corr = v_dot_b / (nb * nb * nb);
        for (int c = 0; c < channels; ++c) d_b[c * plane + px] -= corr * b[c * plane + px];
    }
}

}  // namespace

FeatureExtractor::FeatureExtractor(std::uint64_t seed, int resolution)
    : seed_(seed), resolution_(resolution) {
    if (resolution < 16 || resolution % 16 != 0)
        throw std::invalid_argument("FeatureExtractor: resolution must be a positive multiple of 16");
    // He-scaled random weights, frozen forever after construction
    Rng base(seed);
    Rng r1 = base.split(1);
    const double std1 = std::sqrt(2.0 / (1.0 * kKernel * kKernel));
    conv1_.resize(static_cast<std::size_t>(kLayer1Channels) * kKernel * kKernel);
    for (double& w : conv1_) w = std1 * r1.normal();
    Rng r2 = base.split(2);
    const double std2 = std::sqrt(2.0 / (kLayer1Channels * kKernel * kKernel));
    conv2_.resize(static_cast<std::size_t>(kLayer2Channels) * kLayer1Channels * kKernel * kKernel);
    for (double& w : conv2_) w = std2 * r2.normal();
    // Random biases, about half the typical activation magnitude. Without
    // them the stack is exactly scale-covariant — ReLU(alpha Wx) =
    // alpha ReLU(Wx) — so the channel-normalized distance would be blind to
    // global intensity changes. Biases break that symmetry the way trained
    // backbones do.
    constexpr double kBiasStd = 0.2;
    Rng rb1 = base.split(3);
    bias1_.resize(kLayer1Channels);
    for (double& b : bias1_) b = kBiasStd * rb1.normal();
    Rng rb2 = base.split(4);
    bias2_.resize(kLayer2Channels);
    for (double& b : bias2_) b = kBiasStd * rb2.normal();
}

FeatureStack FeatureExtractor::extract(const Image& img) const {
    if (img.width != resolution_ || img.height != resolution_)
        throw std::invalid_argument("FeatureExtractor::extract: image size mismatch");
    FeatureStack s;
    s.h1 = resolution_ / 2;
    s.w1 = s.h1;
    s.h2 = resolution_ / 4;
    s.w2 = s.h2;

    conv_forward(img.pixels, 1, resolution_, resolution_, conv1_, kLayer1Channels, s.layer1, s.h1,
                 s.w1);
    const std::size_t plane1 = static_cast<std::size_t>(s.h1) * s.w1;
    for (int c = 0; c < kLayer1Channels; ++c)
        for (std::size_t i = 0; i < plane1; ++i) {
            double& v = s.layer1[c * plane1 + i];
            v = std::max(v + bias1_[c], 0.0);
        }
    conv_forward(s.layer1, kLayer1Channels, s.h1, s.w1, conv2_, kLayer2Channels, s.layer2, s.h2,
                 s.w2);
    const std::size_t plane2 = static_cast<std::size_t>(s.h2) * s.w2;
    for (int c = 0; c < kLayer2Channels; ++c)
        for (std::size_t i = 0; i < plane2; ++i) {
            double& v = s.layer2[c * plane2 + i];
            v = std::max(v + bias2_[c], 0.0);
        }

    s.pooled.assign(kPooledDim, 0.0);
    const std::size_t n1 = static_cast<std::size_t>(s.h1) * s.w1;
    for (int c = 0; c < kLayer1Channels; ++c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n1; ++i) acc += s.layer1[c * n1 + i];
        s.pooled[c] = acc / static_cast<double>(n1);
    }
    const std::size_t n2 = static_cast<std::size_t>(s.h2) * s.w2;
    for (int c = 0; c < kLayer2Channels; ++c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n2; ++i) acc += s.layer2[c * n2 + i];
        s.pooled[kLayer1Channels + c] = acc / static_cast<double>(n2);
    }

    // 4x4 grid of cell means per layer2 channel
    s.grid.assign(kGridDim, 0.0);
    const int cell = s.h2 / kGridCells;
    const double inv_cell = 1.0 / (static_cast<double>(cell) * cell);
    for (int c = 0; c < kLayer2Channels; ++c) {
        for (int gy = 0; gy < kGridCells; ++gy) {
            for (int gx = 0; gx < kGridCells; ++gx) {
                double acc = 0.0;
                for (int y = gy * cell; y < (gy + 1) * cell; ++y)
                    for (int x = gx * cell; x < (gx + 1) * cell; ++x)
                        acc += s.layer2[(static_cast<std::size_t>(c) * s.h2 + y) * s.w2 + x];
                s.grid[(static_cast<std::size_t>(c) * kGridCells + gy) * kGridCells + gx] =
                    acc * inv_cell;
            }
        }
    }
    return s;
}

Image FeatureExtractor::backward(const FeatureStack& stack, const Vector& d_layer1,
                                 const Vector& d_layer2, const Vector& d_pooled,
                                 const Vector& d_grid) const {
    const std::size_t n1 = static_cast<std::size_t>(stack.h1) * stack.w1;
    const std::size_t n2 = static_cast<std::size_t>(stack.h2) * stack.w2;
    if (!d_layer1.empty() && d_layer1.size() != stack.layer1.size())
        throw std::invalid_argument("FeatureExtractor::backward: d_layer1 size mismatch");
    if (!d_layer2.empty() && d_layer2.size() != stack.layer2.size())
        throw std::invalid_argument("FeatureExtractor::backward: d_layer2 size mismatch");
    if (!d_pooled.empty() && static_cast<int>(d_pooled.size()) != kPooledDim)
        throw std::invalid_argument("FeatureExtractor::backward: d_pooled size mismatch");
    if (!d_grid.empty() && static_cast<int>(d_grid.size()) != kGridDim)
        throw std::invalid_argument("FeatureExtractor::backward: d_grid size mismatch");

    // collect all layer2-side seeds, then mask by ReLU
    Vector g2(stack.layer2.size(), 0.0);
    if (!d_layer2.empty())
        for (std::size_t i = 0; i < g2.size(); ++i) g2[i] = d_layer2[i];
    if (!d_pooled.empty()) {
        const double inv = 1.0 / static_cast<double>(n2);
        for (int c = 0; c < kLayer2Channels; ++c) {
            const double g = d_pooled[kLayer1Channels + c] * inv;
            if (g == 0.0) continue;
            for (std::size_t i = 0; i < n2; ++i) g2[c * n2 + i] += g;
        }
    }
    if (!d_grid.empty()) {
        const int cell = stack.h2 / kGridCells;
        const double inv_cell = 1.0 / (static_cast<double>(cell) * cell);
        for (int c = 0; c < kLayer2Channels; ++c) {
            for (int gy = 0; gy < kGridCells; ++gy) {
                for (int gx = 0; gx < kGridCells; ++gx) {
                    const double g =
                        d_grid[(static_cast<std::size_t>(c) * kGridCells + gy) * kGridCells + gx] *
                        inv_cell;
                    if (g == 0.0) continue;
                    for (int y = gy * cell; y < (gy + 1) * cell; ++y)
                        for (int x = gx * cell; x < (gx + 1) * cell; ++x)
                            g2[(static_cast<std::size_t>(c) * stack.h2 + y) * stack.w2 + x] += g;
                }
            }
        }
    }
    for (std::size_t i = 0; i < g2.size(); ++i)
        if (stack.layer2[i] <= 0.0) g2[i] = 0.0;

    Vector g1;
    conv_backward(g2, kLayer2Channels, stack.h2, stack.w2, conv2_, kLayer1Channels, g1, stack.h1,
                  stack.w1);
    if (!d_layer1.empty())
        for (std::size_t i = 0; i < g1.size(); ++i) g1[i] += d_layer1[i];
    if (!d_pooled.empty()) {
        const double inv = 1.0 / static_cast<double>(n1);
        for (int c = 0; c < kLayer1Channels; ++c) {
            const double g = d_pooled[c] * inv;
            if (g == 0.0) continue;
            for (std::size_t i = 0; i < n1; ++i) g1[c * n1 + i] += g;
        }
    }
    for (std::size_t i = 0; i < g1.size(); ++i)
        if (stack.layer1[i] <= 0.0) g1[i] = 0.0;

    Image d_img(resolution_, resolution_);
    Vector d_in;
    conv_backward(g1, kLayer1Channels, stack.h1, stack.w1, conv1_, 1, d_in, resolution_,
                  resolution_);
    d_img.pixels = std::move(d_in);
    return d_img;
}

std::uint64_t derive_extractor_seed(std::uint64_t generator_seed) {
    return Rng(generator_seed).split(0xFEA2).seed();
}

double perceptual_distance(const FeatureStack& a, const FeatureStack& b) {
    if (a.h1 != b.h1 || a.h2 != b.h2 || a.w1 != b.w1 || a.w2 != b.w2)
        throw std::invalid_argument("perceptual_distance: stack shape mismatch");
    return layer_distance(a.layer1, b.layer1, FeatureExtractor::kLayer1Channels, a.h1, a.w1) +
           layer_distance(a.layer2, b.layer2, FeatureExtractor::kLayer2Channels, a.h2, a.w2);
}

double perceptual_distance_backward(const FeatureStack& a, const FeatureStack& b,
                                    Vector& d_b_layer1, Vector& d_b_layer2) {
    const double d = perceptual_distance(a, b);
    layer_distance_backward(a.layer1, b.layer1, FeatureExtractor::kLayer1Channels, a.h1, a.w1,
                            d_b_layer1);
    layer_distance_backward(a.layer2, b.layer2, FeatureExtractor::kLayer2Channels, a.h2, a.w2,
                            d_b_layer2);
    return d;
}

}  // namespace tace

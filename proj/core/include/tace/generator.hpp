#pragma once

#include <cstdint>

#include "tace/blob.hpp"
#include "tace/image.hpp"

namespace tace {

/// Frozen renderer parameters. decode_w maps the composited style vector to a
/// scalar intensity logit; decode_w[0] is kept positive so style channel 0
/// reads as "brightness".
struct GeneratorConfig {
    int resolution = 64;
    int style_dim = 8;
    int default_blob_count = 20;
    std::uint64_t seed = 0;
    Vector decode_w;
    double decode_b = 0.0;
    double blur_sigma = 1.0;

    /// Draws decode_w / decode_b from the seed; the same seed always yields
    /// the same generator.
    static GeneratorConfig seeded(std::uint64_t seed, int resolution = 64, int style_dim = 8,
                                  int blob_count = 20);

    void validate() const;
};

/// Gaussian opacity of one blob at image-fraction point (ux, uy):
/// sigmoid(p) * exp(-q/2) with q the squared Mahalanobis distance under the
/// blob's anisotropic covariance. Returns exactly 0 beyond q > 60.
double blob_opacity(const BlobSpatial& blob, double ux, double uy);

/// Squared Mahalanobis distance of (ux, uy) from the blob center.
double blob_mahalanobis_sq(const BlobSpatial& blob, double ux, double uy);

/// Softmax-style compositing: at every pixel the background and each blob mix
/// with weights (1, o_1, ..., o_K) / (1 + sum o). `features` is filled
/// pixel-major with style_dim channels per pixel. If `weights` is non-null it
/// receives the K+1 mixing weights per pixel (background first), which sum to
/// one by construction.
void composite_features(const BlobScene& scene, int resolution, Vector& features,
                        Vector* weights = nullptr);

/// Sparse per-blob pixel region touched during rendering (opacity cutoff box).
struct BlobFootprint {
    int x0 = 0, x1 = -1, y0 = 0, y1 = -1;
    Vector opac;  // (y1-y0+1) x (x1-x0+1), row-major; 0 where past the cutoff

    bool empty() const { return x1 < x0 || y1 < y0; }
    int width() const { return x1 - x0 + 1; }
    int height() const { return y1 - y0 + 1; }
};

/// Intermediates kept from a forward render so the backward pass does not
/// recompute them. Reusing one cache across renders avoids reallocation.
struct RenderCache {
    int resolution = 0;
    std::vector<BlobFootprint> footprints;
    Vector weight_sum;  // 1 + sum of blob opacities, per pixel
    Vector logit;       // decode_w . F + decode_b, per pixel
    Vector pre_blur;    // logistic(logit), per pixel
    Vector features;    // composited style vectors, pixel-major
    Image output;
};

Image render(const BlobScene& scene, const GeneratorConfig& config);
const Image& render(const BlobScene& scene, const GeneratorConfig& config, RenderCache& cache);

/// Pulls dL/d(output pixels) back to dL/d(scene parameters) in flattened
/// layout. `scene` and `cache` must come from the matching forward render.
Vector render_backward(const BlobScene& scene, const GeneratorConfig& config,
                       const RenderCache& cache, const Vector& d_output);

/// 5-tap Gaussian blur (sigma 1) with reflect padding, and its exact adjoint.
void gaussian_blur_5(const Vector& in, Vector& out, int width, int height);
void gaussian_blur_5_adjoint(const Vector& in, Vector& out, int width, int height);

double logistic(double z);

}  // namespace tace

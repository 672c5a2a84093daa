#pragma once

#include "tace/numerics.hpp"

namespace tace {

inline constexpr int kSpatialParams = 6;

/// Spatial parameters of one blob. Positions are image fractions, scale and
/// aspect live in log space so optimization is unconstrained, p is the
/// presence logit.
struct BlobSpatial {
    double cx = 0.0;
    double cy = 0.0;
    double log_s = 0.0;
    double log_a = 0.0;
    double theta = 0.0;
    double p = 0.0;
};

struct Blob {
    BlobSpatial spatial;
    Vector style;
};

/// Scene latent: a fixed-length list of blobs plus a background style vector.
/// The flattened layout is [blob 0: cx, cy, log_s, log_a, theta, p, style...],
/// then blob 1, ..., then bg_style. All blobs share one style dimension.
struct BlobScene {
    std::vector<Blob> blobs;
    Vector bg_style;

    int blob_count() const { return static_cast<int>(blobs.size()); }
    int style_dim() const { return static_cast<int>(bg_style.size()); }
    int flat_size() const { return blob_count() * (kSpatialParams + style_dim()) + style_dim(); }

    Vector flatten() const;
    static BlobScene unflatten(const Vector& flat, int blob_count, int style_dim);

    /// flat-vector index of the first parameter (cx) of blob k
    static int blob_offset(int k, int style_dim) { return k * (kSpatialParams + style_dim); }
};

}  // namespace tace

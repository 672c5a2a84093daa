#include "tace/blob.hpp"

#include <stdexcept>

namespace tace {

Vector BlobScene::flatten() const {
    const int ds = style_dim();
    Vector flat;
    flat.reserve(static_cast<std::size_t>(flat_size()));
    for (const Blob& b : blobs) {
        if (static_cast<int>(b.style.size()) != ds)
            throw std::invalid_argument("BlobScene::flatten: inconsistent style dimension");
        flat.push_back(b.spatial.cx);
        flat.push_back(b.spatial.cy);
        flat.push_back(b.spatial.log_s);
        flat.push_back(b.spatial.log_a);
        flat.push_back(b.spatial.theta);
        flat.push_back(b.spatial.p);
        flat.insert(flat.end(), b.style.begin(), b.style.end());
    }
    flat.insert(flat.end(), bg_style.begin(), bg_style.end());
    return flat;
}

BlobScene BlobScene::unflatten(const Vector& flat, int blob_count, int style_dim) {
    if (blob_count < 0 || style_dim < 0)
        throw std::invalid_argument("BlobScene::unflatten: negative dimensions");
    const std::size_t expected =
        static_cast<std::size_t>(blob_count) * (kSpatialParams + style_dim) + style_dim;
    if (flat.size() != expected)
        throw std::invalid_argument("BlobScene::unflatten: flat vector has wrong length");

    BlobScene scene;
    scene.blobs.resize(blob_count);
    std::size_t i = 0;
    for (Blob& b : scene.blobs) {
        b.spatial.cx = flat[i++];
        b.spatial.cy = flat[i++];
        b.spatial.log_s = flat[i++];
        b.spatial.log_a = flat[i++];
        b.spatial.theta = flat[i++];
        b.spatial.p = flat[i++];
        b.style.assign(flat.begin() + i, flat.begin() + i + style_dim);
        i += style_dim;
    }
    scene.bg_style.assign(flat.begin() + i, flat.end());
    return scene;
}

}  // namespace tace

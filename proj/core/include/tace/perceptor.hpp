#pragma once

#include <cstdint>

#include "tace/image.hpp"
#include "tace/numerics.hpp"

namespace tace {

/// Activations from one extractor pass. Layers are channel-major
/// [c * H * W + y * W + x] and already rectified.
struct FeatureStack {
    int h1 = 0, w1 = 0;
    int h2 = 0, w2 = 0;
    Vector layer1;  // 8 channels, resolution/2
    Vector layer2;  // 16 channels, resolution/4
    Vector pooled;  // 24 global channel means (layer1 then layer2)
    Vector grid;    // 16 channels x 4x4 spatial cells of layer2
};

/// Two random (but seed-frozen) strided conv+bias+ReLU layers. The weights
/// and biases are never trained; they only provide a stable feature space for
/// the perceptual distance, the classifier head and the encoder input.
class FeatureExtractor {
public:
    static constexpr int kKernel = 5;
    static constexpr int kStride = 2;
    static constexpr int kPad = 2;
    static constexpr int kLayer1Channels = 8;
    static constexpr int kLayer2Channels = 16;
    static constexpr int kPooledDim = kLayer1Channels + kLayer2Channels;
    static constexpr int kGridCells = 4;
    static constexpr int kGridDim = kLayer2Channels * kGridCells * kGridCells;

    /// resolution must be a positive multiple of 16 so the 4x4 grid cells
    /// tile layer2 exactly.
    FeatureExtractor(std::uint64_t seed, int resolution);

    FeatureStack extract(const Image& img) const;

    /// Pulls gradients w.r.t. any subset of the outputs back to the input
    /// image. Empty vectors are treated as zero; otherwise sizes must match
    /// the corresponding stack fields. ReLU masks come from `stack`.
    Image backward(const FeatureStack& stack, const Vector& d_layer1, const Vector& d_layer2,
                   const Vector& d_pooled, const Vector& d_grid) const;

    int resolution() const { return resolution_; }
    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    int resolution_;
    Vector conv1_;  // [8][1][5][5]
    Vector conv2_;  // [16][8][5][5]
    Vector bias1_;  // [8], added before the first ReLU
    Vector bias2_;  // [16], added before the second ReLU
};

/// The one extractor shared by classifier, encoder and metrics is keyed off
/// the generator seed so every tool derives the same feature space from a
/// dataset without passing extra state around.
std::uint64_t derive_extractor_seed(std::uint64_t generator_seed);

/// Perceptual distance between two feature stacks: per-pixel channel
/// normalization, squared differences averaged over channels and pixels per
/// layer, summed over the two layers. Symmetric, 0 iff stacks are equal.
double perceptual_distance(const FeatureStack& a, const FeatureStack& b);

/// Same value, and the gradient w.r.t. the *second* stack's layers.
double perceptual_distance_backward(const FeatureStack& a, const FeatureStack& b,
                                    Vector& d_b_layer1, Vector& d_b_layer2);

}  // namespace tace

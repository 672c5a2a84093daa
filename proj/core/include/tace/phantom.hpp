#pragma once

#include <cstdint>

#include "tace/encoder.hpp"
#include "tace/generator.hpp"

namespace tace {

/// One synthetic study: the scene it was rendered from, the rendered image,
/// the class label and the per-sample RNG seed that produced it.
struct PhantomSample {
    BlobScene scene;
    Image image;
    int label = 0;
    std::uint64_t seed = 0;
};

/// Label rule: class 1 iff the lesion slot (last blob) is present with logit
/// >= 2. Inactive slots are parked at p = -30.
int phantom_label(const BlobScene& scene);

inline constexpr double kLesionPresenceMin = 2.0;
inline constexpr double kParkedPresence = -30.0;

/// Generates a balanced dataset of 2 * n_per_class phantoms: one organ blob,
/// one to three interior texture blobs, and (for class 1) a small bright
/// lesion whose half-peak region sits strictly inside the organ's with a
/// safety margin. Samples alternate classes (0, 1, 0, 1, ...) and each gets
/// an independent seed split from `seed`. Throws if lesion placement fails
/// after 100 attempts (the offending seed is reported).
std::vector<PhantomSample> synthesize_dataset(int n_per_class, const GeneratorConfig& gen,
                                              int blob_count, std::uint64_t seed);

/// The prior shared by the phantom sampler and the encoder (fixed background,
/// matching blob count and style dimension).
ScenePrior phantom_prior(int blob_count, int style_dim);

}  // namespace tace

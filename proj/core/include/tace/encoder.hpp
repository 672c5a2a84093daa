#pragma once

#include <array>
#include <cstdint>

#include "tace/blob.hpp"
#include "tace/classifier.hpp"
#include "tace/generator.hpp"
#include "tace/perceptor.hpp"

namespace tace {

/// Sampling ranges for scene latents. Background style is fixed (a dark
/// backdrop), spatial parameters are uniform, styles standard normal.
struct ScenePrior {
    int blob_count = 20;
    int style_dim = 8;
    double cx_lo = 0.2, cx_hi = 0.8;
    double cy_lo = 0.2, cy_hi = 0.8;
    double log_s_lo = 0.0, log_s_hi = 0.0;  // set by standard()
    double log_a_lo = -0.5, log_a_hi = 0.5;
    double theta_lo = 0.0, theta_hi = 0.0;
    double p_lo = 0.0, p_hi = 3.0;
    Vector bg_style;

    static ScenePrior standard(int blob_count = 20, int style_dim = 8);

    BlobScene sample(Rng& rng) const;
    Vector mean_flat() const;

    /// Width of each spatial sampling range (cx, cy, log_s, log_a, theta, p);
    /// used to put parameter deltas on a comparable scale.
    std::array<double, 6> spatial_ranges() const;
};

enum class EncoderPhase { untrained, pretrained, finetuned };
const char* to_string(EncoderPhase phase);

/// Affine map from the extractor's grid features to a flattened scene.
/// Weights start at zero and the offset at the prior mean, so an untrained
/// encoder predicts the prior mean for any input. Grid features are
/// standardized with statistics frozen at pretraining time.
struct EncoderModel {
    ScenePrior prior;
    std::uint64_t extractor_seed = 0;
    int resolution = 0;
    EncoderPhase phase = EncoderPhase::untrained;
    Matrix weight;
    Vector offset;
    Vector feature_mean;
    Vector feature_std;
    /// Standardized features are divided by this factor (weights carry the
    /// inverse, so the function is unchanged). Finetuning raises it to shrink
    /// Adam's effective per-step output movement; see finetune_encoder.
    double feature_gain = 1.0;

    static EncoderModel init(ScenePrior prior, std::uint64_t extractor_seed, int resolution);

    int out_dim() const {
        return prior.blob_count * (kSpatialParams + prior.style_dim) + prior.style_dim;
    }

    Vector standardize(const Vector& grid) const;
    Vector encode_flat(const Vector& grid) const;

    /// Full path image -> scene; requires a trained (at least pretrained)
    /// model and the matching extractor.
    BlobScene encode(const FeatureExtractor& extractor, const Image& img) const;
};

struct PretrainConfig {
    int steps = 5000;
    double lr = 0.002;
    int pool_size = 64;
    int batch = 0;  // <= 0: whole pool per step (deterministic descent)
};

/// Latent-regression pretraining: fit E(G(h)) ~ h on a fixed pool of scenes
/// drawn from the prior. Returns the per-step minibatch loss (mean squared
/// error per latent coordinate).
Vector pretrain_encoder(EncoderModel& model, const GeneratorConfig& gen,
                        const FeatureExtractor& extractor, Rng& rng,
                        const PretrainConfig& config = {});

struct FinetuneConfig {
    int steps = 2000;
    double lr = 0.002;
    int batch = 8;
    int gen_pool = 64;
    double lambda_lpips = 1.0;
    double lambda_latent = 0.1;
    double lambda_decision = 0.1;
};

/// Loss-term traces from finetuning. Even steps optimize reconstruction of
/// real images (pixel + perceptual + decision-feature terms), odd steps the
/// latent cycle on generated scenes.
struct FinetuneTrace {
    Vector pixel;
    Vector lpips;
    Vector decision;
    Vector latent;
};

/// Known (scene, rendered image) pairs for the latent-cycle steps. When the
/// "real" corpus is itself generator output (as with the phantom dataset),
/// passing its ground-truth pairs keeps both alternating objectives pulling
/// towards the same encoder instead of towards the generic prior.
struct LatentCyclePool {
    std::vector<BlobScene> scenes;
    std::vector<Image> images;
};

/// Finetunes on real images (even steps: pixel + perceptual + decision terms
/// through the renderer) alternated 1:1 with a latent cycle on generated
/// scenes (odd steps). Without an explicit cycle pool, `config.gen_pool`
/// scenes are drawn from the model's prior and rendered.
FinetuneTrace finetune_encoder(EncoderModel& model, const GeneratorConfig& gen,
                               const FeatureExtractor& extractor, const ClassifierModel& classifier,
                               const std::vector<Image>& real_images, Rng& rng,
                               const FinetuneConfig& config = {},
                               const LatentCyclePool* cycle = nullptr);

}  // namespace tace

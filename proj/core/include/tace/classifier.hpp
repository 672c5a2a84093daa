#pragma once

#include <cstdint>

#include "tace/perceptor.hpp"

namespace tace {

struct ClassifierTrainConfig {
    double lr = 0.001;
    int batch = 0;  // <= 0: full-batch (deterministic loss path, one step per epoch)
    int max_epochs = 10000;
    double plateau_factor = 0.5;
    int plateau_patience = 5;
    int early_stop_patience = 10;
};

struct ClassifierTrainReport {
    int epochs = 0;
    double final_lr = 0.0;
    double train_accuracy = 0.0;
    double val_accuracy = 0.0;
    Vector train_loss;  // per epoch
    Vector val_loss;
};

/// Binary classifier: affine head on the extractor's 24 pooled channel means.
/// After training the head is frozen; classification never mutates it.
class ClassifierModel {
public:
    struct Decision {
        double probability = 0.0;
        double logit = 0.0;
        Vector features;  // the pooled vector the decision was taken on
    };

    ClassifierModel() = default;
    ClassifierModel(Vector weights, double bias, std::uint64_t extractor_seed, int resolution);

    Decision classify(const FeatureExtractor& extractor, const Image& img) const;
    Decision classify_stack(const FeatureStack& stack) const;

    bool frozen() const { return frozen_; }
    const Vector& weights() const { return weights_; }
    double bias() const { return bias_; }
    std::uint64_t extractor_seed() const { return extractor_seed_; }
    int resolution() const { return resolution_; }

    ClassifierTrainReport report;

private:
    friend ClassifierModel train_classifier(const FeatureExtractor&, const std::vector<Image>&,
                                            const std::vector<int>&, const std::vector<Image>&,
                                            const std::vector<int>&, Rng&,
                                            const ClassifierTrainConfig&);
    Vector weights_;
    double bias_ = 0.0;
    std::uint64_t extractor_seed_ = 0;
    int resolution_ = 0;
    bool frozen_ = false;
};

/// Numerically stable binary cross entropy from the logit.
double bce_from_logit(double logit, double target);

/// Trains the head with Adam, halving the learning rate when validation loss
/// plateaus and stopping early when it stops improving; returns the frozen
/// model holding the best-validation weights.
ClassifierModel train_classifier(const FeatureExtractor& extractor,
                                 const std::vector<Image>& train_images,
                                 const std::vector<int>& train_labels,
                                 const std::vector<Image>& val_images,
                                 const std::vector<int>& val_labels, Rng& rng,
                                 const ClassifierTrainConfig& config = {});

}  // namespace tace

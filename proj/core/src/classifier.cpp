#include "tace/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "tace/generator.hpp"

namespace tace {

double bce_from_logit(double logit, double target) {
    // max(z,0) - z*y + log(1 + exp(-|z|))
    return std::max(logit, 0.0) - logit * target + std::log1p(std::exp(-std::abs(logit)));
}

ClassifierModel::ClassifierModel(Vector weights, double bias, std::uint64_t extractor_seed,
                                 int resolution)
    : weights_(std::move(weights)),
      bias_(bias),
      extractor_seed_(extractor_seed),
      resolution_(resolution),
      frozen_(true) {
    if (static_cast<int>(weights_.size()) != FeatureExtractor::kPooledDim)
        throw std::invalid_argument("ClassifierModel: expected one weight per pooled channel");
}

ClassifierModel::Decision ClassifierModel::classify_stack(const FeatureStack& stack) const {
    if (!frozen_) throw std::logic_error("ClassifierModel: classify called before training froze it");
    Decision d;
    d.features = stack.pooled;
    d.logit = bias_ + dot(weights_, stack.pooled);
    d.probability = logistic(d.logit);
    return d;
}

ClassifierModel::Decision ClassifierModel::classify(const FeatureExtractor& extractor,
                                                    const Image& img) const {
    if (extractor.seed() != extractor_seed_ || extractor.resolution() != resolution_)
        throw std::invalid_argument("ClassifierModel: extractor does not match the trained head");
    return classify_stack(extractor.extract(img));
}

namespace {

double mean_bce(const std::vector<Vector>& feats, const std::vector<int>& labels, const Vector& w,
                double b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < feats.size(); ++i)
        acc += bce_from_logit(b + dot(w, feats[i]), static_cast<double>(labels[i]));
    return acc / static_cast<double>(feats.size());
}

double accuracy(const std::vector<Vector>& feats, const std::vector<int>& labels, const Vector& w,
                double b) {
    int hits = 0;
    for (std::size_t i = 0; i < feats.size(); ++i) {
        const int pred = (b + dot(w, feats[i])) > 0.0 ? 1 : 0;
        hits += pred == labels[i];
    }
    return static_cast<double>(hits) / static_cast<double>(feats.size());
}

}  // namespace

ClassifierModel train_classifier(const FeatureExtractor& extractor,
                                 const std::vector<Image>& train_images,
                                 const std::vector<int>& train_labels,
                                 const std::vector<Image>& val_images,
                                 const std::vector<int>& val_labels, Rng& rng,
                                 const ClassifierTrainConfig& config) {
    if (train_images.empty() || val_images.empty())
        throw std::invalid_argument("train_classifier: empty split");
    if (train_images.size() != train_labels.size() || val_images.size() != val_labels.size())
        throw std::invalid_argument("train_classifier: images/labels size mismatch");
    for (int y : train_labels)
        if (y != 0 && y != 1) throw std::invalid_argument("train_classifier: labels must be 0/1");
    for (int y : val_labels)
        if (y != 0 && y != 1) throw std::invalid_argument("train_classifier: labels must be 0/1");

    // features never change during training, extract once
    std::vector<Vector> train_feats(train_images.size()), val_feats(val_images.size());
    for (std::size_t i = 0; i < train_images.size(); ++i)
        train_feats[i] = extractor.extract(train_images[i]).pooled;
    for (std::size_t i = 0; i < val_images.size(); ++i)
        val_feats[i] = extractor.extract(val_images[i]).pooled;

    const int dim = FeatureExtractor::kPooledDim;

    // standardize on train statistics so one learning rate fits every channel.
    // The extra gain keeps the optimal weights O(1), within reach of the fixed
    // learning rate before the plateau schedule decays it. All of this is
    // folded back into the affine head before freezing.
    constexpr double kFeatureGain = 100.0;
    Vector feat_mean(dim, 0.0), feat_std(dim, 0.0);
    for (const Vector& f : train_feats)
        for (int c = 0; c < dim; ++c) feat_mean[c] += f[c];
    for (int c = 0; c < dim; ++c) feat_mean[c] /= static_cast<double>(train_feats.size());
    for (const Vector& f : train_feats)
        for (int c = 0; c < dim; ++c) feat_std[c] += (f[c] - feat_mean[c]) * (f[c] - feat_mean[c]);
    for (int c = 0; c < dim; ++c)
        feat_std[c] =
            std::max(std::sqrt(feat_std[c] / static_cast<double>(train_feats.size())), 1e-8) /
            kFeatureGain;
    auto standardize = [&](std::vector<Vector>& feats) {
        for (Vector& f : feats)
            for (int c = 0; c < dim; ++c) f[c] = (f[c] - feat_mean[c]) / feat_std[c];
    };
    standardize(train_feats);
    standardize(val_feats);
    Vector params(dim + 1, 0.0);  // weights then bias
    AdamState adam(params.size(), AdamConfig{config.lr});

    Vector best_params = params;
    double best_val = std::numeric_limits<double>::infinity();
    int plateau = 0, stall = 0;
    ClassifierTrainReport report;

    std::vector<std::size_t> order(train_feats.size());
    std::iota(order.begin(), order.end(), 0);

    const std::size_t batch = config.batch <= 0 ? order.size()
                                                : static_cast<std::size_t>(config.batch);
    const bool full_batch = batch >= order.size();

    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
        // Fisher-Yates with the run RNG so epochs stay reproducible; pointless
        // (and skipped) when each epoch is a single full-batch step
        if (!full_batch)
            for (std::size_t i = order.size(); i > 1; --i)
                std::swap(order[i - 1], order[rng.uniform_int(0, static_cast<int>(i) - 1)]);

        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t end = std::min(order.size(), start + batch);
            Vector grad(params.size(), 0.0);
            for (std::size_t j = start; j < end; ++j) {
                const Vector& f = train_feats[order[j]];
                const double y = static_cast<double>(train_labels[order[j]]);
                double z = params[dim];
                for (int c = 0; c < dim; ++c) z += params[c] * f[c];
                const double r = logistic(z) - y;
                for (int c = 0; c < dim; ++c) grad[c] += r * f[c];
                grad[dim] += r;
            }
            const double inv = 1.0 / static_cast<double>(end - start);
            for (double& g : grad) g *= inv;
            adam_step(params, grad, adam);
        }

        const Vector w(params.begin(), params.begin() + dim);
        const double b = params[dim];
        report.train_loss.push_back(mean_bce(train_feats, train_labels, w, b));
        const double val = mean_bce(val_feats, val_labels, w, b);
        report.val_loss.push_back(val);
        report.epochs = epoch + 1;

        if (val < best_val - 1e-12) {
            best_val = val;
            best_params = params;
            plateau = 0;
            stall = 0;
        } else {
            ++plateau;
            ++stall;
            if (plateau >= config.plateau_patience) {
                adam.config.lr *= config.plateau_factor;
                plateau = 0;
            }
            if (stall >= config.early_stop_patience) break;
        }
    }

    // fold the z-scoring into the head: w_c/sigma_c on raw features, bias
    // absorbs the means, so the frozen model acts on raw pooled vectors
    Vector w(dim, 0.0);
    double b = best_params[dim];
    for (int c = 0; c < dim; ++c) {
        w[c] = best_params[c] / feat_std[c];
        b -= best_params[c] * feat_mean[c] / feat_std[c];
    }
    ClassifierModel model(std::move(w), b, extractor.seed(), extractor.resolution());
    model.report = report;
    model.report.final_lr = adam.config.lr;
    model.report.train_accuracy =
        accuracy(train_feats, train_labels,
                 Vector(best_params.begin(), best_params.begin() + dim), best_params[dim]);
    model.report.val_accuracy =
        accuracy(val_feats, val_labels, Vector(best_params.begin(), best_params.begin() + dim),
                 best_params[dim]);
    return model;
}

}  // namespace tace

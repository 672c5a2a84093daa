#include "tace/counterfactual.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace tace {

SceneObjective::SceneObjective(const Image& query, const GeneratorConfig& gen,
                               const FeatureExtractor& extractor, const ClassifierModel* classifier,
                               Terms terms)
    : gen_(gen),
      extractor_(extractor),
      classifier_(classifier),
      terms_(std::move(terms)),
      query_(query),
      blob_count_(0),
      style_dim_(gen.style_dim) {
    if (query.width != gen.resolution || query.height != gen.resolution)
        throw std::invalid_argument("SceneObjective: query size != generator resolution");
    if (extractor.resolution() != gen.resolution)
        throw std::invalid_argument("SceneObjective: extractor resolution != generator resolution");
    if (terms_.w_flip > 0.0) {
        if (!classifier_) throw std::invalid_argument("SceneObjective: flip term needs a classifier");
        if (terms_.flip_target != 0 && terms_.flip_target != 1)
            throw std::invalid_argument("SceneObjective: flip target must be 0 or 1");
    }
    if (classifier_ && classifier_->extractor_seed() != extractor.seed())
        throw std::invalid_argument("SceneObjective: classifier/extractor seed mismatch");
    if (terms_.w_anchor > 0.0 && terms_.anchor.empty())
        throw std::invalid_argument("SceneObjective: anchor term needs an anchor latent");
    query_stack_ = extractor_.extract(query_);
}

ObjectiveValue SceneObjective::evaluate(const BlobScene& scene) { return run(scene, nullptr); }

ObjectiveValue SceneObjective::evaluate(const BlobScene& scene, Vector& grad) {
    return run(scene, &grad);
}

double SceneObjective::value_flat(const Vector& flat) {
    const int K = (static_cast<int>(flat.size()) - style_dim_) / (kSpatialParams + style_dim_);
    return run(BlobScene::unflatten(flat, K, style_dim_), nullptr).total;
}

ObjectiveValue SceneObjective::run(const BlobScene& scene, Vector* grad) {
    if (scene.style_dim() != style_dim_)
        throw std::invalid_argument("SceneObjective: scene style_dim mismatch");
    blob_count_ = scene.blob_count();
    const Vector flat = scene.flatten();
    if (terms_.w_anchor > 0.0 && terms_.anchor.size() != flat.size())
        throw std::invalid_argument("SceneObjective: anchor size does not match scene");

    ObjectiveValue value;
    const Image& img = render(scene, gen_, cache_);

    Vector d_img;
    if (grad) d_img.assign(img.size(), 0.0);

    // Every distance term is a mean over its own coordinates, so the values
    // are resolution/dimension independent and the default weights compare
    // like with like (a flip term of order one competes with proximity terms
    // of order one, not with a raw sum over thousands of pixels).
    if (terms_.w_pixel > 0.0) {
        double acc = 0.0;
        const double inv_n = 1.0 / static_cast<double>(img.size());
        for (std::size_t i = 0; i < img.size(); ++i) {
            const double d = img.pixels[i] - query_.pixels[i];
            acc += d * d;
            if (grad) d_img[i] += 2.0 * terms_.w_pixel * d * inv_n;
        }
        value.pixel = acc * inv_n;
    }

    const bool need_stack = terms_.w_lpips > 0.0 || terms_.w_decision > 0.0 || terms_.w_flip > 0.0;
    if (need_stack) {
        const FeatureStack stack = extractor_.extract(img);
        Vector d_l1, d_l2, d_pooled;
        if (terms_.w_lpips > 0.0) {
            if (grad) {
                value.lpips = perceptual_distance_backward(query_stack_, stack, d_l1, d_l2);
                for (double& v : d_l1) v *= terms_.w_lpips;
                for (double& v : d_l2) v *= terms_.w_lpips;
            } else {
                value.lpips = perceptual_distance(query_stack_, stack);
            }
        }
        if (terms_.w_decision > 0.0 || terms_.w_flip > 0.0)
            d_pooled.assign(FeatureExtractor::kPooledDim, 0.0);
        if (terms_.w_decision > 0.0) {
            double acc = 0.0;
            const double inv_c = 1.0 / FeatureExtractor::kPooledDim;
            for (int c = 0; c < FeatureExtractor::kPooledDim; ++c) {
                const double d = stack.pooled[c] - query_stack_.pooled[c];
                acc += d * d;
                if (grad) d_pooled[c] += 2.0 * terms_.w_decision * d * inv_c;
            }
            value.decision = acc * inv_c;
        }
        if (terms_.w_flip > 0.0) {
            const double logit = classifier_->bias() + dot(classifier_->weights(), stack.pooled);
            value.flip = bce_from_logit(logit, static_cast<double>(terms_.flip_target));
            value.probability = logistic(logit);
            if (grad) {
                const double r = terms_.w_flip * (value.probability - terms_.flip_target);
                for (int c = 0; c < FeatureExtractor::kPooledDim; ++c)
                    d_pooled[c] += r * classifier_->weights()[c];
            }
        }
        if (grad) {
            const Image d_feat = extractor_.backward(stack, d_l1, d_l2, d_pooled, {});
            for (std::size_t i = 0; i < d_img.size(); ++i) d_img[i] += d_feat.pixels[i];
        }
    }

    if (grad) *grad = render_backward(scene, gen_, cache_, d_img);

    if (terms_.w_anchor > 0.0) {
        double acc = 0.0;
        const double inv_d = 1.0 / static_cast<double>(flat.size());
        for (std::size_t i = 0; i < flat.size(); ++i) {
            const double d = flat[i] - terms_.anchor[i];
            acc += d * d;
            if (grad) (*grad)[i] += 2.0 * terms_.w_anchor * d * inv_d;
        }
        value.anchor = acc * inv_d;
    }

    value.total = terms_.w_lpips * value.lpips + terms_.w_pixel * value.pixel +
                  terms_.w_decision * value.decision + terms_.w_anchor * value.anchor +
                  terms_.w_flip * value.flip;
    if (!std::isfinite(value.total))
        throw std::runtime_error("SceneObjective: objective is non-finite");
    return value;
}

namespace {

// flip-satisfying iterates beat non-satisfying ones; within a class, lower
// total wins (strictly, so the earliest step is kept on ties)
bool better(const ObjectiveValue& a, const ObjectiveValue& b, bool prefer_flip, int target) {
    if (prefer_flip) {
        const bool ok_a = a.probability >= 0.0 && (a.probability > 0.5) == (target == 1);
        const bool ok_b = b.probability >= 0.0 && (b.probability > 0.5) == (target == 1);
        if (ok_a != ok_b) return ok_a;
    }
    return a.total < b.total;
}

}  // namespace

OptimResult optimize_scene(SceneObjective& objective, const BlobScene& init, int steps, double lr,
                           const std::vector<std::uint8_t>& free_mask, bool prefer_flip) {
    const auto t0 = std::chrono::steady_clock::now();
    if (steps < 0) throw std::invalid_argument("optimize_scene: negative step count");

    BlobScene scene = init;
    Vector params = scene.flatten();
    if (!free_mask.empty() && free_mask.size() != params.size())
        throw std::invalid_argument("optimize_scene: free_mask size does not match scene");

    const int K = init.blob_count();
    const int ds = init.style_dim();
    AdamState adam(params.size(), AdamConfig{lr});

    OptimResult result;
    result.trace.reserve(steps + 1);
    Vector grad;
    Vector best_params = params;
    const int flip_target = objective.flip_target();

    for (int step = 0; step < steps; ++step) {
        const ObjectiveValue value = objective.evaluate(scene, grad);
        result.trace.push_back(value);
        if (step == 0 || better(value, result.best, prefer_flip, flip_target)) {
            result.best = value;
            result.best_step = step;
            best_params = params;
        }
        if (free_mask.empty())
            adam_step(params, grad, adam);
        else
            adam_step_masked(params, grad, adam, free_mask);
        scene = BlobScene::unflatten(params, K, ds);
    }
    const ObjectiveValue final_value = objective.evaluate(scene);
    result.trace.push_back(final_value);
    if (result.trace.size() == 1 || better(final_value, result.best, prefer_flip, flip_target)) {
        result.best = final_value;
        result.best_step = steps;
        best_params = params;
    }
    result.scene = BlobScene::unflatten(best_params, K, ds);
    result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

OptimResult invert_from(const Image& query, const BlobScene& init, const Vector& anchor,
                        const GeneratorConfig& gen, const FeatureExtractor& extractor,
                        const ClassifierModel& classifier, const HyperParams& hp) {
    SceneObjective::Terms terms;
    terms.w_lpips = hp.inv_lpips;
    terms.w_pixel = hp.inv_pixel;
    terms.w_decision = hp.inv_decision;
    terms.w_anchor = hp.inv_anchor;
    terms.anchor = anchor;
    SceneObjective objective(query, gen, extractor, &classifier, std::move(terms));
    return optimize_scene(objective, init, hp.steps_invert, hp.latent_lr);
}

OptimResult invert(const Image& query, const GeneratorConfig& gen, const FeatureExtractor& extractor,
                   const ClassifierModel& classifier, const EncoderModel& encoder,
                   const HyperParams& hp) {
    const BlobScene init = encoder.encode(extractor, query);
    return invert_from(query, init, init.flatten(), gen, extractor, classifier, hp);
}

std::vector<std::pair<int, double>> rank_blobs(const BlobScene& before, const BlobScene& after,
                                               const ScenePrior& prior) {
    if (before.blob_count() != after.blob_count())
        throw std::invalid_argument("rank_blobs: blob count mismatch");
    const std::array<double, 6> ranges = prior.spatial_ranges();
    std::vector<std::pair<int, double>> ranked;
    ranked.reserve(before.blob_count());
    for (int k = 0; k < before.blob_count(); ++k) {
        const BlobSpatial& a = before.blobs[k].spatial;
        const BlobSpatial& b = after.blobs[k].spatial;
        const double d[6] = {b.cx - a.cx,       b.cy - a.cy,       b.log_s - a.log_s,
                             b.log_a - a.log_a, b.theta - a.theta, b.p - a.p};
        double acc = 0.0;
        for (int j = 0; j < 6; ++j) {
            const double n = d[j] / ranges[j];
            acc += n * n;
        }
        ranked.emplace_back(k, std::sqrt(acc));
    }
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& x, const auto& y) { return x.second > y.second; });
    return ranked;
}

std::vector<int> blob_neighborhood(const BlobScene& scene, int k_star, int resolution,
                                   double radius) {
    if (k_star < 0 || k_star >= scene.blob_count())
        throw std::invalid_argument("blob_neighborhood: k_star out of range");
    if (resolution < 1 || radius <= 0.0)
        throw std::invalid_argument("blob_neighborhood: bad resolution/radius");

    const double r2 = radius * radius;
    const auto region = [&](int k) {
        std::vector<std::uint8_t> mask(static_cast<std::size_t>(resolution) * resolution, 0);
        const BlobSpatial& b = scene.blobs[k].spatial;
        for (int y = 0; y < resolution; ++y) {
            const double uy = (y + 0.5) / resolution;
            for (int x = 0; x < resolution; ++x) {
                const double ux = (x + 0.5) / resolution;
                if (blob_mahalanobis_sq(b, ux, uy) <= r2)
                    mask[static_cast<std::size_t>(y) * resolution + x] = 1;
            }
        }
        return mask;
    };

    const std::vector<std::uint8_t> star = region(k_star);
    std::vector<int> out;
    for (int k = 0; k < scene.blob_count(); ++k) {
        if (k == k_star) {
            out.push_back(k);
            continue;
        }
        const std::vector<std::uint8_t> other = region(k);
        for (std::size_t i = 0; i < star.size(); ++i) {
            if (star[i] && other[i]) {
                out.push_back(k);
                break;
            }
        }
    }
    return out;
}

const char* to_string(ExplainMode mode) {
    return mode == ExplainMode::tace ? "tace" : "unrestricted";
}

void Models::validate() const {
    if (!gen || !extractor || !classifier || !encoder)
        throw std::invalid_argument("Models: all four components are required");
    gen->validate();
    if (extractor->resolution() != gen->resolution)
        throw std::invalid_argument("Models: extractor/generator resolution mismatch");
    if (!classifier->frozen()) throw std::logic_error("Models: classifier is not frozen");
    if (classifier->extractor_seed() != extractor->seed() ||
        classifier->resolution() != extractor->resolution())
        throw std::invalid_argument("Models: classifier trained on a different extractor");
    if (encoder->phase == EncoderPhase::untrained)
        throw std::logic_error("Models: encoder is untrained");
    if (encoder->extractor_seed != extractor->seed() || encoder->resolution != gen->resolution)
        throw std::invalid_argument("Models: encoder trained on a different extractor/resolution");
    if (encoder->prior.style_dim != gen->style_dim)
        throw std::invalid_argument("Models: encoder prior style_dim != generator style_dim");
}

namespace {

// restricted counterfactual descent; the mask must cover the scene and free
// at least one parameter
OptimResult optimize_counterfactual(SceneObjective& objective, const BlobScene& scene0,
                                    const std::vector<std::uint8_t>& free_mask, int steps,
                                    double lr) {
    if (free_mask.empty())
        throw std::invalid_argument("optimize_counterfactual: empty free_mask");
    return optimize_scene(objective, scene0, steps, lr, free_mask, /*prefer_flip=*/true);
}

}  // namespace

CounterfactualResult explain(const Image& query, int target, ExplainMode mode, const Models& models,
                             const HyperParams& hp) {
    models.validate();
    if (target != 0 && target != 1) throw std::invalid_argument("explain: target must be 0 or 1");
    if (query.width != models.gen->resolution || query.height != models.gen->resolution)
        throw std::invalid_argument("explain: query size != generator resolution");

    CounterfactualResult result;
    result.mode = mode;
    result.target = target;
    result.query_probability = models.classifier->classify(*models.extractor, query).probability;

    result.invert_result =
        invert(query, *models.gen, *models.extractor, *models.classifier, *models.encoder, hp);
    result.inversion_scene = result.invert_result.scene;
    result.reconstruction = render(result.inversion_scene, *models.gen);

    SceneObjective::Terms cf_terms;
    cf_terms.w_flip = hp.cf_flip;
    cf_terms.flip_target = target;
    cf_terms.w_lpips = hp.cf_prox_image;
    cf_terms.w_pixel = hp.cf_prox_image;
    cf_terms.w_anchor = hp.cf_prox_latent;
    cf_terms.anchor = result.inversion_scene.flatten();
    SceneObjective cf_objective(query, *models.gen, *models.extractor, models.classifier,
                                std::move(cf_terms));

    const std::size_t flat_size = static_cast<std::size_t>(result.inversion_scene.flat_size());
    if (mode == ExplainMode::tace) {
        // probe with everything free to see which blob wants to move most
        result.probe_result = optimize_scene(cf_objective, result.inversion_scene, hp.steps_probe,
                                             hp.latent_lr, {}, /*prefer_flip=*/true);
        const auto ranked =
            rank_blobs(result.inversion_scene, result.probe_result.scene, models.encoder->prior);
        result.k_star = ranked.front().first;
        result.neighborhood = blob_neighborhood(result.inversion_scene, result.k_star,
                                                models.gen->resolution, hp.overlap_radius);

        result.free_mask.assign(flat_size, 0);
        const int stride = kSpatialParams + models.gen->style_dim;
        for (int k : result.neighborhood)
            for (int j = 0; j < stride; ++j)
                result.free_mask[static_cast<std::size_t>(k) * stride + j] = 1;

        result.cf_result = optimize_counterfactual(cf_objective, result.inversion_scene,
                                                   result.free_mask, hp.steps_cf, hp.latent_lr);
    } else {
        result.free_mask.assign(flat_size, 1);
        result.cf_result =
            optimize_counterfactual(cf_objective, result.inversion_scene, result.free_mask,
                                    hp.steps_probe + hp.steps_cf, hp.latent_lr);
    }

    result.cf_scene = result.cf_result.scene;
    result.cf_image = render(result.cf_scene, *models.gen);
    result.cf_probability =
        models.classifier->classify(*models.extractor, result.cf_image).probability;
    result.success = (result.cf_probability > 0.5) == (target == 1);
    return result;
}

}  // namespace tace

#include "tace/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace tace {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kStdFloor = 1e-8;
// Standardized features are clamped to this symmetric range. Statistics come
// from the pretraining pool, so features that are nearly constant there get a
// tiny divisor; inputs from a different image distribution can then blow a
// single feature up to ~1e5, which destabilizes any downstream update. The
// clamp is far outside the on-pool range (unit variance, |v| <~ 4) and only
// bites on such out-of-distribution activations.
constexpr double kFeatureClip = 16.0;
// Reparametrization applied when finetuning starts: features are divided by
// this factor and weights multiplied by it, leaving the encoder function
// unchanged. Adam moves every weight by ~lr per step regardless of gradient
// size, so a row's output shifts by ~lr * sum|feature| per step; damping the
// features keeps that shift small enough for the nonconvex render losses.
// Pretraining is purely linear and stays at unit feature scale.
constexpr double kFinetuneDamp = 2.0;

void shuffle_indices(std::vector<std::size_t>& order, Rng& rng) {
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng.uniform_int(0, static_cast<int>(i) - 1)]);
}
}  // namespace

ScenePrior ScenePrior::standard(int blob_count, int style_dim) {
    if (blob_count < 1 || style_dim < 1)
        throw std::invalid_argument("ScenePrior: blob_count and style_dim must be >= 1");
    ScenePrior prior;
    prior.blob_count = blob_count;
    prior.style_dim = style_dim;
    prior.log_s_lo = std::log(0.05);
    prior.log_s_hi = std::log(0.4);
    prior.theta_lo = -kPi;
    prior.theta_hi = kPi;
    prior.bg_style.assign(style_dim, 0.0);
    prior.bg_style[0] = -1.5;
    return prior;
}

BlobScene ScenePrior::sample(Rng& rng) const {
    BlobScene scene;
    scene.blobs.resize(blob_count);
    for (Blob& b : scene.blobs) {
        b.spatial.cx = rng.uniform(cx_lo, cx_hi);
        b.spatial.cy = rng.uniform(cy_lo, cy_hi);
        b.spatial.log_s = rng.uniform(log_s_lo, log_s_hi);
        b.spatial.log_a = rng.uniform(log_a_lo, log_a_hi);
        b.spatial.theta = rng.uniform(theta_lo, theta_hi);
        b.spatial.p = rng.uniform(p_lo, p_hi);
        b.style.resize(style_dim);
        for (double& s : b.style) s = rng.normal();
    }
    scene.bg_style = bg_style;
    return scene;
}

Vector ScenePrior::mean_flat() const {
    BlobScene scene;
    scene.blobs.resize(blob_count);
    for (Blob& b : scene.blobs) {
        b.spatial.cx = 0.5 * (cx_lo + cx_hi);
        b.spatial.cy = 0.5 * (cy_lo + cy_hi);
        b.spatial.log_s = 0.5 * (log_s_lo + log_s_hi);
        b.spatial.log_a = 0.5 * (log_a_lo + log_a_hi);
        b.spatial.theta = 0.5 * (theta_lo + theta_hi);
        b.spatial.p = 0.5 * (p_lo + p_hi);
        b.style.assign(style_dim, 0.0);
    }
    scene.bg_style = bg_style;
    return scene.flatten();
}

std::array<double, 6> ScenePrior::spatial_ranges() const {
    return {cx_hi - cx_lo,     cy_hi - cy_lo,       log_s_hi - log_s_lo,
            log_a_hi - log_a_lo, theta_hi - theta_lo, p_hi - p_lo};
}

const char* to_string(EncoderPhase phase) {
    switch (phase) {
        case EncoderPhase::untrained: return "untrained";
        case EncoderPhase::pretrained: return "pretrained";
        case EncoderPhase::finetuned: return "finetuned";
    }
    return "unknown";
}

EncoderModel EncoderModel::init(ScenePrior prior, std::uint64_t extractor_seed, int resolution) {
    EncoderModel m;
    m.prior = std::move(prior);
    m.extractor_seed = extractor_seed;
    m.resolution = resolution;
    m.offset = m.prior.mean_flat();
    m.weight = Matrix(m.out_dim(), FeatureExtractor::kGridDim);
    m.feature_mean.assign(FeatureExtractor::kGridDim, 0.0);
    m.feature_std.assign(FeatureExtractor::kGridDim, 1.0);
    return m;
}

Vector EncoderModel::standardize(const Vector& grid) const {
    if (grid.size() != feature_mean.size())
        throw std::invalid_argument("EncoderModel: grid feature size mismatch");
    Vector g(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i)
        g[i] = std::clamp((grid[i] - feature_mean[i]) / feature_std[i], -kFeatureClip,
                          kFeatureClip) /
               feature_gain;
    return g;
}

Vector EncoderModel::encode_flat(const Vector& grid) const {
    const Vector g = standardize(grid);
    Vector out = offset;
    for (int o = 0; o < weight.rows; ++o) {
        const double* row = weight.data.data() + static_cast<std::size_t>(o) * weight.cols;
        double acc = 0.0;
        for (int i = 0; i < weight.cols; ++i) acc += row[i] * g[i];
        out[o] += acc;
    }
    return out;
}

BlobScene EncoderModel::encode(const FeatureExtractor& extractor, const Image& img) const {
    if (phase == EncoderPhase::untrained)
        throw std::logic_error("EncoderModel::encode: model has not been trained");
    if (extractor.seed() != extractor_seed || extractor.resolution() != resolution)
        throw std::invalid_argument("EncoderModel::encode: extractor does not match");
    const FeatureStack stack = extractor.extract(img);
    return BlobScene::unflatten(encode_flat(stack.grid), prior.blob_count, prior.style_dim);
}

Vector pretrain_encoder(EncoderModel& model, const GeneratorConfig& gen,
                        const FeatureExtractor& extractor, Rng& rng, const PretrainConfig& config) {
    if (config.steps < 0 || config.pool_size < 1)
        throw std::invalid_argument("pretrain_encoder: bad config");
    if (config.steps == 0) return {};
    if (gen.style_dim != model.prior.style_dim)
        throw std::invalid_argument("pretrain_encoder: generator/prior style_dim mismatch");
    if (extractor.seed() != model.extractor_seed || extractor.resolution() != model.resolution ||
        gen.resolution != model.resolution)
        throw std::invalid_argument("pretrain_encoder: component resolutions/seeds disagree");

    // fixed pool of (scene, grid features) pairs
    const int pool = config.pool_size;
    std::vector<Vector> targets(pool), grids(pool);
    RenderCache cache;
    for (int i = 0; i < pool; ++i) {
        const BlobScene scene = model.prior.sample(rng);
        targets[i] = scene.flatten();
        grids[i] = extractor.extract(render(scene, gen, cache)).grid;
    }

    // standardization statistics frozen from the pool
    const int gdim = FeatureExtractor::kGridDim;
    model.feature_mean.assign(gdim, 0.0);
    model.feature_std.assign(gdim, 0.0);
    for (const Vector& g : grids)
        for (int i = 0; i < gdim; ++i) model.feature_mean[i] += g[i];
    for (int i = 0; i < gdim; ++i) model.feature_mean[i] /= pool;
    for (const Vector& g : grids)
        for (int i = 0; i < gdim; ++i) {
            const double d = g[i] - model.feature_mean[i];
            model.feature_std[i] += d * d;
        }
    for (int i = 0; i < gdim; ++i)
        model.feature_std[i] = std::max(std::sqrt(model.feature_std[i] / pool), kStdFloor);
    for (Vector& g : grids) g = model.standardize(g);

    const int out = model.out_dim();
    // parameters: weight rows then offset
    Vector params(static_cast<std::size_t>(out) * gdim + out);
    std::copy(model.weight.data.begin(), model.weight.data.end(), params.begin());
    std::copy(model.offset.begin(), model.offset.end(),
              params.begin() + static_cast<std::size_t>(out) * gdim);
    AdamState adam(params.size(), AdamConfig{config.lr});

    const int batch = config.batch <= 0 ? pool : config.batch;
    const bool full_batch = batch >= pool;
    std::vector<std::size_t> order(pool);
    std::iota(order.begin(), order.end(), 0);
    if (!full_batch) shuffle_indices(order, rng);
    std::size_t cursor = 0;

    Vector trace;
    trace.reserve(config.steps);
    Vector grad(params.size());
    Vector pred(out), resid(out);
    for (int step = 0; step < config.steps; ++step) {
        std::fill(grad.begin(), grad.end(), 0.0);
        double loss = 0.0;
        for (int b = 0; b < batch; ++b) {
            if (cursor == order.size()) {
                if (!full_batch) shuffle_indices(order, rng);
                cursor = 0;
            }
            const std::size_t idx = order[cursor++];
            const Vector& g = grids[idx];
            const Vector& h = targets[idx];
            for (int o = 0; o < out; ++o) {
                const double* row = params.data() + static_cast<std::size_t>(o) * gdim;
                double acc = params[static_cast<std::size_t>(out) * gdim + o];
                for (int i = 0; i < gdim; ++i) acc += row[i] * g[i];
                resid[o] = acc - h[o];
                loss += resid[o] * resid[o];
            }
            for (int o = 0; o < out; ++o) {
                double* grow = grad.data() + static_cast<std::size_t>(o) * gdim;
                const double r2 = 2.0 * resid[o];
                for (int i = 0; i < gdim; ++i) grow[i] += r2 * g[i];
                grad[static_cast<std::size_t>(out) * gdim + o] += r2;
            }
        }
        const double inv = 1.0 / (static_cast<double>(batch) * out);
        for (double& g : grad) g *= inv;
        adam_step(params, grad, adam);
        trace.push_back(loss * inv);
    }

    std::copy(params.begin(), params.begin() + static_cast<std::size_t>(out) * gdim,
              model.weight.data.begin());
    std::copy(params.begin() + static_cast<std::size_t>(out) * gdim, params.end(),
              model.offset.begin());
    model.phase = EncoderPhase::pretrained;
    return trace;
}

FinetuneTrace finetune_encoder(EncoderModel& model, const GeneratorConfig& gen,
                               const FeatureExtractor& extractor, const ClassifierModel& classifier,
                               const std::vector<Image>& real_images, Rng& rng,
                               const FinetuneConfig& config, const LatentCyclePool* cycle) {
    if (model.phase == EncoderPhase::untrained)
        throw std::logic_error("finetune_encoder: pretrain the model first");
    if (!classifier.frozen()) throw std::logic_error("finetune_encoder: classifier must be frozen");
    if (real_images.empty()) throw std::invalid_argument("finetune_encoder: no real images");
    if (config.steps < 0 || config.batch < 1 || config.gen_pool < 1)
        throw std::invalid_argument("finetune_encoder: bad config");
    if (cycle && cycle->scenes.size() != cycle->images.size())
        throw std::invalid_argument("finetune_encoder: cycle scenes/images size mismatch");
    if (extractor.seed() != model.extractor_seed || extractor.resolution() != model.resolution ||
        gen.resolution != model.resolution ||
        classifier.extractor_seed() != model.extractor_seed)
        throw std::invalid_argument("finetune_encoder: component resolutions/seeds disagree");

    const int out = model.out_dim();
    const int gdim = FeatureExtractor::kGridDim;
    const int K = model.prior.blob_count;
    const int ds = model.prior.style_dim;

    // function-preserving damping (see kFinetuneDamp); applied once, the
    // first time a pretrained model enters finetuning
    const bool first_entry = model.phase == EncoderPhase::pretrained;
    if (first_entry) {
        model.feature_gain *= kFinetuneDamp;
        for (double& w : model.weight.data) w *= kFinetuneDamp;
    }

    // precompute stacks of the real images (targets never change)
    std::vector<FeatureStack> real_stacks(real_images.size());
    std::vector<Vector> real_grids(real_images.size());
    for (std::size_t i = 0; i < real_images.size(); ++i) {
        real_stacks[i] = extractor.extract(real_images[i]);
        real_grids[i] = model.standardize(real_stacks[i].grid);
    }

    // fixed generated pool for the latent cycle term
    const bool have_cycle = cycle && !cycle->scenes.empty();
    const std::size_t pool = have_cycle ? cycle->scenes.size()
                                        : static_cast<std::size_t>(config.gen_pool);
    std::vector<Vector> gen_targets(pool), gen_grids(pool);
    RenderCache cache;
    for (std::size_t i = 0; i < pool; ++i) {
        if (have_cycle) {
            gen_targets[i] = cycle->scenes[i].flatten();
            if (static_cast<int>(gen_targets[i].size()) != out)
                throw std::invalid_argument("finetune_encoder: cycle scene shape mismatch");
            gen_grids[i] = model.standardize(extractor.extract(cycle->images[i]).grid);
        } else {
            const BlobScene scene = model.prior.sample(rng);
            gen_targets[i] = scene.flatten();
            gen_grids[i] = model.standardize(extractor.extract(render(scene, gen, cache)).grid);
        }
    }

    // Center the regression on the finetune distribution. Adam moves each
    // parameter by at most ~lr per step, and standardized features average
    // out over a pool, so a large constant residual (latent coordinates the
    // pretraining distribution never produced) could only be paid down
    // through the offset -- far too slowly. Shift the offset once so the
    // mean prediction over the latent-cycle pool matches the mean target;
    // the iterative steps then fit deviations from that mean.
    if (first_entry) {
        Vector mean_resid(out, 0.0);
        for (std::size_t i = 0; i < pool; ++i) {
            const Vector& g = gen_grids[i];
            for (int o = 0; o < out; ++o) {
                const double* row = model.weight.data.data() + static_cast<std::size_t>(o) * gdim;
                double acc = model.offset[o];
                for (int c = 0; c < gdim; ++c) acc += row[c] * g[c];
                mean_resid[o] += gen_targets[i][o] - acc;
            }
        }
        for (int o = 0; o < out; ++o) model.offset[o] += mean_resid[o] / static_cast<double>(pool);
    }

    Vector params(static_cast<std::size_t>(out) * gdim + out);
    std::copy(model.weight.data.begin(), model.weight.data.end(), params.begin());
    std::copy(model.offset.begin(), model.offset.end(),
              params.begin() + static_cast<std::size_t>(out) * gdim);
    AdamState adam(params.size(), AdamConfig{config.lr});

    std::vector<std::size_t> real_order(real_images.size()), gen_order(gen_grids.size());
    std::iota(real_order.begin(), real_order.end(), 0);
    std::iota(gen_order.begin(), gen_order.end(), 0);
    shuffle_indices(real_order, rng);
    shuffle_indices(gen_order, rng);
    std::size_t real_cursor = 0, gen_cursor = 0;

    FinetuneTrace trace;
    Vector grad(params.size());
    Vector pred(out), d_flat(out);
    const auto predict = [&](const Vector& g) {
        for (int o = 0; o < out; ++o) {
            const double* row = params.data() + static_cast<std::size_t>(o) * gdim;
            double acc = params[static_cast<std::size_t>(out) * gdim + o];
            for (int i = 0; i < gdim; ++i) acc += row[i] * g[i];
            pred[o] = acc;
        }
    };
    const auto accumulate = [&](const Vector& g, const Vector& d_pred) {
        for (int o = 0; o < out; ++o) {
            double* grow = grad.data() + static_cast<std::size_t>(o) * gdim;
            const double d = d_pred[o];
            if (d == 0.0) continue;
            for (int i = 0; i < gdim; ++i) grow[i] += d * g[i];
            grad[static_cast<std::size_t>(out) * gdim + o] += d;
        }
    };

    for (int step = 0; step < config.steps; ++step) {
        std::fill(grad.begin(), grad.end(), 0.0);
        if (step % 2 == 0) {
            // reconstruction of real images
            double pix_acc = 0.0, lpips_acc = 0.0, dec_acc = 0.0;
            for (int b = 0; b < config.batch; ++b) {
                if (real_cursor == real_order.size()) {
                    shuffle_indices(real_order, rng);
                    real_cursor = 0;
                }
                const std::size_t idx = real_order[real_cursor++];
                predict(real_grids[idx]);
                const BlobScene scene = BlobScene::unflatten(pred, K, ds);
                const Image& img_hat = render(scene, gen, cache);
                const FeatureStack stack_hat = extractor.extract(img_hat);

                // distance terms are means over their own coordinates, the
                // same convention as the scene-optimization objective
                Vector d_img(img_hat.size());
                double pix = 0.0;
                const double inv_n = 1.0 / static_cast<double>(img_hat.size());
                for (std::size_t i = 0; i < img_hat.size(); ++i) {
                    const double d = img_hat.pixels[i] - real_images[idx].pixels[i];
                    pix += d * d;
                    d_img[i] = 2.0 * d * inv_n;
                }
                pix *= inv_n;
                Vector d_l1, d_l2;
                const double lp = perceptual_distance_backward(real_stacks[idx], stack_hat, d_l1,
                                                               d_l2);
                for (double& v : d_l1) v *= config.lambda_lpips;
                for (double& v : d_l2) v *= config.lambda_lpips;
                Vector d_pooled(FeatureExtractor::kPooledDim);
                double dec = 0.0;
                const double inv_c = 1.0 / FeatureExtractor::kPooledDim;
                for (int c = 0; c < FeatureExtractor::kPooledDim; ++c) {
                    const double d = stack_hat.pooled[c] - real_stacks[idx].pooled[c];
                    dec += d * d;
                    d_pooled[c] = 2.0 * config.lambda_decision * d * inv_c;
                }
                dec *= inv_c;
                const Image d_feat = extractor.backward(stack_hat, d_l1, d_l2, d_pooled, {});
                for (std::size_t i = 0; i < d_img.size(); ++i) d_img[i] += d_feat.pixels[i];

                d_flat = render_backward(scene, gen, cache, d_img);
                accumulate(real_grids[idx], d_flat);
                pix_acc += pix;
                lpips_acc += lp;
                dec_acc += dec;
            }
            const double inv = 1.0 / config.batch;
            for (double& g : grad) g *= inv;
            adam_step(params, grad, adam);
            trace.pixel.push_back(pix_acc * inv);
            trace.lpips.push_back(lpips_acc * inv);
            trace.decision.push_back(dec_acc * inv);
        } else {
            // latent cycle on the generated pool
            double lat_acc = 0.0;
            Vector d_pred(out);
            for (int b = 0; b < config.batch; ++b) {
                if (gen_cursor == gen_order.size()) {
                    shuffle_indices(gen_order, rng);
                    gen_cursor = 0;
                }
                const std::size_t idx = gen_order[gen_cursor++];
                predict(gen_grids[idx]);
                double lat = 0.0;
                for (int o = 0; o < out; ++o) {
                    const double r = pred[o] - gen_targets[idx][o];
                    lat += r * r;
                    d_pred[o] = config.lambda_latent * 2.0 * r / out;
                }
                accumulate(gen_grids[idx], d_pred);
                lat_acc += lat / out;
            }
            const double inv = 1.0 / config.batch;
            for (double& g : grad) g *= inv;
            adam_step(params, grad, adam);
            trace.latent.push_back(lat_acc * inv);
        }
    }

    std::copy(params.begin(), params.begin() + static_cast<std::size_t>(out) * gdim,
              model.weight.data.begin());
    std::copy(params.begin() + static_cast<std::size_t>(out) * gdim, params.end(),
              model.offset.begin());
    model.phase = EncoderPhase::finetuned;
    return trace;
}

}  // namespace tace

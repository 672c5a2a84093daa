#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>

#include "tace/classifier.hpp"
#include "tace/encoder.hpp"
#include "tace/generator.hpp"

namespace tace {

/// All tunable weights and step counts in one place. Values here are the
/// defaults; a key=value config file and TACE_* environment variables can
/// override any field (see config.hpp).
struct HyperParams {
    // encoder finetune term weights
    double lambda_lpips = 1.0;
    double lambda_latent = 0.1;
    double lambda_decision = 0.1;
    // inversion objective: perceptual, pixel, decision-feature, encoder-anchor
    double inv_lpips = 1.0;
    double inv_pixel = 1.0;
    double inv_decision = 0.1;
    double inv_anchor = 0.1;
    // counterfactual objective: class flip, image proximity, latent proximity
    double cf_flip = 1.0;
    double cf_prox_image = 1.0;
    double cf_prox_latent = 0.1;
    int steps_invert = 300;
    int steps_probe = 150;
    int steps_cf = 300;
    double latent_lr = 0.01;
    // half-peak Mahalanobis radius sqrt(2 ln 2): where opacity falls to half
    double overlap_radius = 1.1774100225154747;
};

/// One evaluation of a scene objective, split by term. Terms that are not
/// active in the current phase are 0. `probability` is the classifier output
/// when a flip term is active, otherwise -1.
struct ObjectiveValue {
    double total = 0.0;
    double lpips = 0.0;
    double pixel = 0.0;
    double decision = 0.0;
    double anchor = 0.0;
    double flip = 0.0;
    double probability = -1.0;
};

/// Weighted multi-term objective over scene latents, bound to one query
/// image. Pixel and decision-feature terms are mean squared differences; the
/// anchor term is the mean squared distance to a reference latent; the flip
/// term is binary cross entropy towards a target class. Every term is a mean
/// over its own coordinates so the weights compare like with like.
class SceneObjective {
public:
    struct Terms {
        double w_lpips = 0.0;
        double w_pixel = 0.0;
        double w_decision = 0.0;  // match the query's decision features
        double w_anchor = 0.0;
        double w_flip = 0.0;
        int flip_target = -1;  // 0 or 1 when w_flip > 0
        Vector anchor;         // flattened scene, required when w_anchor > 0
    };

    SceneObjective(const Image& query, const GeneratorConfig& gen, const FeatureExtractor& extractor,
                   const ClassifierModel* classifier, Terms terms);

    ObjectiveValue evaluate(const BlobScene& scene);
    ObjectiveValue evaluate(const BlobScene& scene, Vector& grad);

    /// Objective as a function of the flattened scene (for gradient checks).
    double value_flat(const Vector& flat);

    int blob_count() const { return blob_count_; }
    int style_dim() const { return style_dim_; }
    int flip_target() const { return terms_.flip_target; }

private:
    ObjectiveValue run(const BlobScene& scene, Vector* grad);

    const GeneratorConfig& gen_;
    const FeatureExtractor& extractor_;
    const ClassifierModel* classifier_;
    Terms terms_;
    Image query_;
    FeatureStack query_stack_;
    int blob_count_ = 0;
    int style_dim_ = 0;
    RenderCache cache_;
};

/// Adam descent over (masked) scene parameters. Records every iterate's
/// objective and returns the best one seen, including the initial point.
/// `free_mask` may be empty (everything free) but must match the flattened
/// size otherwise; an all-false mask trivially returns the initial scene.
/// When `prefer_flip` is set, iterates whose classifier output matches the
/// flip target are preferred over any that do not.
struct OptimResult {
    BlobScene scene;
    ObjectiveValue best;
    int best_step = 0;
    std::vector<ObjectiveValue> trace;
    double wall_seconds = 0.0;
};

OptimResult optimize_scene(SceneObjective& objective, const BlobScene& init, int steps, double lr,
                           const std::vector<std::uint8_t>& free_mask = {},
                           bool prefer_flip = false);

/// Latent inversion: start at the encoder's estimate and descend the
/// four-term objective (perceptual + pixel + decision-feature + anchor).
OptimResult invert(const Image& query, const GeneratorConfig& gen,
                   const FeatureExtractor& extractor, const ClassifierModel& classifier,
                   const EncoderModel& encoder, const HyperParams& hp);

/// Same inversion objective from an explicit starting scene and anchor
/// (exposed so behaviour can be tested without a trained encoder).
OptimResult invert_from(const Image& query, const BlobScene& init, const Vector& anchor,
                        const GeneratorConfig& gen, const FeatureExtractor& extractor,
                        const ClassifierModel& classifier, const HyperParams& hp);

/// Blobs ranked by how far their spatial parameters moved between two scenes,
/// each delta normalized by the prior range of that parameter. Descending
/// score; ties broken towards the smaller index.
std::vector<std::pair<int, double>> rank_blobs(const BlobScene& before, const BlobScene& after,
                                               const ScenePrior& prior);

/// Indices of blobs whose half-peak region overlaps blob k_star's half-peak
/// region on the pixel grid. k_star itself is always included.
std::vector<int> blob_neighborhood(const BlobScene& scene, int k_star, int resolution,
                                   double radius);

enum class ExplainMode { tace, unrestricted };
const char* to_string(ExplainMode mode);

struct Models {
    const GeneratorConfig* gen = nullptr;
    const FeatureExtractor* extractor = nullptr;
    const ClassifierModel* classifier = nullptr;
    const EncoderModel* encoder = nullptr;

    void validate() const;
};

/// Everything produced while explaining one query.
struct CounterfactualResult {
    ExplainMode mode = ExplainMode::tace;
    int target = 0;
    double query_probability = 0.0;
    BlobScene inversion_scene;
    Image reconstruction;
    BlobScene cf_scene;
    Image cf_image;
    double cf_probability = 0.0;
    bool success = false;
    int k_star = -1;                     // tace only
    std::vector<int> neighborhood;       // tace only
    std::vector<std::uint8_t> free_mask; // over the flattened scene
    OptimResult invert_result;
    OptimResult probe_result;  // tace only; empty trace in unrestricted mode
    OptimResult cf_result;
};

/// Full pipeline for one query: invert, (in tace mode) probe an unrestricted
/// counterfactual to rank blobs, restrict movement to the top blob and its
/// half-peak neighbors, then optimize the flip objective. In unrestricted
/// mode every parameter stays free for probe+cf steps combined.
CounterfactualResult explain(const Image& query, int target, ExplainMode mode, const Models& models,
                             const HyperParams& hp);

}  // namespace tace

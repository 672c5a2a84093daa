#include "tace/phantom.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace tace {

namespace {

constexpr double kPi = 3.14159265358979323846;

// phantom anatomy constants (image fractions / logits)
constexpr double kOrganCenterLo = 0.45, kOrganCenterHi = 0.55;
constexpr double kOrganScaleLo = 0.25, kOrganScaleHi = 0.35;
constexpr double kOrganAspectLo = -0.3, kOrganAspectHi = 0.3;
constexpr double kOrganPresenceLo = 2.5, kOrganPresenceHi = 3.0;
constexpr double kOrganBrightLo = 1.2, kOrganBrightHi = 1.6;

constexpr int kTextureMin = 1, kTextureMax = 3;
constexpr double kTextureScaleLo = 0.05, kTextureScaleHi = 0.10;
constexpr double kTexturePresenceLo = 1.0, kTexturePresenceHi = 2.0;
constexpr double kTextureBrightLo = -0.5, kTextureBrightHi = 0.3;
constexpr double kTextureRadialFrac = 0.8;  // keep texture centers off the organ rim

constexpr double kLesionScaleLo = 0.03, kLesionScaleHi = 0.07;
constexpr double kLesionAspectLo = -0.2, kLesionAspectHi = 0.2;
constexpr double kLesionBrightLo = 2.0, kLesionBrightHi = 3.0;
constexpr double kLesionMarginPx = 6.0;

constexpr double kStyleJitter = 0.15;
constexpr double kHalfPeakRadius = 1.1774100225154747;  // sqrt(2 ln 2)

// Unused slots take one canonical pose well outside the image. Constant
// values keep the slot trivially learnable for the encoder, and the center is
// far enough off-grid that the rendered footprint is empty even under sizable
// prediction noise, so parked slots contribute exactly zero opacity and
// gradient and never enter overlap neighborhoods or locality regions.
constexpr double kParkedCenter = -0.5;
constexpr double kParkedLogScale = -3.506557897319982;  // log(0.03)

void park(Blob& b, int style_dim) {
    b.spatial.cx = kParkedCenter;
    b.spatial.cy = kParkedCenter;
    b.spatial.log_s = kParkedLogScale;
    b.spatial.log_a = 0.0;
    b.spatial.theta = 0.0;
    b.spatial.p = kParkedPresence;
    b.style.assign(style_dim, 0.0);
}

void jitter_style(Vector& style, Rng& rng) {
    for (std::size_t i = 1; i < style.size(); ++i) style[i] = kStyleJitter * rng.normal();
}

// point at Mahalanobis radius rho, angle phi, in the blob's frame
void point_in_blob(const BlobSpatial& b, double rho, double phi, double& x, double& y) {
    const double s = std::exp(b.log_s), a = std::exp(b.log_a);
    const double lx = rho * std::cos(phi) * s * a;
    const double ly = rho * std::sin(phi) * s / a;
    const double c = std::cos(b.theta), sn = std::sin(b.theta);
    x = b.cx + c * lx - sn * ly;
    y = b.cy + sn * lx + c * ly;
}

}  // namespace

int phantom_label(const BlobScene& scene) {
    if (scene.blob_count() < 1) throw std::invalid_argument("phantom_label: empty scene");
    return scene.blobs.back().spatial.p >= kLesionPresenceMin ? 1 : 0;
}

ScenePrior phantom_prior(int blob_count, int style_dim) {
    return ScenePrior::standard(blob_count, style_dim);
}

std::vector<PhantomSample> synthesize_dataset(int n_per_class, const GeneratorConfig& gen,
                                              int blob_count, std::uint64_t seed) {
    if (n_per_class < 1) throw std::invalid_argument("synthesize_dataset: n_per_class must be >= 1");
    if (blob_count < kTextureMax + 2)
        throw std::invalid_argument("synthesize_dataset: need at least 5 blob slots");
    const ScenePrior prior = phantom_prior(blob_count, gen.style_dim);
    const Rng root(seed);

    std::vector<PhantomSample> samples;
    samples.reserve(2 * static_cast<std::size_t>(n_per_class));
    RenderCache cache;

    for (int i = 0; i < 2 * n_per_class; ++i) {
        const int label = i % 2;
        Rng rng = root.split(static_cast<std::uint64_t>(i));
        PhantomSample sample;
        sample.seed = rng.seed();
        sample.label = label;

        BlobScene& scene = sample.scene;
        scene.blobs.resize(blob_count);
        scene.bg_style = prior.bg_style;
        for (Blob& b : scene.blobs) park(b, gen.style_dim);

        // organ: one large mid-bright blob near the center
        Blob& organ = scene.blobs[0];
        organ.spatial.cx = rng.uniform(kOrganCenterLo, kOrganCenterHi);
        organ.spatial.cy = rng.uniform(kOrganCenterLo, kOrganCenterHi);
        organ.spatial.log_s = std::log(rng.uniform(kOrganScaleLo, kOrganScaleHi));
        organ.spatial.log_a = rng.uniform(kOrganAspectLo, kOrganAspectHi);
        organ.spatial.theta = rng.uniform(-kPi, kPi);
        organ.spatial.p = rng.uniform(kOrganPresenceLo, kOrganPresenceHi);
        organ.style[0] = rng.uniform(kOrganBrightLo, kOrganBrightHi);
        jitter_style(organ.style, rng);

        // texture blobs scattered inside the organ
        const int n_tex = rng.uniform_int(kTextureMin, kTextureMax);
        for (int t = 0; t < n_tex; ++t) {
            Blob& tex = scene.blobs[1 + t];
            const double rho = kTextureRadialFrac * kHalfPeakRadius * std::sqrt(rng.uniform());
            const double phi = rng.uniform(-kPi, kPi);
            point_in_blob(organ.spatial, rho, phi, tex.spatial.cx, tex.spatial.cy);
            tex.spatial.log_s = std::log(rng.uniform(kTextureScaleLo, kTextureScaleHi));
            tex.spatial.log_a = rng.uniform(kOrganAspectLo, kOrganAspectHi);
            tex.spatial.theta = rng.uniform(-kPi, kPi);
            tex.spatial.p = rng.uniform(kTexturePresenceLo, kTexturePresenceHi);
            tex.style[0] = rng.uniform(kTextureBrightLo, kTextureBrightHi);
            jitter_style(tex.style, rng);
        }

        if (label == 1) {
            // lesion: small bright blob whose half-peak region (plus margin)
            // must fit inside the organ's half-peak region and the image
            Blob& lesion = scene.blobs[blob_count - 1];
            const double organ_s = std::exp(organ.spatial.log_s);
            const double organ_a = std::exp(organ.spatial.log_a);
            const double organ_min_axis = organ_s * std::min(organ_a, 1.0 / organ_a);

            bool placed = false;
            for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
                const double s = rng.uniform(kLesionScaleLo, kLesionScaleHi);
                const double log_a = rng.uniform(kLesionAspectLo, kLesionAspectHi);
                const double a = std::exp(log_a);
                const double extent =
                    kHalfPeakRadius * s * std::max(a, 1.0 / a) + kLesionMarginPx / gen.resolution;
                // staying this far inside the organ (in Mahalanobis units)
                // guarantees the whole lesion region plus margin fits
                const double rho_max = kHalfPeakRadius - extent / organ_min_axis;
                if (rho_max <= 0.0) continue;
                const double rho = rho_max * std::sqrt(rng.uniform());
                const double phi = rng.uniform(-kPi, kPi);
                double cx, cy;
                point_in_blob(organ.spatial, rho, phi, cx, cy);
                const double edge = extent;
                if (cx - edge < 0.0 || cx + edge > 1.0 || cy - edge < 0.0 || cy + edge > 1.0)
                    continue;
                lesion.spatial.cx = cx;
                lesion.spatial.cy = cy;
                lesion.spatial.log_s = std::log(s);
                lesion.spatial.log_a = log_a;
                lesion.spatial.theta = rng.uniform(-kPi, kPi);
                lesion.spatial.p = rng.uniform(kOrganPresenceLo, kOrganPresenceHi);
                lesion.style[0] = rng.uniform(kLesionBrightLo, kLesionBrightHi);
                jitter_style(lesion.style, rng);
                placed = true;
            }
            if (!placed)
                throw std::runtime_error("synthesize_dataset: lesion placement failed for seed " +
                                         std::to_string(sample.seed));
        }

        if (phantom_label(scene) != label)
            throw std::logic_error("synthesize_dataset: label rule violated");
        sample.image = render(scene, gen, cache);
        samples.push_back(std::move(sample));
    }
    return samples;
}

}  // namespace tace

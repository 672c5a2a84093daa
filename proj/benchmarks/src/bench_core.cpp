// Microbenchmarks for the hot paths of the pipeline: rendering (forward and
// backward), feature extraction, perceptual distance, and one full objective
// gradient step (the unit of work inside every optimization loop).
#include <benchmark/benchmark.h>

#include "tace/blob.hpp"
#include "tace/counterfactual.hpp"
#include "tace/generator.hpp"
#include "tace/perceptor.hpp"
#include "tace/phantom.hpp"

namespace {

using namespace tace;

constexpr std::uint64_t kSeed = 7;

struct Fixture {
    GeneratorConfig gen = GeneratorConfig::seeded(kSeed);
    FeatureExtractor extractor{derive_extractor_seed(kSeed), 64};
    BlobScene scene;
    Image image;

    Fixture() {
        auto samples = synthesize_dataset(1, gen, gen.default_blob_count, kSeed);
        scene = samples[1].scene;  // the lesion-bearing sample
        image = samples[1].image;
    }
};

const Fixture& fixture() {
    static const Fixture f;
    return f;
}

void BM_Render(benchmark::State& state) {
    const Fixture& f = fixture();
    RenderCache cache;
    for (auto _ : state) {
        const Image& out = render(f.scene, f.gen, cache);
        benchmark::DoNotOptimize(out.pixels.data());
    }
}
BENCHMARK(BM_Render);

void BM_RenderBackward(benchmark::State& state) {
    const Fixture& f = fixture();
    RenderCache cache;
    render(f.scene, f.gen, cache);
    Vector d_output(f.image.pixels.size(), 1.0);
    for (auto _ : state) {
        Vector grad = render_backward(f.scene, f.gen, cache, d_output);
        benchmark::DoNotOptimize(grad.data());
    }
}
BENCHMARK(BM_RenderBackward);

void BM_FeatureExtract(benchmark::State& state) {
    const Fixture& f = fixture();
    for (auto _ : state) {
        FeatureStack stack = f.extractor.extract(f.image);
        benchmark::DoNotOptimize(stack.pooled.data());
    }
}
BENCHMARK(BM_FeatureExtract);

void BM_PerceptualDistance(benchmark::State& state) {
    const Fixture& f = fixture();
    const FeatureStack a = f.extractor.extract(f.image);
    BlobScene other = f.scene;
    other.blobs[0].spatial.cx += 0.02;
    const FeatureStack b = f.extractor.extract(render(other, f.gen));
    for (auto _ : state) {
        double d = perceptual_distance(a, b);
        benchmark::DoNotOptimize(d);
    }
}
BENCHMARK(BM_PerceptualDistance);

void BM_ObjectiveGradientStep(benchmark::State& state) {
    const Fixture& f = fixture();
    SceneObjective::Terms terms;
    terms.w_lpips = 1.0;
    terms.w_pixel = 1.0;
    terms.w_decision = 0.1;
    terms.w_anchor = 0.1;
    terms.anchor = f.scene.flatten();
    SceneObjective objective(f.image, f.gen, f.extractor, nullptr, terms);
    BlobScene scene = f.scene;
    scene.blobs[0].spatial.cx += 0.01;
    Vector grad;
    for (auto _ : state) {
        ObjectiveValue v = objective.evaluate(scene, grad);
        benchmark::DoNotOptimize(v.total);
        benchmark::DoNotOptimize(grad.data());
    }
}
BENCHMARK(BM_ObjectiveGradientStep);

}  // namespace

BENCHMARK_MAIN();

#pragma once

#include <cstdint>
#include <string>

#include "tace/classifier.hpp"
#include "tace/counterfactual.hpp"
#include "tace/encoder.hpp"
#include "tace/generator.hpp"
#include "tace/phantom.hpp"

namespace tace {

// All JSON is emitted with a fixed key order and shortest-round-trip doubles,
// so identical inputs produce byte-identical files.

std::string scene_to_json(const BlobScene& scene);
BlobScene scene_from_json(const std::string& text);

void save_scene(const BlobScene& scene, const std::string& path);
BlobScene load_scene(const std::string& path);

void save_generator(const GeneratorConfig& config, const std::string& path);
GeneratorConfig load_generator(const std::string& path);

void save_classifier(const ClassifierModel& model, const std::string& path);
ClassifierModel load_classifier(const std::string& path);

void save_encoder(const EncoderModel& model, const std::string& path);
EncoderModel load_encoder(const std::string& path);

/// CounterfactualResult as JSON: scenes, indices, masks and per-term traces.
/// Timings are deliberately not part of this document (they go into separate
/// timing files) so the JSON is reproducible byte for byte.
std::string result_to_json(const CounterfactualResult& result);

/// Dataset directory: images as s<index>.pgm plus manifest.json holding
/// scenes, labels, per-sample seeds, the generator and an FNV-1a content hash.
void save_dataset(const std::string& dir, const std::vector<PhantomSample>& samples,
                  const GeneratorConfig& gen, int n_per_class, std::uint64_t seed);

struct LoadedDataset {
    std::vector<PhantomSample> samples;
    GeneratorConfig gen;
    int n_per_class = 0;
    int blob_count = 0;
    std::uint64_t seed = 0;
    std::uint64_t manifest_hash = 0;
};

LoadedDataset load_dataset(const std::string& dir);

std::uint64_t fnv1a64(const std::string& text);

}  // namespace tace

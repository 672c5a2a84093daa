#include "tace/serialize.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace tace {

using json = nlohmann::ordered_json;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return text;
}

void spit(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
    if (!out) throw std::runtime_error("write failed for " + path);
}

json scene_json(const BlobScene& scene) {
    json blobs = json::array();
    for (const Blob& b : scene.blobs) {
        blobs.push_back({{"cx", b.spatial.cx},
                         {"cy", b.spatial.cy},
                         {"log_s", b.spatial.log_s},
                         {"log_a", b.spatial.log_a},
                         {"theta", b.spatial.theta},
                         {"p", b.spatial.p},
                         {"style", b.style}});
    }
    return json{{"blob_count", scene.blob_count()},
                {"style_dim", scene.style_dim()},
                {"blobs", std::move(blobs)},
                {"bg_style", scene.bg_style}};
}

BlobScene scene_from(const json& j) {
    BlobScene scene;
    scene.bg_style = j.at("bg_style").get<Vector>();
    for (const json& jb : j.at("blobs")) {
        Blob b;
        b.spatial.cx = jb.at("cx").get<double>();
        b.spatial.cy = jb.at("cy").get<double>();
        b.spatial.log_s = jb.at("log_s").get<double>();
        b.spatial.log_a = jb.at("log_a").get<double>();
        b.spatial.theta = jb.at("theta").get<double>();
        b.spatial.p = jb.at("p").get<double>();
        b.style = jb.at("style").get<Vector>();
        scene.blobs.push_back(std::move(b));
    }
    if (j.at("blob_count").get<int>() != scene.blob_count() ||
        j.at("style_dim").get<int>() != scene.style_dim())
        throw std::runtime_error("scene JSON: inconsistent dimensions");
    return scene;
}

json generator_json(const GeneratorConfig& g) {
    return json{{"resolution", g.resolution},
                {"style_dim", g.style_dim},
                {"default_blob_count", g.default_blob_count},
                {"seed", g.seed},
                {"decode_w", g.decode_w},
                {"decode_b", g.decode_b},
                {"blur_sigma", g.blur_sigma}};
}

GeneratorConfig generator_from(const json& j) {
    GeneratorConfig g;
    g.resolution = j.at("resolution").get<int>();
    g.style_dim = j.at("style_dim").get<int>();
    g.default_blob_count = j.at("default_blob_count").get<int>();
    g.seed = j.at("seed").get<std::uint64_t>();
    g.decode_w = j.at("decode_w").get<Vector>();
    g.decode_b = j.at("decode_b").get<double>();
    g.blur_sigma = j.at("blur_sigma").get<double>();
    g.validate();
    return g;
}

json prior_json(const ScenePrior& p) {
    return json{{"blob_count", p.blob_count}, {"style_dim", p.style_dim},
                {"cx_lo", p.cx_lo},           {"cx_hi", p.cx_hi},
                {"cy_lo", p.cy_lo},           {"cy_hi", p.cy_hi},
                {"log_s_lo", p.log_s_lo},     {"log_s_hi", p.log_s_hi},
                {"log_a_lo", p.log_a_lo},     {"log_a_hi", p.log_a_hi},
                {"theta_lo", p.theta_lo},     {"theta_hi", p.theta_hi},
                {"p_lo", p.p_lo},             {"p_hi", p.p_hi},
                {"bg_style", p.bg_style}};
}

ScenePrior prior_from(const json& j) {
    ScenePrior p;
    p.blob_count = j.at("blob_count").get<int>();
    p.style_dim = j.at("style_dim").get<int>();
    p.cx_lo = j.at("cx_lo").get<double>();
    p.cx_hi = j.at("cx_hi").get<double>();
    p.cy_lo = j.at("cy_lo").get<double>();
    p.cy_hi = j.at("cy_hi").get<double>();
    p.log_s_lo = j.at("log_s_lo").get<double>();
    p.log_s_hi = j.at("log_s_hi").get<double>();
    p.log_a_lo = j.at("log_a_lo").get<double>();
    p.log_a_hi = j.at("log_a_hi").get<double>();
    p.theta_lo = j.at("theta_lo").get<double>();
    p.theta_hi = j.at("theta_hi").get<double>();
    p.p_lo = j.at("p_lo").get<double>();
    p.p_hi = j.at("p_hi").get<double>();
    p.bg_style = j.at("bg_style").get<Vector>();
    return p;
}

json trace_json(const OptimResult& r) {
    json steps = json::array();
    for (const ObjectiveValue& v : r.trace) {
        steps.push_back({{"total", v.total},
                         {"lpips", v.lpips},
                         {"pixel", v.pixel},
                         {"decision", v.decision},
                         {"anchor", v.anchor},
                         {"flip", v.flip},
                         {"probability", v.probability}});
    }
    return json{{"best_step", r.best_step},
                {"best_total", r.best.total},
                {"steps", std::move(steps)}};
}

}  // namespace

std::string scene_to_json(const BlobScene& scene) { return scene_json(scene).dump(2) + "\n"; }

BlobScene scene_from_json(const std::string& text) { return scene_from(json::parse(text)); }

void save_scene(const BlobScene& scene, const std::string& path) { spit(path, scene_to_json(scene)); }

BlobScene load_scene(const std::string& path) { return scene_from_json(slurp(path)); }

void save_generator(const GeneratorConfig& config, const std::string& path) {
    spit(path, generator_json(config).dump(2) + "\n");
}

GeneratorConfig load_generator(const std::string& path) {
    return generator_from(json::parse(slurp(path)));
}

void save_classifier(const ClassifierModel& model, const std::string& path) {
    if (!model.frozen()) throw std::logic_error("save_classifier: model is not frozen");
    const json j{{"weights", model.weights()},
                 {"bias", model.bias()},
                 {"extractor_seed", model.extractor_seed()},
                 {"resolution", model.resolution()},
                 {"report",
                  {{"epochs", model.report.epochs},
                   {"final_lr", model.report.final_lr},
                   {"train_accuracy", model.report.train_accuracy},
                   {"val_accuracy", model.report.val_accuracy}}}};
    spit(path, j.dump(2) + "\n");
}

ClassifierModel load_classifier(const std::string& path) {
    const json j = json::parse(slurp(path));
    ClassifierModel model(j.at("weights").get<Vector>(), j.at("bias").get<double>(),
                          j.at("extractor_seed").get<std::uint64_t>(),
                          j.at("resolution").get<int>());
    const json& r = j.at("report");
    model.report.epochs = r.at("epochs").get<int>();
    model.report.final_lr = r.at("final_lr").get<double>();
    model.report.train_accuracy = r.at("train_accuracy").get<double>();
    model.report.val_accuracy = r.at("val_accuracy").get<double>();
    return model;
}

void save_encoder(const EncoderModel& model, const std::string& path) {
    const json j{{"prior", prior_json(model.prior)},
                 {"extractor_seed", model.extractor_seed},
                 {"resolution", model.resolution},
                 {"phase", to_string(model.phase)},
                 {"weight_rows", model.weight.rows},
                 {"weight_cols", model.weight.cols},
                 {"weight", model.weight.data},
                 {"offset", model.offset},
                 {"feature_mean", model.feature_mean},
                 {"feature_std", model.feature_std},
                 {"feature_gain", model.feature_gain}};
    spit(path, j.dump(2) + "\n");
}

EncoderModel load_encoder(const std::string& path) {
    const json j = json::parse(slurp(path));
    EncoderModel model;
    model.prior = prior_from(j.at("prior"));
    model.extractor_seed = j.at("extractor_seed").get<std::uint64_t>();
    model.resolution = j.at("resolution").get<int>();
    const std::string phase = j.at("phase").get<std::string>();
    if (phase == "untrained")
        model.phase = EncoderPhase::untrained;
    else if (phase == "pretrained")
        model.phase = EncoderPhase::pretrained;
    else if (phase == "finetuned")
        model.phase = EncoderPhase::finetuned;
    else
        throw std::runtime_error("encoder JSON: unknown phase " + phase);
    model.weight = Matrix(j.at("weight_rows").get<int>(), j.at("weight_cols").get<int>());
    model.weight.data = j.at("weight").get<Vector>();
    if (model.weight.data.size() !=
        static_cast<std::size_t>(model.weight.rows) * model.weight.cols)
        throw std::runtime_error("encoder JSON: weight size mismatch");
    model.offset = j.at("offset").get<Vector>();
    model.feature_mean = j.at("feature_mean").get<Vector>();
    model.feature_std = j.at("feature_std").get<Vector>();
    model.feature_gain = j.value("feature_gain", 1.0);
    if (static_cast<int>(model.offset.size()) != model.out_dim())
        throw std::runtime_error("encoder JSON: offset size mismatch");
    return model;
}

std::string result_to_json(const CounterfactualResult& result) {
    json j{{"mode", to_string(result.mode)},
           {"target", result.target},
           {"query_probability", result.query_probability},
           {"cf_probability", result.cf_probability},
           {"success", result.success},
           {"k_star", result.k_star},
           {"neighborhood", result.neighborhood},
           {"free_mask", result.free_mask},
           {"inversion_scene", scene_json(result.inversion_scene)},
           {"cf_scene", scene_json(result.cf_scene)},
           {"traces",
            {{"invert", trace_json(result.invert_result)},
             {"probe", trace_json(result.probe_result)},
             {"cf", trace_json(result.cf_result)}}}};
    return j.dump(2) + "\n";
}

std::uint64_t fnv1a64(const std::string& text) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

namespace {

std::string sample_filename(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "s%06d.pgm", index);
    return buf;
}

}  // namespace

void save_dataset(const std::string& dir, const std::vector<PhantomSample>& samples,
                  const GeneratorConfig& gen, int n_per_class, std::uint64_t seed) {
    std::filesystem::create_directories(dir);
    json jsamples = json::array();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const std::string file = sample_filename(static_cast<int>(i));
        save_pgm(samples[i].image, dir + "/" + file);
        jsamples.push_back({{"file", file},
                            {"label", samples[i].label},
                            {"seed", samples[i].seed},
                            {"scene", scene_json(samples[i].scene)}});
    }
    json manifest{{"n_per_class", n_per_class},
                  {"resolution", gen.resolution},
                  {"blob_count", samples.empty() ? 0 : samples.front().scene.blob_count()},
                  {"style_dim", gen.style_dim},
                  {"seed", seed},
                  {"generator", generator_json(gen)},
                  {"samples", jsamples}};
    manifest["manifest_hash"] = fnv1a64(jsamples.dump());
    spit(dir + "/manifest.json", manifest.dump(2) + "\n");
}

LoadedDataset load_dataset(const std::string& dir) {
    const json manifest = json::parse(slurp(dir + "/manifest.json"));
    LoadedDataset data;
    data.n_per_class = manifest.at("n_per_class").get<int>();
    data.blob_count = manifest.at("blob_count").get<int>();
    data.seed = manifest.at("seed").get<std::uint64_t>();
    data.gen = generator_from(manifest.at("generator"));
    data.manifest_hash = manifest.at("manifest_hash").get<std::uint64_t>();
    if (data.manifest_hash != fnv1a64(manifest.at("samples").dump()))
        throw std::runtime_error("load_dataset: manifest hash mismatch in " + dir);
    for (const json& js : manifest.at("samples")) {
        PhantomSample s;
        s.label = js.at("label").get<int>();
        s.seed = js.at("seed").get<std::uint64_t>();
        s.scene = scene_from(js.at("scene"));
        s.image = load_pgm(dir + "/" + js.at("file").get<std::string>());
        data.samples.push_back(std::move(s));
    }
    return data;
}

}  // namespace tace

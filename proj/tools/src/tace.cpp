// Command-line front end for the counterfactual pipeline.
//
// A dataset directory is what `synth` writes: PGMs + manifest.json +
// generator.json. A models directory holds generator.json, classifier.json
// and encoder.json. Hyperparameters come from built-in defaults, then an
// optional --config key=value file, then TACE_* environment variables.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "tace/config.hpp"
#include "tace/evaluate.hpp"
#include "tace/serialize.hpp"

namespace {

using namespace tace;

struct LoadedModels {
    GeneratorConfig gen;
    ClassifierModel classifier;
    EncoderModel encoder;
    FeatureExtractor extractor;

    explicit LoadedModels(const std::string& dir)
        : gen(load_generator(dir + "/generator.json")),
          classifier(load_classifier(dir + "/classifier.json")),
          encoder(load_encoder(dir + "/encoder.json")),
          extractor(derive_extractor_seed(gen.seed), gen.resolution) {}

    Models view() const {
        Models m;
        m.gen = &gen;
        m.extractor = &extractor;
        m.classifier = &classifier;
        m.encoder = &encoder;
        m.validate();
        return m;
    }
};

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
    if (!out) throw std::runtime_error("write failed for " + path);
}

std::string trace_csv(const OptimResult& result) {
    std::string out = "step,total,lpips,pixel,decision,anchor,flip,probability\n";
    char buf[256];
    for (std::size_t i = 0; i < result.trace.size(); ++i) {
        const ObjectiveValue& v = result.trace[i];
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", i,
                      v.total, v.lpips, v.pixel, v.decision, v.anchor, v.flip, v.probability);
        out += buf;
    }
    return out;
}

Image difference_image(const Image& a, const Image& b) {
    Image diff(a.width, a.height);
    for (std::size_t i = 0; i < diff.size(); ++i)
        diff.pixels[i] = std::abs(a.pixels[i] - b.pixels[i]);
    return diff;
}

int run_synth(const std::string& out_dir, int n_per_class, int res, int blobs,
              std::uint64_t seed) {
    const GeneratorConfig gen = GeneratorConfig::seeded(seed, res, 8, blobs);
    const auto samples = synthesize_dataset(n_per_class, gen, blobs, seed);
    save_dataset(out_dir, samples, gen, n_per_class, seed);
    save_generator(gen, out_dir + "/generator.json");
    std::cout << "wrote " << samples.size() << " samples to " << out_dir << "\n";
    return 0;
}

int run_train_classifier(const std::string& data_dir, const std::string& out_file,
                         std::uint64_t seed) {
    const LoadedDataset data = load_dataset(data_dir);
    const SplitIndices split = split_dataset(data.samples.size());
    std::vector<Image> train_x, val_x;
    std::vector<int> train_y, val_y;
    for (int i : split.train) {
        train_x.push_back(data.samples[i].image);
        train_y.push_back(data.samples[i].label);
    }
    for (int i : split.val) {
        val_x.push_back(data.samples[i].image);
        val_y.push_back(data.samples[i].label);
    }
    const FeatureExtractor extractor(derive_extractor_seed(data.gen.seed), data.gen.resolution);
    Rng rng(seed);
    const ClassifierModel model = train_classifier(extractor, train_x, train_y, val_x, val_y, rng);
    save_classifier(model, out_file);
    std::cout << "epochs=" << model.report.epochs
              << " train_acc=" << model.report.train_accuracy
              << " val_acc=" << model.report.val_accuracy << "\n";
    return 0;
}

int run_train_encoder(const std::string& data_dir, const std::string& generator_file,
                      const std::string& classifier_file, const std::string& phase, int steps,
                      const std::string& out_file, std::uint64_t seed, const HyperParams& hp) {
    const LoadedDataset data = load_dataset(data_dir);
    const GeneratorConfig gen = load_generator(generator_file);
    const FeatureExtractor extractor(derive_extractor_seed(gen.seed), gen.resolution);
    Rng rng(seed);

    if (phase == "pretrain") {
        EncoderModel model = EncoderModel::init(
            phantom_prior(data.blob_count, gen.style_dim), extractor.seed(), gen.resolution);
        PretrainConfig config;
        config.steps = steps;
        const Vector trace = pretrain_encoder(model, gen, extractor, rng, config);
        save_encoder(model, out_file);
        if (!trace.empty())
            std::cout << "pretrain loss " << trace.front() << " -> " << trace.back() << "\n";
        return 0;
    }
    if (phase == "finetune") {
        if (!std::filesystem::exists(out_file))
            throw std::runtime_error("finetune expects the pretrained encoder at " + out_file);
        EncoderModel model = load_encoder(out_file);
        const ClassifierModel classifier = load_classifier(classifier_file);
        const SplitIndices split = split_dataset(data.samples.size());
        std::vector<Image> train_x;
        LatentCyclePool cycle;  // dataset images are generator output, so the
                                // latent cycle can use their true scenes
        for (int i : split.train) {
            train_x.push_back(data.samples[i].image);
            cycle.scenes.push_back(data.samples[i].scene);
            cycle.images.push_back(data.samples[i].image);
        }
        FinetuneConfig config;
        config.steps = steps;
        config.lambda_lpips = hp.lambda_lpips;
        config.lambda_latent = hp.lambda_latent;
        config.lambda_decision = hp.lambda_decision;
        const FinetuneTrace trace = finetune_encoder(model, gen, extractor, classifier, train_x,
                                                     rng, config, &cycle);
        save_encoder(model, out_file);
        if (!trace.pixel.empty())
            std::cout << "finetune pixel loss " << trace.pixel.front() << " -> "
                      << trace.pixel.back() << "\n";
        return 0;
    }
    throw CLI::ValidationError("--phase must be pretrain or finetune");
}

int run_invert(const std::string& image_file, const std::string& models_dir,
               const std::string& out_dir, const HyperParams& hp) {
    const LoadedModels models(models_dir);
    const Image query = load_pgm(image_file);
    const OptimResult result = invert(query, models.gen, models.extractor, models.classifier,
                                      models.encoder, hp);
    std::filesystem::create_directories(out_dir);
    save_scene(result.scene, out_dir + "/scene.json");
    save_pgm(render(result.scene, models.gen), out_dir + "/reconstruction.pgm");
    write_text(out_dir + "/trace.csv", trace_csv(result));
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "{\n  \"best_step\": %d,\n  \"best_total\": %.17g,\n  \"initial_total\": "
                  "%.17g\n}\n",
                  result.best_step, result.best.total, result.trace.front().total);
    write_text(out_dir + "/summary.json", buf);
    std::cout << "best objective " << result.best.total << " at step " << result.best_step << "\n";
    return 0;
}

int run_explain(const std::string& image_file, int target, const std::string& mode_name,
                const std::string& models_dir, const std::string& out_dir, std::uint64_t seed,
                const HyperParams& hp) {
    const LoadedModels models(models_dir);
    const Image query = load_pgm(image_file);
    const ExplainMode mode =
        mode_name == "tace" ? ExplainMode::tace : ExplainMode::unrestricted;
    const CounterfactualResult result = explain(query, target, mode, models.view(), hp);

    std::filesystem::create_directories(out_dir);
    write_text(out_dir + "/result.json", result_to_json(result));
    save_pgm(query, out_dir + "/factual.pgm");
    save_pgm(result.reconstruction, out_dir + "/reconstruction.pgm");
    save_pgm(result.cf_image, out_dir + "/counterfactual.pgm");
    save_pgm(difference_image(result.cf_image, result.reconstruction), out_dir + "/difference.pgm");
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "{\n  \"seed\": %llu,\n  \"wall_invert\": %.6f,\n  \"wall_probe\": %.6f,\n  "
                  "\"wall_cf\": %.6f\n}\n",
                  static_cast<unsigned long long>(seed), result.invert_result.wall_seconds,
                  result.probe_result.wall_seconds, result.cf_result.wall_seconds);
    write_text(out_dir + "/timings.json", buf);
    std::cout << (result.success ? "success" : "no flip") << ": probability "
              << result.query_probability << " -> " << result.cf_probability << " (target "
              << target << ")\n";
    return 0;
}

int run_eval(const std::string& data_dir, const std::string& models_dir,
             const std::string& modes_arg, int n, const std::string& out_dir, std::uint64_t seed,
             const HyperParams& hp) {
    const LoadedDataset data = load_dataset(data_dir);
    const LoadedModels models(models_dir);

    std::vector<ExplainMode> modes;
    std::string rest = modes_arg;
    while (!rest.empty()) {
        const std::size_t comma = rest.find(',');
        const std::string name = rest.substr(0, comma);
        if (name == "tace")
            modes.push_back(ExplainMode::tace);
        else if (name == "unrestricted")
            modes.push_back(ExplainMode::unrestricted);
        else
            throw CLI::ValidationError("--modes entries must be tace or unrestricted");
        rest = comma == std::string::npos ? "" : rest.substr(comma + 1);
    }

    Rng rng(seed);
    const std::vector<int> queries = select_queries(data.samples.size(), n, rng);
    const EvalReport report =
        evaluate_run(data.samples, queries, modes, models.view(), hp, seed);

    std::filesystem::create_directories(out_dir);
    write_text(out_dir + "/report.csv", report_csv(report));
    write_text(out_dir + "/report.json", report_json(report));
    write_text(out_dir + "/results.json", results_json(report));
    write_text(out_dir + "/timings.csv", timings_csv(report));
    write_text(out_dir + "/timings.json", timings_json(report));
    for (const EvalModeRow& row : report.rows)
        std::cout << row.mode << ": sr=" << row.success_rate
                  << " perceptual=" << row.mean_perceptual << " fid=" << row.frechet_query_cf
                  << " wall=" << row.wall_total << "s\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"blob-scene counterfactual explanation pipeline"};
    app.require_subcommand(1);
    std::string config_file;
    app.add_option("--config", config_file, "key=value hyperparameter file")
        ->check(CLI::ExistingFile);

    std::string out_dir, data_dir, models_dir, image_file, out_file;
    std::string generator_file, classifier_file, phase, mode = "tace", modes = "tace,unrestricted";
    int n_per_class = 0, res = 64, blobs = 20, steps = 0, target = 0, n = 0;
    std::uint64_t seed = 0;

    CLI::App* synth = app.add_subcommand("synth", "generate a phantom dataset");
    synth->add_option("--out", out_dir, "output dataset directory")->required();
    synth->add_option("--n-per-class", n_per_class, "samples per class")->required();
    synth->add_option("--res", res, "image resolution (multiple of 16)");
    synth->add_option("--blobs", blobs, "scene blob slots");
    synth->add_option("--seed", seed, "dataset seed");

    CLI::App* tc = app.add_subcommand("train-classifier", "train the lesion classifier");
    tc->add_option("--data", data_dir, "dataset directory")->required();
    tc->add_option("--out", out_file, "classifier JSON output")->required();
    tc->add_option("--seed", seed, "training seed");

    CLI::App* te = app.add_subcommand("train-encoder", "pretrain or finetune the encoder");
    te->add_option("--data", data_dir, "dataset directory")->required();
    te->add_option("--generator", generator_file, "generator JSON")->required();
    te->add_option("--classifier", classifier_file, "classifier JSON")->required();
    te->add_option("--phase", phase, "pretrain or finetune")->required();
    te->add_option("--steps", steps, "training steps")->required();
    te->add_option("--out", out_file, "encoder JSON path (finetune reads and rewrites it)")
        ->required();
    te->add_option("--seed", seed, "training seed");

    CLI::App* inv = app.add_subcommand("invert", "invert one image into a scene");
    inv->add_option("--image", image_file, "query PGM")->required();
    inv->add_option("--models", models_dir, "models directory")->required();
    inv->add_option("--out", out_dir, "output directory")->required();

    CLI::App* expl = app.add_subcommand("explain", "counterfactual for one image");
    expl->add_option("--image", image_file, "query PGM")->required();
    expl->add_option("--target", target, "target class")->check(CLI::Range(0, 1))->required();
    expl->add_option("--mode", mode, "tace or unrestricted")
        ->check(CLI::IsMember({"tace", "unrestricted"}))
        ->required();
    expl->add_option("--models", models_dir, "models directory")->required();
    expl->add_option("--out", out_dir, "output directory")->required();
    expl->add_option("--seed", seed, "echoed into the timing sidecar");

    CLI::App* ev = app.add_subcommand("eval", "batch evaluation over dataset queries");
    ev->add_option("--data", data_dir, "dataset directory")->required();
    ev->add_option("--models", models_dir, "models directory")->required();
    ev->add_option("--modes", modes, "comma-separated modes");
    ev->add_option("--n", n, "number of queries")->required();
    ev->add_option("--out", out_dir, "output directory")->required();
    ev->add_option("--seed", seed, "query-selection seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        const HyperParams hp = load_hyperparams(config_file);
        if (synth->parsed()) return run_synth(out_dir, n_per_class, res, blobs, seed);
        if (tc->parsed()) return run_train_classifier(data_dir, out_file, seed);
        if (te->parsed())
            return run_train_encoder(data_dir, generator_file, classifier_file, phase, steps,
                                     out_file, seed, hp);
        if (inv->parsed()) return run_invert(image_file, models_dir, out_dir, hp);
        if (expl->parsed())
            return run_explain(image_file, target, mode, models_dir, out_dir, seed, hp);
        if (ev->parsed()) return run_eval(data_dir, models_dir, modes, n, out_dir, seed, hp);
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

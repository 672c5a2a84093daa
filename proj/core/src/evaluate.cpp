#include "tace/evaluate.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace tace {

using json = nlohmann::ordered_json;

double success_rate(const std::vector<CounterfactualResult>& results) {
    if (results.empty()) throw std::invalid_argument("success_rate: empty result list");
    int hits = 0;
    for (const CounterfactualResult& r : results) hits += r.success;
    return static_cast<double>(hits) / static_cast<double>(results.size());
}

std::vector<int> select_queries(std::size_t dataset_size, int n, Rng& rng) {
    if (n < 1 || static_cast<std::size_t>(n) > dataset_size)
        throw std::invalid_argument("select_queries: n out of range");
    std::vector<int> order(dataset_size);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng.uniform_int(0, static_cast<int>(i) - 1)]);
    order.resize(n);
    return order;
}

SplitIndices split_dataset(std::size_t n) {
    if (n < 8) throw std::invalid_argument("split_dataset: need at least 8 samples");
    std::size_t n_train = static_cast<std::size_t>(0.7 * static_cast<double>(n));
    std::size_t n_val = static_cast<std::size_t>(0.15 * static_cast<double>(n));
    n_train -= n_train % 2;  // keep cut points even so classes stay balanced
    n_val -= n_val % 2;
    if (n_train == 0 || n_val == 0 || n_train + n_val >= n)
        throw std::invalid_argument("split_dataset: degenerate split");
    SplitIndices split;
    for (std::size_t i = 0; i < n; ++i) {
        if (i < n_train)
            split.train.push_back(static_cast<int>(i));
        else if (i < n_train + n_val)
            split.val.push_back(static_cast<int>(i));
        else
            split.test.push_back(static_cast<int>(i));
    }
    return split;
}

EvalReport evaluate_run(const std::vector<PhantomSample>& data,
                        const std::vector<int>& query_indices,
                        const std::vector<ExplainMode>& modes, const Models& models,
                        const HyperParams& hp, std::uint64_t seed) {
    models.validate();
    if (query_indices.empty()) throw std::invalid_argument("evaluate_run: no queries");
    if (modes.empty()) throw std::invalid_argument("evaluate_run: no modes");
    for (int i : query_indices)
        if (i < 0 || static_cast<std::size_t>(i) >= data.size())
            throw std::invalid_argument("evaluate_run: query index out of range");

    EvalReport report;
    report.seed = seed;
    report.hp = hp;
    report.query_indices = query_indices;

    const FeatureExtractor& extractor = *models.extractor;
    const int lesion_slot = models.encoder->prior.blob_count - 1;

    // dataset corpus statistics for the secondary Fréchet pairing
    std::vector<Vector> data_pooled;
    data_pooled.reserve(data.size());
    for (const PhantomSample& s : data) data_pooled.push_back(extractor.extract(s.image).pooled);
    const GaussStats data_stats = fit_gauss_stats(data_pooled);

    for (const ExplainMode mode : modes) {
        EvalModeRow row;
        row.mode = to_string(mode);

        std::vector<Vector> query_pooled, cf_pooled;
        int successes = 0, lesion_hits = 0, tace_runs = 0;
        double perceptual_sum = 0.0;
        int aggregated = 0;

        for (const int qi : query_indices) {
            EvalQueryRecord rec;
            rec.mode = row.mode;
            rec.query_index = qi;
            rec.label = data[qi].label;
            try {
                const Image& query = data[qi].image;
                const FeatureStack query_stack = extractor.extract(query);
                const double prob =
                    models.classifier->classify_stack(query_stack).probability;
                const int target = prob > 0.5 ? 0 : 1;

                const CounterfactualResult result = explain(query, target, mode, models, hp);
                rec.target = target;
                rec.query_probability = result.query_probability;
                rec.cf_probability = result.cf_probability;
                rec.success = result.success;
                rec.k_star = result.k_star;
                rec.k_star_is_lesion = result.k_star == lesion_slot;
                rec.neighborhood = result.neighborhood;
                rec.invert_best = result.invert_result.best.total;
                rec.cf_best = result.cf_result.best.total;
                rec.wall_invert = result.invert_result.wall_seconds;
                rec.wall_probe = result.probe_result.wall_seconds;
                rec.wall_cf = result.cf_result.wall_seconds;

                const FeatureStack cf_stack = extractor.extract(result.cf_image);
                rec.perceptual_query_cf = perceptual_distance(query_stack, cf_stack);

                query_pooled.push_back(query_stack.pooled);
                cf_pooled.push_back(cf_stack.pooled);
                successes += rec.success;
                perceptual_sum += rec.perceptual_query_cf;
                ++aggregated;
                if (mode == ExplainMode::tace) {
                    ++tace_runs;
                    lesion_hits += rec.k_star_is_lesion;
                }
            } catch (const std::exception& e) {
                rec.failed = true;
                rec.error = e.what();
            }
            row.wall_total += rec.wall_invert + rec.wall_probe + rec.wall_cf;
            row.failures += rec.failed;
            report.records.push_back(std::move(rec));
        }

        row.n = static_cast<int>(query_indices.size());
        if (aggregated > 0) {
            row.success_rate = static_cast<double>(successes) / aggregated;
            row.mean_perceptual = perceptual_sum / aggregated;
        }
        if (aggregated >= 2) {
            const GaussStats q_stats = fit_gauss_stats(query_pooled);
            const GaussStats cf_stats = fit_gauss_stats(cf_pooled);
            row.frechet_query_cf = frechet_distance(q_stats, cf_stats);
            row.frechet_data_cf = frechet_distance(data_stats, cf_stats);
        }
        if (tace_runs > 0)
            row.k_star_lesion_rate = static_cast<double>(lesion_hits) / tace_runs;
        row.wall_per_cf = row.n > 0 ? row.wall_total / row.n : 0.0;
        report.rows.push_back(std::move(row));
    }
    return report;
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

json hp_json(const HyperParams& hp) {
    return json{{"lambda_lpips", hp.lambda_lpips},
                {"lambda_latent", hp.lambda_latent},
                {"lambda_decision", hp.lambda_decision},
                {"inv_lpips", hp.inv_lpips},
                {"inv_pixel", hp.inv_pixel},
                {"inv_decision", hp.inv_decision},
                {"inv_anchor", hp.inv_anchor},
                {"cf_flip", hp.cf_flip},
                {"cf_prox_image", hp.cf_prox_image},
                {"cf_prox_latent", hp.cf_prox_latent},
                {"steps_invert", hp.steps_invert},
                {"steps_probe", hp.steps_probe},
                {"steps_cf", hp.steps_cf},
                {"latent_lr", hp.latent_lr},
                {"overlap_radius", hp.overlap_radius}};
}

}  // namespace

std::string report_csv(const EvalReport& report) {
    std::string out =
        "mode,n,failures,success_rate,mean_perceptual_proxy,fid_proxy_query_cf,fid_proxy_data_cf,"
        "k_star_lesion_rate,seed\n";
    for (const EvalModeRow& r : report.rows) {
        out += r.mode + "," + std::to_string(r.n) + "," + std::to_string(r.failures) + "," +
               fmt(r.success_rate) + "," + fmt(r.mean_perceptual) + "," +
               fmt(r.frechet_query_cf) + "," + fmt(r.frechet_data_cf) + "," +
               fmt(r.k_star_lesion_rate) + "," + std::to_string(report.seed) + "\n";
    }
    return out;
}

std::string report_json(const EvalReport& report) {
    json rows = json::array();
    for (const EvalModeRow& r : report.rows) {
        rows.push_back({{"mode", r.mode},
                        {"n", r.n},
                        {"failures", r.failures},
                        {"success_rate", r.success_rate},
                        {"mean_perceptual_proxy", r.mean_perceptual},
                        {"fid_proxy_query_cf", r.frechet_query_cf},
                        {"fid_proxy_data_cf", r.frechet_data_cf},
                        {"k_star_lesion_rate", r.k_star_lesion_rate}});
    }
    const json j{{"seed", report.seed},
                 {"query_indices", report.query_indices},
                 {"hyperparams", hp_json(report.hp)},
                 {"rows", std::move(rows)}};
    return j.dump(2) + "\n";
}

std::string results_json(const EvalReport& report) {
    json records = json::array();
    for (const EvalQueryRecord& r : report.records) {
        records.push_back({{"mode", r.mode},
                           {"query_index", r.query_index},
                           {"label", r.label},
                           {"target", r.target},
                           {"query_probability", r.query_probability},
                           {"cf_probability", r.cf_probability},
                           {"success", r.success},
                           {"k_star", r.k_star},
                           {"k_star_is_lesion", r.k_star_is_lesion},
                           {"neighborhood", r.neighborhood},
                           {"perceptual_query_cf", r.perceptual_query_cf},
                           {"invert_best", r.invert_best},
                           {"cf_best", r.cf_best},
                           {"failed", r.failed},
                           {"error", r.error}});
    }
    return json{{"records", std::move(records)}}.dump(2) + "\n";
}

std::string timings_csv(const EvalReport& report) {
    std::string out = "mode,query_index,wall_invert,wall_probe,wall_cf,wall_total\n";
    for (const EvalQueryRecord& r : report.records) {
        const double total = r.wall_invert + r.wall_probe + r.wall_cf;
        out += r.mode + "," + std::to_string(r.query_index) + "," + fmt(r.wall_invert) + "," +
               fmt(r.wall_probe) + "," + fmt(r.wall_cf) + "," + fmt(total) + "\n";
    }
    return out;
}

std::string timings_json(const EvalReport& report) {
    json rows = json::array();
    for (const EvalModeRow& r : report.rows) {
        rows.push_back({{"mode", r.mode},
                        {"wall_total_seconds", r.wall_total},
                        {"wall_per_counterfactual_seconds", r.wall_per_cf}});
    }
    return json{{"rows", std::move(rows)}}.dump(2) + "\n";
}

}  // namespace tace

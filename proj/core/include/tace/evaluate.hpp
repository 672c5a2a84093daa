#pragma once

#include <string>

#include "tace/counterfactual.hpp"
#include "tace/metrics.hpp"
#include "tace/phantom.hpp"

namespace tace {

/// Fraction of results whose success flag is set. Throws on an empty list.
double success_rate(const std::vector<CounterfactualResult>& results);

/// Per-query record kept by the evaluation harness. Wall-clock fields are
/// reported only through the timing outputs, never the deterministic ones.
struct EvalQueryRecord {
    std::string mode;
    int query_index = -1;
    int label = -1;
    int target = -1;
    double query_probability = 0.0;
    double cf_probability = 0.0;
    bool success = false;
    int k_star = -1;
    bool k_star_is_lesion = false;  // diagnostic: did k* hit the lesion slot
    std::vector<int> neighborhood;
    double perceptual_query_cf = 0.0;
    double invert_best = 0.0;
    double cf_best = 0.0;
    double wall_invert = 0.0;
    double wall_probe = 0.0;
    double wall_cf = 0.0;
    bool failed = false;
    std::string error;
};

struct EvalModeRow {
    std::string mode;
    int n = 0;
    int failures = 0;
    double success_rate = 0.0;
    double mean_perceptual = 0.0;
    double frechet_query_cf = 0.0;  // primary pairing
    double frechet_data_cf = 0.0;   // whole-dataset corpus vs counterfactuals
    double k_star_lesion_rate = 0.0;
    double wall_total = 0.0;
    double wall_per_cf = 0.0;
};

struct EvalReport {
    std::vector<EvalModeRow> rows;
    std::vector<EvalQueryRecord> records;
    std::vector<int> query_indices;
    std::uint64_t seed = 0;
    HyperParams hp;
};

/// Deterministic choice of n query indices from a dataset (seeded shuffle,
/// first n taken).
std::vector<int> select_queries(std::size_t dataset_size, int n, Rng& rng);

/// Contiguous 70/15/15 split by index. Datasets alternate classes, so the
/// pieces stay balanced as long as the cuts land on even offsets (enforced).
struct SplitIndices {
    std::vector<int> train;
    std::vector<int> val;
    std::vector<int> test;
};
SplitIndices split_dataset(std::size_t n);

/// Runs explain over the selected queries for every mode and aggregates
/// SR, mean perceptual distance and Fréchet proxies (query-vs-counterfactual
/// as primary, dataset-vs-counterfactual as secondary). The flip target of
/// each query is the opposite of the classifier's prediction. Per-query
/// failures are recorded and skipped in the aggregates.
EvalReport evaluate_run(const std::vector<PhantomSample>& data,
                        const std::vector<int>& query_indices,
                        const std::vector<ExplainMode>& modes, const Models& models,
                        const HyperParams& hp, std::uint64_t seed);

// Deterministic outputs (no timing data):
std::string report_csv(const EvalReport& report);
std::string report_json(const EvalReport& report);
std::string results_json(const EvalReport& report);
// Timing sidecars (not byte-stable across runs by nature):
std::string timings_csv(const EvalReport& report);
std::string timings_json(const EvalReport& report);

}  // namespace tace

#pragma once

#include <optional>
#include <string>

#include "dmlsel/scores.hpp"

namespace dmlsel {

struct EstimatorConfig {
    EstimatorKind kind = EstimatorKind::Mar;
    int d = 1;
    std::optional<int> d_prime;      // required for ATE requests
    int k_folds = 3;
    std::uint64_t seed = 1;
    double trim_threshold = 0.01;
    NuisanceSpecs specs;
    unsigned n_threads = 1;
};

struct EffectEstimate {
    EstimatorKind kind = EstimatorKind::Mar;
    int d = 1;
    std::optional<int> d_prime;
    double estimate = 0.0;
    double se = 0.0;
    double z = 0.0;
    double p_value = 1.0;
    int n_effective = 0;
    int n_trimmed = 0;
    int k_folds = 3;
    std::uint64_t seed = 1;
    double threshold = 0.01;
};

EffectEstimate estimate_potential_outcome(const SelectionDataset& data,
                                          const EstimatorConfig& config);

// Difference of per-row scores for (d, d_prime) over one shared fold plan
// and one shared trim mask; the SE comes from the paired difference series.
EffectEstimate estimate_ate(const SelectionDataset& data,
                            const EstimatorConfig& config);

// Aggregation given externally supplied predictions (oracle plug-ins, forced
// channels). estimate_* above are crossfit + these.
EffectEstimate potential_outcome_from_predictions(
    const SelectionDataset& data, const NuisancePredictions& preds,
    const EstimatorConfig& config);

EffectEstimate ate_from_predictions(const SelectionDataset& data,
                                    const NuisancePredictions& preds,
                                    const EstimatorConfig& config);

// JSON record {estimator, d, d_prime?, estimate, se, z, p, n_effective,
// n_trimmed, K, seed, threshold}; round-trips losslessly.
std::string summarize(const EffectEstimate& estimate);
EffectEstimate effect_from_json(const std::string& json_text);

}  // namespace dmlsel

#pragma once

#include <cstdint>
#include <string>

#include "dmlsel/crossfit.hpp"

namespace dmlsel {

enum class EstimatorKind { Mar, IvTotal, IvSelected, Dynamic };

std::string estimator_name(EstimatorKind kind);
EstimatorKind estimator_from_name(const std::string& name);
CrossfitKind crossfit_kind_for(EstimatorKind kind);

// Per-observation efficient-score evaluations for one treatment level.
// `in_population` restricts the averaging population (selected rows for the
// selected-sample estimand); `trimmed` is this level's own trim mask.
struct ScoreVector {
    EstimatorKind kind = EstimatorKind::Mar;
    int level = 0;
    Eigen::VectorXd value;
    std::vector<std::uint8_t> in_population;
    std::vector<std::uint8_t> trimmed;
    int effective_n = 0;   // in-population rows minus trimmed ones
};

// Row flagged iff the propensity product behind its own inverse weight —
// treatment * selection propensity at the observed treatment level
// (treatment propensity alone for IV-selected) — falls below threshold.
// Rows whose treatment is outside the predicted levels carry no weight and
// are never flagged, so the mask is shared by every level under comparison.
std::vector<std::uint8_t> trim_mask(const SelectionDataset& data,
                                    const NuisancePredictions& preds,
                                    EstimatorKind kind, double threshold);

ScoreVector score_mar(const SelectionDataset& data,
                      const NuisancePredictions& preds, int d,
                      double trim_threshold = 0.01);

ScoreVector score_iv_total(const SelectionDataset& data,
                           const NuisancePredictions& preds, int d,
                           double trim_threshold = 0.01);

ScoreVector score_iv_selected(const SelectionDataset& data,
                              const NuisancePredictions& preds, int d,
                              double trim_threshold = 0.01);

ScoreVector score_dynamic(const SelectionDataset& data,
                          const NuisancePredictions& preds, int d,
                          double trim_threshold = 0.01);

ScoreVector score(const SelectionDataset& data,
                  const NuisancePredictions& preds, EstimatorKind kind, int d,
                  double trim_threshold = 0.01);

}  // namespace dmlsel

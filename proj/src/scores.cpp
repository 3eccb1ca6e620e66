#include "dmlsel/scores.hpp"

#include <stdexcept>

namespace dmlsel {

namespace {

double floored(double p) { return std::max(p, kClipEps); }

void require_channels(const NuisancePredictions& preds, EstimatorKind kind) {
    if (preds.outcome_mean.cols() == 0 || preds.treatment_propensity.cols() == 0) {
        throw std::invalid_argument("missing nuisance channel: outcome/propensity");
    }
    if (kind != EstimatorKind::IvSelected && preds.selection_propensity.cols() == 0) {
        throw std::invalid_argument("missing nuisance channel: selection propensity");
    }
    if ((kind == EstimatorKind::IvTotal || kind == EstimatorKind::IvSelected) &&
        preds.control_function.size() == 0) {
        throw std::invalid_argument("instrument channel absent from predictions");
    }
    if (kind == EstimatorKind::Dynamic && preds.nested_mean.cols() == 0) {
        throw std::invalid_argument("missing nuisance channel: nested mean");
    }
}

ScoreVector init_score(const SelectionDataset& data,
                       const NuisancePredictions& preds, EstimatorKind kind,
                       int d, double threshold) {
    ScoreVector s;
    s.kind = kind;
    s.level = d;
    s.value.setZero(preds.n());
    s.in_population.assign(preds.n(), 1);
    s.trimmed = trim_mask(data, preds, kind, threshold);
    return s;
}

void finish_score(ScoreVector& s) {
    int effective = 0;
    for (std::size_t i = 0; i < s.in_population.size(); ++i) {
        if (s.in_population[i] && !s.trimmed[i]) ++effective;
    }
    s.effective_n = effective;
}

}  // namespace

std::string estimator_name(EstimatorKind kind) {
    switch (kind) {
        case EstimatorKind::Mar: return "mar";
        case EstimatorKind::IvTotal: return "iv-total";
        case EstimatorKind::IvSelected: return "iv-selected";
        case EstimatorKind::Dynamic: return "dynamic";
    }
    throw std::logic_error("unknown estimator kind");
}

EstimatorKind estimator_from_name(const std::string& name) {
    if (name == "mar") return EstimatorKind::Mar;
    if (name == "iv-total") return EstimatorKind::IvTotal;
    if (name == "iv-selected") return EstimatorKind::IvSelected;
    if (name == "dynamic") return EstimatorKind::Dynamic;
    throw std::invalid_argument("unknown estimator: " + name);
}

CrossfitKind crossfit_kind_for(EstimatorKind kind) {
    switch (kind) {
        case EstimatorKind::Mar: return CrossfitKind::Mar;
        case EstimatorKind::IvTotal:
        case EstimatorKind::IvSelected: return CrossfitKind::Iv;
        case EstimatorKind::Dynamic: return CrossfitKind::Dynamic;
    }
    throw std::logic_error("unknown estimator kind");
}

std::vector<std::uint8_t> trim_mask(const SelectionDataset& data,
                                    const NuisancePredictions& preds,
                                    EstimatorKind kind, double threshold) {
    if (threshold < 0.0 || threshold >= 1.0) {
        throw std::invalid_argument("trim threshold must lie in [0, 1)");
    }
    const int n = preds.n();
    std::vector<std::uint8_t> mask(n, 0);
    if (threshold == 0.0) return mask;
    for (int i = 0; i < n; ++i) {
        const int observed = data.treatment(i);
        int col = -1;
        for (std::size_t c = 0; c < preds.levels.size(); ++c) {
            if (preds.levels[c] == observed) col = static_cast<int>(c);
        }
        if (col < 0) continue;   // this row's weight never enters
        double product = preds.treat_prob(i, observed);
        if (kind != EstimatorKind::IvSelected) {
            product *= preds.selection_propensity(i, col);
        }
        mask[i] = product < threshold ? 1 : 0;
    }
    return mask;
}

ScoreVector score_mar(const SelectionDataset& data,
                      const NuisancePredictions& preds, int d,
                      double trim_threshold) {
    require_channels(preds, EstimatorKind::Mar);
    const int col = preds.level_column(d);
    ScoreVector s =
        init_score(data, preds, EstimatorKind::Mar, d, trim_threshold);
    for (int i = 0; i < data.n(); ++i) {
        const double mean = preds.outcome_mean(i, col);
        double correction = 0.0;
        if (data.treatment(i) == d && data.selection(i) == 1) {
            const double denom = floored(preds.treat_prob(i, d)) *
                                 floored(preds.selection_propensity(i, col));
            correction = (data.outcome(i) - mean) / denom;
        }
        s.value(i) = correction + mean;
    }
    finish_score(s);
    return s;
}

ScoreVector score_iv_total(const SelectionDataset& data,
                           const NuisancePredictions& preds, int d,
                           double trim_threshold) {
    require_channels(preds, EstimatorKind::IvTotal);
    const int col = preds.level_column(d);
    ScoreVector s =
        init_score(data, preds, EstimatorKind::IvTotal, d, trim_threshold);
    for (int i = 0; i < data.n(); ++i) {
        const double mean = preds.outcome_mean(i, col);
        double correction = 0.0;
        if (data.treatment(i) == d && data.selection(i) == 1) {
            const double denom = floored(preds.treat_prob(i, d)) *
                                 floored(preds.selection_propensity(i, col));
            correction = (data.outcome(i) - mean) / denom;
        }
        s.value(i) = correction + mean;
    }
    finish_score(s);
    return s;
}

ScoreVector score_iv_selected(const SelectionDataset& data,
                              const NuisancePredictions& preds, int d,
                              double trim_threshold) {
    require_channels(preds, EstimatorKind::IvSelected);
    if (data.selection.sum() == 0) {
        throw std::invalid_argument(
            "selected-population score called with zero selected rows");
    }
    const int col = preds.level_column(d);
    ScoreVector s =
        init_score(data, preds, EstimatorKind::IvSelected, d, trim_threshold);
    for (int i = 0; i < data.n(); ++i) {
        if (data.selection(i) != 1) {
            s.in_population[i] = 0;
            continue;
        }
        const double mean = preds.outcome_mean(i, col);
        double correction = 0.0;
        if (data.treatment(i) == d) {
            correction =
                (data.outcome(i) - mean) / floored(preds.treat_prob(i, d));
        }
        s.value(i) = correction + mean;
    }
    finish_score(s);
    return s;
}

ScoreVector score_dynamic(const SelectionDataset& data,
                          const NuisancePredictions& preds, int d,
                          double trim_threshold) {
    require_channels(preds, EstimatorKind::Dynamic);
    const int col = preds.level_column(d);
    ScoreVector s =
        init_score(data, preds, EstimatorKind::Dynamic, d, trim_threshold);
    for (int i = 0; i < data.n(); ++i) {
        const double mean = preds.outcome_mean(i, col);
        const double nested = preds.nested_mean(i, col);
        double value = nested;
        if (data.treatment(i) == d) {
            const double treat = floored(preds.treat_prob(i, d));
            value += (mean - nested) / treat;
            if (data.selection(i) == 1) {
                value += (data.outcome(i) - mean) /
                         (treat * floored(preds.selection_propensity(i, col)));
            }
        }
        s.value(i) = value;
    }
    finish_score(s);
    return s;
}

ScoreVector score(const SelectionDataset& data,
                  const NuisancePredictions& preds, EstimatorKind kind, int d,
                  double trim_threshold) {
    switch (kind) {
        case EstimatorKind::Mar: return score_mar(data, preds, d, trim_threshold);
        case EstimatorKind::IvTotal:
            return score_iv_total(data, preds, d, trim_threshold);
        case EstimatorKind::IvSelected:
            return score_iv_selected(data, preds, d, trim_threshold);
        case EstimatorKind::Dynamic:
            return score_dynamic(data, preds, d, trim_threshold);
    }
    throw std::logic_error("unknown estimator kind");
}

}  // namespace dmlsel

#include "dmlsel/estimator.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "dmlsel/stats.hpp"

namespace dmlsel {

namespace {

using ordered_json = nlohmann::ordered_json;

void validate_config(const EstimatorConfig& config, bool wants_pair) {
    if (config.k_folds < 2) {
        throw std::invalid_argument("cross-fitting needs at least 2 folds");
    }
    if (config.trim_threshold < 0.0 || config.trim_threshold >= 1.0) {
        throw std::invalid_argument("trim threshold must lie in [0, 1)");
    }
    if (wants_pair) {
        if (!config.d_prime.has_value()) {
            throw std::invalid_argument("ATE request needs a comparison level");
        }
        if (*config.d_prime == config.d) {
            throw std::invalid_argument("ATE levels must differ");
        }
    }
}

std::vector<int> requested_levels(const EstimatorConfig& config) {
    std::vector<int> levels = {config.d};
    if (config.d_prime.has_value() && *config.d_prime != config.d) {
        levels.push_back(*config.d_prime);
    }
    return levels;
}

NuisancePredictions run_crossfit(const SelectionDataset& data,
                                 const EstimatorConfig& config) {
    const FoldPlan folds = make_folds(data.n(), config.k_folds, config.seed);
    const std::vector<int> levels = requested_levels(config);
    switch (crossfit_kind_for(config.kind)) {
        case CrossfitKind::Mar:
            return crossfit_mar(data, folds, config.specs, levels,
                                config.n_threads);
        case CrossfitKind::Iv:
            return crossfit_iv(data, folds, config.specs, levels,
                               config.n_threads);
        case CrossfitKind::Dynamic:
            return crossfit_dynamic(data, folds, config.specs, levels,
                                    config.n_threads);
    }
    throw std::logic_error("unknown crossfit kind");
}

// mean / SE / z / p from a per-row series restricted by keep mask
EffectEstimate aggregate(const Eigen::VectorXd& series,
                         const std::vector<std::uint8_t>& keep,
                         int n_trimmed, const EstimatorConfig& config) {
    int n_eff = 0;
    double sum = 0.0;
    for (int i = 0; i < series.size(); ++i) {
        if (keep[i]) {
            sum += series(i);
            ++n_eff;
        }
    }
    if (n_eff == 0) {
        throw std::runtime_error("no untrimmed observations left to average");
    }
    const double mean = sum / n_eff;
    double ss = 0.0;
    for (int i = 0; i < series.size(); ++i) {
        if (keep[i]) {
            const double c = series(i) - mean;
            ss += c * c;
        }
    }
    const double sd = n_eff > 1 ? std::sqrt(ss / (n_eff - 1)) : 0.0;

    EffectEstimate out;
    out.kind = config.kind;
    out.d = config.d;
    out.d_prime = config.d_prime;
    out.estimate = mean;
    out.se = sd / std::sqrt(static_cast<double>(n_eff));
    if (out.se > 0.0) {
        out.z = mean / out.se;
    } else {
        out.z = mean == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    }
    out.p_value = out.se > 0.0 ? two_sided_p(out.z) : (mean == 0.0 ? 1.0 : 0.0);
    out.n_effective = n_eff;
    out.n_trimmed = n_trimmed;
    out.k_folds = config.k_folds;
    out.seed = config.seed;
    out.threshold = config.trim_threshold;
    return out;
}

// keep = in population and untrimmed under every level being compared
std::vector<std::uint8_t> keep_mask(const std::vector<const ScoreVector*>& parts) {
    std::vector<std::uint8_t> keep(parts.front()->in_population.size(), 1);
    for (const ScoreVector* s : parts) {
        for (std::size_t i = 0; i < keep.size(); ++i) {
            if (!s->in_population[i] || s->trimmed[i]) keep[i] = 0;
        }
    }
    return keep;
}

int count_trimmed(const std::vector<const ScoreVector*>& parts) {
    int trimmed = 0;
    for (std::size_t i = 0; i < parts.front()->in_population.size(); ++i) {
        bool in_pop = true, cut = false;
        for (const ScoreVector* s : parts) {
            if (!s->in_population[i]) in_pop = false;
            if (s->trimmed[i]) cut = true;
        }
        if (in_pop && cut) ++trimmed;
    }
    return trimmed;
}

}  // namespace

EffectEstimate potential_outcome_from_predictions(
    const SelectionDataset& data, const NuisancePredictions& preds,
    const EstimatorConfig& config) {
    const ScoreVector s =
        score(data, preds, config.kind, config.d, config.trim_threshold);
    std::vector<const ScoreVector*> parts = {&s};
    EstimatorConfig single = config;
    single.d_prime.reset();
    return aggregate(s.value, keep_mask(parts), count_trimmed(parts), single);
}

EffectEstimate ate_from_predictions(const SelectionDataset& data,
                                    const NuisancePredictions& preds,
                                    const EstimatorConfig& config) {
    validate_config(config, true);
    const ScoreVector sd_ =
        score(data, preds, config.kind, config.d, config.trim_threshold);
    const ScoreVector sp =
        score(data, preds, config.kind, *config.d_prime, config.trim_threshold);
    std::vector<const ScoreVector*> parts = {&sd_, &sp};
    const Eigen::VectorXd diff = sd_.value - sp.value;
    return aggregate(diff, keep_mask(parts), count_trimmed(parts), config);
}

EffectEstimate estimate_potential_outcome(const SelectionDataset& data,
                                          const EstimatorConfig& config) {
    validate_config(config, false);
    data.validate();
    const NuisancePredictions preds = run_crossfit(data, config);
    return potential_outcome_from_predictions(data, preds, config);
}

EffectEstimate estimate_ate(const SelectionDataset& data,
                            const EstimatorConfig& config) {
    validate_config(config, true);
    data.validate();
    const NuisancePredictions preds = run_crossfit(data, config);
    return ate_from_predictions(data, preds, config);
}

std::string summarize(const EffectEstimate& estimate) {
    ordered_json j;
    j["estimator"] = estimator_name(estimate.kind);
    j["d"] = estimate.d;
    if (estimate.d_prime.has_value()) j["d_prime"] = *estimate.d_prime;
    j["estimate"] = estimate.estimate;
    j["se"] = estimate.se;
    if (std::isfinite(estimate.z)) {
        j["z"] = estimate.z;
    } else {
        j["z"] = nullptr;   // degenerate SE = 0 with nonzero estimate
    }
    j["p"] = estimate.p_value;
    j["n_effective"] = estimate.n_effective;
    j["n_trimmed"] = estimate.n_trimmed;
    j["K"] = estimate.k_folds;
    j["seed"] = estimate.seed;
    j["threshold"] = estimate.threshold;
    return j.dump(2) + "\n";
}

EffectEstimate effect_from_json(const std::string& json_text) {
    const ordered_json j = ordered_json::parse(json_text);
    EffectEstimate e;
    e.kind = estimator_from_name(j.at("estimator").get<std::string>());
    e.d = j.at("d").get<int>();
    if (j.contains("d_prime")) e.d_prime = j["d_prime"].get<int>();
    e.estimate = j.at("estimate").get<double>();
    e.se = j.at("se").get<double>();
    e.z = j.at("z").is_null() ? std::numeric_limits<double>::infinity()
                              : j.at("z").get<double>();
    e.p_value = j.at("p").get<double>();
    e.n_effective = j.at("n_effective").get<int>();
    e.n_trimmed = j.at("n_trimmed").get<int>();
    e.k_folds = j.at("K").get<int>();
    e.seed = j.at("seed").get<std::uint64_t>();
    e.threshold = j.at("threshold").get<double>();
    return e;
}

}  // namespace dmlsel

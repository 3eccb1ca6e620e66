#include "dmlsel/run_config.hpp"

#include <stdexcept>

#include <json.hpp>

#include "dmlsel/threads.hpp"

namespace dmlsel {

namespace {
using ordered_json = nlohmann::ordered_json;
}

void RunConfig::validate() const {
    if (subcommand != "estimate" && subcommand != "simulate" &&
        subcommand != "probe") {
        throw std::invalid_argument("unknown subcommand: " + subcommand);
    }
    estimator_from_name(estimator);
    if (k_folds < 2) {
        throw std::invalid_argument("K must be at least 2");
    }
    if (trim < 0.0 || trim >= 0.5) {
        throw std::invalid_argument("trim threshold must lie in [0, 0.5)");
    }
    if (d_prime.has_value() && *d_prime == d) {
        throw std::invalid_argument("ATE levels d and d_prime must differ");
    }
    if (subcommand == "simulate") {
        if (!seed.has_value()) {
            throw std::invalid_argument(
                "simulate requires an explicit seed; runs are never time-seeded");
        }
        if (replications < 1) {
            throw std::invalid_argument("at least one replication required");
        }
        design_from_name(design);
        for (const std::string& name : estimators) estimator_from_name(name);
    }
    if (subcommand == "probe") {
        design_from_name(design);
    }
    if (n_values.empty()) {
        throw std::invalid_argument("at least one sample size required");
    }
    if (learners.cv_folds < 2) {
        throw std::invalid_argument("inner CV needs at least 2 folds");
    }
}

NuisanceSpecs RunConfig::nuisance_specs() const {
    NuisanceSpecs specs;
    auto apply = [&](LearnerSpec& s) {
        s.lambda = learners.lambda.value_or(-1.0);
        s.cv_folds = learners.cv_folds;
        s.max_iter = learners.max_iter;
        s.tol = learners.tol;
    };
    apply(specs.outcome_mean);
    apply(specs.treatment_propensity);
    apply(specs.selection_propensity);
    return specs;
}

unsigned RunConfig::resolved_threads() const {
    return threads > 0 ? static_cast<unsigned>(threads) : default_threads();
}

EstimatorConfig RunConfig::estimator_config() const {
    EstimatorConfig cfg;
    cfg.kind = estimator_from_name(estimator);
    cfg.d = d;
    cfg.d_prime = d_prime;
    cfg.k_folds = k_folds;
    cfg.seed = seed.value_or(1);
    cfg.trim_threshold = trim;
    cfg.specs = nuisance_specs();
    cfg.n_threads = resolved_threads();
    return cfg;
}

SimStudyConfig RunConfig::sim_config() const {
    SimStudyConfig cfg;
    cfg.design = design_from_name(design);
    cfg.n_values = n_values;
    cfg.replications = replications;
    for (const std::string& name : estimators) {
        cfg.estimators.push_back(estimator_from_name(name));
    }
    cfg.base_seed = seed.value_or(1);
    cfg.k_folds = k_folds;
    cfg.trim_threshold = trim;
    cfg.delta_m = delta_m;
    cfg.specs = nuisance_specs();
    cfg.n_threads = resolved_threads();
    return cfg;
}

RunConfig runconfig_from_json(const std::string& text) {
    const ordered_json j = ordered_json::parse(text);
    RunConfig cfg;
    if (j.contains("subcommand")) cfg.subcommand = j["subcommand"].get<std::string>();
    if (j.contains("estimator")) cfg.estimator = j["estimator"].get<std::string>();
    if (j.contains("d")) cfg.d = j["d"].get<int>();
    if (j.contains("d_prime")) {
        if (j["d_prime"].is_null()) {
            cfg.d_prime.reset();
        } else {
            cfg.d_prime = j["d_prime"].get<int>();
        }
    }
    if (j.contains("K")) cfg.k_folds = j["K"].get<int>();
    if (j.contains("seed") && !j["seed"].is_null()) {
        cfg.seed = j["seed"].get<std::uint64_t>();
    }
    if (j.contains("trim")) cfg.trim = j["trim"].get<double>();
    if (j.contains("input")) cfg.input_path = j["input"].get<std::string>();
    if (j.contains("schema")) cfg.schema_path = j["schema"].get<std::string>();
    if (j.contains("out")) cfg.out_path = j["out"].get<std::string>();
    if (j.contains("design")) {
        if (j["design"].is_number_integer()) {
            cfg.design = std::to_string(j["design"].get<int>());
        } else {
            cfg.design = j["design"].get<std::string>();
        }
    }
    if (j.contains("reps")) cfg.replications = j["reps"].get<int>();
    if (j.contains("n")) {
        if (j["n"].is_array()) {
            cfg.n_values = j["n"].get<std::vector<int>>();
        } else {
            cfg.n_values = {j["n"].get<int>()};
        }
    }
    if (j.contains("t_grid")) cfg.t_grid = j["t_grid"].get<std::vector<double>>();
    if (j.contains("delta_m")) cfg.delta_m = j["delta_m"].get<double>();
    if (j.contains("threads")) cfg.threads = j["threads"].get<int>();
    if (j.contains("estimators")) {
        cfg.estimators = j["estimators"].get<std::vector<std::string>>();
    }
    if (j.contains("learners")) {
        const auto& l = j["learners"];
        if (l.contains("lambda") && !l["lambda"].is_null()) {
            cfg.learners.lambda = l["lambda"].get<double>();
        }
        if (l.contains("cv_folds")) cfg.learners.cv_folds = l["cv_folds"].get<int>();
        if (l.contains("max_iter")) cfg.learners.max_iter = l["max_iter"].get<int>();
        if (l.contains("tol")) cfg.learners.tol = l["tol"].get<double>();
    }
    return cfg;
}

std::string runconfig_to_json(const RunConfig& cfg) {
    ordered_json j;
    j["subcommand"] = cfg.subcommand;
    j["estimator"] = cfg.estimator;
    j["d"] = cfg.d;
    if (cfg.d_prime.has_value()) {
        j["d_prime"] = *cfg.d_prime;
    } else {
        j["d_prime"] = nullptr;
    }
    j["K"] = cfg.k_folds;
    if (cfg.seed.has_value()) {
        j["seed"] = *cfg.seed;
    } else {
        j["seed"] = nullptr;
    }
    j["trim"] = cfg.trim;
    j["input"] = cfg.input_path;
    j["schema"] = cfg.schema_path;
    j["out"] = cfg.out_path;
    j["design"] = cfg.design;
    j["reps"] = cfg.replications;
    j["n"] = cfg.n_values;
    j["t_grid"] = cfg.t_grid;
    j["delta_m"] = cfg.delta_m;
    j["threads"] = cfg.threads;
    j["estimators"] = cfg.estimators;
    ordered_json l;
    if (cfg.learners.lambda.has_value()) {
        l["lambda"] = *cfg.learners.lambda;
    } else {
        l["lambda"] = nullptr;
    }
    l["cv_folds"] = cfg.learners.cv_folds;
    l["max_iter"] = cfg.learners.max_iter;
    l["tol"] = cfg.learners.tol;
    j["learners"] = std::move(l);
    return j.dump(2) + "\n";
}

}  // namespace dmlsel

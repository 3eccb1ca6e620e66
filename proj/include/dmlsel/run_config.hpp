#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dmlsel/simulation.hpp"

namespace dmlsel {

// Declarative run description: one JSON config drives every subcommand, so a
// run is reproducible from the file alone. Parse -> serialize -> parse is the
// identity (all fields are materialized on output).
struct RunConfig {
    std::string subcommand = "estimate";   // estimate | simulate | probe
    std::string estimator = "mar";
    int d = 1;
    std::optional<int> d_prime = 0;
    int k_folds = 3;
    std::optional<std::uint64_t> seed;
    double trim = 0.01;
    std::string input_path;
    std::string schema_path;
    std::string out_path;
    std::string design = "1";
    int replications = 250;
    std::vector<int> n_values = {2000};
    std::vector<double> t_grid = {0.4, 0.2, 0.1, 0.05};
    double delta_m = 1.0;
    int threads = 0;   // 0 = hardware concurrency
    std::vector<std::string> estimators;   // simulate; empty = design default

    struct LearnerOverrides {
        std::optional<double> lambda;   // fixed penalty; absent = inner CV
        int cv_folds = 5;
        int max_iter = 1000;
        double tol = 1e-7;
    } learners;

    void validate() const;
    NuisanceSpecs nuisance_specs() const;
    EstimatorConfig estimator_config() const;
    SimStudyConfig sim_config() const;
    unsigned resolved_threads() const;
};

RunConfig runconfig_from_json(const std::string& text);
std::string runconfig_to_json(const RunConfig& config);

}  // namespace dmlsel

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dmlsel/estimator.hpp"

namespace dmlsel {

// Monte Carlo design: Y = D + X'b + U observed when S = 1,
// S = 1{D + gamma*Z + X'b + V > 0}, D = 1{X'b + W > 0},
// X ~ N(0, Sigma) with Sigma_ij = 0.5^|i-j|, b_i = 0.4 / i^2.
struct DgpConfig {
    int n = 2000;
    int p = 100;
    double gamma = 0.0;        // instrument strength
    double rho_uv = 0.0;       // cov(U, V)
    double delta_m = 0.0;      // treatment effect on the post covariate
    std::uint64_t seed = 1;

    void validate() const;
};

// Closed-form quantities of the generating process, for moment-condition and
// orthogonality checks. Per-row values are aligned with the drawn dataset.
struct OracleTruths {
    double ey1 = 1.0;
    double ey0 = 0.0;
    double gamma = 0.0;
    double rho_uv = 0.0;
    bool dynamic = false;
    double delta_m = 0.0;
    Eigen::VectorXd index;        // X'b per row
    Eigen::VectorXd index_short;  // dynamic design: X'b over first 10 terms

    double true_ate() const { return ey1 - ey0; }

    double treatment_propensity(int row, int d) const;
    // Pr(S=1 | D=d, X): instrument integrated out (the MAR-estimator object).
    double selection_propensity_marginal(int row, int d,
                                         const SelectionDataset& data) const;
    // Pr(S=1 | D=d, X, Z)
    double selection_propensity_given_z(int row, int d,
                                        const SelectionDataset& data) const;
    // Pr(S=1 | D=d, X, M) under the dynamic design
    double selection_propensity_given_m(int row, int d,
                                        const SelectionDataset& data) const;
    double outcome_mean(int row, int d, const SelectionDataset& data) const;
    double outcome_mean_given_z(int row, int d,
                                const SelectionDataset& data) const;
    double nested_mean(int row, int d) const;
    // Pr(D=d | X, control function) for the IV design with continuous Z.
    double treatment_propensity_given_cf(int row, int d,
                                         const SelectionDataset& data) const;
};

std::pair<SelectionDataset, OracleTruths> draw_dataset(const DgpConfig& config);

// Adds a treatment-dependent post covariate M = delta_m*D + X'b + xi that
// drives both selection and the outcome; true ATE is 1 + 0.5 * delta_m.
std::pair<SelectionDataset, OracleTruths> draw_dynamic_dataset(
    const DgpConfig& config);

// Oracle plug-ins packed as NuisancePredictions, clipped like fitted ones.
NuisancePredictions oracle_predictions(const SelectionDataset& data,
                                       const OracleTruths& truths,
                                       EstimatorKind kind,
                                       const std::vector<int>& levels);

enum class Design { Mar = 1, Iv = 2, Dynamic = 3 };

Design design_from_name(const std::string& name);
std::string design_name(Design design);

struct SimCell {
    Design design = Design::Mar;
    EstimatorKind estimator = EstimatorKind::Mar;
    int n = 0;
    double true_effect = 1.0;
    double bias = 0.0;
    double sd = 0.0;
    double rmse = 0.0;         // sqrt(bias^2 + sd^2) by definition
    double mean_se = 0.0;
    double coverage = 0.0;     // 95% normal intervals
    int replications = 0;
    int failures = 0;
    long total_trimmed = 0;
    std::vector<double> estimates;  // per replication, index = rep
    std::vector<double> ses;
};

struct SimStudyReport {
    std::vector<SimCell> cells;

    std::string to_tsv() const;
    std::string to_json() const;
    const SimCell& cell(EstimatorKind estimator, int n) const;
};

struct SimStudyConfig {
    Design design = Design::Mar;
    std::vector<int> n_values = {2000};
    int replications = 250;
    std::vector<EstimatorKind> estimators;  // empty = design default
    std::uint64_t base_seed = 1;
    int k_folds = 3;
    double trim_threshold = 0.01;
    double delta_m = 1.0;   // dynamic design only
    int p = 100;
    NuisanceSpecs specs;
    unsigned n_threads = 1;
};

SimStudyReport run_design(const SimStudyConfig& config);

// Mean score along nuisance paths eta0 + t*(eta_hat - eta0); reports
// |g(t) - g(0)| per t and the fitted log-log slope per functional. The
// non-orthogonal plain IPW functional is probed alongside for contrast.
struct ProbeReport {
    struct Row {
        std::string functional;
        std::vector<double> deviation;  // aligned with t_grid
        double slope = 0.0;             // NaN when undefined
    };
    Design design = Design::Mar;
    int n = 0;
    std::uint64_t seed = 1;
    std::vector<double> t_grid;
    std::vector<Row> rows;

    std::string to_tsv() const;
    std::string to_json() const;
};

ProbeReport orthogonality_probe(Design design, int n, std::uint64_t seed,
                                const std::vector<double>& t_grid,
                                const NuisanceSpecs& specs = NuisanceSpecs{},
                                unsigned n_threads = 1);

}  // namespace dmlsel

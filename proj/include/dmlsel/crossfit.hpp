#pragma once

#include <cstdint>
#include <vector>

#include "dmlsel/dataset.hpp"
#include "dmlsel/learners.hpp"

namespace dmlsel {

// K-fold partition plus, for every (row, fold) pair with the row outside the
// fold, a two-way split of the complement set used by the nested estimators.
struct FoldPlan {
    std::uint64_t seed = 0;
    int k_folds = 0;
    std::vector<int> fold;            // fold index per row
    std::vector<std::int8_t> half_;   // n x K, row-major; -1 on own fold

    int half(int row, int k) const {
        return half_[static_cast<std::size_t>(row) * k_folds + k];
    }
    std::vector<int> fold_rows(int k) const;
    std::vector<int> complement_rows(int k) const;
};

FoldPlan make_folds(int n, int k_folds, std::uint64_t seed);

enum class CrossfitKind { Mar, Iv, Dynamic };

// Learner choices for the three nuisance channels.
struct NuisanceSpecs {
    LearnerSpec outcome_mean = LearnerSpec::lasso_linear();
    LearnerSpec treatment_propensity = LearnerSpec::lasso_logistic();
    LearnerSpec selection_propensity = LearnerSpec::lasso_logistic();
};

// Out-of-fold nuisance predictions. Every value in row i comes from models
// fitted without row i. Columns of outcome_mean / selection_propensity /
// nested_mean follow `levels`; treatment_propensity covers all declared
// levels and is normalized to the probability simplex.
struct NuisancePredictions {
    CrossfitKind kind = CrossfitKind::Mar;
    FoldPlan folds;
    std::vector<int> levels;

    Eigen::MatrixXd outcome_mean;          // n x levels.size()
    Eigen::MatrixXd treatment_propensity;  // n x q_levels
    Eigen::MatrixXd selection_propensity;  // n x levels.size()
    Eigen::VectorXd control_function;      // n (IV only): Pr(S=1 | D_i, X_i, Z_i)
    Eigen::MatrixXd nested_mean;           // n x levels.size() (dynamic only)

    int n() const { return static_cast<int>(treatment_propensity.rows()); }
    int level_column(int d) const;   // position of d in `levels`, throws if absent
    double treat_prob(int row, int d) const {
        return treatment_propensity(row, d);
    }
};

NuisancePredictions crossfit_mar(const SelectionDataset& data,
                                 const FoldPlan& folds,
                                 const NuisanceSpecs& specs,
                                 const std::vector<int>& levels,
                                 unsigned n_threads = 1);

NuisancePredictions crossfit_iv(const SelectionDataset& data,
                                const FoldPlan& folds,
                                const NuisanceSpecs& specs,
                                const std::vector<int>& levels,
                                unsigned n_threads = 1);

NuisancePredictions crossfit_dynamic(const SelectionDataset& data,
                                     const FoldPlan& folds,
                                     const NuisanceSpecs& specs,
                                     const std::vector<int>& levels,
                                     unsigned n_threads = 1);

}  // namespace dmlsel

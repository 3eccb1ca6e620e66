#pragma once

#include <Eigen/Dense>
#include <vector>

namespace dmlsel {

// Floor/ceiling applied to every predicted probability. Distinct from the
// 0.01 trimming threshold, which is a statistical rule, not a numeric guard.
inline constexpr double kClipEps = 1e-6;

enum class Family { LassoLinear, LassoLogistic };

struct LearnerSpec {
    Family family = Family::LassoLinear;
    // lambda >= 0 fixes the penalty; lambda < 0 selects it by inner CV over
    // `lambda_grid` (or the default 50-point path when the grid is empty).
    double lambda = -1.0;
    std::vector<double> lambda_grid;   // strictly positive, sorted descending
    int grid_size = 50;                // default grid length
    double grid_ratio = 1e-3;          // lambda_min / lambda_max
    int max_iter = 1000;
    double tol = 1e-7;
    int cv_folds = 5;
    // per-feature penalty multipliers (empty = all 1); a 0 leaves that
    // coefficient unpenalized. Honored by the linear family.
    std::vector<double> penalty_weights;

    static LearnerSpec lasso_linear() { return LearnerSpec{}; }
    static LearnerSpec lasso_logistic() {
        LearnerSpec s;
        s.family = Family::LassoLogistic;
        return s;
    }
};

struct FittedModel {
    Family family = Family::LassoLinear;
    double intercept = 0.0;
    Eigen::VectorXd coef;            // original feature scale
    double lambda = 0.0;             // penalty actually used
    Eigen::VectorXd fitted;          // in-sample predictions (prob. for logistic)
    std::vector<double> objective_path;  // non-increasing across cycles

    // internal standardization of the training design
    Eigen::VectorXd feature_mean;
    Eigen::VectorXd feature_scale;   // 0 marks a constant column
    std::vector<double> penalty_weights;   // empty = all 1
};

FittedModel fit_lasso_linear(const Eigen::MatrixXd& features,
                             const Eigen::VectorXd& targets,
                             const LearnerSpec& spec);

FittedModel fit_lasso_logistic(const Eigen::MatrixXd& features,
                               const Eigen::VectorXd& labels,
                               const LearnerSpec& spec);

FittedModel fit(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets,
                const LearnerSpec& spec);

// Grid lambda minimizing pooled held-out loss (squared error / log loss)
// over `spec.cv_folds` inner folds; ties break toward the larger lambda.
double select_lambda_cv(const Eigen::MatrixXd& features,
                        const Eigen::VectorXd& targets,
                        const LearnerSpec& spec);

// grid_size log-spaced values from lambda_max (smallest penalty zeroing
// every coefficient) down to grid_ratio * lambda_max.
std::vector<double> default_lambda_grid(const Eigen::MatrixXd& features,
                                        const Eigen::VectorXd& targets,
                                        const LearnerSpec& spec);

Eigen::VectorXd predict(const FittedModel& model,
                        const Eigen::MatrixXd& features);

// Stationarity residuals on the internal standardized scale, for the lasso
// objective the model was fitted under.
struct KktReport {
    double max_active = 0.0;    // active coordinates: |grad_j + lambda*sign(b_j)|
    double max_inactive = 0.0;  // inactive coordinates: max(|grad_j| - lambda, 0)
};

KktReport kkt_check(const FittedModel& model, const Eigen::MatrixXd& features,
                    const Eigen::VectorXd& targets);

}  // namespace dmlsel

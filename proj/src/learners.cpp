#include "dmlsel/learners.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dmlsel/crossfit.hpp"

namespace dmlsel {

namespace {

constexpr double kIrlsWeightFloor = 1e-5;
constexpr std::uint64_t kInnerCvSeed = 0x5eed5eedULL;

double soft_threshold(double x, double lambda) {
    if (x > lambda) return x - lambda;
    if (x < -lambda) return x + lambda;
    return 0.0;
}

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double clip_prob(double p) {
    return std::min(1.0 - kClipEps, std::max(kClipEps, p));
}

// log(1 + exp(x)) without overflow
double log1pexp(double x) {
    if (x > 35.0) return x;
    return std::log1p(std::exp(x));
}

struct Standardizer {
    Eigen::VectorXd mean;
    Eigen::VectorXd scale;   // population sd; 0 marks a constant column

    Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const {
        Eigen::MatrixXd z = x;
        for (int j = 0; j < z.cols(); ++j) {
            if (scale(j) > 0.0) {
                z.col(j) = (z.col(j).array() - mean(j)) / scale(j);
            } else {
                z.col(j).setZero();
            }
        }
        return z;
    }
};

Standardizer make_standardizer(const Eigen::MatrixXd& x) {
    const int p = static_cast<int>(x.cols());
    Standardizer s;
    s.mean.resize(p);
    s.scale.resize(p);
    for (int j = 0; j < p; ++j) {
        s.mean(j) = x.col(j).mean();
        const double var =
            (x.col(j).array() - s.mean(j)).square().sum() / x.rows();
        s.scale(j) = var > 1e-24 ? std::sqrt(var) : 0.0;
    }
    return s;
}

// Parameters on the standardized scale.
struct PathPoint {
    double a0 = 0.0;
    Eigen::VectorXd beta;
    std::vector<double> objective_path;
};

double std_predict_one(const PathPoint& point, const Standardizer& s,
                       const Eigen::MatrixXd& x, int row,
                       const std::vector<int>& active) {
    double eta = point.a0;
    for (int j : active) {
        eta += point.beta(j) * (x(row, j) - s.mean(j)) / s.scale(j);
    }
    return eta;
}

std::vector<int> active_coordinates(const PathPoint& point,
                                    const Standardizer& s) {
    std::vector<int> active;
    for (int j = 0; j < point.beta.size(); ++j) {
        if (point.beta(j) != 0.0 && s.scale(j) > 0.0) active.push_back(j);
    }
    return active;
}

void validate_inputs(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
    if (x.rows() != y.size()) {
        throw std::invalid_argument("feature rows do not match target length");
    }
    if (x.rows() < 2) {
        throw std::invalid_argument("at least 2 rows required to fit");
    }
    if (!x.allFinite() || !y.allFinite()) {
        throw std::invalid_argument("non-finite input to learner");
    }
}

// Cyclic coordinate descent for
//   (1/2n) ||yc - Z beta||^2 + lambda ||beta||_1
// using precomputed Gram second moments; records the objective per cycle.
class LinearSolver {
public:
    LinearSolver(const Eigen::MatrixXd& z, const Eigen::VectorXd& y,
                 const std::vector<double>& penalty_weights = {})
        : gram_(z.transpose() * z / static_cast<double>(z.rows())),
          y_mean_(y.mean()),
          p_(static_cast<int>(z.cols())) {
        const Eigen::VectorXd yc = y.array() - y_mean_;
        cov_ = z.transpose() * yc / static_cast<double>(z.rows());
        y_var_half_ = 0.5 * yc.squaredNorm() / static_cast<double>(z.rows());
        if (penalty_weights.empty()) {
            weight_ = Eigen::VectorXd::Ones(p_);
        } else {
            if (static_cast<int>(penalty_weights.size()) != p_) {
                throw std::invalid_argument(
                    "penalty weight count does not match feature count");
            }
            weight_ = Eigen::Map<const Eigen::VectorXd>(penalty_weights.data(), p_);
        }
    }

    double y_mean() const { return y_mean_; }
    double max_abs_cov() const {
        double best = 0.0;
        for (int j = 0; j < p_; ++j) {
            if (weight_(j) > 0.0) {
                best = std::max(best, std::fabs(cov_(j)) / weight_(j));
            }
        }
        return best;
    }

    void solve(double lambda, double /*lambda_prev*/, int max_iter, double tol,
               PathPoint& point) const {
        Eigen::VectorXd& beta = point.beta;
        if (beta.size() != p_) beta = Eigen::VectorXd::Zero(p_);
        Eigen::VectorXd q = gram_ * beta;   // G * beta, kept incremental
        point.a0 = y_mean_;
        point.objective_path.clear();
        point.objective_path.push_back(objective(beta, q, lambda));
        for (int iter = 0; iter < max_iter; ++iter) {
            double max_delta = 0.0;
            for (int j = 0; j < p_; ++j) {
                if (gram_(j, j) <= 0.0) continue;   // constant column
                const double old = beta(j);
                const double rho = cov_(j) - q(j) + gram_(j, j) * old;
                const double next =
                    soft_threshold(rho, lambda * weight_(j)) / gram_(j, j);
                if (next != old) {
                    beta(j) = next;
                    q += (next - old) * gram_.col(j);
                    max_delta = std::max(max_delta, std::fabs(next - old));
                }
            }
            point.objective_path.push_back(objective(beta, q, lambda));
            if (max_delta < tol) break;
        }
    }

private:
    double objective(const Eigen::VectorXd& beta, const Eigen::VectorXd& q,
                     double lambda) const {
        return y_var_half_ - cov_.dot(beta) + 0.5 * beta.dot(q) +
               lambda * beta.cwiseAbs().cwiseProduct(weight_).sum();
    }

    Eigen::MatrixXd gram_;
    Eigen::VectorXd cov_;
    Eigen::VectorXd weight_;
    double y_mean_;
    double y_var_half_;
    int p_;
};

// Penalized logistic likelihood via IRLS with an inner weighted coordinate
// descent; a step-halving guard keeps the recorded objective non-increasing.
class LogisticSolver {
public:
    LogisticSolver(const Eigen::MatrixXd& z, const Eigen::VectorXd& y)
        : z_(z), z2_(z.array().square()), y_(y),
          n_(static_cast<int>(z.rows())), p_(static_cast<int>(z.cols())) {}

    double max_abs_cov() const {
        const double ybar = y_.mean();
        const Eigen::VectorXd r = y_.array() - ybar;
        if (p_ == 0) return 0.0;
        return (z_.transpose() * r / static_cast<double>(n_))
            .cwiseAbs()
            .maxCoeff();
    }

    // `lambda_prev` is the previous (larger) value on the path and feeds the
    // sequential strong rule; sweeps run over the eligible set only and a
    // full-gradient check afterwards reinstates any violators.
    void solve(double lambda, double lambda_prev, int max_iter, double tol,
               PathPoint& point) const {
        Eigen::VectorXd& beta = point.beta;
        if (beta.size() != p_) {
            beta = Eigen::VectorXd::Zero(p_);
            point.a0 = std::log(clip_prob(y_.mean()) / (1.0 - clip_prob(y_.mean())));
        }
        double a0 = point.a0;
        Eigen::VectorXd eta = Eigen::VectorXd::Constant(n_, a0) + z_ * beta;
        double obj = objective(eta, beta, lambda);
        point.objective_path.clear();
        point.objective_path.push_back(obj);

        std::vector<std::uint8_t> in_set(p_, 0);
        std::vector<int> eligible;
        {
            const Eigen::VectorXd grad = full_gradient(eta);
            const double cut = 2.0 * lambda - std::max(lambda_prev, lambda);
            for (int j = 0; j < p_; ++j) {
                if (beta(j) != 0.0 || std::fabs(grad(j)) >= cut) {
                    in_set[j] = 1;
                    eligible.push_back(j);
                }
            }
        }

        Eigen::VectorXd weights(n_), work_residual(n_), wr(n_), zeta(n_);
        Eigen::ArrayXd prob(n_);
        for (int attempt = 0; attempt < 10; ++attempt) {
            for (int outer = 0; outer < max_iter; ++outer) {
                prob = 1.0 / (1.0 + (-eta.array()).exp());
                weights = (prob * (1.0 - prob)).max(kIrlsWeightFloor);
                work_residual =
                    (y_.array() - prob) / weights.array();   // zeta - eta
                zeta = eta + work_residual;
                wr = weights.cwiseProduct(work_residual);
                const Eigen::VectorXd beta_old = beta;
                const double a0_old = a0;
                const Eigen::VectorXd eta_old = eta;
                inner_solve(lambda, tol, eligible, weights, work_residual, wr,
                            beta, a0);
                eta = zeta - work_residual;   // eta is affine in the coefficients

                // step-halving toward the previous iterate if the penalized
                // likelihood got worse
                double obj_try = objective(eta, beta, lambda);
                int halvings = 0;
                while (obj_try > obj + 1e-12 && halvings < 30) {
                    beta = 0.5 * (beta + beta_old);
                    a0 = 0.5 * (a0 + a0_old);
                    eta = 0.5 * (eta + eta_old);
                    obj_try = objective(eta, beta, lambda);
                    ++halvings;
                }
                const double max_delta =
                    std::max((beta - beta_old).cwiseAbs().maxCoeff(),
                             std::fabs(a0 - a0_old));
                obj = std::min(obj, obj_try);
                point.objective_path.push_back(obj);
                if (max_delta < tol) break;
            }

            // reinstate strong-rule casualties, if any
            const Eigen::VectorXd grad = full_gradient(eta);
            bool clean = true;
            for (int j = 0; j < p_; ++j) {
                if (!in_set[j] && std::fabs(grad(j)) > lambda) {
                    in_set[j] = 1;
                    eligible.push_back(j);
                    clean = false;
                }
            }
            if (clean) break;
        }
        point.a0 = a0;
    }

private:
    // weighted lasso on the quadratic approximation over the eligible
    // coordinates; work_residual holds zeta - eta and wr its weighted
    // version, both maintained under coefficient moves. Non-full sweeps
    // touch only currently active coordinates; a clean full sweep ends it.
    void inner_solve(double lambda, double tol, const std::vector<int>& eligible,
                     const Eigen::VectorXd& weights,
                     Eigen::VectorXd& work_residual, Eigen::VectorXd& wr,
                     Eigen::VectorXd& beta, double& a0) const {
        const double n = static_cast<double>(n_);
        const double sum_w = weights.sum();
        Eigen::VectorXd denom = Eigen::VectorXd::Zero(p_);
        for (int j : eligible) denom(j) = z2_.col(j).dot(weights) / n;
        bool sweep_all = true;
        for (int cycle = 0; cycle < 200; ++cycle) {
            double max_delta = 0.0;
            {   // unpenalized intercept
                const double shift = wr.sum() / sum_w;
                if (shift != 0.0) {
                    a0 += shift;
                    work_residual.array() -= shift;
                    wr -= shift * weights;
                    max_delta = std::fabs(shift);
                }
            }
            for (int j : eligible) {
                if (denom(j) <= 0.0) continue;
                const double old = beta(j);
                if (!sweep_all && old == 0.0) continue;
                const double grad = z_.col(j).dot(wr) / n;
                const double next =
                    soft_threshold(denom(j) * old + grad, lambda) / denom(j);
                if (next != old) {
                    const double delta = next - old;
                    beta(j) = next;
                    work_residual -= delta * z_.col(j);
                    wr -= delta * weights.cwiseProduct(z_.col(j));
                    max_delta = std::max(max_delta, std::fabs(delta));
                }
            }
            if (max_delta < tol) {
                if (sweep_all) break;
                sweep_all = true;   // verify with one full sweep
            } else {
                sweep_all = false;
            }
        }
    }

    Eigen::VectorXd full_gradient(const Eigen::VectorXd& eta) const {
        const Eigen::VectorXd residual =
            y_.array() - 1.0 / (1.0 + (-eta.array()).exp());
        return z_.transpose() * residual / static_cast<double>(n_);
    }

    double objective(const Eigen::VectorXd& eta, const Eigen::VectorXd& beta,
                     double lambda) const {
        // log(1+exp(eta)) = max(eta, 0) + log1p(exp(-|eta|))
        const double nll = (eta.array().max(0.0) +
                            (-eta.array().abs()).exp().log1p())
                               .sum() -
                           y_.dot(eta);
        return nll / static_cast<double>(n_) + lambda * beta.cwiseAbs().sum();
    }

    const Eigen::MatrixXd& z_;
    Eigen::MatrixXd z2_;
    const Eigen::VectorXd& y_;
    int n_;
    int p_;
};

bool labels_degenerate(const Eigen::VectorXd& y) {
    const double first = y(0);
    for (int i = 1; i < y.size(); ++i) {
        if (y(i) != first) return false;
    }
    return true;
}

void validate_labels(const Eigen::VectorXd& y) {
    for (int i = 0; i < y.size(); ++i) {
        if (y(i) != 0.0 && y(i) != 1.0) {
            throw std::invalid_argument("labels must be 0 or 1");
        }
    }
}

FittedModel to_original_scale(const PathPoint& point, const Standardizer& s,
                              Family family, double lambda,
                              const std::vector<double>& penalty_weights) {
    FittedModel model;
    model.family = family;
    model.lambda = lambda;
    model.penalty_weights = penalty_weights;
    model.feature_mean = s.mean;
    model.feature_scale = s.scale;
    model.coef.resize(point.beta.size());
    double shift = 0.0;
    for (int j = 0; j < point.beta.size(); ++j) {
        if (s.scale(j) > 0.0) {
            model.coef(j) = point.beta(j) / s.scale(j);
            shift += model.coef(j) * s.mean(j);
        } else {
            model.coef(j) = 0.0;
        }
    }
    model.intercept = point.a0 - shift;
    model.objective_path = point.objective_path;
    return model;
}

std::vector<double> resolve_grid(const Eigen::MatrixXd& x,
                                 const Eigen::VectorXd& y,
                                 const LearnerSpec& spec) {
    if (!spec.lambda_grid.empty()) {
        for (std::size_t i = 0; i < spec.lambda_grid.size(); ++i) {
            if (spec.lambda_grid[i] <= 0.0) {
                throw std::invalid_argument("lambda grid must be strictly positive");
            }
            if (i > 0 && spec.lambda_grid[i] >= spec.lambda_grid[i - 1]) {
                throw std::invalid_argument("lambda grid must be sorted descending");
            }
        }
        return spec.lambda_grid;
    }
    return default_lambda_grid(x, y, spec);
}

// Warm-started descent over a descending lambda grid. Returns the path point
// at each grid value (standardized scale).
template <typename Solver>
std::vector<PathPoint> fit_path(const Solver& solver,
                                const std::vector<double>& grid,
                                const LearnerSpec& spec, int p) {
    std::vector<PathPoint> points;
    points.reserve(grid.size());
    PathPoint warm;
    warm.beta = Eigen::VectorXd::Zero(p);
    for (std::size_t g = 0; g < grid.size(); ++g) {
        const double prev = g == 0 ? grid[0] : grid[g - 1];
        solver.solve(grid[g], prev, spec.max_iter, spec.tol, warm);
        points.push_back(warm);
    }
    return points;
}

double held_out_loss(Family family, double eta, double y) {
    if (family == Family::LassoLinear) {
        const double r = y - eta;
        return r * r;
    }
    const double p = clip_prob(sigmoid(eta));
    return -(y * std::log(p) + (1.0 - y) * std::log1p(-p));
}

FittedModel fit_impl(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                     const LearnerSpec& spec) {
    validate_inputs(x, y);
    if (spec.family == Family::LassoLogistic) {
        validate_labels(y);
        if (labels_degenerate(y)) {
            // intercept-only model at the clipped label mean
            FittedModel model;
            model.family = spec.family;
            const double p = clip_prob(y.mean());
            model.intercept = std::log(p / (1.0 - p));
            model.coef = Eigen::VectorXd::Zero(x.cols());
            model.lambda = std::max(spec.lambda, 0.0);
            model.feature_mean = Eigen::VectorXd::Zero(x.cols());
            model.feature_scale = Eigen::VectorXd::Ones(x.cols());
            model.objective_path = {0.0};
            model.fitted = predict(model, x);
            return model;
        }
    }

    const Standardizer s = make_standardizer(x);
    const Eigen::MatrixXd z = s.apply(x);

    double lambda = spec.lambda;
    if (lambda < 0.0) {
        LearnerSpec cv_spec = spec;
        cv_spec.lambda_grid = resolve_grid(x, y, spec);
        lambda = select_lambda_cv(x, y, cv_spec);

        // final fit: relaxed warm-started path down to the chosen lambda,
        // then a full-precision solve there
        std::vector<double> grid;
        for (double l : cv_spec.lambda_grid) {
            grid.push_back(l);
            if (l == lambda) break;
        }
        const double path_tol = std::max(spec.tol, 1e-5);
        PathPoint warm;
        warm.beta = Eigen::VectorXd::Zero(z.cols());
        auto walk = [&](const auto& solver) {
            for (std::size_t g = 0; g + 1 < grid.size(); ++g) {
                const double prev = g == 0 ? grid[0] : grid[g - 1];
                solver.solve(grid[g], prev, spec.max_iter, path_tol, warm);
            }
            const double prev =
                grid.size() > 1 ? grid[grid.size() - 2] : lambda;
            solver.solve(lambda, prev, spec.max_iter, spec.tol, warm);
        };
        if (spec.family == Family::LassoLinear) {
            walk(LinearSolver(z, y, spec.penalty_weights));
        } else {
            walk(LogisticSolver(z, y));
        }
        FittedModel model =
            to_original_scale(warm, s, spec.family, lambda, spec.penalty_weights);
        model.fitted = predict(model, x);
        return model;
    }

    PathPoint point;
    point.beta = Eigen::VectorXd::Zero(z.cols());
    if (spec.family == Family::LassoLinear) {
        LinearSolver(z, y, spec.penalty_weights)
            .solve(lambda, lambda, spec.max_iter, spec.tol, point);
    } else {
        LogisticSolver(z, y).solve(lambda, lambda, spec.max_iter, spec.tol,
                                   point);
    }
    FittedModel model =
        to_original_scale(point, s, spec.family, lambda, spec.penalty_weights);
    model.fitted = predict(model, x);
    return model;
}

}  // namespace

FittedModel fit_lasso_linear(const Eigen::MatrixXd& features,
                             const Eigen::VectorXd& targets,
                             const LearnerSpec& spec) {
    LearnerSpec s = spec;
    s.family = Family::LassoLinear;
    return fit_impl(features, targets, s);
}

FittedModel fit_lasso_logistic(const Eigen::MatrixXd& features,
                               const Eigen::VectorXd& labels,
                               const LearnerSpec& spec) {
    LearnerSpec s = spec;
    s.family = Family::LassoLogistic;
    return fit_impl(features, labels, s);
}

FittedModel fit(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets,
                const LearnerSpec& spec) {
    return fit_impl(features, targets, spec);
}

std::vector<double> default_lambda_grid(const Eigen::MatrixXd& features,
                                        const Eigen::VectorXd& targets,
                                        const LearnerSpec& spec) {
    validate_inputs(features, targets);
    if (spec.grid_size < 2 || spec.grid_ratio <= 0.0 || spec.grid_ratio >= 1.0) {
        throw std::invalid_argument("invalid lambda grid shape");
    }
    const Standardizer s = make_standardizer(features);
    const Eigen::MatrixXd z = s.apply(features);
    double lambda_max = 0.0;
    if (spec.family == Family::LassoLinear) {
        lambda_max = LinearSolver(z, targets, spec.penalty_weights).max_abs_cov();
    } else {
        lambda_max = LogisticSolver(z, targets).max_abs_cov();
    }
    lambda_max = std::max(lambda_max, 1e-10);
    std::vector<double> grid(spec.grid_size);
    const double log_max = std::log(lambda_max);
    const double log_min = std::log(lambda_max * spec.grid_ratio);
    for (int i = 0; i < spec.grid_size; ++i) {
        grid[i] =
            std::exp(log_max + (log_min - log_max) * i / (spec.grid_size - 1));
    }
    return grid;
}

double select_lambda_cv(const Eigen::MatrixXd& features,
                        const Eigen::VectorXd& targets,
                        const LearnerSpec& spec) {
    validate_inputs(features, targets);
    if (spec.lambda_grid.empty()) {
        throw std::invalid_argument("lambda grid empty");
    }
    if (spec.cv_folds < 2) {
        throw std::invalid_argument("inner CV needs at least 2 folds");
    }
    const std::vector<double> grid = resolve_grid(features, targets, spec);
    const int n = static_cast<int>(features.rows());
    const FoldPlan plan = make_folds(n, spec.cv_folds, kInnerCvSeed);

    std::vector<double> loss(grid.size(), 0.0);
    for (int k = 0; k < spec.cv_folds; ++k) {
        const std::vector<int> train = plan.complement_rows(k);
        const std::vector<int> held = plan.fold_rows(k);
        Eigen::MatrixXd xt(train.size(), features.cols());
        Eigen::VectorXd yt(train.size());
        for (std::size_t r = 0; r < train.size(); ++r) {
            xt.row(r) = features.row(train[r]);
            yt(r) = targets(train[r]);
        }

        if (spec.family == Family::LassoLogistic && labels_degenerate(yt)) {
            const double p = clip_prob(yt.mean());
            const double eta = std::log(p / (1.0 - p));
            for (int row : held) {
                const double l = held_out_loss(spec.family, eta, targets(row));
                for (std::size_t g = 0; g < grid.size(); ++g) loss[g] += l;
            }
            continue;
        }

        // candidate ranking tolerates a looser solve than the returned fit
        LearnerSpec path_spec = spec;
        path_spec.tol = std::max(spec.tol, 1e-5);
        const Standardizer s = make_standardizer(xt);
        const Eigen::MatrixXd zt = s.apply(xt);
        std::vector<PathPoint> path;
        if (spec.family == Family::LassoLinear) {
            LinearSolver solver(zt, yt, spec.penalty_weights);
            path = fit_path(solver, grid, path_spec, static_cast<int>(zt.cols()));
        } else {
            LogisticSolver solver(zt, yt);
            path = fit_path(solver, grid, path_spec, static_cast<int>(zt.cols()));
        }
        for (std::size_t g = 0; g < grid.size(); ++g) {
            const std::vector<int> active = active_coordinates(path[g], s);
            for (int row : held) {
                const double eta =
                    std_predict_one(path[g], s, features, row, active);
                loss[g] += held_out_loss(spec.family, eta, targets(row));
            }
        }
    }

    // descending grid: ties break toward the larger lambda
    std::size_t best = 0;
    for (std::size_t g = 1; g < grid.size(); ++g) {
        if (loss[g] < loss[best]) best = g;
    }
    return grid[best];
}

Eigen::VectorXd predict(const FittedModel& model,
                        const Eigen::MatrixXd& features) {
    if (features.cols() != model.coef.size()) {
        throw std::invalid_argument("feature column count does not match model");
    }
    Eigen::VectorXd eta =
        (features * model.coef).array() + model.intercept;
    if (model.family == Family::LassoLinear) return eta;
    for (int i = 0; i < eta.size(); ++i) {
        eta(i) = clip_prob(sigmoid(eta(i)));
    }
    return eta;
}

KktReport kkt_check(const FittedModel& model, const Eigen::MatrixXd& features,
                    const Eigen::VectorXd& targets) {
    const int n = static_cast<int>(features.rows());
    const int p = static_cast<int>(features.cols());
    Eigen::MatrixXd z(n, p);
    for (int j = 0; j < p; ++j) {
        if (model.feature_scale(j) > 0.0) {
            z.col(j) = (features.col(j).array() - model.feature_mean(j)) /
                       model.feature_scale(j);
        } else {
            z.col(j).setZero();
        }
    }
    Eigen::VectorXd eta = (features * model.coef).array() + model.intercept;
    Eigen::VectorXd residual(n);
    if (model.family == Family::LassoLinear) {
        residual = targets - eta;
    } else {
        for (int i = 0; i < n; ++i) residual(i) = targets(i) - sigmoid(eta(i));
    }
    // gradient of the smooth part w.r.t. standardized coefficients
    const Eigen::VectorXd grad = -z.transpose() * residual / n;
    KktReport report;
    for (int j = 0; j < p; ++j) {
        if (model.feature_scale(j) <= 0.0) continue;
        const double lambda_j =
            model.penalty_weights.empty()
                ? model.lambda
                : model.lambda * model.penalty_weights[static_cast<std::size_t>(j)];
        const double beta_std = model.coef(j) * model.feature_scale(j);
        if (beta_std != 0.0) {
            const double v =
                std::fabs(grad(j) + lambda_j * (beta_std > 0 ? 1.0 : -1.0));
            report.max_active = std::max(report.max_active, v);
        } else {
            report.max_inactive = std::max(
                report.max_inactive, std::max(std::fabs(grad(j)) - lambda_j, 0.0));
        }
    }
    // intercept is unpenalized: its gradient folds into the active residual
    report.max_active =
        std::max(report.max_active, std::fabs(residual.mean()));
    return report;
}

}  // namespace dmlsel

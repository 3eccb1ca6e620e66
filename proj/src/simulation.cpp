#include "dmlsel/simulation.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include <json.hpp>

#include "dmlsel/rng.hpp"
#include "dmlsel/stats.hpp"
#include "dmlsel/threads.hpp"

namespace dmlsel {

namespace {

using ordered_json = nlohmann::ordered_json;

double clamp_prob(double p) {
    return std::min(1.0 - kClipEps, std::max(kClipEps, p));
}

Eigen::VectorXd coefficient_rule(int p) {
    Eigen::VectorXd beta(p);
    for (int i = 0; i < p; ++i) {
        const double idx = static_cast<double>(i + 1);
        beta(i) = 0.4 / (idx * idx);
    }
    return beta;
}

Eigen::MatrixXd covariance_cholesky(int p) {
    Eigen::MatrixXd sigma(p, p);
    for (int i = 0; i < p; ++i) {
        for (int j = 0; j < p; ++j) {
            sigma(i, j) = std::pow(0.5, std::abs(i - j));
        }
    }
    Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success) {
        throw std::runtime_error("covariate covariance not positive definite");
    }
    return llt.matrixL();
}

std::string format_number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace

void DgpConfig::validate() const {
    if (n < 20) throw std::invalid_argument("simulated sample size too small");
    if (p < 1) throw std::invalid_argument("at least one covariate required");
    if (std::fabs(rho_uv) >= 1.0) {
        throw std::invalid_argument("|rho_uv| must be below 1");
    }
}

double OracleTruths::treatment_propensity(int row, int d) const {
    const double p1 = normal_cdf(index(row));
    return d == 1 ? p1 : 1.0 - p1;
}

double OracleTruths::selection_propensity_marginal(
    int row, int d, const SelectionDataset&) const {
    // gamma*Z + V ~ N(0, 1 + gamma^2) integrated out
    const double spread = std::sqrt(1.0 + gamma * gamma);
    return normal_cdf((d + index(row)) / spread);
}

double OracleTruths::selection_propensity_given_z(
    int row, int d, const SelectionDataset& data) const {
    return normal_cdf(d + gamma * data.instrument(row) + index(row));
}

double OracleTruths::selection_propensity_given_m(
    int row, int d, const SelectionDataset& data) const {
    return normal_cdf(0.5 * d + data.post_covariates(row, 0) + index_short(row));
}

double OracleTruths::outcome_mean(int row, int d,
                                  const SelectionDataset& data) const {
    if (dynamic) {
        return d + 0.5 * data.post_covariates(row, 0) + index(row);
    }
    if (rho_uv == 0.0) {
        return d + index(row);
    }
    if (gamma == 0.0) {
        // E[U | V > -(d + X'b)] under correlated (U, V)
        return d + index(row) + rho_uv * mills_ratio(d + index(row));
    }
    throw std::logic_error(
        "closed-form conditional outcome mean unavailable when both the "
        "instrument and the error correlation are active");
}

double OracleTruths::outcome_mean_given_z(int row, int d,
                                          const SelectionDataset& data) const {
    // evaluated at the row's own control-function value, which pins the
    // selection threshold regardless of z
    const double c = data.treatment(row) + gamma * data.instrument(row) + index(row);
    return d + index(row) + rho_uv * mills_ratio(c);
}

double OracleTruths::nested_mean(int row, int d) const {
    return d + 0.5 * (delta_m * d + index(row)) + index(row);
}

double OracleTruths::treatment_propensity_given_cf(
    int row, int d, const SelectionDataset& data) const {
    if (gamma == 0.0) {
        throw std::logic_error(
            "control-function treatment propensity needs a live instrument");
    }
    // given X and the control-function value, Bayes over the two (D, Z)
    // combinations consistent with it
    const double c = data.treatment(row) + gamma * data.instrument(row) + index(row);
    const double p1 = normal_cdf(index(row));
    const double z_if_treated = (c - 1.0 - index(row)) / gamma;
    const double z_if_control = (c - index(row)) / gamma;
    const double w1 = p1 * normal_pdf(z_if_treated);
    const double w0 = (1.0 - p1) * normal_pdf(z_if_control);
    const double posterior = w1 / (w1 + w0);
    return d == 1 ? posterior : 1.0 - posterior;
}

std::pair<SelectionDataset, OracleTruths> draw_dataset(const DgpConfig& config) {
    config.validate();
    const Eigen::VectorXd beta = coefficient_rule(config.p);
    const Eigen::MatrixXd chol = covariance_cholesky(config.p);

    SelectionDataset data;
    data.q_levels = 2;
    data.outcome.resize(config.n);
    data.selection.resize(config.n);
    data.treatment.resize(config.n);
    data.covariates.resize(config.n, config.p);
    data.instrument.resize(config.n);
    data.instrument_name = "z";
    data.covariate_names.resize(config.p);
    for (int j = 0; j < config.p; ++j) {
        data.covariate_names[j] = "x" + std::to_string(j + 1);
    }

    Rng rng(config.seed);
    Eigen::VectorXd noise(config.p);
    for (int i = 0; i < config.n; ++i) {
        for (int j = 0; j < config.p; ++j) noise(j) = rng.normal();
        data.covariates.row(i) = (chol * noise).transpose();
        const double w = rng.normal();
        const double z = rng.normal();
        const double a = rng.normal();
        const double b = rng.normal();
        const double u = a;
        const double v = config.rho_uv * a +
                         std::sqrt(1.0 - config.rho_uv * config.rho_uv) * b;
        const double index = data.covariates.row(i).dot(beta);
        const int treat = index + w > 0.0 ? 1 : 0;
        const int select =
            treat + config.gamma * z + index + v > 0.0 ? 1 : 0;
        data.treatment(i) = treat;
        data.selection(i) = select;
        data.instrument(i) = z;
        data.outcome(i) = select == 1
                              ? treat + index + u
                              : std::numeric_limits<double>::quiet_NaN();
    }

    OracleTruths truths;
    truths.ey1 = 1.0;
    truths.ey0 = 0.0;
    truths.gamma = config.gamma;
    truths.rho_uv = config.rho_uv;
    truths.index = data.covariates * beta;
    return {std::move(data), std::move(truths)};
}

std::pair<SelectionDataset, OracleTruths> draw_dynamic_dataset(
    const DgpConfig& config) {
    config.validate();
    const Eigen::VectorXd beta = coefficient_rule(config.p);
    const Eigen::MatrixXd chol = covariance_cholesky(config.p);
    const int short_terms = std::min(config.p, 10);

    SelectionDataset data;
    data.q_levels = 2;
    data.outcome.resize(config.n);
    data.selection.resize(config.n);
    data.treatment.resize(config.n);
    data.covariates.resize(config.n, config.p);
    data.post_covariates.resize(config.n, 1);
    data.post_covariate_names = {"m1"};
    data.covariate_names.resize(config.p);
    for (int j = 0; j < config.p; ++j) {
        data.covariate_names[j] = "x" + std::to_string(j + 1);
    }

    Rng rng(config.seed);
    Eigen::VectorXd noise(config.p);
    for (int i = 0; i < config.n; ++i) {
        for (int j = 0; j < config.p; ++j) noise(j) = rng.normal();
        data.covariates.row(i) = (chol * noise).transpose();
        const double w = rng.normal();
        const double u = rng.normal();
        const double v = rng.normal();   // independent of u by construction
        const double xi = rng.normal();
        const double index = data.covariates.row(i).dot(beta);
        const double index_short =
            data.covariates.row(i).head(short_terms).dot(beta.head(short_terms));
        const int treat = index + w > 0.0 ? 1 : 0;
        const double m = config.delta_m * treat + index + xi;
        const int select = 0.5 * treat + m + index_short + v > 0.0 ? 1 : 0;
        data.post_covariates(i, 0) = m;
        data.treatment(i) = treat;
        data.selection(i) = select;
        data.outcome(i) = select == 1
                              ? treat + 0.5 * m + index + u
                              : std::numeric_limits<double>::quiet_NaN();
    }

    OracleTruths truths;
    truths.dynamic = true;
    truths.delta_m = config.delta_m;
    truths.ey1 = 1.0 + 0.5 * config.delta_m;
    truths.ey0 = 0.0;
    truths.index = data.covariates * beta;
    truths.index_short =
        data.covariates.leftCols(short_terms) * beta.head(short_terms);
    return {std::move(data), std::move(truths)};
}

NuisancePredictions oracle_predictions(const SelectionDataset& data,
                                       const OracleTruths& truths,
                                       EstimatorKind kind,
                                       const std::vector<int>& levels) {
    NuisancePredictions preds;
    preds.kind = crossfit_kind_for(kind);
    preds.levels = levels;
    const int n = data.n();
    const int l = static_cast<int>(levels.size());
    preds.outcome_mean.resize(n, l);
    preds.treatment_propensity.resize(n, data.q_levels);
    preds.selection_propensity.resize(n, l);
    if (preds.kind == CrossfitKind::Iv) preds.control_function.resize(n);
    if (preds.kind == CrossfitKind::Dynamic) preds.nested_mean.resize(n, l);

    for (int i = 0; i < n; ++i) {
        for (int dd = 0; dd < data.q_levels; ++dd) {
            const double p = preds.kind == CrossfitKind::Iv
                                 ? truths.treatment_propensity_given_cf(i, dd, data)
                                 : truths.treatment_propensity(i, dd);
            preds.treatment_propensity(i, dd) = clamp_prob(p);
        }
        if (preds.kind == CrossfitKind::Iv) {
            const double c = data.treatment(i) +
                             truths.gamma * data.instrument(i) + truths.index(i);
            preds.control_function(i) = clamp_prob(normal_cdf(c));
        }
        for (int c = 0; c < l; ++c) {
            const int d = levels[c];
            switch (preds.kind) {
                case CrossfitKind::Mar:
                    preds.outcome_mean(i, c) = truths.outcome_mean(i, d, data);
                    preds.selection_propensity(i, c) = clamp_prob(
                        truths.selection_propensity_marginal(i, d, data));
                    break;
                case CrossfitKind::Iv:
                    preds.outcome_mean(i, c) =
                        truths.outcome_mean_given_z(i, d, data);
                    preds.selection_propensity(i, c) = clamp_prob(
                        truths.selection_propensity_given_z(i, d, data));
                    break;
                case CrossfitKind::Dynamic:
                    preds.outcome_mean(i, c) = truths.outcome_mean(i, d, data);
                    preds.selection_propensity(i, c) = clamp_prob(
                        truths.selection_propensity_given_m(i, d, data));
                    preds.nested_mean(i, c) = truths.nested_mean(i, d);
                    break;
            }
        }
    }
    return preds;
}

Design design_from_name(const std::string& name) {
    if (name == "1" || name == "mar") return Design::Mar;
    if (name == "2" || name == "iv") return Design::Iv;
    if (name == "dynamic") return Design::Dynamic;
    throw std::invalid_argument("unknown design: " + name +
                                " (expected 1, 2, or dynamic)");
}

std::string design_name(Design design) {
    switch (design) {
        case Design::Mar: return "1";
        case Design::Iv: return "2";
        case Design::Dynamic: return "dynamic";
    }
    throw std::logic_error("unknown design");
}

std::string SimStudyReport::to_tsv() const {
    std::string out =
        "design\testimator\tn\ttrue\tbias\tsd\tRMSE\tmeanSE\tcoverage\treps\t"
        "failures\ttrimmed\n";
    for (const SimCell& cell : cells) {
        out += design_name(cell.design) + "\t" + estimator_name(cell.estimator) +
               "\t" + std::to_string(cell.n) + "\t" +
               format_number(cell.true_effect) + "\t" + format_number(cell.bias) +
               "\t" + format_number(cell.sd) + "\t" + format_number(cell.rmse) +
               "\t" + format_number(cell.mean_se) + "\t" +
               format_number(cell.coverage) + "\t" +
               std::to_string(cell.replications) + "\t" +
               std::to_string(cell.failures) + "\t" +
               std::to_string(cell.total_trimmed) + "\n";
    }
    return out;
}

std::string SimStudyReport::to_json() const {
    ordered_json j;
    j["cells"] = ordered_json::array();
    for (const SimCell& cell : cells) {
        ordered_json c;
        c["design"] = design_name(cell.design);
        c["estimator"] = estimator_name(cell.estimator);
        c["n"] = cell.n;
        c["true"] = cell.true_effect;
        c["bias"] = cell.bias;
        c["sd"] = cell.sd;
        c["RMSE"] = cell.rmse;
        c["meanSE"] = cell.mean_se;
        c["coverage"] = cell.coverage;
        c["replications"] = cell.replications;
        c["failures"] = cell.failures;
        c["trimmed"] = cell.total_trimmed;
        c["estimates"] = cell.estimates;
        c["standard_errors"] = cell.ses;
        j["cells"].push_back(std::move(c));
    }
    return j.dump(2) + "\n";
}

const SimCell& SimStudyReport::cell(EstimatorKind estimator, int n) const {
    for (const SimCell& c : cells) {
        if (c.estimator == estimator && c.n == n) return c;
    }
    throw std::invalid_argument("no report cell for that estimator and n");
}

namespace {

std::vector<EstimatorKind> default_estimators(Design design) {
    if (design == Design::Dynamic) {
        return {EstimatorKind::Dynamic, EstimatorKind::Mar};
    }
    return {EstimatorKind::Mar, EstimatorKind::IvTotal};
}

DgpConfig dgp_for(Design design, int n, int p, double delta_m,
                  std::uint64_t seed) {
    DgpConfig cfg;
    cfg.n = n;
    cfg.p = p;
    cfg.seed = seed;
    switch (design) {
        case Design::Mar:
            cfg.gamma = 0.0;
            cfg.rho_uv = 0.0;
            break;
        case Design::Iv:
            cfg.gamma = 1.0;
            cfg.rho_uv = 0.8;
            break;
        case Design::Dynamic:
            cfg.delta_m = delta_m;
            break;
    }
    return cfg;
}

}  // namespace

SimStudyReport run_design(const SimStudyConfig& config) {
    if (config.replications < 1) {
        throw std::invalid_argument("at least one replication required");
    }
    const std::vector<EstimatorKind> estimators =
        config.estimators.empty() ? default_estimators(config.design)
                                  : config.estimators;
    const double true_effect = config.design == Design::Dynamic
                                   ? 1.0 + 0.5 * config.delta_m
                                   : 1.0;

    SimStudyReport report;
    for (int n : config.n_values) {
        const int reps = config.replications;
        const std::size_t n_est = estimators.size();
        std::vector<std::vector<double>> estimates(n_est),
            ses(n_est);
        std::vector<std::vector<int>> trims(n_est);
        std::vector<std::vector<std::uint8_t>> failed(n_est);
        for (std::size_t e = 0; e < n_est; ++e) {
            estimates[e].assign(reps, 0.0);
            ses[e].assign(reps, 0.0);
            trims[e].assign(reps, 0);
            failed[e].assign(reps, 0);
        }

        const unsigned inner_threads = reps > 1 ? 1 : config.n_threads;
        parallel_for(reps, config.n_threads, [&](std::size_t r) {
            const std::uint64_t seed = config.base_seed + r + 1;
            const DgpConfig dgp =
                dgp_for(config.design, n, config.p, config.delta_m, seed);
            const auto [data, truths] = config.design == Design::Dynamic
                                            ? draw_dynamic_dataset(dgp)
                                            : draw_dataset(dgp);
            for (std::size_t e = 0; e < n_est; ++e) {
                EstimatorConfig est;
                est.kind = estimators[e];
                est.d = 1;
                est.d_prime = 0;
                est.k_folds = config.k_folds;
                est.seed = seed;
                est.trim_threshold = config.trim_threshold;
                est.specs = config.specs;
                est.n_threads = inner_threads;
                try {
                    const EffectEstimate result = estimate_ate(data, est);
                    estimates[e][r] = result.estimate;
                    ses[e][r] = result.se;
                    trims[e][r] = result.n_trimmed;
                } catch (const std::exception&) {
                    failed[e][r] = 1;
                }
            }
        });

        for (std::size_t e = 0; e < n_est; ++e) {
            SimCell cell;
            cell.design = config.design;
            cell.estimator = estimators[e];
            cell.n = n;
            cell.true_effect = true_effect;
            int ok = 0;
            double sum = 0.0, se_sum = 0.0;
            long trimmed = 0;
            int covered = 0;
            for (int r = 0; r < reps; ++r) {
                if (failed[e][r]) continue;
                ++ok;
                sum += estimates[e][r];
                se_sum += ses[e][r];
                trimmed += trims[e][r];
                if (std::fabs(estimates[e][r] - true_effect) <=
                    1.96 * ses[e][r]) {
                    ++covered;
                }
                cell.estimates.push_back(estimates[e][r]);
                cell.ses.push_back(ses[e][r]);
            }
            cell.replications = ok;
            cell.failures = reps - ok;
            cell.total_trimmed = trimmed;
            if (ok > 0) {
                const double mean = sum / ok;
                cell.bias = mean - true_effect;
                double ss = 0.0;
                for (int r = 0; r < reps; ++r) {
                    if (failed[e][r]) continue;
                    const double c = estimates[e][r] - mean;
                    ss += c * c;
                }
                cell.sd = ok > 1 ? std::sqrt(ss / (ok - 1)) : 0.0;
                cell.rmse = std::sqrt(cell.bias * cell.bias + cell.sd * cell.sd);
                cell.mean_se = se_sum / ok;
                cell.coverage = static_cast<double>(covered) / ok;
            }
            report.cells.push_back(std::move(cell));
        }
    }
    return report;
}

namespace {

// Nuisance models fitted on `fit_data` and evaluated on `data`, providing
// the perturbation direction for the orthogonality probe. Fitting on a
// separate, deliberately small draw keeps the direction coarse, so the
// quadratic remainder dominates the sampling noise of the mean score.
NuisancePredictions fitted_predictions(const SelectionDataset& fit_data,
                                       const OracleTruths& fit_truths,
                                       const SelectionDataset& data,
                                       const OracleTruths& truths,
                                       CrossfitKind kind,
                                       const std::vector<int>& levels,
                                       const NuisanceSpecs& specs) {
    const int n = data.n();
    const int n_fit = fit_data.n();

    // fixed point high on the lasso path: the heavy shrinkage gives the
    // direction a stable systematic component on top of sampling noise
    auto coarse = [](LearnerSpec base, const Eigen::MatrixXd& x,
                     const Eigen::VectorXd& y) {
        const std::vector<double> grid = default_lambda_grid(x, y, base);
        base.lambda = grid[4];
        base.lambda_grid.clear();
        return base;
    };

    NuisancePredictions preds;
    preds.kind = kind;
    preds.levels = levels;
    const int l = static_cast<int>(levels.size());
    preds.outcome_mean.resize(n, l);
    preds.treatment_propensity.resize(n, data.q_levels);
    preds.selection_propensity.resize(n, l);

    auto rows_where = [](const SelectionDataset& ds, auto&& keep) {
        std::vector<int> rows;
        for (int i = 0; i < ds.n(); ++i) {
            if (keep(i)) rows.push_back(i);
        }
        return rows;
    };
    auto subset = [](const Eigen::MatrixXd& m, const std::vector<int>& rows) {
        Eigen::MatrixXd out(static_cast<int>(rows.size()), m.cols());
        for (std::size_t r = 0; r < rows.size(); ++r) out.row(r) = m.row(rows[r]);
        return out;
    };
    auto gather_out = [](const SelectionDataset& ds, const std::vector<int>& rows) {
        Eigen::VectorXd out(static_cast<int>(rows.size()));
        for (std::size_t r = 0; r < rows.size(); ++r) out(r) = ds.outcome(rows[r]);
        return out;
    };

    // feature blocks per estimator family
    auto mar_features = [](const SelectionDataset& ds) { return ds.covariates; };
    auto xm_features = [](const SelectionDataset& ds) {
        Eigen::MatrixXd out(ds.n(), ds.covariates.cols() + ds.post_covariates.cols());
        out.leftCols(ds.covariates.cols()) = ds.covariates;
        out.rightCols(ds.post_covariates.cols()) = ds.post_covariates;
        return out;
    };
    auto xz_features = [](const SelectionDataset& ds) {
        Eigen::MatrixXd out(ds.n(), ds.covariates.cols() + 1);
        out.leftCols(ds.covariates.cols()) = ds.covariates;
        out.col(ds.covariates.cols()) = ds.instrument;
        return out;
    };
    // covariates plus the Mills transform of the true control function, so
    // a fitted outcome direction stays inside the (X, control function)
    // nuisance space the orthogonality statement quantifies over
    auto x_mills_features = [](const SelectionDataset& ds,
                               const OracleTruths& tr) {
        Eigen::MatrixXd out(ds.n(), ds.covariates.cols() + 1);
        out.leftCols(ds.covariates.cols()) = ds.covariates;
        for (int i = 0; i < ds.n(); ++i) {
            const double c = ds.treatment(i) + tr.gamma * ds.instrument(i) +
                             tr.index(i);
            out(i, ds.covariates.cols()) = mills_ratio(c);
        }
        return out;
    };

    // treatment propensities on the covariates
    for (int dd = 0; dd < data.q_levels; ++dd) {
        Eigen::VectorXd labels(n_fit);
        for (int i = 0; i < n_fit; ++i) {
            labels(i) = fit_data.treatment(i) == dd ? 1.0 : 0.0;
        }
        const FittedModel model = fit_lasso_logistic(
            fit_data.covariates, labels,
            coarse(specs.treatment_propensity, fit_data.covariates, labels));
        preds.treatment_propensity.col(dd) = predict(model, data.covariates);
    }
    for (int i = 0; i < n; ++i) {
        const double total = preds.treatment_propensity.row(i).sum();
        for (int dd = 0; dd < data.q_levels; ++dd) {
            preds.treatment_propensity(i, dd) =
                clamp_prob(preds.treatment_propensity(i, dd) / total);
        }
    }

    if (kind == CrossfitKind::Iv) preds.control_function.resize(n);
    if (kind == CrossfitKind::Dynamic) preds.nested_mean.resize(n, l);

    for (std::size_t c = 0; c < levels.size(); ++c) {
        const int d = levels[c];
        const std::vector<int> treated = rows_where(
            fit_data, [&](int i) { return fit_data.treatment(i) == d; });
        const std::vector<int> observed = rows_where(fit_data, [&](int i) {
            return fit_data.treatment(i) == d && fit_data.selection(i) == 1;
        });

        Eigen::MatrixXd sel_design, out_design, sel_eval, out_eval;
        switch (kind) {
            case CrossfitKind::Mar:
                sel_design = mar_features(fit_data);
                out_design = sel_design;
                sel_eval = mar_features(data);
                out_eval = sel_eval;
                break;
            case CrossfitKind::Iv:
                sel_design = xz_features(fit_data);
                out_design = x_mills_features(fit_data, fit_truths);
                sel_eval = xz_features(data);
                out_eval = x_mills_features(data, truths);
                break;
            case CrossfitKind::Dynamic:
                sel_design = xm_features(fit_data);
                out_design = sel_design;
                sel_eval = xm_features(data);
                out_eval = sel_eval;
                break;
        }

        Eigen::VectorXd sel_labels(static_cast<int>(treated.size()));
        for (std::size_t r = 0; r < treated.size(); ++r) {
            sel_labels(r) = fit_data.selection(treated[r]);
        }
        const Eigen::MatrixXd sel_train = subset(sel_design, treated);
        const FittedModel sel_model = fit_lasso_logistic(
            sel_train, sel_labels,
            coarse(specs.selection_propensity, sel_train, sel_labels));
        preds.selection_propensity.col(static_cast<int>(c)) =
            predict(sel_model, sel_eval);

        const Eigen::MatrixXd mu_train = subset(out_design, observed);
        const Eigen::VectorXd mu_targets = gather_out(fit_data, observed);
        const FittedModel mu_model = fit_lasso_linear(
            mu_train, mu_targets, coarse(specs.outcome_mean, mu_train, mu_targets));
        preds.outcome_mean.col(static_cast<int>(c)) = predict(mu_model, out_eval);

        if (kind == CrossfitKind::Dynamic) {
            const Eigen::VectorXd targets =
                predict(mu_model, subset(out_design, treated));
            const Eigen::MatrixXd nu_train = subset(fit_data.covariates, treated);
            const FittedModel nu_model = fit_lasso_linear(
                nu_train, targets, coarse(specs.outcome_mean, nu_train, targets));
            preds.nested_mean.col(static_cast<int>(c)) =
                predict(nu_model, data.covariates);
        }
    }

    if (kind == CrossfitKind::Iv) {
        // observed-level control function per evaluation row
        for (int l2 = 0; l2 < data.q_levels; ++l2) {
            const std::vector<int> treated = rows_where(
                fit_data, [&](int i) { return fit_data.treatment(i) == l2; });
            if (treated.empty()) continue;
            Eigen::VectorXd sel_labels(static_cast<int>(treated.size()));
            for (std::size_t r = 0; r < treated.size(); ++r) {
                sel_labels(r) = fit_data.selection(treated[r]);
            }
            const Eigen::MatrixXd cf_train = subset(xz_features(fit_data), treated);
            const FittedModel model = fit_lasso_logistic(
                cf_train, sel_labels,
                coarse(specs.selection_propensity, cf_train, sel_labels));
            const Eigen::VectorXd cf = predict(model, xz_features(data));
            for (int i = 0; i < n; ++i) {
                if (data.treatment(i) == l2) preds.control_function(i) = cf(i);
            }
        }
    }
    return preds;
}

NuisancePredictions mix_predictions(const NuisancePredictions& oracle,
                                    const NuisancePredictions& fitted,
                                    double t) {
    NuisancePredictions out = oracle;
    out.outcome_mean += t * (fitted.outcome_mean - oracle.outcome_mean);
    out.treatment_propensity +=
        t * (fitted.treatment_propensity - oracle.treatment_propensity);
    out.selection_propensity +=
        t * (fitted.selection_propensity - oracle.selection_propensity);
    if (oracle.control_function.size() > 0) {
        out.control_function +=
            t * (fitted.control_function - oracle.control_function);
    }
    if (oracle.nested_mean.size() > 0) {
        out.nested_mean += t * (fitted.nested_mean - oracle.nested_mean);
    }
    return out;
}

// Means are taken over the same trimmed population the estimators use, with
// the mask pinned at the unperturbed plug-ins so it does not move with t.
double mean_score(const SelectionDataset& data,
                  const NuisancePredictions& preds, EstimatorKind kind, int d,
                  const std::vector<std::uint8_t>& keep) {
    const ScoreVector s = score(data, preds, kind, d, 0.0);
    double sum = 0.0;
    int count = 0;
    for (int i = 0; i < s.value.size(); ++i) {
        if (s.in_population[i] && keep[i]) {
            sum += s.value(i);
            ++count;
        }
    }
    return sum / count;
}

double mean_ipw(const SelectionDataset& data, const NuisancePredictions& preds,
                int d, const std::vector<std::uint8_t>& keep) {
    const int col = preds.level_column(d);
    double sum = 0.0;
    int count = 0;
    for (int i = 0; i < data.n(); ++i) {
        if (!keep[i]) continue;
        ++count;
        if (data.treatment(i) == d && data.selection(i) == 1) {
            const double denom =
                std::max(preds.treat_prob(i, d), kClipEps) *
                std::max(preds.selection_propensity(i, col), kClipEps);
            sum += data.outcome(i) / denom;
        }
    }
    return sum / count;
}

double fitted_slope(const std::vector<double>& t_grid,
                    const std::vector<double>& deviation) {
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < t_grid.size(); ++i) {
        if (t_grid[i] > 0.0 && deviation[i] > 0.0) {
            lx.push_back(std::log(t_grid[i]));
            ly.push_back(std::log(deviation[i]));
        }
    }
    if (lx.size() < 2) return std::numeric_limits<double>::quiet_NaN();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        mx += lx[i];
        my += ly[i];
    }
    mx /= lx.size();
    my /= ly.size();
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sxy += (lx[i] - mx) * (ly[i] - my);
        sxx += (lx[i] - mx) * (lx[i] - mx);
    }
    return sxy / sxx;
}

}  // namespace

std::string ProbeReport::to_tsv() const {
    std::string out = "functional";
    for (double t : t_grid) out += "\tt=" + format_number(t);
    out += "\tslope\n";
    for (const Row& row : rows) {
        out += row.functional;
        for (double dev : row.deviation) out += "\t" + format_number(dev);
        out += "\t" + (std::isnan(row.slope) ? std::string("undefined")
                                             : format_number(row.slope)) +
               "\n";
    }
    return out;
}

std::string ProbeReport::to_json() const {
    ordered_json j;
    j["design"] = design_name(design);
    j["n"] = n;
    j["seed"] = seed;
    j["t_grid"] = t_grid;
    j["rows"] = ordered_json::array();
    for (const Row& row : rows) {
        ordered_json r;
        r["functional"] = row.functional;
        r["deviation"] = row.deviation;
        if (std::isnan(row.slope)) {
            r["slope"] = nullptr;
        } else {
            r["slope"] = row.slope;
        }
        j["rows"].push_back(std::move(r));
    }
    return j.dump(2) + "\n";
}

ProbeReport orthogonality_probe(Design design, int n, std::uint64_t seed,
                                const std::vector<double>& t_grid,
                                const NuisanceSpecs& specs, unsigned n_threads) {
    if (t_grid.empty()) {
        throw std::invalid_argument("probe needs a nonempty t grid");
    }
    (void)n_threads;
    ProbeReport report;
    report.design = design;
    report.n = n;
    report.seed = seed;
    report.t_grid = t_grid;

    const DgpConfig dgp = dgp_for(design, n, 100, 1.0, seed);
    const auto [data, truths] = design == Design::Dynamic
                                    ? draw_dynamic_dataset(dgp)
                                    : draw_dataset(dgp);
    // small independent draw for the perturbation-direction fits
    DgpConfig fit_dgp = dgp;
    fit_dgp.n = 2000;
    fit_dgp.seed = seed + 0x9d1cULL;
    const auto [fit_draw, fit_truths] = design == Design::Dynamic
                                            ? draw_dynamic_dataset(fit_dgp)
                                            : draw_dataset(fit_dgp);
    const std::vector<int> levels = {1};
    const int d = 1;

    struct Functional {
        std::string name;
        EstimatorKind kind;
        bool ipw = false;
    };
    std::vector<Functional> functionals;
    switch (design) {
        case Design::Mar:
            functionals = {{"mar", EstimatorKind::Mar, false},
                           {"ipw", EstimatorKind::Mar, true}};
            break;
        case Design::Iv:
            functionals = {{"iv-total", EstimatorKind::IvTotal, false},
                           {"iv-selected", EstimatorKind::IvSelected, false}};
            break;
        case Design::Dynamic:
            functionals = {{"dynamic", EstimatorKind::Dynamic, false}};
            break;
    }

    // one fitted direction per crossfit kind, shared across functionals
    std::vector<std::pair<CrossfitKind, NuisancePredictions>> fitted_cache;
    auto fitted_for = [&](CrossfitKind kind) -> const NuisancePredictions& {
        for (const auto& entry : fitted_cache) {
            if (entry.first == kind) return entry.second;
        }
        fitted_cache.emplace_back(kind,
                                  fitted_predictions(fit_draw, fit_truths, data, truths,
                                                     kind, levels, specs));
        return fitted_cache.back().second;
    };

    for (const Functional& f : functionals) {
        const CrossfitKind kind = crossfit_kind_for(f.kind);
        const NuisancePredictions oracle =
            oracle_predictions(data, truths, f.kind, levels);
        const NuisancePredictions& fitted = fitted_for(kind);
        std::vector<std::uint8_t> trimmed = trim_mask(data, oracle, f.kind, 0.01);
        std::vector<std::uint8_t> keep(trimmed.size());
        for (std::size_t i = 0; i < trimmed.size(); ++i) keep[i] = !trimmed[i];
        const double g0 = f.ipw ? mean_ipw(data, oracle, d, keep)
                                : mean_score(data, oracle, f.kind, d, keep);
        ProbeReport::Row row;
        row.functional = f.name;
        for (double t : t_grid) {
            const NuisancePredictions mixed = mix_predictions(oracle, fitted, t);
            const double gt = f.ipw ? mean_ipw(data, mixed, d, keep)
                                    : mean_score(data, mixed, f.kind, d, keep);
            row.deviation.push_back(std::fabs(gt - g0));
        }
        row.slope = fitted_slope(t_grid, row.deviation);
        report.rows.push_back(std::move(row));
    }
    return report;
}

}  // namespace dmlsel

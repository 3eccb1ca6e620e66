#include "dmlsel/crossfit.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

#include "dmlsel/rng.hpp"
#include "dmlsel/stats.hpp"
#include "dmlsel/threads.hpp"

namespace dmlsel {

namespace {

Eigen::MatrixXd rows_of(const Eigen::MatrixXd& m, const std::vector<int>& idx) {
    Eigen::MatrixXd out(static_cast<int>(idx.size()), m.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) out.row(r) = m.row(idx[r]);
    return out;
}

Eigen::VectorXd gather(const Eigen::VectorXd& v, const std::vector<int>& idx) {
    Eigen::VectorXd out(static_cast<int>(idx.size()));
    for (std::size_t r = 0; r < idx.size(); ++r) out(r) = v(idx[r]);
    return out;
}

Eigen::VectorXd indicator(const Eigen::VectorXi& v,
                          const std::vector<int>& idx, int level) {
    Eigen::VectorXd out(static_cast<int>(idx.size()));
    for (std::size_t r = 0; r < idx.size(); ++r) {
        out(r) = v(idx[r]) == level ? 1.0 : 0.0;
    }
    return out;
}

std::vector<int> filter(const std::vector<int>& rows, auto&& keep) {
    std::vector<int> out;
    for (int r : rows) {
        if (keep(r)) out.push_back(r);
    }
    return out;
}

double clamp_prob(double p) {
    return std::min(1.0 - kClipEps, std::max(kClipEps, p));
}

// One-vs-rest treatment propensities on the probability simplex: normalize,
// then clamp (deviation from the clamp is at most a few clip widths).
void write_treatment_propensities(Eigen::MatrixXd& target,
                                  const Eigen::MatrixXd& raw,
                                  const std::vector<int>& eval_rows) {
    for (std::size_t r = 0; r < eval_rows.size(); ++r) {
        const double total = raw.row(static_cast<int>(r)).sum();
        for (int l = 0; l < raw.cols(); ++l) {
            target(eval_rows[r], l) =
                clamp_prob(raw(static_cast<int>(r), l) / total);
        }
    }
}

[[noreturn]] void throw_empty_cell(const std::string& what, int fold, int level) {
    throw std::runtime_error("empty training cell for " + what +
                             " (treatment level " + std::to_string(level) +
                             ") in complement of fold " + std::to_string(fold));
}

}  // namespace

std::vector<int> FoldPlan::fold_rows(int k) const {
    std::vector<int> rows;
    for (std::size_t i = 0; i < fold.size(); ++i) {
        if (fold[i] == k) rows.push_back(static_cast<int>(i));
    }
    return rows;
}

std::vector<int> FoldPlan::complement_rows(int k) const {
    std::vector<int> rows;
    for (std::size_t i = 0; i < fold.size(); ++i) {
        if (fold[i] != k) rows.push_back(static_cast<int>(i));
    }
    return rows;
}

FoldPlan make_folds(int n, int k_folds, std::uint64_t seed) {
    if (k_folds < 2 || k_folds > n) {
        throw std::invalid_argument("fold count must satisfy 2 <= K <= n");
    }
    FoldPlan plan;
    plan.seed = seed;
    plan.k_folds = k_folds;
    plan.fold.assign(n, 0);

    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(seed);
    rng.shuffle(perm);

    // chop the permutation into K near-equal contiguous blocks
    const int base = n / k_folds;
    const int remainder = n % k_folds;
    int pos = 0;
    for (int k = 0; k < k_folds; ++k) {
        const int size = base + (k < remainder ? 1 : 0);
        for (int i = 0; i < size; ++i) plan.fold[perm[pos++]] = k;
    }

    // two-way split of each complement set, seeded from (seed, k)
    plan.half_.assign(static_cast<std::size_t>(n) * k_folds, -1);
    for (int k = 0; k < k_folds; ++k) {
        std::vector<int> complement = plan.complement_rows(k);
        Rng half_rng = Rng::derive(seed, static_cast<std::uint64_t>(k) + 1);
        half_rng.shuffle(complement);
        const std::size_t first_half = (complement.size() + 1) / 2;
        for (std::size_t i = 0; i < complement.size(); ++i) {
            plan.half_[static_cast<std::size_t>(complement[i]) * k_folds + k] =
                i < first_half ? 0 : 1;
        }
    }
    return plan;
}

int NuisancePredictions::level_column(int d) const {
    for (std::size_t c = 0; c < levels.size(); ++c) {
        if (levels[c] == d) return static_cast<int>(c);
    }
    throw std::invalid_argument("no predictions for treatment level " +
                                std::to_string(d));
}

namespace {

NuisancePredictions make_result(CrossfitKind kind, const SelectionDataset& data,
                                const FoldPlan& folds,
                                const std::vector<int>& levels) {
    NuisancePredictions preds;
    preds.kind = kind;
    preds.folds = folds;
    preds.levels = levels;
    const int n = data.n();
    const int l = static_cast<int>(levels.size());
    preds.outcome_mean.setZero(n, l);
    preds.treatment_propensity.setZero(n, data.q_levels);
    preds.selection_propensity.setZero(n, l);
    if (kind == CrossfitKind::Iv) preds.control_function.setZero(n);
    if (kind == CrossfitKind::Dynamic) preds.nested_mean.setZero(n, l);
    return preds;
}

void check_levels(const SelectionDataset& data, const std::vector<int>& levels) {
    if (levels.empty()) {
        throw std::invalid_argument("no treatment levels requested");
    }
    for (int d : levels) {
        if (d < 0 || d >= data.q_levels) {
            throw std::invalid_argument("requested treatment level " +
                                        std::to_string(d) +
                                        " outside declared levels");
        }
        bool present = false;
        for (int i = 0; i < data.n() && !present; ++i) {
            present = data.treatment(i) == d;
        }
        if (!present) {
            throw std::invalid_argument("requested treatment level " +
                                        std::to_string(d) +
                                        " absent from the data");
        }
    }
}

// [treatment dummies for levels 1..Q, X, Z]; `forced_level` substitutes the
// observed treatment when >= 0.
Eigen::MatrixXd control_function_features(const SelectionDataset& data,
                                          const std::vector<int>& rows,
                                          int forced_level) {
    const int q = data.q_levels;
    const int p = data.n_covariates();
    Eigen::MatrixXd out(static_cast<int>(rows.size()), (q - 1) + p + 1);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const int i = rows[r];
        const int level = forced_level >= 0 ? forced_level : data.treatment(i);
        for (int l = 1; l < q; ++l) out(r, l - 1) = level == l ? 1.0 : 0.0;
        out.row(r).segment(q - 1, p) = data.covariates.row(i);
        out(r, q - 1 + p) = data.instrument(i);
    }
    return out;
}

Eigen::MatrixXd append_column(const Eigen::MatrixXd& x,
                              const Eigen::VectorXd& col) {
    Eigen::MatrixXd out(x.rows(), x.cols() + 1);
    out.leftCols(x.cols()) = x;
    out.col(x.cols()) = col;
    return out;
}

Eigen::MatrixXd concat_columns(const Eigen::MatrixXd& a,
                               const Eigen::MatrixXd& b) {
    Eigen::MatrixXd out(a.rows(), a.cols() + b.cols());
    out.leftCols(a.cols()) = a;
    out.rightCols(b.cols()) = b;
    return out;
}

}  // namespace

NuisancePredictions crossfit_mar(const SelectionDataset& data,
                                 const FoldPlan& folds,
                                 const NuisanceSpecs& specs,
                                 const std::vector<int>& levels,
                                 unsigned n_threads) {
    check_levels(data, levels);
    NuisancePredictions preds = make_result(CrossfitKind::Mar, data, folds, levels);

    parallel_for(folds.k_folds, n_threads, [&](std::size_t fold_index) {
        const int k = static_cast<int>(fold_index);
        const std::vector<int> train = folds.complement_rows(k);
        const std::vector<int> eval = folds.fold_rows(k);
        const Eigen::MatrixXd x_train = rows_of(data.covariates, train);
        const Eigen::MatrixXd x_eval = rows_of(data.covariates, eval);

        Eigen::MatrixXd raw(static_cast<int>(eval.size()), data.q_levels);
        for (int l = 0; l < data.q_levels; ++l) {
            const FittedModel model = fit_lasso_logistic(
                x_train, indicator(data.treatment, train, l),
                specs.treatment_propensity);
            raw.col(l) = predict(model, x_eval);
        }
        write_treatment_propensities(preds.treatment_propensity, raw, eval);

        for (std::size_t c = 0; c < levels.size(); ++c) {
            const int d = levels[c];
            const std::vector<int> treated =
                filter(train, [&](int r) { return data.treatment(r) == d; });
            if (treated.empty()) throw_empty_cell("selection propensity", k, d);
            const FittedModel sel_model = fit_lasso_logistic(
                rows_of(data.covariates, treated),
                gather(data.selection.cast<double>(), treated),
                specs.selection_propensity);
            const Eigen::VectorXd sel = predict(sel_model, x_eval);

            const std::vector<int> observed = filter(treated, [&](int r) {
                return data.selection(r) == 1;
            });
            if (observed.empty()) throw_empty_cell("outcome mean", k, d);
            const FittedModel mu_model = fit_lasso_linear(
                rows_of(data.covariates, observed), gather(data.outcome, observed),
                specs.outcome_mean);
            const Eigen::VectorXd mu = predict(mu_model, x_eval);

            for (std::size_t r = 0; r < eval.size(); ++r) {
                preds.selection_propensity(eval[r], static_cast<int>(c)) = sel(r);
                preds.outcome_mean(eval[r], static_cast<int>(c)) = mu(r);
            }
        }
    });
    return preds;
}

NuisancePredictions crossfit_iv(const SelectionDataset& data,
                                const FoldPlan& folds,
                                const NuisanceSpecs& specs,
                                const std::vector<int>& levels,
                                unsigned n_threads) {
    if (!data.has_instrument()) {
        throw std::invalid_argument(
            "instrument column required for the IV estimators");
    }
    check_levels(data, levels);
    NuisancePredictions preds = make_result(CrossfitKind::Iv, data, folds, levels);

    parallel_for(folds.k_folds, n_threads, [&](std::size_t fold_index) {
        const int k = static_cast<int>(fold_index);
        const std::vector<int> train = folds.complement_rows(k);
        const std::vector<int> eval = folds.fold_rows(k);
        const Eigen::MatrixXd x_train = rows_of(data.covariates, train);
        const Eigen::MatrixXd x_eval = rows_of(data.covariates, eval);

        auto xz = [&](const std::vector<int>& rows) {
            Eigen::MatrixXd out(static_cast<int>(rows.size()),
                                data.n_covariates() + 1);
            for (std::size_t r = 0; r < rows.size(); ++r) {
                out.row(r).head(data.n_covariates()) = data.covariates.row(rows[r]);
                out(static_cast<int>(r), data.n_covariates()) =
                    data.instrument(rows[r]);
            }
            return out;
        };

        // Selection models per treatment level on (X, Z). The control
        // function for a training row comes from the model fitted on the
        // opposite half of its level cell, so no model feeds regressors to
        // its own training rows; evaluation rows use the full-complement
        // model of the requested level.
        const Eigen::MatrixXd xz_eval = xz(eval);
        Eigen::VectorXd cf_train(static_cast<int>(train.size()));
        std::vector<FittedModel> sel_full(data.q_levels);
        for (int l = 0; l < data.q_levels; ++l) {
            const std::vector<int> cell_rows =
                filter(train, [&](int r) { return data.treatment(r) == l; });
            const bool requested =
                std::find(levels.begin(), levels.end(), l) != levels.end();
            if (cell_rows.empty()) {
                if (requested) throw_empty_cell("selection propensity", k, l);
                continue;
            }
            const std::vector<int> cell_a = filter(
                cell_rows, [&](int r) { return folds.half(r, k) == 0; });
            const std::vector<int> cell_b = filter(
                cell_rows, [&](int r) { return folds.half(r, k) == 1; });
            if (cell_a.empty() || cell_b.empty()) {
                throw_empty_cell("selection propensity half", k, l);
            }
            const FittedModel on_a = fit_lasso_logistic(
                xz(cell_a), gather(data.selection.cast<double>(), cell_a),
                specs.selection_propensity);
            const FittedModel on_b = fit_lasso_logistic(
                xz(cell_b), gather(data.selection.cast<double>(), cell_b),
                specs.selection_propensity);
            sel_full[l] = fit_lasso_logistic(
                xz(cell_rows), gather(data.selection.cast<double>(), cell_rows),
                specs.selection_propensity);
            const Eigen::VectorXd pred_a = predict(on_b, xz(cell_a));
            const Eigen::VectorXd pred_b = predict(on_a, xz(cell_b));
            // scatter back into complement order
            std::size_t ia = 0, ib = 0;
            for (std::size_t r = 0; r < train.size(); ++r) {
                if (data.treatment(train[r]) != l) continue;
                cf_train(static_cast<int>(r)) = folds.half(train[r], k) == 0
                                                    ? pred_a(ia++)
                                                    : pred_b(ib++);
            }
        }
        for (int l = 0; l < data.q_levels; ++l) {
            const bool present = std::any_of(eval.begin(), eval.end(), [&](int r) {
                return data.treatment(r) == l;
            });
            if (!present) continue;
            if (sel_full[l].coef.size() == 0) {
                throw_empty_cell("selection propensity", k, l);
            }
            const Eigen::VectorXd cf_l = predict(sel_full[l], xz_eval);
            for (std::size_t r = 0; r < eval.size(); ++r) {
                if (data.treatment(eval[r]) == l) {
                    preds.control_function(eval[r]) = cf_l(r);
                }
            }
        }

        // treatment propensities on the covariates alone, as under MAR
        Eigen::MatrixXd raw(static_cast<int>(eval.size()), data.q_levels);
        for (int l = 0; l < data.q_levels; ++l) {
            const FittedModel model = fit_lasso_logistic(
                x_train, indicator(data.treatment, train, l),
                specs.treatment_propensity);
            raw.col(l) = predict(model, x_eval);
        }
        write_treatment_propensities(preds.treatment_propensity, raw, eval);

        // The control function enters the outcome model through the inverse
        // Mills ratio of its normal quantile (the exact correction shape
        // under Gaussian selection errors), residualized against the
        // covariates: the learner sees its selection-specific variation but
        // no repackaged covariate signal. An irrelevant instrument leaves
        // the residual uninformative and the fit collapses to its MAR
        // counterpart.
        auto mills_of = [](const Eigen::VectorXd& cf) {
            Eigen::VectorXd out(cf.size());
            for (int i = 0; i < cf.size(); ++i) {
                out(i) = mills_ratio(normal_quantile(cf(i)));
            }
            return out;
        };
        const Eigen::VectorXd lambda_train = mills_of(cf_train);
        Eigen::VectorXd lambda_eval(static_cast<int>(eval.size()));
        for (std::size_t r = 0; r < eval.size(); ++r) {
            lambda_eval(static_cast<int>(r)) =
                mills_ratio(normal_quantile(preds.control_function(eval[r])));
        }
        Eigen::MatrixXd proj_design(x_train.rows(), x_train.cols() + 1);
        proj_design.col(0).setOnes();
        proj_design.rightCols(x_train.cols()) = x_train;
        const Eigen::VectorXd proj_coef =
            proj_design.colPivHouseholderQr().solve(lambda_train);
        const Eigen::VectorXd resid_train = lambda_train - proj_design * proj_coef;
        Eigen::MatrixXd eval_design(x_eval.rows(), x_eval.cols() + 1);
        eval_design.col(0).setOnes();
        eval_design.rightCols(x_eval.cols()) = x_eval;
        const Eigen::VectorXd resid_eval = lambda_eval - eval_design * proj_coef;

        const Eigen::MatrixXd g_train = append_column(x_train, resid_train);
        const Eigen::MatrixXd g_eval = append_column(x_eval, resid_eval);

        // Pooled slope of the outcome on the control-function term: center
        // outcome and features by level means over the selected training
        // rows and lasso the pooled residuals; only the term's coefficient
        // is kept. An irrelevant instrument leaves the residualized term
        // uninformative, the coefficient is zeroed, and everything below
        // reduces to the MAR fits.
        std::vector<std::vector<int>> cell(levels.size());
        for (std::size_t r = 0; r < train.size(); ++r) {
            if (data.selection(train[r]) != 1) continue;
            for (std::size_t c = 0; c < levels.size(); ++c) {
                if (data.treatment(train[r]) == levels[c]) {
                    cell[c].push_back(static_cast<int>(r));
                }
            }
        }
        for (std::size_t c = 0; c < levels.size(); ++c) {
            if (cell[c].empty()) throw_empty_cell("outcome mean", k, levels[c]);
        }
        int pooled_rows = 0;
        for (const auto& rows : cell) pooled_rows += static_cast<int>(rows.size());
        Eigen::MatrixXd g_centered(pooled_rows, g_train.cols());
        Eigen::VectorXd y_centered(pooled_rows);
        {
            int row = 0;
            for (std::size_t c = 0; c < levels.size(); ++c) {
                Eigen::RowVectorXd gm = Eigen::RowVectorXd::Zero(g_train.cols());
                double ym = 0.0;
                for (int r : cell[c]) {
                    gm += g_train.row(r);
                    ym += data.outcome(train[r]);
                }
                gm /= static_cast<double>(cell[c].size());
                ym /= static_cast<double>(cell[c].size());
                for (int r : cell[c]) {
                    g_centered.row(row) = g_train.row(r) - gm;
                    y_centered(row) = data.outcome(train[r]) - ym;
                    ++row;
                }
            }
        }
        const FittedModel pooled_model =
            fit_lasso_linear(g_centered, y_centered, specs.outcome_mean);
        double cf_slope = pooled_model.coef(pooled_model.coef.size() - 1);

        // Post-lasso refit with a strong-evidence pretest: the term is kept
        // only when its t statistic clears 4, so a selection term the data
        // cannot support (an uninformative instrument) is zeroed instead of
        // leaking noise into the outcome channel.
        if (cf_slope != 0.0) {
            std::vector<int> active;
            for (int j = 0; j + 1 < pooled_model.coef.size(); ++j) {
                if (pooled_model.coef(j) != 0.0) active.push_back(j);
            }
            const int term = static_cast<int>(g_centered.cols()) - 1;
            active.push_back(term);
            Eigen::MatrixXd g_active(g_centered.rows(),
                                     static_cast<int>(active.size()));
            for (std::size_t j = 0; j < active.size(); ++j) {
                g_active.col(static_cast<int>(j)) = g_centered.col(active[j]);
            }
            const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(g_active);
            const Eigen::VectorXd ols = qr.solve(y_centered);
            const Eigen::VectorXd residual = y_centered - g_active * ols;
            const int dof = static_cast<int>(g_centered.rows()) -
                            static_cast<int>(active.size());
            cf_slope = 0.0;
            if (dof > 0) {
                const double sigma2 = residual.squaredNorm() / dof;
                const Eigen::MatrixXd xtx_inv =
                    (g_active.transpose() * g_active)
                        .ldlt()
                        .solve(Eigen::MatrixXd::Identity(
                            static_cast<int>(active.size()),
                            static_cast<int>(active.size())));
                const double se = std::sqrt(
                    sigma2 * xtx_inv(static_cast<int>(active.size()) - 1,
                                     static_cast<int>(active.size()) - 1));
                const double estimate = ols(static_cast<int>(active.size()) - 1);
                if (se > 0.0 && std::fabs(estimate / se) > 4.0) {
                    cf_slope = estimate;
                }
            }
        }

        // Per-level outcome models on the covariates after subtracting the
        // pretested control-function term from the outcome; predictions add
        // the term back at the row's own value, so it cancels exactly in
        // level contrasts.
        for (std::size_t c = 0; c < levels.size(); ++c) {
            const int d = levels[c];
            const Eigen::VectorXd sel = predict(sel_full[d], xz_eval);

            Eigen::MatrixXd x_cell(static_cast<int>(cell[c].size()),
                                   x_train.cols());
            Eigen::VectorXd y_cell(static_cast<int>(cell[c].size()));
            for (std::size_t r = 0; r < cell[c].size(); ++r) {
                const int local = cell[c][r];
                x_cell.row(r) = x_train.row(local);
                y_cell(r) =
                    data.outcome(train[local]) - cf_slope * resid_train(local);
            }
            const FittedModel mu_model =
                fit_lasso_linear(x_cell, y_cell, specs.outcome_mean);
            const Eigen::VectorXd mu =
                predict(mu_model, x_eval) + cf_slope * resid_eval;

            for (std::size_t r = 0; r < eval.size(); ++r) {
                preds.selection_propensity(eval[r], static_cast<int>(c)) = sel(r);
                preds.outcome_mean(eval[r], static_cast<int>(c)) = mu(r);
            }
        }
    });
    return preds;
}

NuisancePredictions crossfit_dynamic(const SelectionDataset& data,
                                     const FoldPlan& folds,
                                     const NuisanceSpecs& specs,
                                     const std::vector<int>& levels,
                                     unsigned n_threads) {
    if (!data.has_post_covariates()) {
        throw std::invalid_argument(
            "post-treatment covariates required for the dynamic estimator");
    }
    check_levels(data, levels);
    NuisancePredictions preds =
        make_result(CrossfitKind::Dynamic, data, folds, levels);

    parallel_for(folds.k_folds, n_threads, [&](std::size_t fold_index) {
        const int k = static_cast<int>(fold_index);
        const std::vector<int> train = folds.complement_rows(k);
        const std::vector<int> eval = folds.fold_rows(k);
        const Eigen::MatrixXd x_train = rows_of(data.covariates, train);
        const Eigen::MatrixXd x_eval = rows_of(data.covariates, eval);
        const Eigen::MatrixXd xm_eval =
            concat_columns(x_eval, rows_of(data.post_covariates, eval));

        Eigen::MatrixXd raw(static_cast<int>(eval.size()), data.q_levels);
        for (int l = 0; l < data.q_levels; ++l) {
            const FittedModel model = fit_lasso_logistic(
                x_train, indicator(data.treatment, train, l),
                specs.treatment_propensity);
            raw.col(l) = predict(model, x_eval);
        }
        write_treatment_propensities(preds.treatment_propensity, raw, eval);

        for (std::size_t c = 0; c < levels.size(); ++c) {
            const int d = levels[c];
            const std::vector<int> treated =
                filter(train, [&](int r) { return data.treatment(r) == d; });
            if (treated.empty()) throw_empty_cell("selection propensity", k, d);
            const FittedModel sel_model = fit_lasso_logistic(
                concat_columns(rows_of(data.covariates, treated),
                               rows_of(data.post_covariates, treated)),
                gather(data.selection.cast<double>(), treated),
                specs.selection_propensity);
            const Eigen::VectorXd sel = predict(sel_model, xm_eval);

            // conditional mean on half A
            const std::vector<int> mu_rows = filter(train, [&](int r) {
                return folds.half(r, k) == 0 && data.treatment(r) == d &&
                       data.selection(r) == 1;
            });
            if (mu_rows.empty()) throw_empty_cell("outcome mean", k, d);
            const FittedModel mu_model = fit_lasso_linear(
                concat_columns(rows_of(data.covariates, mu_rows),
                               rows_of(data.post_covariates, mu_rows)),
                gather(data.outcome, mu_rows), specs.outcome_mean);
            const Eigen::VectorXd mu = predict(mu_model, xm_eval);

            // nested mean on half B: regress half-A fitted values on X
            const std::vector<int> nu_rows = filter(train, [&](int r) {
                return folds.half(r, k) == 1 && data.treatment(r) == d;
            });
            if (nu_rows.empty()) throw_empty_cell("nested mean", k, d);
            const Eigen::VectorXd nu_targets = predict(
                mu_model, concat_columns(rows_of(data.covariates, nu_rows),
                                         rows_of(data.post_covariates, nu_rows)));
            const FittedModel nu_model = fit_lasso_linear(
                rows_of(data.covariates, nu_rows), nu_targets, specs.outcome_mean);
            const Eigen::VectorXd nu = predict(nu_model, x_eval);

            for (std::size_t r = 0; r < eval.size(); ++r) {
                preds.selection_propensity(eval[r], static_cast<int>(c)) = sel(r);
                preds.outcome_mean(eval[r], static_cast<int>(c)) = mu(r);
                preds.nested_mean(eval[r], static_cast<int>(c)) = nu(r);
            }
        }
    });
    return preds;
}

}  // namespace dmlsel

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "specsel/common.hpp"
#include "specsel/dataset.hpp"
#include "specsel/mixture.hpp"

namespace specsel {

/// Gaussian linear regression of one variable on the chosen set, fitted by
/// least squares.  sigma2 is the MLE residual variance (RSS / rows) and
/// bic_reg = 2 * loglik - d_reg * log(rows).
struct RegressionFit {
    double alpha = 0.0;
    Eigen::VectorXd beta;        // one slope per requested predictor (0 for dropped)
    std::vector<int> dropped;    // predictor positions removed by pivoting
    double sigma2 = 0.0;
    double loglik = 0.0;
    int d_reg = 0;
    double bic_reg = 0.0;
    int rows = 0;
    bool near_perfect = false;   // sigma2 under 1e-12 x var(target)
};

/// Least-squares core on an explicit design.  X has one column per
/// predictor (no intercept column; it is added internally).  Rank-deficient
/// designs are solved by column-pivoted QR with dependent columns dropped.
inline RegressionFit ols_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    const int m = static_cast<int>(y.size());
    const int q = static_cast<int>(X.cols());
    if (m < q + 2) throw DataError("regression: needs at least q + 2 rows");

    Eigen::MatrixXd design(m, q + 1);
    design.col(0) = Eigen::VectorXd::Ones(m);
    if (q > 0) design.rightCols(q) = X;

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    const int rank = static_cast<int>(qr.rank());
    RegressionFit fit;
    fit.rows = m;
    fit.beta = Eigen::VectorXd::Zero(q);

    Eigen::VectorXd coef;
    if (rank == q + 1) {
        coef = qr.solve(y);
    } else {
        // Re-solve on the pivot-selected independent columns.
        const auto& perm = qr.colsPermutation().indices();
        std::vector<int> keep(perm.data(), perm.data() + rank);
        std::sort(keep.begin(), keep.end());
        Eigen::MatrixXd sub(m, rank);
        for (int j = 0; j < rank; ++j) sub.col(j) = design.col(keep[static_cast<std::size_t>(j)]);
        Eigen::VectorXd sub_coef = sub.colPivHouseholderQr().solve(y);
        coef = Eigen::VectorXd::Zero(q + 1);
        for (int j = 0; j < rank; ++j) coef[keep[static_cast<std::size_t>(j)]] = sub_coef[j];
        std::vector<char> kept(static_cast<std::size_t>(q + 1), 0);
        for (int j : keep) kept[static_cast<std::size_t>(j)] = 1;
        for (int j = 1; j <= q; ++j)
            if (!kept[static_cast<std::size_t>(j)]) fit.dropped.push_back(j - 1);
    }
    fit.alpha = coef[0];
    for (int j = 0; j < q; ++j) fit.beta[j] = coef[j + 1];

    const double rss = (y - design * coef).squaredNorm();
    fit.sigma2 = rss / m;

    const double ybar = y.mean();
    const double var_y = (y.array() - ybar).square().sum() / m;
    const double floor = std::max(1e-12 * var_y, 1e-300);
    if (fit.sigma2 < 1e-12 * var_y || fit.sigma2 <= 0.0) {
        fit.near_perfect = true;
        fit.sigma2 = std::max(fit.sigma2, floor);
    }

    fit.loglik = -0.5 * m * (kLog2Pi + std::log(fit.sigma2) + 1.0);
    fit.d_reg = rank + 1;  // retained coefficients + variance; q + 2 at full rank
    fit.bic_reg = 2.0 * fit.loglik - static_cast<double>(fit.d_reg) * std::log(static_cast<double>(m));
    return fit;
}

/// Regression of `target` on `predictors` over the split's rows: labeled +
/// unlabeled combined when updating is enabled, labeled only otherwise.
inline RegressionFit fit_regression(const LabeledSplit& split, int target, const std::vector<int>& predictors,
                                    bool include_unlabeled) {
    const int N = split.N();
    const int M = include_unlabeled ? split.M() : 0;
    Eigen::MatrixXd X(N + M, static_cast<Eigen::Index>(predictors.size()));
    Eigen::VectorXd y(N + M);
    for (std::size_t j = 0; j < predictors.size(); ++j) {
        X.col(static_cast<Eigen::Index>(j)).head(N) = split.labeled.values.col(predictors[j]);
        if (M > 0) X.col(static_cast<Eigen::Index>(j)).tail(M) = split.unlabeled.values.col(predictors[j]);
    }
    y.head(N) = split.labeled.values.col(target);
    if (M > 0) y.tail(M) = split.unlabeled.values.col(target);
    return ols_fit(X, y);
}

/// BIC of the labels-only model (class proportions, no variables).  This is
/// the chosen-part of the No-Grouping side when the chosen set is empty; it
/// carries the same multinomial term and G-1 proportion parameters that sit
/// inside every mixture BIC, so first-step comparisons stay on the same
/// footing as later ones.
inline double labels_only_bic(const LabeledSplit& split, bool updating) {
    const int G = split.labeled.num_classes();
    const int N = split.N();
    std::vector<double> counts(static_cast<std::size_t>(G), 0.0);
    for (int l : split.labeled.labels) counts[static_cast<std::size_t>(l)] += 1.0;
    double ll = 0.0;
    for (double c : counts)
        if (c > 0.0) ll += c * std::log(c / N);
    const int n_fit = updating ? N + split.M() : N;
    return 2.0 * ll - static_cast<double>(G - 1) * std::log(static_cast<double>(n_fit));
}

enum class CompareAction { add, remove };

/// Outcome of one Grouping vs No-Grouping comparison.  `diff` is the
/// evidence in the direction of the proposed action: for an addition
/// bic_grouping - bic_nogrouping, for a removal the negation, so that a
/// positive value always argues for performing the action.
struct ComparisonResult {
    CompareAction action = CompareAction::add;
    int col = -1;
    double var_id = 0.0;
    double bic_grouping = 0.0;
    double bic_nogrouping = 0.0;
    std::optional<CovarianceStructure> structure_grouping;
    std::optional<CovarianceStructure> structure_nogrouping;
    bool grouping_singular = false;
    bool structure_tie = false;
    double diff = 0.0;
};

inline double recompute_diff(const ComparisonResult& r) {
    return r.action == CompareAction::add ? r.bic_grouping - r.bic_nogrouping : r.bic_nogrouping - r.bic_grouping;
}

/// Evidence for adding `proposed` to `chosen`: the best-structure class
/// model on chosen + proposed, against the cached chosen-set BIC plus a
/// regression of the proposed variable on the chosen set.  With an empty
/// chosen set the chosen-part is the labels-only BIC and the regression is
/// intercept-only.
inline ComparisonResult compare_add(const LabeledSplit& split, const std::vector<int>& chosen, int proposed,
                                    double chosen_bic, std::optional<CovarianceStructure> chosen_structure,
                                    const FitOptions& opts) {
    ComparisonResult r;
    r.action = CompareAction::add;
    r.col = proposed;
    r.var_id = split.labeled.var_ids[static_cast<std::size_t>(proposed)];

    std::vector<int> cols(chosen);
    cols.push_back(proposed);
    try {
        RegressionFit reg = fit_regression(split, proposed, chosen, opts.updating);
        const double chosen_part = chosen.empty() ? labels_only_bic(split, opts.updating) : chosen_bic;
        r.bic_nogrouping = chosen_part + reg.bic_reg;
        r.structure_nogrouping = chosen_structure;
        MixtureModel grouping = best_structure_fit(split, cols, opts);
        r.bic_grouping = grouping.bic;
        r.structure_grouping = grouping.covs.structure;
        r.structure_tie = grouping.structure_tie;
        r.grouping_singular = grouping.singular;
        r.diff = r.bic_grouping - r.bic_nogrouping;
    } catch (const SingularFitError&) {
        r.bic_grouping = -std::numeric_limits<double>::infinity();
        r.grouping_singular = true;
        r.diff = -std::numeric_limits<double>::infinity();
    } catch (const DataError&) {
        // Too few rows for the comparison; the candidate is not addable.
        r.diff = -std::numeric_limits<double>::infinity();
    }
    return r;
}

/// Evidence for removing `candidate` from `chosen`: the cached full-set
/// model (grouping side) against the best-structure model on the reduced
/// set plus a regression of the candidate on the reduced set.  Positive
/// diff argues for removal.
inline ComparisonResult compare_remove(const LabeledSplit& split, const std::vector<int>& chosen, int candidate,
                                       double full_bic, std::optional<CovarianceStructure> full_structure,
                                       const FitOptions& opts) {
    if (chosen.size() < 2) throw ConfigError("compare_remove: removal would empty the chosen set");
    std::vector<int> reduced;
    reduced.reserve(chosen.size() - 1);
    bool found = false;
    for (int c : chosen) {
        if (c == candidate && !found) {
            found = true;
            continue;
        }
        reduced.push_back(c);
    }
    if (!found) throw ConfigError("compare_remove: candidate not in chosen set");

    ComparisonResult r;
    r.action = CompareAction::remove;
    r.col = candidate;
    r.var_id = split.labeled.var_ids[static_cast<std::size_t>(candidate)];
    r.bic_grouping = full_bic;
    r.structure_grouping = full_structure;

    try {
        MixtureModel reduced_model = best_structure_fit(split, reduced, opts);
        RegressionFit reg = fit_regression(split, candidate, reduced, opts.updating);
        r.bic_nogrouping = reduced_model.bic + reg.bic_reg;
        r.structure_nogrouping = reduced_model.covs.structure;
        r.structure_tie = reduced_model.structure_tie;
        r.diff = r.bic_nogrouping - r.bic_grouping;
    } catch (const SingularFitError&) {
        r.bic_nogrouping = -std::numeric_limits<double>::infinity();
        r.diff = -std::numeric_limits<double>::infinity();
    } catch (const DataError&) {
        r.bic_nogrouping = -std::numeric_limits<double>::infinity();
        r.diff = -std::numeric_limits<double>::infinity();
    }
    return r;
}

}  // namespace specsel

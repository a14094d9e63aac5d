#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "specsel/common.hpp"
#include "specsel/covariance.hpp"
#include "specsel/dataset.hpp"

namespace specsel {

/// Fitting knobs shared by the selection machinery.  `updating` switches
/// between supervised-only fits and semi-supervised EM over labeled +
/// unlabeled rows.
struct FitOptions {
    bool updating = true;
    double em_rel_tol = 1e-7;
    int em_max_iter = 500;
};

/// One Gaussian class model: mixing proportions, per-class means, a
/// structured covariance set, and the achieved fit summary.
/// bic = 2 * loglik - d * log(n_fit), higher is better.
struct MixtureModel {
    std::vector<double> tau;
    std::vector<Eigen::VectorXd> means;
    CovarianceSet covs;
    double loglik = 0.0;
    int n_fit = 0;
    int d = 0;
    double bic = 0.0;
    bool singular = false;
    bool converged = true;
    bool structure_tie = false;

    int groups() const { return static_cast<int>(tau.size()); }
    int dim() const { return means.empty() ? 0 : static_cast<int>(means[0].size()); }
    bool flagged() const { return singular || !converged; }
};

/// Posterior group probabilities for a block of rows, plus the argmax
/// labels (ties broken toward the lower class index and counted).
struct Responsibilities {
    Eigen::MatrixXd z;  // rows x G, each row sums to 1
    std::vector<int> hard;
    int ties = 0;
};

inline Eigen::MatrixXd select_cols(const Eigen::MatrixXd& X, const std::vector<int>& cols) {
    Eigen::MatrixXd out(X.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = X.col(cols[j]);
    return out;
}

/// Normalizes a vector of log-weights into probabilities (log-sum-exp).
inline Eigen::VectorXd posterior_from_logweights(const Eigen::VectorXd& lw) {
    const double m = lw.maxCoeff();
    Eigen::VectorXd z = (lw.array() - m).exp();
    return z / z.sum();
}

namespace detail {

inline Eigen::MatrixXd hard_indicators(const Dataset& labeled) {
    const int G = labeled.num_classes();
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(labeled.n(), G);
    for (int i = 0; i < labeled.n(); ++i) W(i, labeled.labels[static_cast<std::size_t>(i)]) = 1.0;
    return W;
}

/// log tau_g + log N(x | mu_g, Sigma_g) for every row and group, via one
/// triangular solve per group.
inline Eigen::MatrixXd component_logweights(const Eigen::MatrixXd& X, const std::vector<double>& tau,
                                            const std::vector<Eigen::VectorXd>& means, const CovarianceSet& covs) {
    const int n = static_cast<int>(X.rows());
    const int G = static_cast<int>(tau.size());
    const int p = static_cast<int>(X.cols());
    Eigen::MatrixXd lw(n, G);
    for (int g = 0; g < G; ++g) {
        const double base = std::log(tau[static_cast<std::size_t>(g)]) -
                            0.5 * (p * kLog2Pi + covs.log_det[static_cast<std::size_t>(g)]);
        Eigen::MatrixXd centered = (X.rowwise() - means[static_cast<std::size_t>(g)].transpose()).transpose();
        covs.chol_lower[static_cast<std::size_t>(g)].triangularView<Eigen::Lower>().solveInPlace(centered);
        lw.col(g) = (-0.5 * centered.colwise().squaredNorm().array() + base).transpose();
    }
    return lw;
}

inline MixtureModel assemble(const GroupScatter& stats, CovarianceSet covs, double loglik, int n_fit) {
    MixtureModel m;
    const int G = stats.groups();
    const int p = stats.dim();
    m.tau.resize(static_cast<std::size_t>(G));
    const double total = stats.total_weight();
    for (int g = 0; g < G; ++g) m.tau[static_cast<std::size_t>(g)] = stats.weight[static_cast<std::size_t>(g)] / total;
    m.means = stats.mean;
    m.singular = covs.regularized;
    m.covs = std::move(covs);
    m.loglik = loglik;
    m.n_fit = n_fit;
    m.d = (G - 1) + G * p + param_count(m.covs.structure, p, G);
    m.bic = 2.0 * loglik - static_cast<double>(m.d) * std::log(static_cast<double>(n_fit));
    return m;
}

}  // namespace detail

/// Maximum-likelihood class model on labeled rows only: tau = class
/// frequencies, means = class means, covariances = structure-constrained
/// MLE with hard weights.  loglik is the complete-data log-likelihood
/// sum_i log[tau_g(i) f(x_i)].
inline MixtureModel fit_supervised(const Dataset& labeled, const std::vector<int>& cols,
                                   CovarianceStructure structure) {
    if (!labeled.has_labels()) throw DataError("fit_supervised: dataset has no labels");
    if (cols.empty()) throw ConfigError("fit_supervised: empty column subset");
    labeled.validate();

    const Eigen::MatrixXd X = select_cols(labeled.values, cols);
    const Eigen::MatrixXd W = detail::hard_indicators(labeled);
    GroupScatter stats = group_scatter(X, W);
    CovarianceSet covs = estimate(stats, structure);

    MixtureModel m = detail::assemble(stats, std::move(covs), 0.0, labeled.n());
    Eigen::MatrixXd lw = detail::component_logweights(X, m.tau, m.means, m.covs);
    double ll = 0.0;
    for (int i = 0; i < labeled.n(); ++i) ll += lw(i, labeled.labels[static_cast<std::size_t>(i)]);
    m.loglik = ll;
    m.bic = 2.0 * ll - static_cast<double>(m.d) * std::log(static_cast<double>(m.n_fit));
    return m;
}

/// Posterior responsibilities of `rows` under a fitted model.
inline Responsibilities classify(const MixtureModel& model, const Eigen::MatrixXd& rows) {
    const int n = static_cast<int>(rows.rows());
    const int G = model.groups();
    Responsibilities r;
    r.z.resize(n, G);
    r.hard.resize(static_cast<std::size_t>(n));
    Eigen::MatrixXd lw = detail::component_logweights(rows, model.tau, model.means, model.covs);
    for (int i = 0; i < n; ++i) {
        r.z.row(i) = posterior_from_logweights(lw.row(i).transpose()).transpose();
        int best = 0;
        bool tie = false;
        for (int g = 1; g < G; ++g) {
            if (r.z(i, g) > r.z(i, best)) {
                best = g;
                tie = false;
            } else if (r.z(i, g) == r.z(i, best)) {
                tie = true;  // argmax keeps the lower index
            }
        }
        if (tie) ++r.ties;
        r.hard[static_cast<std::size_t>(i)] = best;
    }
    return r;
}

inline Responsibilities classify(const MixtureModel& model, const Dataset& unlabeled, const std::vector<int>& cols) {
    return classify(model, select_cols(unlabeled.values, cols));
}

/// Optional EM diagnostics (per-iteration observed-data log-likelihood).
struct EmDiagnostics {
    std::vector<double> loglik_history;
    int iterations = 0;
};

/// Semi-supervised fit by EM: labeled rows keep their hard indicators,
/// unlabeled rows get posterior responsibilities, and the M-step pools
/// both.  Maximizes
///   sum_labeled log[tau_g f(x)] + sum_unlabeled log[sum_g tau_g f(y)].
/// Starts from the supervised MLE; with no unlabeled rows this is exactly
/// fit_supervised.
inline std::pair<MixtureModel, Responsibilities> fit_semisupervised(const LabeledSplit& split,
                                                                    const std::vector<int>& cols,
                                                                    CovarianceStructure structure,
                                                                    const FitOptions& opts = {},
                                                                    EmDiagnostics* diag = nullptr) {
    const int N = split.N();
    const int M = split.M();
    if (M == 0) {
        MixtureModel m = fit_supervised(split.labeled, cols, structure);
        Responsibilities r;
        r.z.resize(0, m.groups());
        return {std::move(m), std::move(r)};
    }

    const Eigen::MatrixXd X = select_cols(split.labeled.values, cols);
    const Eigen::MatrixXd Y = select_cols(split.unlabeled.values, cols);
    const Eigen::MatrixXd hard = detail::hard_indicators(split.labeled);
    const int G = split.labeled.num_classes();
    const int n_fit = N + M;

    // Warm start at the supervised MLE on the labeled rows.
    GroupScatter stats = group_scatter(X, hard);
    CovarianceSet covs = estimate(stats, structure);
    std::vector<double> tau(static_cast<std::size_t>(G));
    for (int g = 0; g < G; ++g) tau[static_cast<std::size_t>(g)] = stats.weight[static_cast<std::size_t>(g)] / stats.total_weight();
    std::vector<Eigen::VectorXd> means = stats.mean;

    Eigen::MatrixXd all_rows(n_fit, static_cast<Eigen::Index>(cols.size()));
    all_rows.topRows(N) = X;
    all_rows.bottomRows(M) = Y;
    Eigen::MatrixXd weights(n_fit, G);
    weights.topRows(N) = hard;

    Eigen::MatrixXd z(M, G);
    double prev_ll = -std::numeric_limits<double>::infinity();
    double ll = prev_ll;
    bool converged = false;
    int it = 0;
    for (;; ++it) {
        // E-step restricted to the unlabeled rows.
        Eigen::MatrixXd lw_lab = detail::component_logweights(X, tau, means, covs);
        Eigen::MatrixXd lw_unlab = detail::component_logweights(Y, tau, means, covs);
        ll = 0.0;
        for (int i = 0; i < N; ++i) ll += lw_lab(i, split.labeled.labels[static_cast<std::size_t>(i)]);
        for (int j = 0; j < M; ++j) {
            const double m = lw_unlab.row(j).maxCoeff();
            const double s = (lw_unlab.row(j).array() - m).exp().sum();
            ll += m + std::log(s);
            z.row(j) = (lw_unlab.row(j).array() - (m + std::log(s))).exp();
        }
        if (diag) diag->loglik_history.push_back(ll);
        if (it > 0 && ll - prev_ll <= opts.em_rel_tol * (1.0 + std::abs(ll))) {
            converged = true;
            break;
        }
        if (it >= opts.em_max_iter) break;
        prev_ll = ll;

        // M-step on combined hard + soft weights.
        weights.bottomRows(M) = z;
        stats = group_scatter(all_rows, weights);
        const double total = stats.total_weight();
        for (int g = 0; g < G; ++g) tau[static_cast<std::size_t>(g)] = stats.weight[static_cast<std::size_t>(g)] / total;
        means = stats.mean;
        covs = estimate(stats, structure, &covs);
    }
    if (diag) diag->iterations = it;

    MixtureModel m;
    m.tau = tau;
    m.means = means;
    m.singular = covs.regularized;
    m.covs = std::move(covs);
    m.converged = converged;
    m.loglik = ll;
    m.n_fit = n_fit;
    m.d = (G - 1) + G * static_cast<int>(cols.size()) + param_count(m.covs.structure, static_cast<int>(cols.size()), G);
    m.bic = 2.0 * ll - static_cast<double>(m.d) * std::log(static_cast<double>(n_fit));

    Responsibilities r;
    r.z = z;
    r.hard.resize(static_cast<std::size_t>(M));
    for (int j = 0; j < M; ++j) {
        int best = 0;
        for (int g = 1; g < G; ++g)
            if (z(j, g) > z(j, best)) best = g;
        r.hard[static_cast<std::size_t>(j)] = best;
    }
    return {std::move(m), std::move(r)};
}

/// Fits every structure applicable at dim(cols) and returns the highest-BIC
/// model.  Ties go to the more parsimonious structure; a flagged
/// (singular / non-converged) model loses any exact tie.  Throws
/// SingularFitError when every structure degenerates.
inline MixtureModel best_structure_fit(const LabeledSplit& split, const std::vector<int>& cols,
                                       const FitOptions& opts = {}) {
    if (cols.empty()) throw ConfigError("best_structure_fit: empty column subset");
    std::optional<MixtureModel> best;
    bool tie_seen = false;
    bool any_clean = false;
    for (CovarianceStructure s : structures_for_dimension(static_cast<int>(cols.size()))) {
        MixtureModel m = opts.updating ? fit_semisupervised(split, cols, s, opts).first
                                       : fit_supervised(split.labeled, cols, s);
        any_clean = any_clean || !m.singular;
        if (!best) {
            best = std::move(m);
            continue;
        }
        bool take = false;
        if (m.bic > best->bic) {
            take = true;
            tie_seen = false;
        } else if (m.bic == best->bic) {
            tie_seen = true;
            if (m.d < best->d || (m.d == best->d && !m.flagged() && best->flagged())) take = true;
        }
        if (take) best = std::move(m);
    }
    if (!any_clean) throw SingularFitError("best_structure_fit: every covariance structure degenerated");
    best->structure_tie = tie_seen;
    if (tie_seen)
        log_message(LogLevel::debug, std::string("best_structure_fit: BIC tie resolved toward ") +
                                         to_string(best->covs.structure));
    return *best;
}

}  // namespace specsel

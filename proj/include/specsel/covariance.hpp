#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "specsel/common.hpp"

namespace specsel {

/// The constrained Gaussian covariance family.  Multivariate structures are
/// named by the volume/shape/orientation constraint pattern of the
/// eigendecomposition Sigma_g = lambda_g * D_g * A_g * D_g^T (E = equal
/// across groups, V = variable, I = identity).  E and V are the univariate
/// specializations (pooled / per-group variance).
enum class CovarianceStructure { E, V, EII, VII, EEI, VEI, EVI, VVI, EEE, EEV, VEV, VVV };

inline const char* to_string(CovarianceStructure s) {
    switch (s) {
        case CovarianceStructure::E: return "E";
        case CovarianceStructure::V: return "V";
        case CovarianceStructure::EII: return "EII";
        case CovarianceStructure::VII: return "VII";
        case CovarianceStructure::EEI: return "EEI";
        case CovarianceStructure::VEI: return "VEI";
        case CovarianceStructure::EVI: return "EVI";
        case CovarianceStructure::VVI: return "VVI";
        case CovarianceStructure::EEE: return "EEE";
        case CovarianceStructure::EEV: return "EEV";
        case CovarianceStructure::VEV: return "VEV";
        case CovarianceStructure::VVV: return "VVV";
    }
    return "?";
}

inline std::optional<CovarianceStructure> structure_from_string(const std::string& s) {
    static const std::pair<const char*, CovarianceStructure> table[] = {
        {"E", CovarianceStructure::E},     {"V", CovarianceStructure::V},
        {"EII", CovarianceStructure::EII}, {"VII", CovarianceStructure::VII},
        {"EEI", CovarianceStructure::EEI}, {"VEI", CovarianceStructure::VEI},
        {"EVI", CovarianceStructure::EVI}, {"VVI", CovarianceStructure::VVI},
        {"EEE", CovarianceStructure::EEE}, {"EEV", CovarianceStructure::EEV},
        {"VEV", CovarianceStructure::VEV}, {"VVV", CovarianceStructure::VVV},
    };
    for (auto& [name, v] : table)
        if (s == name) return v;
    return std::nullopt;
}

inline bool is_univariate(CovarianceStructure s) {
    return s == CovarianceStructure::E || s == CovarianceStructure::V;
}

/// All structures applicable at dimension p: {E, V} when p == 1, the ten
/// multivariate structures when p >= 2.
inline std::vector<CovarianceStructure> structures_for_dimension(int p) {
    if (p < 1) throw ConfigError("structures_for_dimension: p must be >= 1");
    using CS = CovarianceStructure;
    if (p == 1) return {CS::E, CS::V};
    return {CS::EII, CS::VII, CS::EEI, CS::VEI, CS::EVI, CS::VVI, CS::EEE, CS::EEV, CS::VEV, CS::VVV};
}

inline void check_structure_dimension(CovarianceStructure s, int p) {
    if (p < 1) throw ConfigError("covariance: dimension must be >= 1");
    if (is_univariate(s) && p != 1)
        throw ConfigError(std::string("covariance: structure ") + to_string(s) + " requires p == 1");
    if (!is_univariate(s) && p < 2)
        throw ConfigError(std::string("covariance: structure ") + to_string(s) + " requires p >= 2");
}

/// Free covariance parameters: volume (1 or G) + shape (p-1 scaled
/// eigenvalues, shared or per group) + orientation (p(p-1)/2 rotation
/// angles, shared or per group).  Spherical structures carry no shape and
/// diagonal structures no orientation.
inline int param_count(CovarianceStructure s, int p, int G) {
    check_structure_dimension(s, p);
    if (G < 1) throw ConfigError("param_count: G must be >= 1");
    const int shape = p - 1;
    const int orient = p * (p - 1) / 2;
    using CS = CovarianceStructure;
    switch (s) {
        case CS::E: return 1;
        case CS::V: return G;
        case CS::EII: return 1;
        case CS::VII: return G;
        case CS::EEI: return 1 + shape;
        case CS::VEI: return G + shape;
        case CS::EVI: return 1 + G * shape;
        case CS::VVI: return G + G * shape;
        case CS::EEE: return 1 + shape + orient;
        case CS::EEV: return 1 + shape + G * orient;
        case CS::VEV: return G + shape + G * orient;
        case CS::VVV: return G * (1 + shape + orient);
    }
    return 0;
}

/// Weighted per-group sufficient statistics for covariance estimation:
/// effective counts n_g, means, and scatter matrices
/// W_g = sum_i w_ig (x_i - mean_g)(x_i - mean_g)^T.
struct GroupScatter {
    std::vector<double> weight;
    std::vector<Eigen::VectorXd> mean;
    std::vector<Eigen::MatrixXd> scatter;

    int groups() const { return static_cast<int>(weight.size()); }
    int dim() const { return mean.empty() ? 0 : static_cast<int>(mean[0].size()); }
    double total_weight() const {
        double t = 0.0;
        for (double w : weight) t += w;
        return t;
    }
};

/// Accumulates GroupScatter from an n x p data block and an n x G
/// responsibility matrix (hard 0/1 indicators are a special case).
inline GroupScatter group_scatter(const Eigen::MatrixXd& X, const Eigen::MatrixXd& W) {
    const int n = static_cast<int>(X.rows());
    const int p = static_cast<int>(X.cols());
    const int G = static_cast<int>(W.cols());
    if (static_cast<int>(W.rows()) != n) throw ConfigError("group_scatter: weight rows mismatch");
    GroupScatter st;
    st.weight.resize(static_cast<std::size_t>(G));
    st.mean.assign(static_cast<std::size_t>(G), Eigen::VectorXd::Zero(p));
    st.scatter.assign(static_cast<std::size_t>(G), Eigen::MatrixXd::Zero(p, p));
    Eigen::MatrixXd centered(n, p);
    for (int g = 0; g < G; ++g) {
        const double ng = W.col(g).sum();
        st.weight[static_cast<std::size_t>(g)] = ng;
        if (ng <= 0.0) continue;
        st.mean[static_cast<std::size_t>(g)] = (X.transpose() * W.col(g)) / ng;
        centered = X.rowwise() - st.mean[static_cast<std::size_t>(g)].transpose();
        st.scatter[static_cast<std::size_t>(g)].noalias() =
            centered.transpose() * (centered.array().colwise() * W.col(g).array()).matrix();
    }
    return st;
}

/// A fitted set of G covariance matrices satisfying one structure, with
/// cached Cholesky factors and log-determinants for density evaluation.
/// `regularized` flags that an estimate hit the eigenvalue floor and was
/// inflated; callers treat such fits as degenerate candidates.
struct CovarianceSet {
    CovarianceStructure structure = CovarianceStructure::VVV;
    std::vector<Eigen::MatrixXd> sigma;
    std::vector<Eigen::MatrixXd> chol_lower;
    std::vector<double> log_det;
    Eigen::VectorXd shape;  // shared shape diagonal (VEI/VEV warm starts)
    bool regularized = false;

    int groups() const { return static_cast<int>(sigma.size()); }
    int dim() const { return sigma.empty() ? 0 : static_cast<int>(sigma[0].rows()); }

    /// Multivariate normal log-density of x under component g.
    double log_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mean, int g) const {
        const auto& L = chol_lower[static_cast<std::size_t>(g)];
        Eigen::VectorXd z = L.triangularView<Eigen::Lower>().solve(x - mean);
        return -0.5 * (dim() * kLog2Pi + log_det[static_cast<std::size_t>(g)] + z.squaredNorm());
    }

    /// Sigma_g^{-1} via the cached factor.
    Eigen::MatrixXd inverse(int g) const {
        const auto& L = chol_lower[static_cast<std::size_t>(g)];
        Eigen::MatrixXd inv_l = L.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(dim(), dim()));
        return inv_l.transpose() * inv_l;
    }
};

namespace detail {

inline double geometric_mean(const Eigen::VectorXd& v) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < v.size(); ++j) s += std::log(v[j]);
    return std::exp(s / static_cast<double>(v.size()));
}

/// -2 log-likelihood core used by the inner fixed-point loops:
/// sum_g [ n_g log|Sigma_g| + tr(W_g Sigma_g^{-1}) ] expressed through
/// per-group eigenvalues omega_g, volumes lambda_g and the shared shape a.
inline double vshape_objective(const std::vector<Eigen::VectorXd>& omega, const std::vector<double>& n_g,
                               const std::vector<double>& lambda, const Eigen::VectorXd& a) {
    double f = 0.0;
    const auto p = static_cast<double>(a.size());
    for (std::size_t g = 0; g < omega.size(); ++g) {
        double tr = 0.0;
        for (Eigen::Index j = 0; j < a.size(); ++j) tr += omega[g][j] / a[j];
        f += n_g[g] * p * std::log(lambda[g]) + tr / lambda[g];
    }
    return f;
}

/// Alternating volume/shape updates shared by VEI (omega = scatter
/// diagonals) and VEV (omega = scatter eigenvalues).  Returns per-group
/// volumes and the common det-1 shape diagonal.
inline void fit_volume_shape(const std::vector<Eigen::VectorXd>& omega, const std::vector<double>& n_g,
                             const Eigen::VectorXd& shape_init, std::vector<double>& lambda, Eigen::VectorXd& a,
                             double rel_tol = 1e-8, int max_iter = 200) {
    const int G = static_cast<int>(omega.size());
    const auto p = static_cast<double>(shape_init.size());
    a = shape_init;
    lambda.assign(static_cast<std::size_t>(G), 1.0);
    double prev = std::numeric_limits<double>::infinity();
    for (int it = 0; it < max_iter; ++it) {
        for (int g = 0; g < G; ++g) {
            double tr = 0.0;
            for (Eigen::Index j = 0; j < a.size(); ++j) tr += omega[static_cast<std::size_t>(g)][j] / a[j];
            lambda[static_cast<std::size_t>(g)] = tr / (n_g[static_cast<std::size_t>(g)] * p);
        }
        Eigen::VectorXd b = Eigen::VectorXd::Zero(a.size());
        for (int g = 0; g < G; ++g) b += omega[static_cast<std::size_t>(g)] / lambda[static_cast<std::size_t>(g)];
        a = b / geometric_mean(b);
        const double f = vshape_objective(omega, n_g, lambda, a);
        if (std::abs(prev - f) <= rel_tol * (1.0 + std::abs(f))) break;
        prev = f;
    }
}

}  // namespace detail

/// Weighted maximum-likelihood covariance estimate under a structural
/// constraint.  Closed-form where available; VEI and VEV alternate volume
/// and shape updates.  `warm` (same structure) seeds the inner loop so an
/// EM caller's conditional maximization never regresses.  Estimates whose
/// smallest eigenvalue falls below 1e-10 x mean variance are inflated to
/// that floor and flagged.
inline CovarianceSet estimate(const GroupScatter& stats, CovarianceStructure structure,
                              const CovarianceSet* warm = nullptr) {
    using CS = CovarianceStructure;
    const int G = stats.groups();
    const int p = stats.dim();
    check_structure_dimension(structure, p);
    if (G < 1) throw ConfigError("covariance::estimate: no groups");

    CovarianceSet out;
    out.structure = structure;
    out.sigma.assign(static_cast<std::size_t>(G), Eigen::MatrixXd::Zero(p, p));

    bool degenerate_weight = false;
    std::vector<double> n_g(stats.weight);
    const double total_raw = stats.total_weight();
    if (!(total_raw > 0.0)) throw ConfigError("covariance::estimate: total weight must be positive");
    for (double& w : n_g) {
        if (w < 1e-12 * total_raw) {
            w = 1e-12 * total_raw;
            degenerate_weight = true;
        }
    }
    double total = 0.0;
    for (double w : n_g) total += w;

    // Mean per-coordinate variance; sets the scale of the eigenvalue floor.
    double scale = 0.0;
    for (int g = 0; g < G; ++g) scale += stats.scatter[static_cast<std::size_t>(g)].trace();
    scale /= total * p;
    const double floor = (scale > 0.0) ? 1e-10 * scale : 1e-12;
    const double tiny = std::max(floor, 1e-300);

    bool clamped = false;
    auto clamped_diag = [&](int g) {
        const double lo = tiny * n_g[static_cast<std::size_t>(g)];
        Eigen::VectorXd d = stats.scatter[static_cast<std::size_t>(g)].diagonal();
        for (int j = 0; j < p; ++j)
            if (d[j] < lo) {
                d[j] = lo;
                clamped = true;
            }
        return d;
    };

    switch (structure) {
        case CS::E:
        case CS::EEE: {
            Eigen::MatrixXd pooled = Eigen::MatrixXd::Zero(p, p);
            for (int g = 0; g < G; ++g) pooled += stats.scatter[static_cast<std::size_t>(g)];
            pooled /= total;
            for (int g = 0; g < G; ++g) out.sigma[static_cast<std::size_t>(g)] = pooled;
            break;
        }
        case CS::V:
        case CS::VVV: {
            for (int g = 0; g < G; ++g)
                out.sigma[static_cast<std::size_t>(g)] = stats.scatter[static_cast<std::size_t>(g)] / n_g[static_cast<std::size_t>(g)];
            break;
        }
        case CS::EII: {
            double lambda = 0.0;
            for (int g = 0; g < G; ++g) lambda += stats.scatter[static_cast<std::size_t>(g)].trace();
            lambda /= total * p;
            for (int g = 0; g < G; ++g) out.sigma[static_cast<std::size_t>(g)] = lambda * Eigen::MatrixXd::Identity(p, p);
            break;
        }
        case CS::VII: {
            for (int g = 0; g < G; ++g) {
                const double lambda = stats.scatter[static_cast<std::size_t>(g)].trace() / (n_g[static_cast<std::size_t>(g)] * p);
                out.sigma[static_cast<std::size_t>(g)] = lambda * Eigen::MatrixXd::Identity(p, p);
            }
            break;
        }
        case CS::EEI: {
            Eigen::VectorXd d = Eigen::VectorXd::Zero(p);
            for (int g = 0; g < G; ++g) d += stats.scatter[static_cast<std::size_t>(g)].diagonal();
            d /= total;
            for (int g = 0; g < G; ++g) out.sigma[static_cast<std::size_t>(g)] = d.asDiagonal();
            break;
        }
        case CS::VVI: {
            for (int g = 0; g < G; ++g) {
                Eigen::VectorXd d = stats.scatter[static_cast<std::size_t>(g)].diagonal() / n_g[static_cast<std::size_t>(g)];
                out.sigma[static_cast<std::size_t>(g)] = d.asDiagonal();
            }
            break;
        }
        case CS::EVI: {
            // A_g proportional to diag(W_g) with det 1; lambda pools the
            // per-group geometric means.
            std::vector<Eigen::VectorXd> a_g(static_cast<std::size_t>(G));
            double lambda = 0.0;
            for (int g = 0; g < G; ++g) {
                Eigen::VectorXd d = clamped_diag(g);
                const double gm = detail::geometric_mean(d);
                a_g[static_cast<std::size_t>(g)] = d / gm;
                lambda += gm;
            }
            lambda /= total;
            for (int g = 0; g < G; ++g) out.sigma[static_cast<std::size_t>(g)] = (lambda * a_g[static_cast<std::size_t>(g)]).asDiagonal();
            break;
        }
        case CS::VEI: {
            std::vector<Eigen::VectorXd> omega(static_cast<std::size_t>(G));
            for (int g = 0; g < G; ++g) omega[static_cast<std::size_t>(g)] = clamped_diag(g);
            Eigen::VectorXd init = Eigen::VectorXd::Ones(p);
            if (warm && warm->structure == structure && warm->shape.size() == p) init = warm->shape;
            std::vector<double> lambda;
            Eigen::VectorXd a;
            detail::fit_volume_shape(omega, n_g, init, lambda, a);
            for (int g = 0; g < G; ++g) out.sigma[static_cast<std::size_t>(g)] = (lambda[static_cast<std::size_t>(g)] * a).asDiagonal();
            out.shape = a;
            break;
        }
        case CS::EEV:
        case CS::VEV: {
            // Orientation per group = eigenvectors of W_g; eigenvalues are
            // sorted descending so the shared shape pairs consistently.
            std::vector<Eigen::MatrixXd> vecs(static_cast<std::size_t>(G));
            std::vector<Eigen::VectorXd> omega(static_cast<std::size_t>(G));
            for (int g = 0; g < G; ++g) {
                Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(stats.scatter[static_cast<std::size_t>(g)]);
                Eigen::VectorXd w = es.eigenvalues().reverse();
                Eigen::MatrixXd v = es.eigenvectors().rowwise().reverse();
                const double lo = tiny * n_g[static_cast<std::size_t>(g)];
                for (int j = 0; j < p; ++j)
                    if (w[j] < lo) {
                        w[j] = lo;
                        clamped = true;
                    }
                omega[static_cast<std::size_t>(g)] = w;
                vecs[static_cast<std::size_t>(g)] = v;
            }
            if (structure == CS::EEV) {
                Eigen::VectorXd wsum = Eigen::VectorXd::Zero(p);
                for (int g = 0; g < G; ++g) wsum += omega[static_cast<std::size_t>(g)];
                const double gm = detail::geometric_mean(wsum);
                Eigen::VectorXd a = wsum / gm;
                const double lambda = gm / total;
                for (int g = 0; g < G; ++g)
                    out.sigma[static_cast<std::size_t>(g)] =
                        vecs[static_cast<std::size_t>(g)] * (lambda * a).asDiagonal() * vecs[static_cast<std::size_t>(g)].transpose();
                out.shape = a;
            } else {
                Eigen::VectorXd init = Eigen::VectorXd::Ones(p);
                if (warm && warm->structure == structure && warm->shape.size() == p) init = warm->shape;
                std::vector<double> lambda;
                Eigen::VectorXd a;
                detail::fit_volume_shape(omega, n_g, init, lambda, a);
                for (int g = 0; g < G; ++g)
                    out.sigma[static_cast<std::size_t>(g)] = vecs[static_cast<std::size_t>(g)] *
                                                             (lambda[static_cast<std::size_t>(g)] * a).asDiagonal() *
                                                             vecs[static_cast<std::size_t>(g)].transpose();
                out.shape = a;
            }
            break;
        }
    }

    out.regularized = degenerate_weight || clamped;
    out.chol_lower.resize(static_cast<std::size_t>(G));
    out.log_det.resize(static_cast<std::size_t>(G));
    for (int g = 0; g < G; ++g) {
        Eigen::MatrixXd& s = out.sigma[static_cast<std::size_t>(g)];
        s = 0.5 * (s + s.transpose()).eval();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
        const double min_eig = es.eigenvalues().minCoeff();
        if (min_eig < floor) {
            s += (std::max(floor, 1e-300) - min_eig) * Eigen::MatrixXd::Identity(p, p);
            out.regularized = true;
        }
        Eigen::LLT<Eigen::MatrixXd> llt(s);
        if (llt.info() != Eigen::Success) {
            // Inflate until the factorization succeeds.
            double bump = std::max(floor, 1e-300);
            do {
                s += bump * Eigen::MatrixXd::Identity(p, p);
                bump *= 10.0;
                llt.compute(s);
            } while (llt.info() != Eigen::Success && bump < 1.0 + scale);
            out.regularized = true;
        }
        out.chol_lower[static_cast<std::size_t>(g)] = llt.matrixL();
        double ld = 0.0;
        for (int j = 0; j < p; ++j) ld += 2.0 * std::log(out.chol_lower[static_cast<std::size_t>(g)](j, j));
        out.log_det[static_cast<std::size_t>(g)] = ld;
    }
    return out;
}

/// Gaussian part of the log-likelihood at the scatter statistics:
/// -1/2 sum_g [ n_g (p log 2pi + log|Sigma_g|) + tr(W_g Sigma_g^{-1}) ].
inline double gaussian_loglik(const GroupScatter& stats, const CovarianceSet& covs) {
    const int G = stats.groups();
    const int p = stats.dim();
    double ll = 0.0;
    for (int g = 0; g < G; ++g) {
        const auto& L = covs.chol_lower[static_cast<std::size_t>(g)];
        Eigen::MatrixXd half = L.triangularView<Eigen::Lower>().solve(stats.scatter[static_cast<std::size_t>(g)]);
        const double tr = L.triangularView<Eigen::Lower>().solve(half.transpose().eval()).trace();
        ll += stats.weight[static_cast<std::size_t>(g)] * (p * kLog2Pi + covs.log_det[static_cast<std::size_t>(g)]) + tr;
    }
    return -0.5 * ll;
}

}  // namespace specsel

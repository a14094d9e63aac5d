#include <catch_amalgamated.hpp>

#include "test_support.hpp"

using namespace specsel;
namespace ts = testsupport;
using CS = CovarianceStructure;

namespace {

Dataset two_class_1d(std::initializer_list<double> a, std::initializer_list<double> b) {
    Dataset d;
    const auto na = a.size(), nb = b.size();
    d.values.resize(static_cast<Eigen::Index>(na + nb), 1);
    Eigen::Index r = 0;
    for (double x : a) d.values(r++, 0) = x;
    for (double x : b) d.values(r++, 0) = x;
    d.var_ids = {1.0};
    d.labels.assign(na, 0);
    d.labels.insert(d.labels.end(), nb, 1);
    d.class_names = {"a", "b"};
    return d;
}

LabeledSplit split_of(Dataset labeled, Eigen::MatrixXd unlabeled_rows, std::vector<int> truth = {}) {
    Dataset unlabeled;
    unlabeled.values = std::move(unlabeled_rows);
    unlabeled.var_ids = labeled.var_ids;
    unlabeled.class_names = labeled.class_names;
    std::vector<int> lab(static_cast<std::size_t>(labeled.n()));
    std::iota(lab.begin(), lab.end(), 0);
    std::vector<int> unlab(static_cast<std::size_t>(unlabeled.n()));
    std::iota(unlab.begin(), unlab.end(), labeled.n());
    return LabeledSplit(std::move(labeled), std::move(unlabeled), lab, unlab, truth, 0);
}

}  // namespace

TEST_CASE("supervised fit on the 1-D hand example") {
    Dataset d = two_class_1d({-1, 1}, {9, 11});
    MixtureModel m = fit_supervised(d, {0}, CS::E);
    CHECK(m.tau == std::vector<double>{0.5, 0.5});
    CHECK(m.means[0][0] == 0.0);
    CHECK(m.means[1][0] == 10.0);
    CHECK(m.covs.sigma[0](0, 0) == Catch::Approx(1.0).margin(1e-15));
    CHECK_FALSE(m.singular);
    // loglik = sum log(tau) + sum log N(x | mu_g, 1)
    const double expect = 4.0 * std::log(0.5) + 4.0 * (-0.5 * kLog2Pi - 0.5);
    CHECK(m.loglik == Catch::Approx(expect).margin(1e-12));
    CHECK(m.d == 1 + 2 + 1);
    CHECK(m.bic == Catch::Approx(2.0 * expect - 4.0 * std::log(4.0)).margin(1e-12));
}

TEST_CASE("zero within-class variance is flagged") {
    Dataset d = two_class_1d({0, 0}, {1, 1});
    MixtureModel m = fit_supervised(d, {0}, CS::E);
    CHECK(m.singular);
}

TEST_CASE("supervised VVV equals per-class sample statistics") {
    Eigen::MatrixXd means(2, 3);
    means << 0, 1, -1, 4, 3, 2;
    Dataset d = ts::make_blobs({20, 25}, means, 1.3, 3);
    MixtureModel m = fit_supervised(d, {0, 1, 2}, CS::VVV);
    for (int g = 0; g < 2; ++g) {
        Eigen::VectorXd mu;
        Eigen::MatrixXd cov;
        ts::class_stats_oracle(d, g, {0, 1, 2}, mu, cov);
        CHECK((m.means[static_cast<std::size_t>(g)] - mu).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((m.covs.sigma[static_cast<std::size_t>(g)] - cov).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("posterior at the symmetry point is exactly one half") {
    Dataset d = two_class_1d({-2, -1, 0}, {1, 2, 3});
    MixtureModel m;
    m.tau = {0.5, 0.5};
    m.means = {Eigen::VectorXd::Constant(1, -1.0), Eigen::VectorXd::Constant(1, 1.0)};
    m.covs = ts::covset_from_matrices(CS::E, {Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Identity(1, 1)});
    Eigen::MatrixXd y(1, 1);
    y << 0.0;
    Responsibilities r = classify(m, y);
    CHECK(r.z(0, 0) == 0.5);
    CHECK(r.z(0, 1) == 0.5);
    CHECK(r.hard[0] == 0);  // tie resolves toward the lower class index
    CHECK(r.ties == 1);
}

TEST_CASE("well separated means give near-certain posteriors") {
    MixtureModel m;
    m.tau = {0.5, 0.5};
    m.means = {Eigen::VectorXd::Constant(1, 0.0), Eigen::VectorXd::Constant(1, 10.0)};
    m.covs = ts::covset_from_matrices(CS::E, {Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Identity(1, 1)});
    Eigen::MatrixXd y(1, 1);
    y << 0.0;
    Responsibilities r = classify(m, y);
    CHECK(r.z(0, 0) > 1.0 - 1e-9);
}

TEST_CASE("posteriors match the naive density-ratio oracle") {
    auto g = ts::rng(41);
    for (int rep = 0; rep < 50; ++rep) {
        const int G = 2 + static_cast<int>(g() % 3);
        const int p = 1 + static_cast<int>(g() % 3);
        std::vector<double> tau(static_cast<std::size_t>(G));
        double s = 0.0;
        std::uniform_real_distribution<double> u(0.2, 1.0);
        for (auto& t : tau) s += (t = u(g));
        for (auto& t : tau) t /= s;
        std::vector<Eigen::VectorXd> means;
        std::vector<Eigen::MatrixXd> sigmas;
        for (int k = 0; k < G; ++k) {
            means.push_back(2.0 * ts::random_vector(p, g));
            sigmas.push_back(ts::random_spd(p, g));
        }
        MixtureModel m;
        m.tau = tau;
        m.means = means;
        m.covs = ts::covset_from_matrices(p == 1 ? CS::V : CS::VVV, sigmas);
        Eigen::MatrixXd y = ts::random_matrix(1, p, g);
        Responsibilities r = classify(m, y);
        Eigen::VectorXd oracle = ts::naive_posterior_oracle(tau, means, sigmas, y.row(0).transpose());
        CHECK((r.z.row(0).transpose() - oracle).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(std::abs(r.z.row(0).sum() - 1.0) < 1e-12);
    }
}

TEST_CASE("posterior is invariant to a constant shift of log weights") {
    auto g = ts::rng(47);
    for (int rep = 0; rep < 100; ++rep) {
        Eigen::VectorXd lw = 5.0 * ts::random_vector(4, g);
        Eigen::VectorXd shifted = lw.array() + 300.0;
        Eigen::VectorXd a = posterior_from_logweights(lw);
        Eigen::VectorXd b = posterior_from_logweights(shifted);
        CHECK((a - b).cwiseAbs().maxCoeff() < 1e-13);
        CHECK(std::abs(a.sum() - 1.0) < 1e-12);
    }
}

TEST_CASE("semi-supervised fit with no unlabeled rows matches supervised exactly") {
    Eigen::MatrixXd means(2, 2);
    means << 0, 0, 3, 3;
    Dataset d = ts::make_blobs({10, 12}, means, 1.0, 19);
    LabeledSplit split = split_of(d, Eigen::MatrixXd(0, 2));
    for (CS s : structures_for_dimension(2)) {
        MixtureModel sup = fit_supervised(d, {0, 1}, s);
        auto [semi, resp] = fit_semisupervised(split, {0, 1}, s);
        CHECK(semi.loglik == sup.loglik);
        CHECK(semi.bic == sup.bic);
        CHECK(semi.tau == sup.tau);
        for (int g = 0; g < 2; ++g) {
            CHECK((semi.means[static_cast<std::size_t>(g)] - sup.means[static_cast<std::size_t>(g)]).cwiseAbs().maxCoeff() == 0.0);
            CHECK((semi.covs.sigma[static_cast<std::size_t>(g)] - sup.covs.sigma[static_cast<std::size_t>(g)]).cwiseAbs().maxCoeff() == 0.0);
        }
        CHECK(resp.z.rows() == 0);
    }
}

TEST_CASE("semi-supervised posteriors on the 1-D hand example") {
    Dataset d = two_class_1d({-1, 1}, {9, 11});
    Eigen::MatrixXd y(2, 1);
    y << 0.1, 10.2;
    LabeledSplit split = split_of(d, y);
    auto [m, r] = fit_semisupervised(split, {0}, CS::E);
    CHECK(r.z(0, 0) > 1.0 - 1e-6);
    CHECK(r.z(1, 1) > 1.0 - 1e-6);
    CHECK(m.n_fit == 6);
    CHECK(std::abs(r.z.row(0).sum() - 1.0) < 1e-12);
}

TEST_CASE("EM log-likelihood is nondecreasing for every structure") {
    for (CS s : structures_for_dimension(2)) {
        for (int rep = 0; rep < 4; ++rep) {
            Eigen::MatrixXd means(3, 2);
            means << 0, 0, 2.5, 0.5, -1, 2;
            Dataset d = ts::make_blobs({15, 15, 15}, means, 1.0, 500 + 10 * static_cast<int>(s) + rep);
            LabeledSplit split = stratified_split(d, 0.5, 7 + rep);
            EmDiagnostics diag;
            auto [m, r] = fit_semisupervised(split, {0, 1}, s, {}, &diag);
            REQUIRE(diag.loglik_history.size() >= 1);
            for (std::size_t i = 1; i < diag.loglik_history.size(); ++i)
                CHECK(diag.loglik_history[i] >= diag.loglik_history[i - 1] - 1e-8);
            for (int j = 0; j < r.z.rows(); ++j) CHECK(std::abs(r.z.row(j).sum() - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("EM reports non-convergence when capped") {
    Eigen::MatrixXd means(2, 2);
    means << 0, 0, 1.5, 1.5;
    Dataset d = ts::make_blobs({20, 20}, means, 1.0, 29);
    LabeledSplit split = stratified_split(d, 0.5, 3);
    FitOptions opts;
    opts.em_max_iter = 0;
    auto [m, r] = fit_semisupervised(split, {0, 1}, CS::VVV, opts);
    CHECK_FALSE(m.converged);
    CHECK(m.flagged());
}

TEST_CASE("label permutation only permutes the fitted parameters") {
    Eigen::MatrixXd means(3, 2);
    means << 0, 0, 3, 0, 0, 3;
    Dataset d = ts::make_blobs({12, 14, 16}, means, 1.0, 61);

    // Swap classes 0 and 2.
    Dataset perm = d;
    perm.class_names = {d.class_names[2], d.class_names[1], d.class_names[0]};
    for (auto& l : perm.labels) l = (l == 0) ? 2 : (l == 2 ? 0 : l);

    for (CS s : {CS::EEE, CS::VVV, CS::VEV}) {
        MixtureModel a = fit_supervised(d, {0, 1}, s);
        MixtureModel b = fit_supervised(perm, {0, 1}, s);
        CHECK(b.loglik == Catch::Approx(a.loglik).margin(1e-10));
        CHECK(b.bic == Catch::Approx(a.bic).margin(1e-10));
        const int remap[3] = {2, 1, 0};
        for (int g = 0; g < 3; ++g) {
            CHECK(b.tau[static_cast<std::size_t>(remap[g])] == Catch::Approx(a.tau[static_cast<std::size_t>(g)]).margin(1e-12));
            CHECK((b.means[static_cast<std::size_t>(remap[g])] - a.means[static_cast<std::size_t>(g)]).cwiseAbs().maxCoeff() < 1e-10);
            CHECK((b.covs.sigma[static_cast<std::size_t>(remap[g])] - a.covs.sigma[static_cast<std::size_t>(g)]).cwiseAbs().maxCoeff() <
                  1e-10);
        }
    }
}

TEST_CASE("best_structure_fit searches E/V at one dimension and all ten at two") {
    Eigen::MatrixXd means(2, 2);
    means << 0, 0, 4, 1;
    Dataset d = ts::make_blobs({20, 20}, means, 1.0, 67);
    LabeledSplit split = stratified_split(d, 0.5, 5);

    MixtureModel uni = best_structure_fit(split, {0});
    CHECK((uni.covs.structure == CS::E || uni.covs.structure == CS::V));

    MixtureModel bi = best_structure_fit(split, {0, 1});
    CHECK_FALSE(is_univariate(bi.covs.structure));

    // The winner must dominate a direct enumeration.
    for (CS s : structures_for_dimension(2)) {
        auto [m, r] = fit_semisupervised(split, {0, 1}, s);
        CHECK(bi.bic >= m.bic);
    }
}

TEST_CASE("best_structure_fit propagates an all-singular failure") {
    Dataset d = two_class_1d({1, 1, 1}, {2, 2, 2});  // constant within every class
    LabeledSplit split = split_of(d, Eigen::MatrixXd(0, 1));
    CHECK_THROWS_AS(best_structure_fit(split, {0}), SingularFitError);
}

TEST_CASE("models survive a JSON round trip") {
    Eigen::MatrixXd means(2, 2);
    means << 0, 0, 3, 1;
    Dataset d = ts::make_blobs({15, 18}, means, 1.2, 71);
    MixtureModel m = fit_supervised(d, {0, 1}, CS::VEV);
    MixtureModel back = model_from_json(model_to_json(m));
    CHECK(back.covs.structure == m.covs.structure);
    CHECK(back.loglik == m.loglik);
    CHECK(back.bic == m.bic);
    CHECK(back.d == m.d);
    CHECK(back.tau == m.tau);

    // The reloaded model classifies identically.
    auto g = ts::rng(73);
    Eigen::MatrixXd y = ts::random_matrix(5, 2, g);
    Responsibilities ra = classify(m, y);
    Responsibilities rb = classify(back, y);
    CHECK((ra.z - rb.z).cwiseAbs().maxCoeff() < 1e-12);

    json broken = model_to_json(m);
    broken["covariances"][0][0][0] = -5.0;  // not positive definite
    CHECK_THROWS_AS(model_from_json(broken), DataError);
}

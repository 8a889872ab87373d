#include "gptree/errors.hpp"
#include "gptree/node_vi.hpp"
#include "gptree/pg_sampler.hpp"

#include "oracles.hpp"

#include <Eigen/Dense>
#include <doctest.h>

#include <algorithm>
#include <numeric>

using namespace gptree;
using namespace gptree::testing;

namespace {

const KernelSpec kRbf = KernelSpec::rbf(1.0, 1.5);

struct Problem {
    MatrixXd X;
    std::vector<int> y;
    MatrixXd Z;
};

Problem make_problem(Eigen::Index n, Eigen::Index m, RngStream& rng) {
    Problem p;
    p.X = random_matrix(n, 3, rng);
    p.y.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) p.y[static_cast<std::size_t>(i)] = p.X(i, 0) + 0.3 * rng.normal() > 0 ? 1 : 0;
    p.Z = random_matrix(m, 3, rng);
    return p;
}

std::vector<int> iota_rows(Eigen::Index m) {
    std::vector<int> r(static_cast<std::size_t>(m));
    std::iota(r.begin(), r.end(), 0);
    return r;
}

// Full-batch bound with c re-optimized for the current q.
double full_elbo(const NodeVIModel& m, const Problem& p) {
    return m.elbo(p.X, p.y, m.update_c(p.X), static_cast<double>(p.X.rows()));
}

}  // namespace

TEST_CASE("prior model predicts the prior moments") {
    RngStream rng(1);
    const Problem p = make_problem(10, 4, rng);
    const NodeVIModel m = NodeVIModel::prior(p.Z, iota_rows(4), kRbf);
    const PredictiveMoments mo = m.predictive_posterior(random_matrix(25, 3, rng));
    CHECK(mo.mean.cwiseAbs().maxCoeff() == 0.0);
    CHECK((mo.var.array() - kRbf.outputscale).abs().maxCoeff() < 1e-10);
    CHECK(mo.clamped == 0);
    CHECK((m.H() + 0.5 * dense_inverse(m.kmm())).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("KL at the prior vanishes") {
    RngStream rng(2);
    const Problem p = make_problem(10, 5, rng);
    const NodeVIModel m = NodeVIModel::prior(p.Z, iota_rows(5), kRbf);
    const ElboTerms t = m.elbo_terms(p.X, p.y, m.update_c(p.X), 10.0);
    CHECK(std::abs(t.kl_gauss) < 1e-9);
    CHECK(t.kl_pg >= 0.0);
}

TEST_CASE("predictive matches the dense sparse-GP formula after training") {
    RngStream rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        const Problem p = make_problem(30, 6, rng);
        NodeVIModel m = NodeVIModel::prior(p.Z, iota_rows(6), kRbf);
        for (int s = 0; s < 5; ++s) m.apply_natural_gradient_step(p.X, p.y, m.update_c(p.X), 0.5, 30.0);
        for (int q = 0; q < 5; ++q) {
            const VectorXd xs = random_matrix(1, 3, rng).row(0).transpose();
            const GaussianMoments got = m.predictive_posterior(xs);
            const VectorXd kms = gram(kRbf, p.Z, MatrixXd(xs.transpose())).col(0);
            const DenseMoments want = dense_sparse_predictive(m.kmm(), kms, kRbf.outputscale, m.mean(), m.cov());
            CHECK(std::abs(got.mean - want.mean) < 1e-10);
            CHECK(std::abs(got.var - want.var) < 1e-10);
        }
    }
}

TEST_CASE("natural parameters and moments agree") {
    RngStream rng(4);
    const Problem p = make_problem(20, 4, rng);
    NodeVIModel m = NodeVIModel::prior(p.Z, iota_rows(4), kRbf);
    m.apply_natural_gradient_step(p.X, p.y, m.update_c(p.X), 0.3, 20.0);
    const MatrixXd precision = -2.0 * m.H();
    CHECK((m.cov() * precision - MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((precision * m.mean() - m.eta()).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("update_c maximizes the bound over c") {
    RngStream rng(5);
    const Problem p = make_problem(12, 4, rng);
    NodeVIModel m = NodeVIModel::prior(p.Z, iota_rows(4), kRbf);
    m.apply_natural_gradient_step(p.X, p.y, m.update_c(p.X), 1.0, 12.0);
    const BatchAugState best = m.update_c(p.X);
    const double at_best = m.elbo(p.X, p.y, best, 12.0);
    for (int trial = 0; trial < 20; ++trial) {
        BatchAugState other = best;
        const Eigen::Index i = static_cast<Eigen::Index>(rng.below(12));
        other.c[i] = std::max(0.0, other.c[i] + (rng.uniform() - 0.5));
        other.lambda[i] = pg_mean(1.0, other.c[i]);
        CHECK(m.elbo(p.X, p.y, other, 12.0) <= at_best + 1e-12);
    }
}

TEST_CASE("a unit step lands on the stationary point for fixed c") {
    RngStream rng(6);
    const Problem p = make_problem(15, 4, rng);
    NodeVIModel m0 = NodeVIModel::prior(p.Z, iota_rows(4), kRbf);
    m0.apply_natural_gradient_step(p.X, p.y, m0.update_c(p.X), 0.5, 15.0);
    const BatchAugState aug = m0.update_c(p.X);
    const NodeVIModel m = m0.natural_gradient_step(p.X, p.y, aug, 1.0, 15.0);

    auto bound_at = [&](const VectorXd& mu, const MatrixXd& S) {
        const MatrixXd P = dense_inverse(S);
        const NodeVIModel q = NodeVIModel::restore(p.Z, iota_rows(4), kRbf, P * mu, -0.5 * P, mu, S);
        return q.elbo(p.X, p.y, aug, 15.0);
    };
    const double h = 1e-5;
    for (Eigen::Index k = 0; k < 4; ++k) {
        VectorXd e = VectorXd::Zero(4);
        e[k] = h;
        const double d = (bound_at(m.mean() + e, m.cov()) - bound_at(m.mean() - e, m.cov())) / (2 * h);
        CHECK(std::abs(d) < 1e-5);
    }
    for (Eigen::Index k = 0; k < 4; ++k) {
        MatrixXd E = MatrixXd::Zero(4, 4);
        E(k, k) = h;
        const double d = (bound_at(m.mean(), m.cov() + E) - bound_at(m.mean(), m.cov() - E)) / (2 * h);
        CHECK(std::abs(d) < 1e-4);
    }
    // and the natural gradient at the new point is zero
    const NaturalGradient g = m.natural_gradient(p.X, p.y, aug, 15.0);
    CHECK(g.eta.cwiseAbs().maxCoeff() < 1e-8);
    CHECK(g.H.cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("alternating updates increase the bound and keep -2H positive definite") {
    RngStream rng(7);
    const Problem p = make_problem(40, 6, rng);
    for (double lr : {1.0, 0.05}) {
        NodeVIModel m = NodeVIModel::prior(p.Z, iota_rows(6), kRbf);
        double prev = full_elbo(m, p);
        for (int s = 0; s < 100; ++s) {
            m.apply_natural_gradient_step(p.X, p.y, m.update_c(p.X), lr, 40.0);
            const double cur = full_elbo(m, p);
            CHECK(cur >= prev - 1e-9);
            prev = cur;
            CHECK(Eigen::LLT<MatrixXd>(-2.0 * m.H()).info() == Eigen::Success);
        }
    }
}

TEST_CASE("expected log-likelihood agrees with Monte Carlo") {
    RngStream rng(8);
    const Problem p = make_problem(4, 2, rng);
    NodeVIModel m = NodeVIModel::prior(p.Z, iota_rows(2), kRbf);
    m.apply_natural_gradient_step(p.X, p.y, m.update_c(p.X), 0.7, 4.0);
    const BatchAugState aug = m.update_c(p.X);
    const ElboTerms t = m.elbo_terms(p.X, p.y, aug, 4.0);
    VectorXd kappa(4);
    for (int i = 0; i < 4; ++i) kappa[i] = p.y[static_cast<std::size_t>(i)] - 0.5;
    RngStream mc(9);
    const McEstimate est = mc_expected_loglik(gram(kRbf, p.X), gram(kRbf, p.X, p.Z), m.kmm(), m.mean(), m.cov(),
                                              kappa, aug.c, 100000, mc);
    CHECK(std::abs(est.mean - t.expectation) < 4 * est.se);
}

TEST_CASE("minibatch scaling") {
    RngStream rng(10);
    const Problem p = make_problem(20, 3, rng);
    const NodeVIModel m = NodeVIModel::prior(p.Z, iota_rows(3), kRbf);
    const BatchAugState aug = m.update_c(p.X);
    const ElboTerms full = m.elbo_terms(p.X, p.y, aug, 20.0);
    const ElboTerms doubled = m.elbo_terms(p.X, p.y, aug, 40.0);
    CHECK(doubled.expectation == doctest::Approx(2 * full.expectation));
    CHECK(doubled.kl_pg == doctest::Approx(2 * full.kl_pg));
    CHECK(doubled.kl_gauss == full.kl_gauss);
}

TEST_CASE("an oversized step is rejected without changing the model") {
    RngStream rng(14);
    const Problem p = make_problem(20, 4, rng);
    NodeVIModel m = NodeVIModel::prior(p.Z, iota_rows(4), kRbf);
    // a confident state, then a long step toward a much weaker target
    m.apply_natural_gradient_step(p.X, p.y, m.update_c(p.X), 1.0, 1e4);
    const BatchAugState aug = m.update_c(p.X);
    const VectorXd eta = m.eta();
    const MatrixXd H = m.H();
    CHECK_THROWS_AS(m.apply_natural_gradient_step(p.X, p.y, aug, 50.0, 1.0), PDViolation);
    CHECK(m.eta() == eta);
    CHECK(m.H() == H);
    CHECK_THROWS_AS(VIConfig{.learning_rate = 1.5}.validate(), ConfigError);
}

TEST_CASE("epoch batches partition the rows") {
    RngStream rng(11);
    const auto batches = epoch_batches(23, 5, rng);
    CHECK(batches.size() == 5);
    CHECK(batches.back().size() == 3);
    std::vector<std::size_t> all;
    for (const auto& b : batches) all.insert(all.end(), b.begin(), b.end());
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < 23; ++i) CHECK(all[i] == i);
    CHECK(epoch_batches(23, 0, rng).size() == 1);
}

TEST_CASE("inducing initialization") {
    RngStream rng(12);
    const MatrixXd X = random_matrix(30, 2, rng);
    std::vector<int> y(30);
    for (int i = 0; i < 30; ++i) y[static_cast<std::size_t>(i)] = i < 3 ? 2 : (i % 2);
    const InducingStore s = init_inducing(X, y, 5, rng);
    // classes 0 and 1 get 5 centers, class 2 keeps its 3 samples
    CHECK(s.size() == 13);
    CHECK(std::count(s.labels.begin(), s.labels.end(), 2) == 3);
    CHECK(std::is_sorted(s.labels.begin(), s.labels.end()));
    CHECK(s.rows_for({2}).size() == 3);
    CHECK(s.locations.row(10) == X.row(0));
    CHECK_THROWS_AS(init_inducing(X, y, {0, 7}, 5, rng), EmptyClass);
    CHECK_THROWS_AS(init_inducing(X, y, 0, rng), ConfigError);
}

TEST_CASE("training separates two clusters") {
    RngStream rng(13);
    MatrixXd X(60, 2);
    std::vector<int> y(60);
    for (int i = 0; i < 60; ++i) {
        const bool left = i % 2 == 0;
        X(i, 0) = (left ? 2.0 : -2.0) + 0.3 * rng.normal();
        X(i, 1) = 0.3 * rng.normal();
        y[static_cast<std::size_t>(i)] = left;
    }
    KernelSpec k = KernelSpec::rbf(1.0, 2.0);
    k.normalize_inputs = false;
    RngStream ind(1);
    const InducingStore store = init_inducing(X, y, 3, ind);
    NodeVIModel m = NodeVIModel::prior(store, iota_rows(6), k);
    VIConfig cfg;
    cfg.epochs = 20;
    cfg.batch_size = 16;
    train_node_vi(m, X, y, cfg, rng);
    MatrixXd Q(2, 2);
    Q << 2, 0, -2, 0;
    const VectorXd pr = m.predict_prob(Q, PredictMode::Quadrature, 20);
    CHECK(pr[0] > 0.8);
    CHECK(pr[1] < 0.2);
}

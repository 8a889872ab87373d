#include "gptree/errors.hpp"
#include "gptree/node_gibbs.hpp"

#include "oracles.hpp"

#include <Eigen/Dense>
#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace gptree;
using namespace gptree::testing;

namespace {

struct Instance {
    MatrixXd X;
    std::vector<int> y;
    VectorXd omega;
};

Instance random_instance(Eigen::Index n, RngStream& rng) {
    Instance in;
    in.X = random_matrix(n, 3, rng);
    in.y.resize(static_cast<std::size_t>(n));
    for (auto& v : in.y) v = static_cast<int>(rng.below(2));
    in.y[0] = 1;
    in.y[1] = 0;
    in.omega.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) in.omega[i] = 0.05 + rng.uniform();
    return in;
}

const KernelSpec kRbf = KernelSpec::rbf(0.8, 1.7);

}  // namespace

TEST_CASE("conditional matches the dense-inverse formula") {
    RngStream rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        const Instance in = random_instance(2 + static_cast<Eigen::Index>(rng.below(4)), rng);
        const NodeGibbsModel model(in.X, in.y, kRbf, GibbsConfig{});
        const GaussianConditional got = model.conditional(in.omega);
        const DenseGaussian want = dense_gibbs_conditional(gram(kRbf, in.X), in.omega, model.kappa());
        CHECK((got.mean - want.mean).cwiseAbs().maxCoeff() < 1e-10);
        CHECK((got.cov - want.cov).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("kappa is y minus one half") {
    const NodeGibbsModel model(MatrixXd::Identity(2, 2), {1, 0}, kRbf, GibbsConfig{});
    CHECK(model.kappa()[0] == 0.5);
    CHECK(model.kappa()[1] == -0.5);
}

TEST_CASE("latent predictive matches the dense joint Gaussian") {
    RngStream rng(2);
    for (int trial = 0; trial < 30; ++trial) {
        const Instance in = random_instance(2 + static_cast<Eigen::Index>(rng.below(4)), rng);
        const NodeGibbsModel fitted = NodeGibbsModel::fit(in.X, in.y, kRbf, GibbsConfig{}, rng.derive(trial));
        ChainState chain = fitted.initial_chain(RngStream(0));
        chain.omega = in.omega;
        const NodeGibbsModel model =
            NodeGibbsModel::restore(in.X, in.y, kRbf, GibbsConfig{}, std::vector<ChainState>{chain});
        const VectorXd xs = random_matrix(1, 3, rng).row(0).transpose();
        const GaussianMoments got = model.predictive_posterior(0, xs);
        const VectorXd kstar = gram(kRbf, in.X, MatrixXd(xs.transpose())).col(0);
        const DenseMoments want = dense_gibbs_predictive(gram(kRbf, in.X), kstar, kRbf.outputscale, in.omega,
                                                         model.kappa());
        CHECK(got.mean == doctest::Approx(want.mean).epsilon(1e-10));
        CHECK(std::abs(got.var - want.var) < 1e-10);
    }
}

TEST_CASE("augmented marginal likelihood matches the dense Gaussian density") {
    RngStream rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const Instance in = random_instance(4, rng);
        const NodeGibbsModel model(in.X, in.y, kRbf, GibbsConfig{});
        MatrixXd C = gram(kRbf, in.X);
        C.diagonal() += in.omega.cwiseInverse();
        const VectorXd z = model.kappa().cwiseQuotient(in.omega);
        const double want = -0.5 * z.dot(C.inverse() * z) - 0.5 * std::log(C.determinant()) -
                            0.5 * 4 * std::log(2 * std::numbers::pi);
        CHECK(model.augmented_marginal_loglik(in.omega) == doctest::Approx(want).epsilon(1e-10));
    }
}

TEST_CASE("Gibbs draws of f have the conditional moments") {
    RngStream rng(4);
    const Instance in = random_instance(3, rng);
    const NodeGibbsModel model(in.X, in.y, kRbf, GibbsConfig{});
    const DenseGaussian want = dense_gibbs_conditional(gram(kRbf, in.X), in.omega, model.kappa());
    ChainState chain = model.initial_chain(RngStream(9));
    const int draws = 40000;
    VectorXd sum = VectorXd::Zero(3);
    MatrixXd outer = MatrixXd::Zero(3, 3);
    for (int i = 0; i < draws; ++i) {
        chain.omega = in.omega;
        chain = model.gibbs_step(std::move(chain));
        sum += chain.f;
        outer += chain.f * chain.f.transpose();
    }
    const VectorXd mean = sum / draws;
    const MatrixXd cov = outer / draws - mean * mean.transpose();
    for (Eigen::Index i = 0; i < 3; ++i) {
        const double se = std::sqrt(want.cov(i, i) / draws);
        CHECK(std::abs(mean[i] - want.mean[i]) < 5 * se);
    }
    CHECK((cov - want.cov).cwiseAbs().maxCoeff() < 0.05 * want.cov.diagonal().maxCoeff());
    CHECK(chain.steps_taken == draws);
    CHECK((chain.omega.array() > 0).all());
}

TEST_CASE("initial chain state") {
    const NodeGibbsModel model(MatrixXd::Identity(3, 3), {1, 0, 1}, kRbf, GibbsConfig{});
    const ChainState c = model.initial_chain(RngStream(1));
    CHECK((c.omega.array() == 0.25).all());
    CHECK((c.f.array() == 0.0).all());
    CHECK(c.steps_taken == 0);
}

TEST_CASE("fit is deterministic and validates its input") {
    RngStream rng(5);
    const Instance in = random_instance(6, rng);
    GibbsConfig cfg;
    cfg.n_chains = 3;
    cfg.n_steps = 4;
    const NodeGibbsModel a = NodeGibbsModel::fit(in.X, in.y, kRbf, cfg, RngStream(7));
    const NodeGibbsModel b = NodeGibbsModel::fit(in.X, in.y, kRbf, cfg, RngStream(7));
    const MatrixXd Q = random_matrix(10, 3, rng);
    CHECK(a.predict_prob(Q) == b.predict_prob(Q));
    CHECK(a.chains().size() == 3);
    CHECK(a.chains()[0].steps_taken == 4);
    CHECK(a.chains()[0].omega != a.chains()[1].omega);

    // the model average equals the mean of single-chain probabilities
    VectorXd avg = VectorXd::Zero(Q.rows());
    for (std::size_t c = 0; c < 3; ++c) {
        const NodeGibbsModel single = NodeGibbsModel::restore(in.X, in.y, kRbf, cfg, {a.chains()[c]});
        avg += single.predict_prob(Q);
    }
    CHECK(((avg / 3.0) - a.predict_prob(Q)).cwiseAbs().maxCoeff() < 1e-14);

    CHECK_THROWS_AS(NodeGibbsModel::fit(in.X, std::vector<int>(6, 1), kRbf, cfg, RngStream(1)), SingleClassNode);
    CHECK_THROWS_AS(NodeGibbsModel(in.X, {1, 0}, kRbf, cfg), DimensionMismatch);
    GibbsConfig bad;
    bad.n_chains = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("quadrature prediction is less confident than the mean point") {
    RngStream rng(6);
    const Instance in = random_instance(8, rng);
    const NodeGibbsModel m = NodeGibbsModel::fit(in.X, in.y, kRbf, GibbsConfig{}, RngStream(3));
    const MatrixXd Q = random_matrix(20, 3, rng);
    const VectorXd pq = m.predict_prob(Q, PredictMode::Quadrature, 20);
    const VectorXd pm = m.predict_prob(Q, PredictMode::MeanPoint, 20);
    for (Eigen::Index i = 0; i < Q.rows(); ++i) {
        CHECK(pq[i] > 0.0);
        CHECK(pq[i] < 1.0);
        CHECK(std::abs(pq[i] - 0.5) <= std::abs(pm[i] - 0.5) + 1e-15);
    }
}

TEST_CASE("Gibbs classifier separates two clusters") {
    RngStream rng(7);
    MatrixXd X(40, 2);
    std::vector<int> y(40);
    for (int i = 0; i < 40; ++i) {
        const bool left = i < 20;
        X(i, 0) = (left ? 3.0 : -3.0) + 0.3 * rng.normal();
        X(i, 1) = 1.0 + 0.3 * rng.normal();
        y[static_cast<std::size_t>(i)] = left ? 1 : 0;
    }
    GibbsConfig cfg;
    cfg.n_steps = 10;
    const NodeGibbsModel m = NodeGibbsModel::fit(X, y, KernelSpec::linear(4.0), cfg, RngStream(1));
    VectorXd xl(2), xr(2);
    xl << 3, 1;
    xr << -3, 1;
    CHECK(m.predict_prob(xl) > 0.8);
    CHECK(m.predict_prob(xr) < 0.2);
}

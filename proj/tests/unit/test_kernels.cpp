#include "gptree/errors.hpp"
#include "gptree/kernels.hpp"

#include "oracles.hpp"

#include <Eigen/Eigenvalues>
#include <doctest.h>

#include <cmath>

using namespace gptree;

TEST_CASE("normalized linear kernel is cosine similarity times the scale") {
    Eigen::MatrixXd A(3, 2);
    A << 1, 0, 0, 1, 1, 1;
    const KernelSpec k = KernelSpec::linear(2.0);
    const Eigen::MatrixXd K = gram(k, A);
    CHECK(K(0, 0) == doctest::Approx(2.0));
    CHECK(K(0, 1) == doctest::Approx(0.0));
    CHECK(K(0, 2) == doctest::Approx(2.0 / std::sqrt(2.0)));
    // invariant to rescaling inputs
    CHECK((gram(k, 3.0 * A) - K).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("stationary kernels follow their formulas") {
    Eigen::MatrixXd a(1, 2), b(1, 2);
    a << 3, 4;
    b << 0, 2;
    KernelSpec rbf = KernelSpec::rbf(0.7, 1.5);
    rbf.normalize_inputs = false;
    const double r2 = 9 + 4;
    CHECK(gram(rbf, a, b)(0, 0) == doctest::Approx(1.5 * std::exp(-r2 / (2 * 0.49))));

    KernelSpec mat = KernelSpec::matern52(2.0, 0.5);
    mat.normalize_inputs = false;
    const double r = std::sqrt(r2) / 2.0;
    CHECK(gram(mat, a, b)(0, 0) ==
          doctest::Approx(0.5 * (1 + std::sqrt(5.0) * r + 5.0 * r * r / 3.0) * std::exp(-std::sqrt(5.0) * r)));

    const KernelSpec nrbf = KernelSpec::rbf(1.0, 1.0);
    // unit vectors (0.6, 0.8) and (0, 1): squared distance 0.36 + 0.04
    CHECK(gram(nrbf, a, b)(0, 0) == doctest::Approx(std::exp(-0.2)));
}

TEST_CASE("Gram matrices are exactly symmetric and PSD with the right diagonal") {
    RngStream rng(5);
    const Eigen::MatrixXd X = testing::random_matrix(30, 4, rng);
    for (const KernelSpec& k : {KernelSpec::linear(1.3), KernelSpec::rbf(0.5, 2.0), KernelSpec::matern52(1.0, 0.7)}) {
        const Eigen::MatrixXd K = gram(k, X);
        CHECK(K == K.transpose());
        CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(K).eigenvalues().minCoeff() > -1e-10);
        CHECK((K.diagonal() - gram_diagonal(k, X)).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((gram(k, X, X) - K).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("kernel errors") {
    Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(2, 3);
    CHECK_THROWS_AS(gram(KernelSpec::linear(1.0), zero), ZeroRow);
    CHECK_THROWS_AS(gram(KernelSpec::rbf(1, 1), Eigen::MatrixXd::Ones(2, 3), Eigen::MatrixXd::Ones(2, 2)),
                    DimensionMismatch);
    CHECK_THROWS_AS(KernelSpec::rbf(-1.0, 1.0).validate(), ConfigError);
    CHECK_THROWS_AS(KernelSpec::linear(0.0).validate(), ConfigError);
    CHECK_NOTHROW(KernelSpec::linear(1.0).validate());
    CHECK(kernel_family_from_string("RBF") == KernelFamily::RBF);
    CHECK(kernel_family_from_string("matern52") == KernelFamily::Matern52);
    CHECK_THROWS_AS(kernel_family_from_string("poly"), ConfigError);
}

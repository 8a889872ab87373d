#include "gptree/pg_sampler.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace gptree;

TEST_CASE("PG mean closed form") {
    CHECK(pg_mean(1.0, 0.0) == 0.25);
    CHECK(pg_mean(2.0, 0.0) == 0.5);
    CHECK(pg_mean(1.0, 2.0) == doctest::Approx(std::tanh(1.0) / 4.0).epsilon(1e-15));
    CHECK(pg_mean(1.0, -2.0) == pg_mean(1.0, 2.0));
    CHECK(pg_mean(3.0, 1.5) == doctest::Approx(3.0 * pg_mean(1.0, 1.5)).epsilon(1e-15));
    // continuity through the small-c branch
    CHECK(pg_mean(1.0, 1e-7) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(pg_mean(1.0, 2e-6) == doctest::Approx(std::tanh(1e-6) / 4e-6).epsilon(1e-12));
    CHECK_THROWS_AS(pg_mean(0.0, 1.0), std::invalid_argument);
}

TEST_CASE("draws are positive and depend on |c| only") {
    RngStream a(3), b(3);
    for (int i = 0; i < 1000; ++i) {
        const double wa = sample_pg1(1.3, a).omega;
        const double wb = sample_pg1(-1.3, b).omega;
        REQUIRE(wa > 0.0);
        CHECK(wa == wb);
    }
}

TEST_CASE("empirical means track the closed form") {
    for (double c : {0.0, 1.0, 5.0}) {
        RngStream rng(10 + static_cast<std::uint64_t>(c));
        const int n = 40000;
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += sample_pg1(c, rng).omega;
        CHECK(s / n == doctest::Approx(pg_mean(1.0, c)).epsilon(0.02));
    }
}

TEST_CASE("sampler distribution agrees with the sum-of-gammas oracle") {
    RngStream a(21), b(22);
    std::vector<double> x, y;
    for (int i = 0; i < 5000; ++i) {
        x.push_back(sample_pg1(1.0, a).omega);
        y.push_back(testing::pg_sum_of_gammas(1.0, b));
    }
    CHECK(testing::ks_pvalue(testing::ks_statistic(x, y), x.size(), y.size()) > 0.001);
}

TEST_CASE("KS helper rejects clearly different samples") {
    RngStream r(23);
    std::vector<double> x, y;
    for (int i = 0; i < 2000; ++i) {
        x.push_back(r.normal());
        y.push_back(r.normal() + 0.5);
    }
    CHECK(testing::ks_pvalue(testing::ks_statistic(x, y), 2000, 2000) < 1e-6);
}

TEST_CASE("vector sampling consumes the stream in order") {
    const std::vector<double> c{0.5, 2.0, 7.0};
    RngStream a(30), b(30);
    const std::vector<PGDraw> v = sample_pg_vector(c, a);
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(v[i].omega == sample_pg1(c[i], b).omega);
    RngStream d(30);
    const Eigen::VectorXd w = sample_pg_omegas(Eigen::Map<const Eigen::VectorXd>(c.data(), 3), d);
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(w[static_cast<Eigen::Index>(i)] == v[i].omega);
}

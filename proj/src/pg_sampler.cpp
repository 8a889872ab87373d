#include "gptree/pg_sampler.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace gptree {

namespace {

constexpr double kPi = std::numbers::pi;
// Switch point between the truncated exponential and inverse-Gaussian
// proposals; 0.64 is the near-optimal value for the J*(1, z) sampler.
constexpr double kTrunc = 0.64;
constexpr double kTruncRecip = 1.0 / kTrunc;

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double log_normal_cdf(double x) {
    if (x > -30.0) return std::log(normal_cdf(x));
    // asymptotic expansion of log Phi for very negative x
    return -0.5 * x * x - std::log(-x) - 0.5 * std::log(2.0 * kPi);
}

// n-th term of the alternating series for the J*(1, 0) density.
double series_coefficient(int n, double x) {
    const double k = (n + 0.5) * kPi;
    if (x > kTrunc) return k * std::exp(-0.5 * k * k * x);
    if (x <= 0.0) return 0.0;
    const double expnt = -1.5 * (std::log(0.5 * kPi) + std::log(x)) + std::log(k) -
                         2.0 * (n + 0.5) * (n + 0.5) / x;
    return std::exp(expnt);
}

// Probability of proposing from the exponential tail (x > t).
double mass_exponential_part(double z) {
    const double t = kTrunc;
    const double fz = 0.125 * kPi * kPi + 0.5 * z * z;
    const double b = std::sqrt(1.0 / t) * (t * z - 1.0);
    const double a = -std::sqrt(1.0 / t) * (t * z + 1.0);
    const double x0 = std::log(fz) + fz * t;
    const double xb = x0 - z + log_normal_cdf(b);
    const double xa = x0 + z + log_normal_cdf(a);
    const double q_over_p = 4.0 / kPi * (std::exp(xb) + std::exp(xa));
    return 1.0 / (1.0 + q_over_p);
}

// Inverse-Gaussian(1/z, 1) truncated to (0, t].
double truncated_inverse_gaussian(double z, RngStream& rng) {
    z = std::abs(z);
    const double t = kTrunc;
    double x = t + 1.0;
    if (kTruncRecip > z) {
        // mean exceeds t: draw from 1/chi^2_1 truncated, accept with exp(-z^2 x / 2)
        double alpha = 0.0;
        while (rng.uniform() > alpha) {
            double e1 = rng.exponential();
            double e2 = rng.exponential();
            while (e1 * e1 > 2.0 * e2 / t) {
                e1 = rng.exponential();
                e2 = rng.exponential();
            }
            x = 1.0 + e1 * t;
            x = t / (x * x);
            alpha = std::exp(-0.5 * z * z * x);
        }
    } else {
        const double mu = 1.0 / z;
        while (x > t) {
            double y = rng.normal();
            y *= y;
            const double half_mu = 0.5 * mu;
            const double mu_y = mu * y;
            x = mu + half_mu * mu_y - half_mu * std::sqrt(4.0 * mu_y + mu_y * mu_y);
            if (rng.uniform() > mu / (mu + x)) x = mu * mu / x;
        }
    }
    return x;
}

}  // namespace

double pg_mean(double b, double c) {
    if (!(b > 0.0)) throw std::invalid_argument("pg_mean: b must be positive");
    const double a = std::abs(c);
    if (a < 1e-6) return b * (0.25 - a * a / 48.0);
    return b / (2.0 * a) * std::tanh(0.5 * a);
}

PGDraw sample_pg1(double c, RngStream& rng) {
    const double z = 0.5 * std::abs(c);
    const double fz = 0.125 * kPi * kPi + 0.5 * z * z;
    const double p_exp = mass_exponential_part(z);

    while (true) {
        double x;
        if (rng.uniform() < p_exp)
            x = kTrunc + rng.exponential() / fz;
        else
            x = truncated_inverse_gaussian(z, rng);

        double s = series_coefficient(0, x);
        const double y = rng.uniform() * s;
        for (int n = 1;; ++n) {
            if (n % 2 == 1) {
                s -= series_coefficient(n, x);
                if (y <= s) return PGDraw{0.25 * x};
            } else {
                s += series_coefficient(n, x);
                if (y > s) break;
            }
        }
    }
}

std::vector<PGDraw> sample_pg_vector(std::span<const double> c, RngStream& rng) {
    std::vector<PGDraw> out;
    out.reserve(c.size());
    for (double ci : c) out.push_back(sample_pg1(ci, rng));
    return out;
}

Eigen::VectorXd sample_pg_omegas(const Eigen::VectorXd& c, RngStream& rng) {
    Eigen::VectorXd out(c.size());
    for (Eigen::Index i = 0; i < c.size(); ++i) out[i] = sample_pg1(c[i], rng).omega;
    return out;
}

}  // namespace gptree

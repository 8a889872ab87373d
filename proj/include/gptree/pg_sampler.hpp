#pragma once

#include "gptree/rng.hpp"

#include <Eigen/Core>

#include <span>
#include <vector>

namespace gptree {

/// A single draw omega ~ PG(1, c); always strictly positive.
struct PGDraw {
    double omega;
};

/// Mean of PG(b, c): b / (2c) * tanh(c / 2), with the c -> 0 limit b / 4.
double pg_mean(double b, double c);

/// Exact draw from PG(1, c) using the alternating-series rejection sampler
/// (Devroye's method for the Jacobi distribution J*(1, c/2), scaled by 1/4).
/// The distribution depends on |c| only.
PGDraw sample_pg1(double c, RngStream& rng);

/// One independent PG(1, c_i) draw per entry, consumed from `rng` in order.
std::vector<PGDraw> sample_pg_vector(std::span<const double> c, RngStream& rng);

/// Same as sample_pg_vector but returns the omegas directly.
Eigen::VectorXd sample_pg_omegas(const Eigen::VectorXd& c, RngStream& rng);

}  // namespace gptree

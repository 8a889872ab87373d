#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <array>
#include <span>
#include <vector>

namespace gptree {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Relative jitter levels tried in order; each is multiplied by the mean
/// diagonal of the matrix being factorized.
inline constexpr std::array<double, 4> kDefaultJitterSchedule{0.0, 1e-8, 1e-6, 1e-4};

/// Cholesky factor L of (M + jitter * I), with L lower triangular.
class CholeskyFactor {
public:
    CholeskyFactor() = default;

    const MatrixXd& lower() const { return lower_; }
    /// Absolute jitter that was added to the diagonal.
    double jitter() const { return jitter_; }
    Eigen::Index dim() const { return lower_.rows(); }

    /// (M + jitter I)^{-1} B
    MatrixXd solve(const MatrixXd& rhs) const;
    VectorXd solve(const VectorXd& rhs) const;
    /// L^{-1} B
    MatrixXd solve_lower(const MatrixXd& rhs) const;
    VectorXd solve_lower(const VectorXd& rhs) const;
    /// log det(M + jitter I)
    double log_det() const;
    /// (M + jitter I)^{-1}
    MatrixXd inverse() const;

private:
    friend CholeskyFactor cholesky_psd(const MatrixXd&, std::span<const double>);
    MatrixXd lower_;
    double jitter_ = 0.0;
};

/// Factorizes a symmetric positive (semi-)definite matrix, escalating the
/// diagonal jitter through `relative_schedule` until Cholesky succeeds.
/// Throws FactorizationFailure when every level fails, std::invalid_argument
/// when M is not square or not symmetric to 1e-12 relative.
CholeskyFactor cholesky_psd(const MatrixXd& M,
                            std::span<const double> relative_schedule = kDefaultJitterSchedule);

/// Gauss-Hermite rule for the weight exp(-x^2) (physicists' convention).
struct QuadratureRule {
    std::vector<double> nodes;    // ascending, symmetric about 0
    std::vector<double> weights;  // positive, summing to sqrt(pi)
    int order() const { return static_cast<int>(nodes.size()); }
};

inline constexpr int kDefaultQuadratureOrder = 20;
inline constexpr int kMaxQuadratureOrder = 100;

/// Nodes and weights of the `order`-point rule, exact for polynomials of
/// degree <= 2*order - 1. Orders outside [1, 100] throw std::invalid_argument.
QuadratureRule gauss_hermite(int order);

/// Shared cached rule of the given order.
const QuadratureRule& cached_gauss_hermite(int order);

/// Rows of X at the given indices, in that order.
template <class Index>
MatrixXd select_rows(const MatrixXd& X, const std::vector<Index>& rows) {
    MatrixXd out(static_cast<Eigen::Index>(rows.size()), X.cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
        out.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(rows[i]));
    return out;
}

double sigmoid(double x) noexcept;
/// log(sigmoid(x)) without overflow.
double log_sigmoid(double x) noexcept;
/// log(cosh(x)) without overflow.
double log_cosh(double x) noexcept;

/// E[sigmoid(f)] for f ~ Normal(mu, var) by Gauss-Hermite quadrature with the
/// substitution f = mu + sqrt(2 var) x. var == 0 returns sigmoid(mu).
double expected_sigmoid(double mu, double var, const QuadratureRule& rule);

}  // namespace gptree

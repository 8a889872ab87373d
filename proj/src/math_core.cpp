#include "gptree/math_core.hpp"

#include "gptree/errors.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace gptree {

MatrixXd CholeskyFactor::solve(const MatrixXd& rhs) const {
    MatrixXd x = lower_.triangularView<Eigen::Lower>().solve(rhs);
    lower_.transpose().triangularView<Eigen::Upper>().solveInPlace(x);
    return x;
}

VectorXd CholeskyFactor::solve(const VectorXd& rhs) const {
    VectorXd x = lower_.triangularView<Eigen::Lower>().solve(rhs);
    lower_.transpose().triangularView<Eigen::Upper>().solveInPlace(x);
    return x;
}

MatrixXd CholeskyFactor::solve_lower(const MatrixXd& rhs) const {
    return lower_.triangularView<Eigen::Lower>().solve(rhs);
}

VectorXd CholeskyFactor::solve_lower(const VectorXd& rhs) const {
    return lower_.triangularView<Eigen::Lower>().solve(rhs);
}

double CholeskyFactor::log_det() const { return 2.0 * lower_.diagonal().array().log().sum(); }

MatrixXd CholeskyFactor::inverse() const {
    MatrixXd inv = solve(MatrixXd(MatrixXd::Identity(dim(), dim())));
    return 0.5 * (inv + inv.transpose());
}

CholeskyFactor cholesky_psd(const MatrixXd& M, std::span<const double> relative_schedule) {
    if (M.rows() != M.cols()) throw std::invalid_argument("cholesky_psd: matrix is not square");
    const Eigen::Index n = M.rows();
    CholeskyFactor out;
    if (n == 0) return out;

    const double scale = M.cwiseAbs().maxCoeff();
    if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(scale, 1.0))
        throw std::invalid_argument("cholesky_psd: matrix is not symmetric");

    const double mean_diag = M.diagonal().mean();
    Eigen::LLT<MatrixXd> llt(n);
    for (double level : relative_schedule) {
        const double eps = level * mean_diag;
        if (level > 0.0 && !(eps > 0.0)) continue;
        MatrixXd shifted = M;
        shifted.diagonal().array() += eps;
        llt.compute(shifted);
        if (llt.info() == Eigen::Success && (llt.matrixLLT().diagonal().array() > 0.0).all()) {
            out.lower_ = llt.matrixL();
            out.jitter_ = eps;
            return out;
        }
    }
    std::ostringstream msg;
    msg << "all jitter levels failed for a " << n << "x" << n << " matrix (mean diagonal "
        << mean_diag << ")";
    throw FactorizationFailure(msg.str());
}

QuadratureRule gauss_hermite(int order) {
    if (order < 1 || order > kMaxQuadratureOrder)
        throw std::invalid_argument("gauss_hermite: order must lie in [1, 100]");

    // Newton iteration on the orthonormal Hermite recurrence, starting from the
    // classical asymptotic root guesses; roots are found largest first.
    const int n = order;
    const double pim4 = std::pow(std::numbers::pi, -0.25);
    std::vector<double> x(n), w(n);
    const int half = (n + 1) / 2;
    double z = 0.0;
    for (int i = 0; i < half; ++i) {
        if (i == 0)
            z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -0.16667);
        else if (i == 1)
            z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
        else if (i == 2)
            z = 1.86 * z - 0.86 * x[0];
        else if (i == 3)
            z = 1.91 * z - 0.91 * x[1];
        else
            z = 2.0 * z - x[i - 2];

        double pp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p1 = pim4, p2 = 0.0;
            for (int j = 1; j <= n; ++j) {
                const double p3 = p2;
                p2 = p1;
                p1 = z * std::sqrt(2.0 / j) * p2 - std::sqrt(static_cast<double>(j - 1) / j) * p3;
            }
            pp = std::sqrt(2.0 * n) * p2;
            const double z1 = z;
            z = z1 - p1 / pp;
            if (std::abs(z - z1) <= 1e-15 * std::max(1.0, std::abs(z))) break;
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    if (n % 2 == 1) x[n / 2] = 0.0;

    QuadratureRule rule;
    rule.nodes.assign(x.rbegin(), x.rend());
    rule.weights.assign(w.rbegin(), w.rend());
    return rule;
}

const QuadratureRule& cached_gauss_hermite(int order) {
    static std::mutex mu;
    static std::map<int, QuadratureRule> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(order);
    if (it == cache.end()) it = cache.emplace(order, gauss_hermite(order)).first;
    return it->second;
}

double sigmoid(double x) noexcept {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double log_sigmoid(double x) noexcept {
    if (x >= 0.0) return -std::log1p(std::exp(-x));
    return x - std::log1p(std::exp(x));
}

double log_cosh(double x) noexcept {
    const double a = std::abs(x);
    return a + std::log1p(std::exp(-2.0 * a)) - std::numbers::ln2;
}

double expected_sigmoid(double mu, double var, const QuadratureRule& rule) {
    if (!(var > 0.0)) return sigmoid(mu);
    const double scale = std::sqrt(2.0 * var);
    // Normalizing by the weight sum rather than sqrt(pi) makes the result
    // exactly antisymmetric in mu about 1/2 for a symmetric rule.
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
        num += rule.weights[i] * sigmoid(mu + scale * rule.nodes[i]);
        den += rule.weights[i];
    }
    return num / den;
}

}  // namespace gptree

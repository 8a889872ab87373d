#include "gptree/kernels.hpp"

#include "gptree/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

namespace gptree {

std::string_view to_string(KernelFamily family) {
    switch (family) {
        case KernelFamily::Linear: return "linear";
        case KernelFamily::RBF: return "rbf";
        case KernelFamily::Matern52: return "matern52";
    }
    return "unknown";
}

KernelFamily kernel_family_from_string(std::string_view name) {
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    if (lower == "linear") return KernelFamily::Linear;
    if (lower == "rbf") return KernelFamily::RBF;
    if (lower == "matern52" || lower == "matern") return KernelFamily::Matern52;
    throw ConfigError("unknown kernel family '" + lower + "'");
}

void KernelSpec::validate() const {
    if (!(std::isfinite(outputscale) && outputscale > 0.0))
        throw ConfigError("kernel outputscale must be positive");
    if (family != KernelFamily::Linear && !(std::isfinite(lengthscale) && lengthscale > 0.0))
        throw ConfigError("kernel lengthscale must be positive");
}

Eigen::MatrixXd normalize_rows(const Eigen::MatrixXd& X) {
    Eigen::MatrixXd out = X;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const double norm = X.row(i).norm();
        if (!(norm >= 1e-12)) {
            std::ostringstream msg;
            msg << "row " << i << " has norm " << norm;
            throw ZeroRow(msg.str());
        }
        out.row(i) /= norm;
    }
    return out;
}

namespace {

Eigen::MatrixXd prepare(const KernelSpec& spec, const Eigen::MatrixXd& X) {
    return spec.normalize_inputs ? normalize_rows(X) : X;
}

Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
    const Eigen::VectorXd a2 = A.rowwise().squaredNorm();
    const Eigen::VectorXd b2 = B.rowwise().squaredNorm();
    Eigen::MatrixXd d = (-2.0 * A * B.transpose()).eval();
    d.colwise() += a2;
    d.rowwise() += b2.transpose();
    return d.cwiseMax(0.0);
}

void apply_stationary(const KernelSpec& spec, Eigen::MatrixXd& d2) {
    const double ell = spec.lengthscale;
    const double s = spec.outputscale;
    if (spec.family == KernelFamily::RBF) {
        d2 = (s * (-0.5 / (ell * ell) * d2.array()).exp()).matrix();
    } else {
        const double sqrt5 = std::sqrt(5.0);
        d2 = d2.unaryExpr([&](double v) {
            const double r = std::sqrt(v) / ell;
            return s * (1.0 + sqrt5 * r + 5.0 * r * r / 3.0) * std::exp(-sqrt5 * r);
        });
    }
}

}  // namespace

Eigen::MatrixXd gram(const KernelSpec& spec, const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
    if (A.cols() != B.cols()) {
        std::ostringstream msg;
        msg << "feature dimensions " << A.cols() << " and " << B.cols() << " differ";
        throw DimensionMismatch(msg.str());
    }
    const Eigen::MatrixXd a = prepare(spec, A);
    const Eigen::MatrixXd b = prepare(spec, B);
    if (spec.family == KernelFamily::Linear) return spec.outputscale * a * b.transpose();
    Eigen::MatrixXd k = squared_distances(a, b);
    apply_stationary(spec, k);
    return k;
}

Eigen::MatrixXd gram(const KernelSpec& spec, const Eigen::MatrixXd& A) {
    const Eigen::MatrixXd a = prepare(spec, A);
    Eigen::MatrixXd k;
    if (spec.family == KernelFamily::Linear) {
        k = spec.outputscale * a * a.transpose();
    } else {
        k = squared_distances(a, a);
        k.diagonal().setZero();
        apply_stationary(spec, k);
    }
    // mirror the lower triangle so the result is exactly symmetric
    k.triangularView<Eigen::StrictlyUpper>() = k.transpose().triangularView<Eigen::StrictlyUpper>();
    return k;
}

Eigen::VectorXd gram_diagonal(const KernelSpec& spec, const Eigen::MatrixXd& A) {
    if (spec.family != KernelFamily::Linear) return Eigen::VectorXd::Constant(A.rows(), spec.outputscale);
    const Eigen::MatrixXd a = prepare(spec, A);
    return spec.outputscale * a.rowwise().squaredNorm();
}

}  // namespace gptree

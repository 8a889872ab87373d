#pragma once

#include <Eigen/Core>

#include <string>
#include <string_view>

namespace gptree {

enum class KernelFamily { Linear, RBF, Matern52 };

std::string_view to_string(KernelFamily family);
/// Accepts "linear", "rbf", "matern52" (case-insensitive); throws ConfigError.
KernelFamily kernel_family_from_string(std::string_view name);

struct KernelSpec {
    KernelFamily family = KernelFamily::RBF;
    double lengthscale = 1.0;  // unused by Linear
    double outputscale = 1.0;
    bool normalize_inputs = true;

    /// Throws ConfigError on non-positive or non-finite scales.
    void validate() const;

    static KernelSpec linear(double outputscale) { return {KernelFamily::Linear, 1.0, outputscale, true}; }
    static KernelSpec rbf(double lengthscale, double outputscale) {
        return {KernelFamily::RBF, lengthscale, outputscale, true};
    }
    static KernelSpec matern52(double lengthscale, double outputscale) {
        return {KernelFamily::Matern52, lengthscale, outputscale, true};
    }

    friend bool operator==(const KernelSpec&, const KernelSpec&) = default;
};

/// Scales every row to unit Euclidean norm. Throws ZeroRow if a row has norm < 1e-12.
Eigen::MatrixXd normalize_rows(const Eigen::MatrixXd& X);

/// Cross-covariance matrix with entry (i, j) = k(a_i, b_j). Rows are the data
/// points. Throws DimensionMismatch when the column counts differ.
Eigen::MatrixXd gram(const KernelSpec& spec, const Eigen::MatrixXd& A, const Eigen::MatrixXd& B);

/// Symmetric Gram matrix of A with itself (exactly symmetric).
Eigen::MatrixXd gram(const KernelSpec& spec, const Eigen::MatrixXd& A);

/// k(x, x) for every row of A.
Eigen::VectorXd gram_diagonal(const KernelSpec& spec, const Eigen::MatrixXd& A);

}  // namespace gptree

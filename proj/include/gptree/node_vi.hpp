#pragma once

#include "gptree/kernels.hpp"
#include "gptree/math_core.hpp"
#include "gptree/predictive.hpp"
#include "gptree/rng.hpp"

#include <Eigen/Cholesky>

#include <vector>

namespace gptree {

/// Inducing locations shared by all nodes of a tree, each owned by one class.
struct InducingStore {
    MatrixXd locations;       // m x d
    std::vector<int> labels;  // class of each location
    int per_class = 0;        // requested count per class

    std::size_t size() const { return labels.size(); }
    /// Rows whose class is in `classes`, in store order.
    std::vector<int> rows_for(const std::vector<int>& classes) const;
    MatrixXd gather(const std::vector<int>& rows) const;
};

/// k-means++ (plus Lloyd iterations) on each class's features separately,
/// `per_class` centers per class, classes in ascending order. A class with at
/// most `per_class` samples contributes its samples unchanged. Throws
/// EmptyClass if any of `classes` has no samples.
InducingStore init_inducing(const MatrixXd& features, const std::vector<int>& labels,
                            const std::vector<int>& classes, int per_class, RngStream& rng);
InducingStore init_inducing(const MatrixXd& features, const std::vector<int>& labels, int per_class,
                            RngStream& rng);

/// Relative jitter always added to K_mm (times its mean diagonal); nearby
/// inducing points make K_mm numerically singular otherwise.
inline constexpr double kInducingJitter = 1e-6;

struct VIConfig {
    int epochs = 50;
    int batch_size = 0;  // 0 means full batch
    double learning_rate = 0.05;
    PredictMode predict_mode = PredictMode::Quadrature;
    int quadrature_order = kDefaultQuadratureOrder;

    void validate() const;
    friend bool operator==(const VIConfig&, const VIConfig&) = default;
};

/// Variational Polya-Gamma parameters for one minibatch.
struct BatchAugState {
    VectorXd c;       // >= 0
    VectorXd lambda;  // tanh(c/2) / (2c), in (0, 1/4]
};

struct ElboTerms {
    double expectation = 0.0;  // E[log p(y | omega, f)], scaled to the full data
    double kl_gauss = 0.0;     // KL(q(fbar) || p(fbar))
    double kl_pg = 0.0;        // sum of KL(PG(1, c_i) || PG(1, 0)), scaled to the full data
    double total() const { return expectation - kl_gauss - kl_pg; }
};

struct NaturalGradient {
    VectorXd eta;
    MatrixXd H;
};

/// Sparse variational binary GP at one node over a subset of the shared
/// inducing points. q(fbar) = Normal(mu, Sigma) is held in natural form
/// eta = Sigma^-1 mu, H = -1/2 Sigma^-1.
///
/// The per-point likelihood is log p(y_i | omega_i, f_i) =
/// -log 2 + kappa_i f_i - omega_i f_i^2 / 2, so the bound is a true lower
/// bound on the log marginal likelihood.
class NodeVIModel {
public:
    /// q(fbar) set to the prior: mu = 0, Sigma = K_mm.
    static NodeVIModel prior(MatrixXd inducing_locations, std::vector<int> inducing_rows, const KernelSpec& kernel);
    static NodeVIModel prior(const InducingStore& store, std::vector<int> inducing_rows, const KernelSpec& kernel);

    /// Rebuilds a model from stored state (artifact loading).
    static NodeVIModel restore(MatrixXd inducing_locations, std::vector<int> inducing_rows, const KernelSpec& kernel,
                               VectorXd eta, MatrixXd H, VectorXd mean, MatrixXd cov);

    /// Closed-form optimal c for every batch row.
    BatchAugState update_c(const MatrixXd& batch) const;

    ElboTerms elbo_terms(const MatrixXd& batch, const std::vector<int>& labels, const BatchAugState& aug,
                         double n_total) const;
    double elbo(const MatrixXd& batch, const std::vector<int>& labels, const BatchAugState& aug,
                double n_total) const;

    NaturalGradient natural_gradient(const MatrixXd& batch, const std::vector<int>& labels,
                                     const BatchAugState& aug, double n_total) const;

    /// eta += lr * grad_eta, H += lr * grad_H. Throws PDViolation if -2H is no
    /// longer positive definite; *this is unchanged in that case.
    void apply_natural_gradient_step(const MatrixXd& batch, const std::vector<int>& labels,
                                     const BatchAugState& aug, double learning_rate, double n_total);
    NodeVIModel natural_gradient_step(const MatrixXd& batch, const std::vector<int>& labels,
                                      const BatchAugState& aug, double learning_rate, double n_total) const;

    PredictiveMoments predictive_posterior(const MatrixXd& queries) const;
    GaussianMoments predictive_posterior(const VectorXd& x_star) const;
    VectorXd predict_prob(const MatrixXd& queries, PredictMode mode, int quadrature_order) const;

    const MatrixXd& inducing_locations() const { return locations_; }
    const std::vector<int>& inducing_rows() const { return rows_; }
    const KernelSpec& kernel() const { return kernel_; }
    const VectorXd& eta() const { return eta_; }
    const MatrixXd& H() const { return H_; }
    const VectorXd& mean() const { return mean_; }
    const MatrixXd& cov() const { return cov_; }
    /// K_mm including the fixed jitter and any extra jitter needed to factorize it.
    const MatrixXd& kmm() const { return kmm_; }
    Eigen::Index num_inducing() const { return locations_.rows(); }

private:
    struct Projection {
        MatrixXd A;        // K_bm K_mm^-1
        VectorXd q_diag;   // diag(K_bb - K_bm K_mm^-1 K_mb), clamped at 0
        VectorXd f_mean;   // A mu
        VectorXd f_var;    // diag(A Sigma A^T)
    };

    NodeVIModel(MatrixXd locations, std::vector<int> rows, const KernelSpec& kernel);
    Projection project(const MatrixXd& batch) const;
    void set_natural(VectorXd eta, MatrixXd H);

    MatrixXd locations_;
    std::vector<int> rows_;
    KernelSpec kernel_;
    MatrixXd kmm_;
    CholeskyFactor kmm_factor_;
    MatrixXd kmm_inv_;
    VectorXd eta_;
    MatrixXd H_;
    VectorXd mean_;
    MatrixXd cov_;
    double log_det_cov_ = 0.0;
};

/// Epochs of shuffled minibatch passes over (features, labels): per batch,
/// update_c then one natural-gradient step. Each epoch draws one permutation
/// of all rows from `rng`.
void train_node_vi(NodeVIModel& model, const MatrixXd& features, const std::vector<int>& labels,
                   const VIConfig& config, RngStream& rng);

/// Row order for one epoch followed by the batch boundaries.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, int batch_size, RngStream& rng);

}  // namespace gptree

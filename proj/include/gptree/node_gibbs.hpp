#pragma once

#include "gptree/kernels.hpp"
#include "gptree/math_core.hpp"
#include "gptree/predictive.hpp"
#include "gptree/rng.hpp"

#include <vector>

namespace gptree {

struct GibbsConfig {
    int n_chains = 1;
    int n_steps = 1;
    PredictMode predict_mode = PredictMode::Quadrature;
    int quadrature_order = kDefaultQuadratureOrder;

    /// Throws ConfigError.
    void validate() const;
    friend bool operator==(const GibbsConfig&, const GibbsConfig&) = default;
};

/// State of one block-Gibbs chain over (f, omega).
struct ChainState {
    VectorXd omega;  // strictly positive
    VectorXd f;
    int steps_taken = 0;
    RngStream rng;
};

/// Dense parameters of f | y, omega.
struct GaussianConditional {
    VectorXd mean;
    MatrixXd cov;
};

/// Binary GP classifier for one tree node, sampled by block Gibbs over the
/// Polya-Gamma augmented posterior. Zero prior mean; label 1 means "go left".
///
/// A fitted model is immutable and safe to query from several threads.
class NodeGibbsModel {
public:
    /// Validated model with no chains. `labels` must be 0/1 with one per row of X.
    NodeGibbsModel(MatrixXd features, std::vector<int> labels, KernelSpec kernel, GibbsConfig config);

    /// Runs `config.n_chains` chains for `config.n_steps` steps each. Chain i
    /// draws from rng.derive(i). Throws SingleClassNode if the labels are constant.
    static NodeGibbsModel fit(MatrixXd features, std::vector<int> labels, const KernelSpec& kernel,
                              const GibbsConfig& config, const RngStream& rng);

    /// Rebuilds a fitted model from stored chain states (artifact loading).
    static NodeGibbsModel restore(MatrixXd features, std::vector<int> labels, const KernelSpec& kernel,
                                  const GibbsConfig& config, std::vector<ChainState> chains);

    /// omega = 1/4 (the PG(1, 0) mean), f = 0.
    ChainState initial_chain(RngStream rng) const;

    /// Mean Sigma*kappa and covariance Sigma = (K^-1 + Omega)^-1.
    GaussianConditional conditional(const VectorXd& omega) const;

    /// Draws f | y, omega and then omega | f ~ PG(1, f).
    ChainState gibbs_step(ChainState chain) const;

    /// log Normal(Omega^-1 kappa | 0, K + Omega^-1), including the full
    /// Gaussian normalizer -n/2 log(2 pi).
    double augmented_marginal_loglik(const VectorXd& omega) const;
    double augmented_marginal_loglik(std::size_t chain) const;

    /// Moments of f* given (X, y, omega) for one chain.
    GaussianMoments predictive_posterior(std::size_t chain, const VectorXd& x_star) const;
    PredictiveMoments predictive_posterior(std::size_t chain, const MatrixXd& queries) const;

    /// P(y* = 1) averaged over chains, using the configured predict mode.
    double predict_prob(const VectorXd& x_star) const;
    VectorXd predict_prob(const MatrixXd& queries) const;
    VectorXd predict_prob(const MatrixXd& queries, PredictMode mode, int quadrature_order) const;

    const MatrixXd& features() const { return features_; }
    const std::vector<int>& labels() const { return labels_; }
    const VectorXd& kappa() const { return kappa_; }
    const MatrixXd& gram_matrix() const { return gram_; }
    const KernelSpec& kernel() const { return kernel_; }
    const GibbsConfig& config() const { return config_; }
    const std::vector<ChainState>& chains() const { return chains_; }
    std::size_t size() const { return labels_.size(); }

private:
    struct ChainCache {
        VectorXd sqrt_omega;
        CholeskyFactor b_factor;  // I + W K W, W = diag(sqrt(omega))
        VectorXd alpha;           // W B^-1 W^-1 kappa
    };

    ChainCache make_cache(const VectorXd& omega) const;
    PredictiveMoments moments_from_cross(const ChainCache& cache, const MatrixXd& cross,
                                         const VectorXd& prior_var) const;
    void set_chains(std::vector<ChainState> chains);

    MatrixXd features_;
    std::vector<int> labels_;
    VectorXd kappa_;
    KernelSpec kernel_;
    GibbsConfig config_;
    MatrixXd gram_;
    CholeskyFactor gram_factor_;
    std::vector<ChainState> chains_;
    std::vector<ChainCache> caches_;
};

}  // namespace gptree

#include "gptree/node_gibbs.hpp"

#include "gptree/errors.hpp"
#include "gptree/pg_sampler.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace gptree {

void GibbsConfig::validate() const {
    if (n_chains < 1) throw ConfigError("gibbs n_chains must be >= 1");
    if (n_steps < 1) throw ConfigError("gibbs n_steps must be >= 1");
    if (quadrature_order < 1 || quadrature_order > kMaxQuadratureOrder)
        throw ConfigError("quadrature order must lie in [1, 100]");
}

NodeGibbsModel::NodeGibbsModel(MatrixXd features, std::vector<int> labels, KernelSpec kernel,
                               GibbsConfig config)
    : features_(std::move(features)),
      labels_(std::move(labels)),
      kernel_(kernel),
      config_(config) {
    if (static_cast<std::size_t>(features_.rows()) != labels_.size()) {
        std::ostringstream msg;
        msg << features_.rows() << " feature rows but " << labels_.size() << " labels";
        throw DimensionMismatch(msg.str());
    }
    kernel_.validate();
    config_.validate();
    kappa_.resize(static_cast<Eigen::Index>(labels_.size()));
    for (std::size_t i = 0; i < labels_.size(); ++i) {
        if (labels_[i] != 0 && labels_[i] != 1) throw std::invalid_argument("node labels must be 0 or 1");
        kappa_[static_cast<Eigen::Index>(i)] = labels_[i] - 0.5;
    }
    gram_ = gram(kernel_, features_);
    gram_factor_ = cholesky_psd(gram_);
}

NodeGibbsModel NodeGibbsModel::fit(MatrixXd features, std::vector<int> labels, const KernelSpec& kernel,
                                   const GibbsConfig& config, const RngStream& rng) {
    bool has0 = false, has1 = false;
    for (int y : labels) (y == 1 ? has1 : has0) = true;
    if (!(has0 && has1)) throw SingleClassNode("node training labels are constant");

    NodeGibbsModel model(std::move(features), std::move(labels), kernel, config);
    std::vector<ChainState> chains;
    chains.reserve(static_cast<std::size_t>(config.n_chains));
    for (int c = 0; c < config.n_chains; ++c) {
        ChainState chain = model.initial_chain(rng.derive(static_cast<std::uint64_t>(c)));
        for (int s = 0; s < config.n_steps; ++s) chain = model.gibbs_step(std::move(chain));
        chains.push_back(std::move(chain));
    }
    model.set_chains(std::move(chains));
    return model;
}

NodeGibbsModel NodeGibbsModel::restore(MatrixXd features, std::vector<int> labels, const KernelSpec& kernel,
                                       const GibbsConfig& config, std::vector<ChainState> chains) {
    NodeGibbsModel model(std::move(features), std::move(labels), kernel, config);
    for (const auto& c : chains) {
        if (c.omega.size() != static_cast<Eigen::Index>(model.size()) || !(c.omega.array() > 0.0).all())
            throw FormatError("stored chain state does not match node data");
    }
    model.set_chains(std::move(chains));
    return model;
}

void NodeGibbsModel::set_chains(std::vector<ChainState> chains) {
    chains_ = std::move(chains);
    caches_.clear();
    caches_.reserve(chains_.size());
    for (const auto& c : chains_) caches_.push_back(make_cache(c.omega));
}

ChainState NodeGibbsModel::initial_chain(RngStream rng) const {
    const auto n = static_cast<Eigen::Index>(size());
    return ChainState{VectorXd::Constant(n, 0.25), VectorXd::Zero(n), 0, std::move(rng)};
}

NodeGibbsModel::ChainCache NodeGibbsModel::make_cache(const VectorXd& omega) const {
    ChainCache cache;
    cache.sqrt_omega = omega.array().sqrt();
    const VectorXd& w = cache.sqrt_omega;
    MatrixXd b = w.asDiagonal() * gram_ * w.asDiagonal();
    b = 0.5 * (b + b.transpose()).eval();
    b.diagonal().array() += 1.0;
    cache.b_factor = cholesky_psd(b);
    const VectorXd scaled_kappa = kappa_.cwiseQuotient(w);
    cache.alpha = w.cwiseProduct(cache.b_factor.solve(scaled_kappa));
    return cache;
}

GaussianConditional NodeGibbsModel::conditional(const VectorXd& omega) const {
    // Sigma = K - K W B^-1 W K avoids inverting K.
    const ChainCache cache = make_cache(omega);
    const VectorXd& w = cache.sqrt_omega;
    const MatrixXd wk = w.asDiagonal() * gram_;
    const MatrixXd half = cache.b_factor.solve_lower(wk);
    GaussianConditional out;
    out.cov = gram_ - half.transpose() * half;
    out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
    out.mean = out.cov * kappa_;
    return out;
}

ChainState NodeGibbsModel::gibbs_step(ChainState chain) const {
    const auto n = static_cast<Eigen::Index>(size());
    if (chain.omega.size() != n) throw DimensionMismatch("chain state does not match node size");

    const ChainCache cache = make_cache(chain.omega);
    const VectorXd& w = cache.sqrt_omega;

    // f = Sigma (kappa + W z2) + (I - K W B^-1 W) g with g ~ N(0, K), which is
    // exactly Normal(Sigma kappa, Sigma) while only factorizing B.
    VectorXd z1(n), z2(n);
    for (Eigen::Index i = 0; i < n; ++i) z1[i] = chain.rng.normal();
    for (Eigen::Index i = 0; i < n; ++i) z2[i] = chain.rng.normal();
    const VectorXd g = gram_factor_.lower().triangularView<Eigen::Lower>() * z1;
    const VectorXd u = gram_ * (kappa_ + w.cwiseProduct(z2)) + g;
    chain.f = u - gram_ * w.cwiseProduct(cache.b_factor.solve(VectorXd(w.cwiseProduct(u))));

    chain.omega = sample_pg_omegas(chain.f, chain.rng);
    ++chain.steps_taken;
    return chain;
}

double NodeGibbsModel::augmented_marginal_loglik(const VectorXd& omega) const {
    const ChainCache cache = make_cache(omega);
    // (K + Omega^-1)^-1 = W B^-1 W and det(K + Omega^-1) = det(B) / det(Omega).
    const VectorXd wv = kappa_.cwiseQuotient(cache.sqrt_omega);  // W * Omega^-1 kappa
    const double quad = cache.b_factor.solve_lower(wv).squaredNorm();
    const double log_det = cache.b_factor.log_det() - omega.array().log().sum();
    const double n = static_cast<double>(size());
    return -0.5 * quad - 0.5 * log_det - 0.5 * n * std::log(2.0 * std::numbers::pi);
}

double NodeGibbsModel::augmented_marginal_loglik(std::size_t chain) const {
    return augmented_marginal_loglik(chains_.at(chain).omega);
}

PredictiveMoments NodeGibbsModel::moments_from_cross(const ChainCache& cache, const MatrixXd& cross,
                                                     const VectorXd& prior_var) const {
    PredictiveMoments out;
    out.mean = cross.transpose() * cache.alpha;
    const MatrixXd v = cache.b_factor.solve_lower(MatrixXd(cache.sqrt_omega.asDiagonal() * cross));
    out.var = prior_var - v.colwise().squaredNorm().transpose();
    for (Eigen::Index i = 0; i < out.var.size(); ++i) {
        if (out.var[i] < 0.0) {
            out.var[i] = 0.0;
            ++out.clamped;
        }
    }
    return out;
}

PredictiveMoments NodeGibbsModel::predictive_posterior(std::size_t chain, const MatrixXd& queries) const {
    const MatrixXd cross = gram(kernel_, features_, queries);
    return moments_from_cross(caches_.at(chain), cross, gram_diagonal(kernel_, queries));
}

GaussianMoments NodeGibbsModel::predictive_posterior(std::size_t chain, const VectorXd& x_star) const {
    const PredictiveMoments m = predictive_posterior(chain, MatrixXd(x_star.transpose()));
    return {m.mean[0], m.var[0]};
}

VectorXd NodeGibbsModel::predict_prob(const MatrixXd& queries, PredictMode mode, int quadrature_order) const {
    if (chains_.empty()) throw std::logic_error("predict_prob on an unfitted node");
    const MatrixXd cross = gram(kernel_, features_, queries);
    const VectorXd prior_var = gram_diagonal(kernel_, queries);
    VectorXd total = VectorXd::Zero(queries.rows());
    for (const auto& cache : caches_)
        total += probabilities_from_moments(moments_from_cross(cache, cross, prior_var), mode, quadrature_order);
    return total / static_cast<double>(caches_.size());
}

VectorXd NodeGibbsModel::predict_prob(const MatrixXd& queries) const {
    return predict_prob(queries, config_.predict_mode, config_.quadrature_order);
}

double NodeGibbsModel::predict_prob(const VectorXd& x_star) const {
    return predict_prob(MatrixXd(x_star.transpose()))[0];
}

}  // namespace gptree

#include "gptree/node_vi.hpp"

#include "gptree/errors.hpp"
#include "gptree/kmeans.hpp"
#include "gptree/pg_sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

namespace gptree {

std::vector<int> InducingStore::rows_for(const std::vector<int>& classes) const {
    const std::set<int> wanted(classes.begin(), classes.end());
    std::vector<int> rows;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (wanted.count(labels[i])) rows.push_back(static_cast<int>(i));
    return rows;
}

MatrixXd InducingStore::gather(const std::vector<int>& rows) const {
    MatrixXd out(static_cast<Eigen::Index>(rows.size()), locations.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = locations.row(rows[i]);
    return out;
}

InducingStore init_inducing(const MatrixXd& features, const std::vector<int>& labels,
                            const std::vector<int>& classes, int per_class, RngStream& rng) {
    if (per_class < 1) throw ConfigError("inducing points per class must be >= 1");
    if (static_cast<std::size_t>(features.rows()) != labels.size())
        throw DimensionMismatch("features and labels differ in length");

    std::vector<int> sorted(classes);
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());

    std::vector<Eigen::RowVectorXd> rows;
    InducingStore store;
    store.per_class = per_class;
    for (int cls : sorted) {
        std::vector<Eigen::Index> members;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == cls) members.push_back(static_cast<Eigen::Index>(i));
        if (members.empty()) throw EmptyClass("class " + std::to_string(cls) + " has no samples");

        MatrixXd pts(static_cast<Eigen::Index>(members.size()), features.cols());
        for (std::size_t i = 0; i < members.size(); ++i) pts.row(static_cast<Eigen::Index>(i)) = features.row(members[i]);

        if (static_cast<int>(members.size()) <= per_class) {
            for (Eigen::Index i = 0; i < pts.rows(); ++i) rows.push_back(pts.row(i));
            store.labels.insert(store.labels.end(), members.size(), cls);
            continue;
        }
        RngStream class_rng = rng.derive(static_cast<std::uint64_t>(cls));
        const KMeansResult km = kmeans_pp(pts, per_class, class_rng);
        for (Eigen::Index i = 0; i < km.centers.rows(); ++i) rows.push_back(km.centers.row(i));
        store.labels.insert(store.labels.end(), static_cast<std::size_t>(per_class), cls);
    }
    store.locations.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) store.locations.row(static_cast<Eigen::Index>(i)) = rows[i];
    return store;
}

InducingStore init_inducing(const MatrixXd& features, const std::vector<int>& labels, int per_class,
                            RngStream& rng) {
    return init_inducing(features, labels, labels, per_class, rng);
}

void VIConfig::validate() const {
    if (epochs < 0) throw ConfigError("vi epochs must be >= 0");
    if (batch_size < 0) throw ConfigError("vi batch size must be >= 0");
    if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw ConfigError("natural-gradient learning rate must lie in (0, 1]");
    if (quadrature_order < 1 || quadrature_order > kMaxQuadratureOrder)
        throw ConfigError("quadrature order must lie in [1, 100]");
}

NodeVIModel::NodeVIModel(MatrixXd locations, std::vector<int> rows, const KernelSpec& kernel)
    : locations_(std::move(locations)), rows_(std::move(rows)), kernel_(kernel) {
    kernel_.validate();
    if (locations_.rows() == 0) throw EmptyClass("node has no inducing points");
    kmm_ = gram(kernel_, locations_);
    kmm_.diagonal().array() += kInducingJitter * kmm_.diagonal().mean();
    kmm_factor_ = cholesky_psd(kmm_);
    kmm_.diagonal().array() += kmm_factor_.jitter();
    kmm_inv_ = kmm_factor_.inverse();
}

NodeVIModel NodeVIModel::prior(MatrixXd inducing_locations, std::vector<int> inducing_rows,
                               const KernelSpec& kernel) {
    NodeVIModel model(std::move(inducing_locations), std::move(inducing_rows), kernel);
    const Eigen::Index m = model.num_inducing();
    model.eta_ = VectorXd::Zero(m);
    model.H_ = -0.5 * model.kmm_inv_;
    model.mean_ = VectorXd::Zero(m);
    model.cov_ = model.kmm_;
    model.log_det_cov_ = model.kmm_factor_.log_det();
    return model;
}

NodeVIModel NodeVIModel::prior(const InducingStore& store, std::vector<int> inducing_rows, const KernelSpec& kernel) {
    MatrixXd locs = store.gather(inducing_rows);
    return prior(std::move(locs), std::move(inducing_rows), kernel);
}

NodeVIModel NodeVIModel::restore(MatrixXd inducing_locations, std::vector<int> inducing_rows, const KernelSpec& kernel,
                                 VectorXd eta, MatrixXd H, VectorXd mean, MatrixXd cov) {
    NodeVIModel model(std::move(inducing_locations), std::move(inducing_rows), kernel);
    const Eigen::Index m = model.num_inducing();
    if (eta.size() != m || H.rows() != m || H.cols() != m || mean.size() != m || cov.rows() != m || cov.cols() != m)
        throw FormatError("variational state does not match inducing count");
    Eigen::LLT<MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) throw PDViolation("stored variational covariance is not positive definite");
    model.eta_ = std::move(eta);
    model.H_ = std::move(H);
    model.mean_ = std::move(mean);
    model.cov_ = std::move(cov);
    model.log_det_cov_ = 2.0 * MatrixXd(llt.matrixL()).diagonal().array().log().sum();
    return model;
}

void NodeVIModel::set_natural(VectorXd eta, MatrixXd H) {
    H = 0.5 * (H + H.transpose()).eval();
    const MatrixXd precision = -2.0 * H;
    Eigen::LLT<MatrixXd> llt(precision);
    if (llt.info() != Eigen::Success || !(llt.matrixLLT().diagonal().array() > 0.0).all())
        throw PDViolation("-2H lost positive definiteness; reduce the natural-gradient learning rate");
    MatrixXd cov = llt.solve(MatrixXd::Identity(precision.rows(), precision.cols()));
    cov = 0.5 * (cov + cov.transpose()).eval();
    mean_ = cov * eta;
    cov_ = std::move(cov);
    log_det_cov_ = -2.0 * MatrixXd(llt.matrixL()).diagonal().array().log().sum();
    eta_ = std::move(eta);
    H_ = std::move(H);
}

NodeVIModel::Projection NodeVIModel::project(const MatrixXd& batch) const {
    Projection p;
    const MatrixXd kbm = gram(kernel_, batch, locations_);
    p.A = kmm_factor_.solve(MatrixXd(kbm.transpose())).transpose();
    p.q_diag = (gram_diagonal(kernel_, batch) - p.A.cwiseProduct(kbm).rowwise().sum()).cwiseMax(0.0);
    p.f_mean = p.A * mean_;
    p.f_var = (p.A * cov_).cwiseProduct(p.A).rowwise().sum().cwiseMax(0.0);
    return p;
}

namespace {

VectorXd centered_labels(const std::vector<int>& labels, Eigen::Index rows) {
    if (static_cast<Eigen::Index>(labels.size()) != rows) throw DimensionMismatch("batch rows and labels differ");
    VectorXd kappa(rows);
    for (Eigen::Index i = 0; i < rows; ++i) kappa[i] = labels[static_cast<std::size_t>(i)] - 0.5;
    return kappa;
}

}  // namespace

BatchAugState NodeVIModel::update_c(const MatrixXd& batch) const {
    const Projection p = project(batch);
    BatchAugState aug;
    aug.c = (p.q_diag + p.f_var + p.f_mean.cwiseAbs2()).cwiseSqrt();
    aug.lambda.resize(aug.c.size());
    for (Eigen::Index i = 0; i < aug.c.size(); ++i) aug.lambda[i] = pg_mean(1.0, aug.c[i]);
    return aug;
}

ElboTerms NodeVIModel::elbo_terms(const MatrixXd& batch, const std::vector<int>& labels, const BatchAugState& aug,
                                  double n_total) const {
    const VectorXd kappa = centered_labels(labels, batch.rows());
    if (aug.c.size() != batch.rows()) throw DimensionMismatch("augmentation state does not match batch");
    const Projection p = project(batch);
    const double scale = batch.rows() > 0 ? n_total / static_cast<double>(batch.rows()) : 0.0;

    ElboTerms t;
    const VectorXd second_moment = p.q_diag + p.f_var + p.f_mean.cwiseAbs2();
    double expectation = 0.0, kl_pg = 0.0;
    for (Eigen::Index i = 0; i < batch.rows(); ++i) {
        expectation += kappa[i] * p.f_mean[i] - 0.5 * aug.lambda[i] * second_moment[i] - std::numbers::ln2;
        const double half_c = 0.5 * aug.c[i];
        kl_pg += log_cosh(half_c) - 0.25 * aug.c[i] * std::tanh(half_c);
    }
    t.expectation = scale * expectation;
    t.kl_pg = scale * kl_pg;

    const double m = static_cast<double>(num_inducing());
    t.kl_gauss = 0.5 * ((kmm_inv_.cwiseProduct(cov_)).sum() + mean_.dot(kmm_inv_ * mean_) - m +
                        kmm_factor_.log_det() - log_det_cov_);
    return t;
}

double NodeVIModel::elbo(const MatrixXd& batch, const std::vector<int>& labels, const BatchAugState& aug,
                         double n_total) const {
    return elbo_terms(batch, labels, aug, n_total).total();
}

NaturalGradient NodeVIModel::natural_gradient(const MatrixXd& batch, const std::vector<int>& labels,
                                              const BatchAugState& aug, double n_total) const {
    const VectorXd kappa = centered_labels(labels, batch.rows());
    if (aug.lambda.size() != batch.rows()) throw DimensionMismatch("augmentation state does not match batch");
    const Projection p = project(batch);
    const double scale = n_total / static_cast<double>(batch.rows());
    // Stationary point of the bound in (mu, Sigma) for fixed c:
    //   Sigma^-1 = K_mm^-1 + s A^T Lambda A,  Sigma^-1 mu = s A^T kappa.
    NaturalGradient g;
    g.eta = scale * (p.A.transpose() * kappa) - eta_;
    MatrixXd target = kmm_inv_ + scale * (p.A.transpose() * aug.lambda.asDiagonal() * p.A);
    target = 0.5 * (target + target.transpose()).eval();
    g.H = -0.5 * target - H_;
    return g;
}

void NodeVIModel::apply_natural_gradient_step(const MatrixXd& batch, const std::vector<int>& labels,
                                              const BatchAugState& aug, double learning_rate, double n_total) {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
    if (batch.rows() == 0) return;
    const NaturalGradient g = natural_gradient(batch, labels, aug, n_total);
    set_natural(eta_ + learning_rate * g.eta, H_ + learning_rate * g.H);
}

NodeVIModel NodeVIModel::natural_gradient_step(const MatrixXd& batch, const std::vector<int>& labels,
                                               const BatchAugState& aug, double learning_rate, double n_total) const {
    NodeVIModel next = *this;
    next.apply_natural_gradient_step(batch, labels, aug, learning_rate, n_total);
    return next;
}

PredictiveMoments NodeVIModel::predictive_posterior(const MatrixXd& queries) const {
    const MatrixXd kqm = gram(kernel_, queries, locations_);
    const MatrixXd A = kmm_factor_.solve(MatrixXd(kqm.transpose())).transpose();
    const MatrixXd shrink = kmm_ - cov_;
    PredictiveMoments out;
    out.mean = A * mean_;
    out.var = gram_diagonal(kernel_, queries) - (A * shrink).cwiseProduct(A).rowwise().sum();
    for (Eigen::Index i = 0; i < out.var.size(); ++i) {
        if (out.var[i] < 0.0) {
            out.var[i] = 0.0;
            ++out.clamped;
        }
    }
    return out;
}

GaussianMoments NodeVIModel::predictive_posterior(const VectorXd& x_star) const {
    const PredictiveMoments m = predictive_posterior(MatrixXd(x_star.transpose()));
    return {m.mean[0], m.var[0]};
}

VectorXd NodeVIModel::predict_prob(const MatrixXd& queries, PredictMode mode, int quadrature_order) const {
    return probabilities_from_moments(predictive_posterior(queries), mode, quadrature_order);
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, int batch_size, RngStream& rng) {
    const std::vector<std::size_t> order = rng.permutation(n);
    const std::size_t bs = batch_size <= 0 ? std::max<std::size_t>(n, 1) : static_cast<std::size_t>(batch_size);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n; start += bs)
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + bs)));
    return batches;
}

void train_node_vi(NodeVIModel& model, const MatrixXd& features, const std::vector<int>& labels,
                   const VIConfig& config, RngStream& rng) {
    config.validate();
    const std::size_t n = labels.size();
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        for (const auto& batch : epoch_batches(n, config.batch_size, rng)) {
            MatrixXd xb(static_cast<Eigen::Index>(batch.size()), features.cols());
            std::vector<int> yb(batch.size());
            for (std::size_t i = 0; i < batch.size(); ++i) {
                xb.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(batch[i]));
                yb[i] = labels[batch[i]];
            }
            const BatchAugState aug = model.update_c(xb);
            model.apply_natural_gradient_step(xb, yb, aug, config.learning_rate, static_cast<double>(n));
        }
    }
}

}  // namespace gptree

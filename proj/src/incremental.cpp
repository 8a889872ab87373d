#include "gptree/incremental.hpp"

#include "gptree/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

namespace gptree {

std::string_view to_string(ExpansionMode mode) {
    switch (mode) {
        case ExpansionMode::Accumulated: return "accumulated";
        case ExpansionMode::SessionTree: return "session-tree";
        case ExpansionMode::RebuildTree: return "rebuild";
    }
    return "unknown";
}

ExpansionMode expansion_mode_from_string(std::string_view name) {
    if (name == "accumulated") return ExpansionMode::Accumulated;
    if (name == "session-tree") return ExpansionMode::SessionTree;
    if (name == "rebuild") return ExpansionMode::RebuildTree;
    throw ConfigError("unknown expansion mode '" + std::string(name) + "'");
}

BaseArtifact finalize_base(LabelTree tree, InducingStore inducing, KernelSpec base_kernel, KernelSpec novel_kernel) {
    if (tree.empty()) throw std::invalid_argument("finalize_base: empty tree");
    for (const TreeNode& node : tree.nodes())
        if (!node.is_leaf() && !std::holds_alternative<NodeVIModel>(node.classifier))
            throw std::invalid_argument("finalize_base: every internal node must hold a VI model");
    std::vector<int> store_classes(inducing.labels);
    std::sort(store_classes.begin(), store_classes.end());
    store_classes.erase(std::unique(store_classes.begin(), store_classes.end()), store_classes.end());
    if (store_classes != tree.classes())
        throw std::invalid_argument("finalize_base: inducing classes differ from the tree classes");
    base_kernel.validate();
    novel_kernel.validate();

    BaseArtifact a;
    a.tree_ = std::move(tree);
    a.inducing_ = std::move(inducing);
    a.base_kernel_ = base_kernel;
    a.novel_kernel_ = novel_kernel;
    return a;
}

// ---------------------------------------------------------------------------

void NovelStore::add_session(const MatrixXd& features, const std::vector<int>& labels,
                             const std::vector<int>& reserved) {
    if (static_cast<std::size_t>(features.rows()) != labels.size())
        throw DimensionMismatch("features and labels differ in length");
    if (labels.empty()) throw EmptyClass("novel session has no samples");
    if (features_.size() > 0 && features.cols() != features_.cols())
        throw DimensionMismatch("novel session feature dimension differs from earlier sessions");

    std::set<int> fresh(labels.begin(), labels.end());
    const std::vector<int> seen = classes();
    for (int c : fresh) {
        if (std::binary_search(seen.begin(), seen.end(), c) ||
            std::find(reserved.begin(), reserved.end(), c) != reserved.end())
            throw ClassCollision("class " + std::to_string(c) + " was already introduced");
    }

    const Eigen::Index old = features_.rows();
    MatrixXd grown(old + features.rows(), features.cols());
    if (old > 0) grown.topRows(old) = features_;
    grown.bottomRows(features.rows()) = features;
    features_ = std::move(grown);
    labels_.insert(labels_.end(), labels.begin(), labels.end());
    session_of_row_.insert(session_of_row_.end(), labels.size(), static_cast<int>(sessions_.size()));
    sessions_.emplace_back(fresh.begin(), fresh.end());
}

std::vector<int> NovelStore::classes() const {
    std::vector<int> out;
    for (const auto& s : sessions_) out.insert(out.end(), s.begin(), s.end());
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::size_t> NovelStore::rows_of_sessions(std::size_t first, std::size_t last) const {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < labels_.size(); ++i) {
        const auto s = static_cast<std::size_t>(session_of_row_[i]);
        if (s >= first && s <= last) rows.push_back(i);
    }
    return rows;
}

// ---------------------------------------------------------------------------

ExpandedModel base_model(const BaseArtifact& artifact) {
    ExpandedModel m;
    m.tree = artifact.tree();
    m.base_root = 0;
    return m;
}

namespace {

// Gibbs tree over the given rows of the novel store (single leaf for one class).
LabelTree novel_subtree(const BaseArtifact& artifact, const NovelStore& store, const std::vector<std::size_t>& rows,
                        const IncrementalConfig& config, const RngStream& rng) {
    const MatrixXd x = select_rows(store.features(), rows);
    std::vector<int> y(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) y[i] = store.labels()[rows[i]];
    const ClassPrototypes protos = class_prototypes(x, y);
    if (protos.classes.size() == 1) return LabelTree::single_leaf(protos.classes.front());
    RngStream build_rng = rng.derive(1);
    LabelTree structure = build_tree(protos, TreeBuildMethod::KMeansBisect, {}, build_rng);
    return fit_tree_gibbs(std::move(structure), x, y, artifact.novel_kernel(), config.gibbs, rng.derive(2),
                          config.workers);
}

// Root classifier: `right_x` labelled 0, novel rows labelled 1.
NodeGibbsModel shared_root(const BaseArtifact& artifact, const MatrixXd& right_x, const MatrixXd& left_x,
                           const IncrementalConfig& config, const RngStream& rng) {
    MatrixXd x(right_x.rows() + left_x.rows(), right_x.cols());
    x.topRows(right_x.rows()) = right_x;
    x.bottomRows(left_x.rows()) = left_x;
    std::vector<int> y(static_cast<std::size_t>(x.rows()), 0);
    std::fill(y.begin() + right_x.rows(), y.end(), 1);
    return NodeGibbsModel::fit(std::move(x), std::move(y), artifact.novel_kernel(), config.gibbs, rng.derive(3));
}

}  // namespace

ExpandedModel add_novel_session(const BaseArtifact& artifact, NovelStore& store, const MatrixXd& features,
                                const std::vector<int>& labels, const ExpandedModel& previous,
                                const IncrementalConfig& config, const RngStream& rng) {
    config.gibbs.validate();
    if (features.cols() != artifact.inducing().locations.cols())
        throw DimensionMismatch("novel features differ in dimension from the base exemplars");
    store.add_session(features, labels, artifact.tree().classes());
    const std::size_t session = store.session_classes().size() - 1;
    const InducingStore& inducing = artifact.inducing();

    ExpandedModel out;
    out.mode = config.mode;
    out.sessions = session + 1;

    switch (config.mode) {
        case ExpansionMode::Accumulated: {
            const std::vector<std::size_t> rows = store.rows_of_sessions(0, session);
            LabelTree left = novel_subtree(artifact, store, rows, config, rng);
            NodeGibbsModel root =
                shared_root(artifact, inducing.locations, select_rows(store.features(), rows), config, rng);
            out.tree = LabelTree::join(std::move(root), left, artifact.tree());
            out.base_root = static_cast<int>(1 + left.size());
            break;
        }
        case ExpansionMode::SessionTree: {
            if (previous.tree.empty() || previous.sessions != session)
                throw std::invalid_argument("add_novel_session: previous model does not match the store");
            const std::vector<std::size_t> now = store.rows_of_sessions(session, session);
            LabelTree left = novel_subtree(artifact, store, now, config, rng);
            MatrixXd right_x = inducing.locations;
            if (session > 0) {
                const MatrixXd before = select_rows(store.features(), store.rows_of_sessions(0, session - 1));
                MatrixXd stacked(right_x.rows() + before.rows(), right_x.cols());
                stacked << right_x, before;
                right_x = std::move(stacked);
            }
            NodeGibbsModel root = shared_root(artifact, right_x, select_rows(store.features(), now), config, rng);
            out.tree = LabelTree::join(std::move(root), left, previous.tree);
            out.base_root = previous.base_root < 0 ? -1 : static_cast<int>(1 + left.size()) + previous.base_root;
            break;
        }
        case ExpansionMode::RebuildTree: {
            MatrixXd x(inducing.locations.rows() + store.features().rows(), inducing.locations.cols());
            x << inducing.locations, store.features();
            std::vector<int> y(inducing.labels);
            y.insert(y.end(), store.labels().begin(), store.labels().end());
            RngStream build_rng = rng.derive(1);
            LabelTree structure = build_tree(class_prototypes(x, y), TreeBuildMethod::KMeansBisect, {}, build_rng);
            out.tree = fit_tree_gibbs(std::move(structure), x, y, artifact.novel_kernel(), config.gibbs,
                                      rng.derive(2), config.workers);
            out.base_root = -1;
            break;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

double forgetting(const std::vector<std::vector<double>>& acc, std::size_t j, std::size_t k) {
    if (j >= k || j >= acc.size() || k >= acc[j].size())
        throw std::invalid_argument("forgetting: need j < k within the accuracy matrix");
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t l = j; l < k; ++l) best = std::max(best, acc[j][l]);
    return best - acc[j][k];
}

double average_forgetting(const std::vector<std::vector<double>>& acc, std::size_t k) {
    if (k < 1) throw std::invalid_argument("average_forgetting: need at least two sessions");
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += forgetting(acc, j, k);
    return sum / static_cast<double>(k);
}

double average_forgetting(const SessionReport& report, std::size_t k) { return average_forgetting(report.acc, k); }

SessionReport evaluate_sessions(std::size_t n_sessions, const SessionPredictor& predictor,
                                const std::vector<SessionTestSet>& tests) {
    if (tests.size() != n_sessions) throw std::invalid_argument("evaluate_sessions: one test set per session");
    const double nan = std::numeric_limits<double>::quiet_NaN();
    SessionReport r;
    r.acc.assign(n_sessions, std::vector<double>(n_sessions, nan));
    r.forgetting.assign(n_sessions, std::vector<double>(n_sessions, nan));
    r.joint.assign(n_sessions, nan);

    for (std::size_t k = 0; k < n_sessions; ++k) {
        std::size_t hits = 0, total = 0;
        for (std::size_t j = 0; j <= k; ++j) {
            const SessionTestSet& t = tests[j];
            if (t.labels.empty()) continue;
            const std::vector<int> pred = predictor(k, t.features);
            const double a = accuracy(pred, t.labels);
            r.acc[j][k] = a;
            for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == t.labels[i];
            total += t.labels.size();
        }
        r.joint[k] = total == 0 ? nan : static_cast<double>(hits) / static_cast<double>(total);
    }
    for (std::size_t k = 1; k < n_sessions; ++k)
        for (std::size_t j = 0; j < k; ++j) r.forgetting[j][k] = forgetting(r.acc, j, k);
    return r;
}

SessionReport evaluate_sessions(const std::vector<ExpandedModel>& models, const std::vector<SessionTestSet>& tests,
                                const PredictOptions& options) {
    return evaluate_sessions(
        models.size(),
        [&](std::size_t k, const MatrixXd& q) { return predict_labels(models[k].tree, q, options); }, tests);
}

}  // namespace gptree

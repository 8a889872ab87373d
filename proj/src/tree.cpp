#include "gptree/tree.hpp"

#include "gptree/errors.hpp"
#include "gptree/kmeans.hpp"
#include "gptree/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace gptree {

// ---------------------------------------------------------------------------
// LabelTree

LabelTree LabelTree::single_leaf(int cls) {
    TreeNode leaf;
    leaf.classes = {cls};
    return from_nodes({std::move(leaf)});
}

LabelTree LabelTree::join(NodeClassifier root_classifier, const LabelTree& left, const LabelTree& right) {
    if (left.empty() || right.empty()) throw std::invalid_argument("LabelTree::join: empty subtree");
    for (int c : left.classes())
        if (right.contains(c)) throw ClassCollision("class " + std::to_string(c) + " appears on both sides");

    std::vector<TreeNode> nodes;
    nodes.reserve(1 + left.size() + right.size());
    TreeNode root;
    std::set_union(left.classes().begin(), left.classes().end(), right.classes().begin(), right.classes().end(),
                   std::back_inserter(root.classes));
    root.classifier = std::move(root_classifier);
    nodes.push_back(std::move(root));

    auto append = [&nodes](const LabelTree& sub) {
        const int offset = static_cast<int>(nodes.size());
        for (const TreeNode& n : sub.nodes()) {
            TreeNode copy = n;
            copy.parent = n.parent < 0 ? 0 : n.parent + offset;
            if (!n.is_leaf()) {
                copy.left = n.left + offset;
                copy.right = n.right + offset;
            }
            nodes.push_back(std::move(copy));
        }
        return offset;
    };
    nodes[0].left = append(left);
    nodes[0].right = append(right);
    return from_nodes(std::move(nodes));
}

LabelTree LabelTree::from_nodes(std::vector<TreeNode> nodes) {
    LabelTree tree;
    tree.nodes_ = std::move(nodes);
    tree.finalize();
    return tree;
}

void LabelTree::finalize() {
    if (nodes_.empty()) throw FormatError("tree has no nodes");
    const int n = static_cast<int>(nodes_.size());
    classes_.clear();
    for (int id = 0; id < n; ++id) {
        TreeNode& node = nodes_[static_cast<std::size_t>(id)];
        if (!std::is_sorted(node.classes.begin(), node.classes.end()))
            std::sort(node.classes.begin(), node.classes.end());
        if (node.classes.empty()) throw FormatError("node " + std::to_string(id) + " has no classes");
        if ((node.left < 0) != (node.right < 0))
            throw FormatError("node " + std::to_string(id) + " has exactly one child");
        if (node.is_leaf()) {
            if (node.classes.size() != 1) throw FormatError("leaf " + std::to_string(id) + " holds several classes");
            classes_.push_back(node.classes.front());
            continue;
        }
        if (node.left >= n || node.right >= n || node.left <= id || node.right <= id)
            throw FormatError("node " + std::to_string(id) + " has invalid child indices");
        const auto& lc = nodes_[static_cast<std::size_t>(node.left)].classes;
        const auto& rc = nodes_[static_cast<std::size_t>(node.right)].classes;
        std::vector<int> merged;
        std::set_union(lc.begin(), lc.end(), rc.begin(), rc.end(), std::back_inserter(merged));
        if (merged.size() != lc.size() + rc.size() || merged != node.classes)
            throw FormatError("children of node " + std::to_string(id) + " do not partition its classes");
        if (nodes_[static_cast<std::size_t>(node.left)].parent != id ||
            nodes_[static_cast<std::size_t>(node.right)].parent != id)
            throw FormatError("parent links of node " + std::to_string(id) + " are inconsistent");
    }
    std::sort(classes_.begin(), classes_.end());
    if (std::adjacent_find(classes_.begin(), classes_.end()) != classes_.end())
        throw FormatError("a class owns more than one leaf");
    if (classes_ != nodes_.front().classes) throw FormatError("root classes differ from leaf classes");

    paths_.assign(classes_.size(), {});
    for (int id = 0; id < n; ++id) {
        const TreeNode& leaf = nodes_[static_cast<std::size_t>(id)];
        if (!leaf.is_leaf()) continue;
        std::vector<PathStep> path;
        int child = id;
        for (int p = leaf.parent; p >= 0; p = nodes_[static_cast<std::size_t>(p)].parent) {
            path.push_back({p, nodes_[static_cast<std::size_t>(p)].left == child});
            child = p;
        }
        if (child != 0) throw FormatError("leaf " + std::to_string(id) + " is not reachable from the root");
        std::reverse(path.begin(), path.end());
        paths_[class_index(leaf.classes.front())] = std::move(path);
    }
}

bool LabelTree::contains(int cls) const { return std::binary_search(classes_.begin(), classes_.end(), cls); }

std::size_t LabelTree::class_index(int cls) const {
    const auto it = std::lower_bound(classes_.begin(), classes_.end(), cls);
    if (it == classes_.end() || *it != cls) throw UnknownClass("class " + std::to_string(cls) + " is not in the tree");
    return static_cast<std::size_t>(it - classes_.begin());
}

const std::vector<PathStep>& LabelTree::path(int cls) const { return paths_[class_index(cls)]; }

std::vector<int> LabelTree::internal_nodes_in_order() const {
    std::vector<int> out;
    std::function<void(int)> visit = [&](int id) {
        const TreeNode& node = nodes_[static_cast<std::size_t>(id)];
        if (node.is_leaf()) return;
        visit(node.left);
        out.push_back(id);
        visit(node.right);
    };
    if (!nodes_.empty()) visit(0);
    return out;
}

int LabelTree::depth() const {
    std::size_t d = 0;
    for (const auto& p : paths_) d = std::max(d, p.size());
    return static_cast<int>(d);
}

// ---------------------------------------------------------------------------
// construction

std::string_view to_string(TreeBuildMethod method) {
    switch (method) {
        case TreeBuildMethod::KMeansBisect: return "kmeans";
        case TreeBuildMethod::RandomBalanced: return "random";
        case TreeBuildMethod::StickBreakChain: return "stick-break";
    }
    return "unknown";
}

TreeBuildMethod tree_build_method_from_string(std::string_view name) {
    if (name == "kmeans" || name == "gp-tree") return TreeBuildMethod::KMeansBisect;
    if (name == "random" || name == "gp-tree-rnd") return TreeBuildMethod::RandomBalanced;
    if (name == "stick-break" || name == "chain") return TreeBuildMethod::StickBreakChain;
    throw ConfigError("unknown tree method '" + std::string(name) + "'");
}

ClassPrototypes class_prototypes(const MatrixXd& features, const std::vector<int>& labels,
                                 const std::vector<int>& classes) {
    if (static_cast<std::size_t>(features.rows()) != labels.size())
        throw DimensionMismatch("features and labels differ in length");
    std::vector<int> wanted = classes.empty() ? labels : classes;
    std::sort(wanted.begin(), wanted.end());
    wanted.erase(std::unique(wanted.begin(), wanted.end()), wanted.end());

    std::map<int, Eigen::Index> slot;
    for (std::size_t i = 0; i < wanted.size(); ++i) slot[wanted[i]] = static_cast<Eigen::Index>(i);
    MatrixXd sums = MatrixXd::Zero(static_cast<Eigen::Index>(wanted.size()), features.cols());
    std::vector<int> counts(wanted.size(), 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto it = slot.find(labels[i]);
        if (it == slot.end()) continue;
        sums.row(it->second) += features.row(static_cast<Eigen::Index>(i));
        ++counts[static_cast<std::size_t>(it->second)];
    }
    ClassPrototypes out;
    out.classes = wanted;
    out.vectors = sums;
    for (std::size_t c = 0; c < wanted.size(); ++c) {
        if (counts[c] == 0) throw EmptyClass("class " + std::to_string(wanted[c]) + " has no samples");
        const Eigen::Index r = static_cast<Eigen::Index>(c);
        out.vectors.row(r) /= counts[c];
        const double norm = out.vectors.row(r).norm();
        if (norm < 1e-12) throw ZeroRow("prototype of class " + std::to_string(wanted[c]) + " is zero");
        out.vectors.row(r) /= norm;
    }
    return out;
}

namespace {

using Split = std::pair<std::vector<int>, std::vector<int>>;

Split random_halves(std::vector<int> classes, RngStream& rng) {
    rng.shuffle(classes);
    const std::size_t half = classes.size() / 2;
    Split s{{classes.begin(), classes.begin() + static_cast<std::ptrdiff_t>(half)},
            {classes.begin() + static_cast<std::ptrdiff_t>(half), classes.end()}};
    return s;
}

void canonicalize(Split& s) {
    std::sort(s.first.begin(), s.first.end());
    std::sort(s.second.begin(), s.second.end());
    if (s.second.front() < s.first.front()) std::swap(s.first, s.second);
}

class TreeBuilder {
public:
    TreeBuilder(const ClassPrototypes& protos, TreeBuildMethod method, std::vector<int> order, RngStream& rng)
        : protos_(protos), method_(method), order_(std::move(order)), rng_(rng) {
        for (std::size_t i = 0; i < protos.classes.size(); ++i) row_of_[protos.classes[i]] = static_cast<Eigen::Index>(i);
    }

    int build(std::vector<int> classes, int parent) {
        const int id = static_cast<int>(nodes_.size());
        TreeNode node;
        std::sort(classes.begin(), classes.end());
        node.classes = classes;
        node.parent = parent;
        nodes_.push_back(std::move(node));
        if (classes.size() == 1) return id;

        Split s = split(classes);
        const int l = build(std::move(s.first), id);
        const int r = build(std::move(s.second), id);
        nodes_[static_cast<std::size_t>(id)].left = l;
        nodes_[static_cast<std::size_t>(id)].right = r;
        return id;
    }

    std::vector<TreeNode> take() { return std::move(nodes_); }

private:
    Split split(const std::vector<int>& classes) {
        Split s;
        switch (method_) {
            case TreeBuildMethod::StickBreakChain: {
                const std::set<int> here(classes.begin(), classes.end());
                for (int c : order_)
                    if (here.count(c)) (s.first.empty() ? s.first : s.second).push_back(c);
                std::sort(s.second.begin(), s.second.end());
                return s;
            }
            case TreeBuildMethod::RandomBalanced:
                s = random_halves(classes, rng_);
                break;
            case TreeBuildMethod::KMeansBisect: {
                if (classes.size() == 2) {
                    s = {{classes[0]}, {classes[1]}};
                    break;
                }
                MatrixXd pts(static_cast<Eigen::Index>(classes.size()), protos_.vectors.cols());
                for (std::size_t i = 0; i < classes.size(); ++i)
                    pts.row(static_cast<Eigen::Index>(i)) = protos_.vectors.row(row_of_.at(classes[i]));
                const KMeansResult km = kmeans_pp(pts, 2, rng_);
                for (std::size_t i = 0; i < classes.size(); ++i)
                    (km.assignment[i] == 0 ? s.first : s.second).push_back(classes[i]);
                if (s.first.empty() || s.second.empty()) s = random_halves(classes, rng_);
                break;
            }
        }
        canonicalize(s);
        return s;
    }

    const ClassPrototypes& protos_;
    TreeBuildMethod method_;
    std::vector<int> order_;
    RngStream& rng_;
    std::map<int, Eigen::Index> row_of_;
    std::vector<TreeNode> nodes_;
};

}  // namespace

LabelTree build_tree(const ClassPrototypes& prototypes, TreeBuildMethod method, const std::vector<int>& class_order,
                     RngStream& rng) {
    if (prototypes.classes.empty()) throw EmptyClass("no classes to build a tree over");
    std::vector<int> order = class_order.empty() ? prototypes.classes : class_order;
    if (method == TreeBuildMethod::StickBreakChain) {
        std::vector<int> a(order), b(prototypes.classes);
        std::sort(a.begin(), a.end());
        if (a != b) throw ConfigError("stick-break class order must list every class exactly once");
    }
    TreeBuilder builder(prototypes, method, std::move(order), rng);
    builder.build(prototypes.classes, -1);
    return LabelTree::from_nodes(builder.take());
}

// ---------------------------------------------------------------------------
// likelihood and data assignment

VectorXd class_log_probs(const LabelTree& tree, std::span<const double> node_probs) {
    if (node_probs.size() != tree.size()) throw DimensionMismatch("need one probability per tree node");
    VectorXd out(static_cast<Eigen::Index>(tree.num_classes()));
    for (std::size_t c = 0; c < tree.num_classes(); ++c) {
        double lp = 0.0;
        for (const PathStep& step : tree.path(tree.classes()[c])) {
            const double p = node_probs[static_cast<std::size_t>(step.node)];
            lp += step.go_left ? std::log(p) : std::log1p(-p);
        }
        out[static_cast<Eigen::Index>(c)] = lp;
    }
    return out;
}

std::vector<NodeData> assign_node_data(const LabelTree& tree, const std::vector<int>& labels) {
    std::vector<NodeData> out;
    std::vector<int> slot(tree.size(), -1);
    for (std::size_t id = 0; id < tree.size(); ++id) {
        if (tree.nodes()[id].is_leaf()) continue;
        slot[id] = static_cast<int>(out.size());
        out.push_back(NodeData{static_cast<int>(id), {}, {}});
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        for (const PathStep& step : tree.path(labels[i])) {
            NodeData& d = out[static_cast<std::size_t>(slot[static_cast<std::size_t>(step.node)])];
            d.rows.push_back(i);
            d.labels.push_back(step.go_left ? 1 : 0);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// fitting

LabelTree fit_tree_gibbs(LabelTree tree, const MatrixXd& features, const std::vector<int>& labels,
                         const KernelSpec& kernel, const GibbsConfig& config, const RngStream& rng, int workers) {
    config.validate();
    kernel.validate();
    if (static_cast<std::size_t>(features.rows()) != labels.size())
        throw DimensionMismatch("features and labels differ in length");
    const std::vector<NodeData> data = assign_node_data(tree, labels);
    std::vector<NodeClassifier> fitted(data.size());
    parallel_for(data.size(), workers, [&](std::size_t i) {
        const NodeData& d = data[i];
        fitted[i] = NodeGibbsModel::fit(select_rows(features, d.rows), d.labels, kernel, config,
                                        rng.derive(static_cast<std::uint64_t>(d.node)));
    });
    for (std::size_t i = 0; i < data.size(); ++i) tree.node(data[i].node).classifier = std::move(fitted[i]);
    return tree;
}

LabelTree fit_tree_vi(LabelTree tree, const MatrixXd& features, const std::vector<int>& labels,
                      const InducingStore& inducing, const KernelSpec& kernel, const VIConfig& config, RngStream& rng,
                      VITrainTrace* trace) {
    config.validate();
    if (static_cast<std::size_t>(features.rows()) != labels.size())
        throw DimensionMismatch("features and labels differ in length");
    const std::vector<NodeData> data = assign_node_data(tree, labels);
    std::vector<int> slot(tree.size(), -1);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const int id = data[i].node;
        slot[static_cast<std::size_t>(id)] = static_cast<int>(i);
        tree.node(id).classifier = NodeVIModel::prior(inducing, inducing.rows_for(tree.node(id).classes), kernel);
    }

    // per-sample, per-node label lookup: +1 left, 0 right, -1 not under node
    const std::vector<int> order = tree.internal_nodes_in_order();
    std::vector<std::vector<signed char>> side(tree.size());
    for (const NodeData& d : data) {
        auto& s = side[static_cast<std::size_t>(d.node)];
        s.assign(labels.size(), -1);
        for (std::size_t k = 0; k < d.rows.size(); ++k) s[d.rows[k]] = static_cast<signed char>(d.labels[k]);
    }

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        for (const auto& batch : epoch_batches(labels.size(), config.batch_size, rng)) {
            for (int id : order) {
                const auto& s = side[static_cast<std::size_t>(id)];
                std::vector<std::size_t> rows;
                std::vector<int> yb;
                for (std::size_t r : batch) {
                    if (s[r] < 0) continue;
                    rows.push_back(r);
                    yb.push_back(s[r]);
                }
                if (rows.empty()) continue;
                auto& model = std::get<NodeVIModel>(tree.node(id).classifier);
                const MatrixXd xb = select_rows(features, rows);
                const BatchAugState aug = model.update_c(xb);
                const double n_total = static_cast<double>(data[static_cast<std::size_t>(slot[static_cast<std::size_t>(id)])].rows.size());
                model.apply_natural_gradient_step(xb, yb, aug, config.learning_rate, n_total);
            }
        }
        if (trace) trace->weighted_elbo.push_back(weighted_elbo(tree, features, labels));
    }
    return tree;
}

double weighted_elbo(const LabelTree& tree, const MatrixXd& features, const std::vector<int>& labels) {
    double total = 0.0;
    for (const NodeData& d : assign_node_data(tree, labels)) {
        const auto* model = std::get_if<NodeVIModel>(&tree.node(d.node).classifier);
        if (model == nullptr || d.rows.empty()) continue;
        const MatrixXd x = select_rows(features, d.rows);
        const double n = static_cast<double>(d.rows.size());
        total += model->elbo(x, d.labels, model->update_c(x), n) / n;
    }
    return total;
}

// ---------------------------------------------------------------------------
// prediction

MatrixXd node_probabilities(const LabelTree& tree, const MatrixXd& queries, const PredictOptions& options) {
    MatrixXd probs = MatrixXd::Constant(queries.rows(), static_cast<Eigen::Index>(tree.size()), 0.5);
    for (std::size_t id = 0; id < tree.size(); ++id) {
        const TreeNode& node = tree.nodes()[id];
        if (node.is_leaf()) continue;
        const auto col = static_cast<Eigen::Index>(id);
        if (const auto* g = std::get_if<NodeGibbsModel>(&node.classifier))
            probs.col(col) = g->predict_prob(queries, options.mode, options.quadrature_order);
        else if (const auto* v = std::get_if<NodeVIModel>(&node.classifier))
            probs.col(col) = v->predict_prob(queries, options.mode, options.quadrature_order);
        else
            throw std::logic_error("tree node " + std::to_string(id) + " has no fitted classifier");
    }
    return probs;
}

MatrixXd predict_proba(const LabelTree& tree, const MatrixXd& queries, const PredictOptions& options) {
    const MatrixXd node_p = node_probabilities(tree, queries, options);
    MatrixXd out(queries.rows(), static_cast<Eigen::Index>(tree.num_classes()));
    std::vector<double> row(tree.size());
    for (Eigen::Index i = 0; i < queries.rows(); ++i) {
        for (std::size_t v = 0; v < tree.size(); ++v) row[v] = node_p(i, static_cast<Eigen::Index>(v));
        out.row(i) = class_log_probs(tree, row).array().exp().transpose();
    }
    return out;
}

VectorXd predict(const LabelTree& tree, const VectorXd& x_star, const PredictOptions& options) {
    return predict_proba(tree, MatrixXd(x_star.transpose()), options).row(0).transpose();
}

std::vector<int> predict_labels(const LabelTree& tree, const MatrixXd& queries, const PredictOptions& options) {
    const MatrixXd p = predict_proba(tree, queries, options);
    std::vector<int> out(static_cast<std::size_t>(queries.rows()));
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        Eigen::Index best = 0;
        p.row(i).maxCoeff(&best);
        out[static_cast<std::size_t>(i)] = tree.classes()[static_cast<std::size_t>(best)];
    }
    return out;
}

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
    if (predicted.size() != truth.size()) throw DimensionMismatch("prediction and truth lengths differ");
    if (truth.empty()) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

}  // namespace gptree

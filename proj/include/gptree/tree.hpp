#pragma once

#include "gptree/kernels.hpp"
#include "gptree/node_gibbs.hpp"
#include "gptree/node_vi.hpp"
#include "gptree/predictive.hpp"
#include "gptree/rng.hpp"

#include <span>
#include <string_view>
#include <variant>
#include <vector>

namespace gptree {

using NodeClassifier = std::variant<std::monostate, NodeGibbsModel, NodeVIModel>;

struct TreeNode {
    std::vector<int> classes;  // ascending
    int parent = -1;
    int left = -1;
    int right = -1;
    NodeClassifier classifier;

    bool is_leaf() const { return left < 0; }
    bool has_classifier() const { return !std::holds_alternative<std::monostate>(classifier); }
};

/// One decision on a root-to-leaf path; `go_left` is the node label y_v = 1.
struct PathStep {
    int node;
    bool go_left;
};

/// Binary tree over class sets. Internal nodes split their classes into two
/// disjoint nonempty halves; each class owns exactly one leaf. Node 0 is the root.
class LabelTree {
public:
    LabelTree() = default;

    static LabelTree single_leaf(int cls);

    /// Root with `root_classifier` over the union of both subtrees' classes.
    /// Throws ClassCollision if the subtrees share a class.
    static LabelTree join(NodeClassifier root_classifier, const LabelTree& left, const LabelTree& right);

    /// Builds a tree from explicit nodes (artifact loading, tests). Validates
    /// the structural invariants and throws FormatError on violation.
    static LabelTree from_nodes(std::vector<TreeNode> nodes);

    const std::vector<TreeNode>& nodes() const { return nodes_; }
    const TreeNode& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
    TreeNode& node(int id) { return nodes_.at(static_cast<std::size_t>(id)); }
    std::size_t size() const { return nodes_.size(); }
    bool empty() const { return nodes_.empty(); }

    /// Leaf classes in ascending order; probability vectors use this order.
    const std::vector<int>& classes() const { return classes_; }
    std::size_t num_classes() const { return classes_.size(); }
    bool contains(int cls) const;
    /// Index of `cls` in classes(); throws UnknownClass.
    std::size_t class_index(int cls) const;
    /// Root-to-leaf path of `cls`; throws UnknownClass.
    const std::vector<PathStep>& path(int cls) const;

    /// Internal node ids in in-order (left subtree, node, right subtree).
    std::vector<int> internal_nodes_in_order() const;
    /// Number of edges on the longest root-to-leaf path.
    int depth() const;

private:
    void finalize();

    std::vector<TreeNode> nodes_;
    std::vector<int> classes_;
    std::vector<std::vector<PathStep>> paths_;  // parallel to classes_
};

enum class TreeBuildMethod { KMeansBisect, RandomBalanced, StickBreakChain };

std::string_view to_string(TreeBuildMethod method);
TreeBuildMethod tree_build_method_from_string(std::string_view name);

struct ClassPrototypes {
    std::vector<int> classes;  // ascending
    MatrixXd vectors;          // one unit-norm row per class
};

/// Coordinate-wise mean of each class's samples, scaled to unit length. With
/// an empty `classes` every label present is used. Throws EmptyClass.
ClassPrototypes class_prototypes(const MatrixXd& features, const std::vector<int>& labels,
                                 const std::vector<int>& classes = {});

/// Tree structure only (no classifiers).
///  - KMeansBisect: recursive 2-means++ on the prototypes of each node's
///    classes; a split with an empty side falls back to a random balanced split.
///  - RandomBalanced: seeded random halving.
///  - StickBreakChain: left leaf = next class of `class_order`, right = the rest.
/// For the two bisecting methods the side holding the smallest class id is
/// placed on the left. An empty `class_order` means ascending class ids.
LabelTree build_tree(const ClassPrototypes& prototypes, TreeBuildMethod method,
                     const std::vector<int>& class_order, RngStream& rng);

/// log p(c) for every class in tree.classes() order, where node_probs[v] is
/// P(go left) at internal node v (entries for leaves are ignored).
VectorXd class_log_probs(const LabelTree& tree, std::span<const double> node_probs);

/// Binary subproblem for one internal node: rows whose class is under the
/// node, labelled 1 when the class is in the left child.
struct NodeData {
    int node = -1;
    std::vector<std::size_t> rows;
    std::vector<int> labels;
};

/// One entry per internal node, in node-id order. Throws UnknownClass when a
/// label has no leaf.
std::vector<NodeData> assign_node_data(const LabelTree& tree, const std::vector<int>& labels);

/// Fits a NodeGibbsModel at every internal node; node v uses rng.derive(v).
LabelTree fit_tree_gibbs(LabelTree tree, const MatrixXd& features, const std::vector<int>& labels,
                         const KernelSpec& kernel, const GibbsConfig& config, const RngStream& rng,
                         int workers = 1);

struct VITrainTrace {
    /// Sum over nodes of the full-batch bound divided by the node's sample
    /// count, after each epoch (only filled when tracking is requested).
    std::vector<double> weighted_elbo;
};

/// Minibatch natural-gradient training of a NodeVIModel at every internal
/// node over the shared inducing store. Per batch the internal nodes are
/// visited in-order; nodes with no batch samples are skipped.
LabelTree fit_tree_vi(LabelTree tree, const MatrixXd& features, const std::vector<int>& labels,
                      const InducingStore& inducing, const KernelSpec& kernel, const VIConfig& config,
                      RngStream& rng, VITrainTrace* trace = nullptr);

/// Sum over VI nodes of (full-batch ELBO with optimal c) / (node sample count).
double weighted_elbo(const LabelTree& tree, const MatrixXd& features, const std::vector<int>& labels);

/// P(go left) at every internal node for every query: queries x nodes.
MatrixXd node_probabilities(const LabelTree& tree, const MatrixXd& queries, const PredictOptions& options = {});

/// Class probabilities (queries x classes, tree.classes() order).
MatrixXd predict_proba(const LabelTree& tree, const MatrixXd& queries, const PredictOptions& options = {});
VectorXd predict(const LabelTree& tree, const VectorXd& x_star, const PredictOptions& options = {});
/// Argmax class id per query.
std::vector<int> predict_labels(const LabelTree& tree, const MatrixXd& queries, const PredictOptions& options = {});

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth);

}  // namespace gptree

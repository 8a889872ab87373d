#pragma once

#include "gptree/kernels.hpp"
#include "gptree/node_gibbs.hpp"
#include "gptree/node_vi.hpp"
#include "gptree/tree.hpp"

#include <functional>
#include <string_view>
#include <vector>

namespace gptree {

/// How a novel session grows the tree.
///  - Accumulated: root over (one subtree over every novel class so far, base tree).
///  - SessionTree: root over (subtree of this session's classes, previous tree).
///  - RebuildTree: a fresh Gibbs tree over base exemplars and all novel data.
enum class ExpansionMode { Accumulated, SessionTree, RebuildTree };

std::string_view to_string(ExpansionMode mode);
ExpansionMode expansion_mode_from_string(std::string_view name);

/// Novel-session kernel: fixed RBF with lengthscale 1 and outputscale 8.
inline KernelSpec default_novel_kernel() { return KernelSpec::rbf(1.0, 8.0); }

/// Frozen VI base model with its inducing exemplars.
class BaseArtifact {
public:
    const LabelTree& tree() const { return tree_; }
    const InducingStore& inducing() const { return inducing_; }
    const KernelSpec& base_kernel() const { return base_kernel_; }
    const KernelSpec& novel_kernel() const { return novel_kernel_; }

private:
    friend BaseArtifact finalize_base(LabelTree, InducingStore, KernelSpec, KernelSpec);
    LabelTree tree_;
    InducingStore inducing_;
    KernelSpec base_kernel_;
    KernelSpec novel_kernel_;
};

/// Throws std::invalid_argument unless every internal node holds a NodeVIModel
/// and the inducing store covers exactly the tree's classes.
BaseArtifact finalize_base(LabelTree tree, InducingStore inducing, KernelSpec base_kernel,
                           KernelSpec novel_kernel = default_novel_kernel());

/// Embeddings of every novel session seen so far.
class NovelStore {
public:
    /// Appends one session. Throws ClassCollision if a class was seen before
    /// (or is in `reserved`), EmptyClass if the session has no samples.
    void add_session(const MatrixXd& features, const std::vector<int>& labels,
                     const std::vector<int>& reserved = {});

    const MatrixXd& features() const { return features_; }
    const std::vector<int>& labels() const { return labels_; }
    /// Ascending classes of each session, in session order.
    const std::vector<std::vector<int>>& session_classes() const { return sessions_; }
    std::vector<int> classes() const;
    std::size_t size() const { return labels_.size(); }

    /// Rows belonging to the given sessions (indices into session_classes()).
    std::vector<std::size_t> rows_of_sessions(std::size_t first, std::size_t last) const;

private:
    MatrixXd features_;
    std::vector<int> labels_;
    std::vector<int> session_of_row_;
    std::vector<std::vector<int>> sessions_;
};

struct IncrementalConfig {
    ExpansionMode mode = ExpansionMode::Accumulated;
    GibbsConfig gibbs;
    int workers = 1;
};

struct ExpandedModel {
    LabelTree tree;
    ExpansionMode mode = ExpansionMode::Accumulated;
    /// Node id of the untouched base subtree root; -1 after RebuildTree.
    int base_root = -1;
    /// Number of novel sessions folded in.
    std::size_t sessions = 0;
};

/// The base tree alone (session 0).
ExpandedModel base_model(const BaseArtifact& artifact);

/// Records the session in `store` and returns the expanded model. Shared-root
/// training data: every inducing location labelled 0 (right, base side) and
/// the novel embeddings labelled 1 (left, novel side). `previous` is the
/// model of the preceding session and is only read in SessionTree mode.
ExpandedModel add_novel_session(const BaseArtifact& artifact, NovelStore& store, const MatrixXd& features,
                                const std::vector<int>& labels, const ExpandedModel& previous,
                                const IncrementalConfig& config, const RngStream& rng);

/// Accuracy bookkeeping across sessions. acc[j][k] is the accuracy on the
/// test classes introduced in session j by the model of session k (NaN when
/// k < j); forgetting[j][k] likewise.
struct SessionReport {
    std::vector<std::vector<double>> acc;
    std::vector<double> joint;
    std::vector<std::vector<double>> forgetting;

    std::size_t sessions() const { return joint.size(); }
};

struct SessionTestSet {
    MatrixXd features;
    std::vector<int> labels;
};

/// Predicted labels of model `session` for the given queries.
using SessionPredictor = std::function<std::vector<int>(std::size_t session, const MatrixXd& queries)>;

/// `tests[j]` holds the test samples of the classes introduced in session j.
SessionReport evaluate_sessions(std::size_t n_sessions, const SessionPredictor& predictor,
                                const std::vector<SessionTestSet>& tests);
SessionReport evaluate_sessions(const std::vector<ExpandedModel>& models, const std::vector<SessionTestSet>& tests,
                                const PredictOptions& options = {});

/// max over l in [j, k-1] of acc[j][l], minus acc[j][k]. Requires j < k.
double forgetting(const std::vector<std::vector<double>>& acc, std::size_t j, std::size_t k);
/// Mean of forgetting(j, k) over j < k. Requires k >= 1.
double average_forgetting(const SessionReport& report, std::size_t k);
double average_forgetting(const std::vector<std::vector<double>>& acc, std::size_t k);

}  // namespace gptree

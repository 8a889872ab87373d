#include "gptree/artifact.hpp"
#include "gptree/errors.hpp"
#include "gptree/incremental.hpp"

#include "oracles.hpp"
#include "synthetic.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>

using namespace gptree;
using namespace gptree::testing;

namespace {

// Blob k of a 10-blob circle of radius 5: classes 0-3 form the base, the rest
// arrive in novel sessions.
LabelledData blobs_for(const std::vector<int>& classes, int per_class, RngStream& rng) {
    LabelledData out;
    MatrixXd centers(static_cast<Eigen::Index>(classes.size()), 2);
    for (std::size_t i = 0; i < classes.size(); ++i) {
        const double a = 2 * std::numbers::pi * classes[i] / 10.0;
        centers(static_cast<Eigen::Index>(i), 0) = 5 * std::cos(a);
        centers(static_cast<Eigen::Index>(i), 1) = 5 * std::sin(a);
    }
    LabelledData d = sample_around(centers, per_class, 0.3, rng);
    for (int& y : d.y) y = classes[static_cast<std::size_t>(y)];
    return d;
}

BaseArtifact make_base(RngStream& rng) {
    const LabelledData d = blobs_for({0, 1, 2, 3}, 30, rng);
    KernelSpec k = KernelSpec::rbf(2.0, 4.0);
    k.normalize_inputs = false;
    RngStream tree_rng = rng.derive(1), ind_rng = rng.derive(2), fit_rng = rng.derive(3);
    const LabelTree structure = build_tree(class_prototypes(d.X, d.y), TreeBuildMethod::KMeansBisect, {}, tree_rng);
    InducingStore store = init_inducing(d.X, d.y, 3, ind_rng);
    VIConfig cfg;
    cfg.epochs = 10;
    cfg.learning_rate = 0.5;
    LabelTree fitted = fit_tree_vi(structure, d.X, d.y, store, k, cfg, fit_rng);
    return finalize_base(std::move(fitted), std::move(store), k);
}

IncrementalConfig small_config(ExpansionMode mode) {
    IncrementalConfig c;
    c.mode = mode;
    c.gibbs.n_chains = 2;
    c.gibbs.n_steps = 3;
    return c;
}

std::vector<std::uint64_t> base_fingerprints(const LabelTree& t, int offset, const LabelTree& base) {
    std::vector<std::uint64_t> out;
    for (std::size_t v = 0; v < base.size(); ++v)
        if (!base.nodes()[v].is_leaf())
            out.push_back(classifier_fingerprint(t.node(offset + static_cast<int>(v)).classifier));
    return out;
}

}  // namespace

TEST_CASE("forgetting follows its definition") {
    const double nan = std::nan("");
    const std::vector<std::vector<double>> acc{{0.8, 0.7, 0.75}, {nan, 0.6, 0.5}, {nan, nan, 0.9}};
    CHECK(forgetting(acc, 0, 2) == doctest::Approx(0.05).epsilon(1e-15));
    CHECK(forgetting(acc, 0, 1) == doctest::Approx(0.1));
    CHECK(forgetting(acc, 1, 2) == doctest::Approx(0.1));
    CHECK(average_forgetting(acc, 2) == doctest::Approx(0.075));
    CHECK_THROWS_AS(average_forgetting(acc, 0), std::invalid_argument);
    CHECK_THROWS_AS(forgetting(acc, 1, 1), std::invalid_argument);

    const std::vector<std::vector<double>> constant{{0.6, 0.6, 0.6}, {nan, 0.4, 0.4}};
    CHECK(average_forgetting(constant, 2) == 0.0);
    const std::vector<std::vector<double>> falling{{0.9, 0.7, 0.4}};
    CHECK(forgetting(falling, 0, 2) == doctest::Approx(0.5));
}

TEST_CASE("session evaluation with a perfect predictor") {
    RngStream rng(1);
    std::vector<SessionTestSet> tests(3);
    for (int s = 0; s < 3; ++s) {
        tests[static_cast<std::size_t>(s)].features = random_matrix(4, 2, rng);
        tests[static_cast<std::size_t>(s)].labels = std::vector<int>(4, s);
    }
    const SessionReport r = evaluate_sessions(
        3,
        [&](std::size_t, const MatrixXd& q) {
            for (const auto& t : tests)
                if (t.features == q) return t.labels;
            return std::vector<int>{};
        },
        tests);
    CHECK(r.sessions() == 3);
    for (std::size_t k = 0; k < 3; ++k) {
        CHECK(r.joint[k] == 1.0);
        for (std::size_t j = 0; j < 3; ++j) {
            if (j <= k) CHECK(r.acc[j][k] == 1.0);
            else CHECK(std::isnan(r.acc[j][k]));
            if (j < k) CHECK(r.forgetting[j][k] == 0.0);
        }
    }
    CHECK(average_forgetting(r, 2) == 0.0);
}

TEST_CASE("novel store rejects repeated classes") {
    NovelStore store;
    store.add_session(MatrixXd::Ones(2, 3), {4, 5});
    CHECK(store.size() == 2);
    CHECK_THROWS_AS(store.add_session(MatrixXd::Ones(1, 3), {5}), ClassCollision);
    CHECK_THROWS_AS(store.add_session(MatrixXd::Ones(1, 3), {1}, {0, 1, 2}), ClassCollision);
    CHECK_THROWS_AS(store.add_session(MatrixXd(0, 3), {}), EmptyClass);
    CHECK_THROWS_AS(store.add_session(MatrixXd::Ones(1, 2), {7}), DimensionMismatch);
    CHECK(store.size() == 2);
    store.add_session(MatrixXd::Zero(3, 3), {6, 6, 7});
    CHECK(store.classes() == std::vector<int>{4, 5, 6, 7});
    CHECK(store.session_classes().size() == 2);
    CHECK(store.rows_of_sessions(1, 2).size() == 3);
}

TEST_CASE("three sessions keep the base subtree frozen") {
    RngStream rng(2);
    const BaseArtifact base = make_base(rng);
    CHECK(base.inducing().size() == 12);
    const std::vector<std::uint64_t> reference = base_fingerprints(base.tree(), 0, base.tree());

    RngStream test_rng(3);
    const LabelledData base_test = blobs_for({0, 1, 2, 3}, 10, test_rng);
    const ExpandedModel m0 = base_model(base);
    const MatrixXd p0 = predict_proba(m0.tree, base_test.X);

    for (ExpansionMode mode : {ExpansionMode::Accumulated, ExpansionMode::SessionTree}) {
        NovelStore store;
        ExpandedModel prev = m0;
        const std::vector<std::vector<int>> sessions{{4, 5}, {6}, {7, 8}};
        for (std::size_t s = 0; s < sessions.size(); ++s) {
            RngStream data_rng(100 + s);
            const LabelledData shots = blobs_for(sessions[s], 5, data_rng);
            const ExpandedModel next =
                add_novel_session(base, store, shots.X, shots.y, prev, small_config(mode), RngStream(7).derive(s));
            CHECK(next.sessions == s + 1);
            REQUIRE(next.base_root > 0);
            CHECK(base_fingerprints(next.tree, next.base_root, base.tree()) == reference);

            std::vector<int> want_classes{0, 1, 2, 3};
            for (std::size_t t = 0; t <= s; ++t)
                want_classes.insert(want_classes.end(), sessions[t].begin(), sessions[t].end());
            std::sort(want_classes.begin(), want_classes.end());
            CHECK(next.tree.classes() == want_classes);

            // base-class probability = P(root says base) x unchanged subtree product
            const MatrixXd p = predict_proba(next.tree, base_test.X);
            const MatrixXd node_p = node_probabilities(next.tree, base_test.X);
            double worst = 0.0;
            for (Eigen::Index i = 0; i < base_test.X.rows(); ++i) {
                // the base subtree sits on the right of every root created so far
                double to_base = 1.0;
                for (int v = 0; v != next.base_root; v = next.tree.node(v).right) to_base *= 1.0 - node_p(i, v);
                for (int c = 0; c < 4; ++c) {
                    const double sub = p(i, static_cast<Eigen::Index>(next.tree.class_index(c))) / to_base;
                    worst = std::max(worst, std::abs(sub - p0(i, static_cast<Eigen::Index>(m0.tree.class_index(c)))));
                }
            }
            CHECK(worst < 1e-12);
            prev = next;
        }
        CHECK(store.session_classes().size() == 3);
        CHECK(store.size() == 25);
    }
}

TEST_CASE("a one-class first session makes the root the only new classifier") {
    RngStream rng(4);
    const BaseArtifact base = make_base(rng);
    NovelStore store;
    RngStream data_rng(5);
    const LabelledData shots = blobs_for({6}, 5, data_rng);
    const ExpandedModel m =
        add_novel_session(base, store, shots.X, shots.y, base_model(base), small_config(ExpansionMode::Accumulated),
                          RngStream(1));
    CHECK(m.tree.size() == base.tree().size() + 2);
    CHECK(m.tree.node(m.tree.node(0).left).is_leaf());
    CHECK(m.tree.node(m.tree.node(0).left).classes == std::vector<int>{6});
    CHECK(std::holds_alternative<NodeGibbsModel>(m.tree.node(0).classifier));
    // the shared root sees every inducing point plus the novel shots
    CHECK(std::get<NodeGibbsModel>(m.tree.node(0).classifier).size() == base.inducing().size() + 5);

    VectorXd x(2);
    x << 5 * std::cos(2 * std::numbers::pi * 0.6), 5 * std::sin(2 * std::numbers::pi * 0.6);
    const VectorXd p = predict(m.tree, x);
    Eigen::Index best = 0;
    p.maxCoeff(&best);
    CHECK(m.tree.classes()[static_cast<std::size_t>(best)] == 6);

    CHECK_THROWS_AS(add_novel_session(base, store, shots.X, std::vector<int>(5, 2), m,
                                      small_config(ExpansionMode::Accumulated), RngStream(1)),
                    ClassCollision);
}

TEST_CASE("rebuild mode refits a full Gibbs tree") {
    RngStream rng(6);
    const BaseArtifact base = make_base(rng);
    NovelStore store;
    RngStream data_rng(7);
    const LabelledData shots = blobs_for({5, 7}, 5, data_rng);
    const ExpandedModel m = add_novel_session(base, store, shots.X, shots.y, base_model(base),
                                              small_config(ExpansionMode::RebuildTree), RngStream(2));
    CHECK(m.base_root == -1);
    CHECK(m.tree.classes() == std::vector<int>{0, 1, 2, 3, 5, 7});
    for (const TreeNode& n : m.tree.nodes())
        if (!n.is_leaf()) CHECK(std::holds_alternative<NodeGibbsModel>(n.classifier));

    RngStream test_rng(8);
    const LabelledData test = blobs_for({0, 1, 2, 3, 5, 7}, 10, test_rng);
    CHECK(accuracy(predict_labels(m.tree, test.X), test.y) >= 0.9);
}

TEST_CASE("finalize_base rejects non-VI trees") {
    RngStream rng(9);
    const LabelledData d = blobs_for({0, 1, 2}, 10, rng);
    RngStream b(1);
    const LabelTree s = build_tree(class_prototypes(d.X, d.y), TreeBuildMethod::KMeansBisect, {}, b);
    GibbsConfig g;
    const LabelTree gibbs = fit_tree_gibbs(s, d.X, d.y, KernelSpec::linear(1.0), g, RngStream(1));
    RngStream ind(2);
    CHECK_THROWS_AS(finalize_base(gibbs, init_inducing(d.X, d.y, 2, ind), KernelSpec::linear(1.0)),
                    std::invalid_argument);
}

TEST_CASE("expanded models survive an artifact round trip") {
    RngStream rng(10);
    const BaseArtifact base = make_base(rng);
    NovelStore store;
    RngStream data_rng(11);
    const LabelledData shots = blobs_for({4, 8}, 5, data_rng);
    const ExpandedModel m = add_novel_session(base, store, shots.X, shots.y, base_model(base),
                                              small_config(ExpansionMode::SessionTree), RngStream(3));
    const auto path = std::filesystem::temp_directory_path() / "gptree_incremental_roundtrip.gpt";
    save_artifact(make_artifact(base, store, m), path);
    const ModelArtifact loaded = load_artifact(path);
    std::filesystem::remove(path);

    const MatrixXd Q = 5.0 * random_matrix(100, 2, rng);
    const ExpandedModel back = expanded_of(loaded);
    CHECK(predict_proba(back.tree, Q) == predict_proba(m.tree, Q));
    CHECK(back.mode == ExpansionMode::SessionTree);
    CHECK(back.base_root == m.base_root);
    CHECK(loaded.novel.labels() == store.labels());

    // the reloaded base continues identically
    const BaseArtifact base2 = base_of(loaded);
    CHECK(predict_proba(base2.tree(), Q) == predict_proba(base.tree(), Q));
    NovelStore s1 = store, s2 = loaded.novel;
    const LabelledData more = blobs_for({9}, 5, data_rng);
    const ExpandedModel a =
        add_novel_session(base, s1, more.X, more.y, m, small_config(ExpansionMode::SessionTree), RngStream(4));
    const ExpandedModel b =
        add_novel_session(base2, s2, more.X, more.y, back, small_config(ExpansionMode::SessionTree), RngStream(4));
    CHECK(predict_proba(a.tree, Q) == predict_proba(b.tree, Q));
}

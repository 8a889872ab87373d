import math

import numpy as np
import pytest

import gptree


def blobs(classes=4, per_class=30, radius=4.0, std=0.4, seed=0):
    rng = np.random.default_rng(seed)
    angles = 2 * np.pi * np.arange(classes) / classes
    centers = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    X = np.concatenate([c + std * rng.standard_normal((per_class, 2)) for c in centers])
    y = np.repeat(np.arange(classes), per_class)
    return X, y


def test_version_and_kernel():
    assert gptree.__version__
    k = gptree.KernelSpec("rbf", 0.5, 2.0)
    assert k.family == "rbf"
    K = gptree.gram(k, np.eye(3))
    assert K.shape == (3, 3)
    assert np.allclose(K, K.T)
    with pytest.raises(gptree.GPTreeError):
        gptree.KernelSpec("rbf", -1.0)


def test_pg_sampler_mean():
    draws = gptree.sample_pg(1.5, 20000, seed=3)
    assert np.all(draws > 0)
    assert abs(draws.mean() - gptree.pg_mean(1.0, 1.5)) < 0.02 * gptree.pg_mean(1.0, 1.5)
    assert np.array_equal(draws, gptree.sample_pg(1.5, 20000, seed=3))


def test_quadrature():
    nodes, weights = gptree.gauss_hermite(10)
    assert math.isclose(sum(weights), math.sqrt(math.pi), rel_tol=1e-12)
    assert math.isclose(gptree.expected_sigmoid(0.0, 2.0), 0.5, rel_tol=1e-14)


def test_gibbs_tree_end_to_end(tmp_path):
    X, y = blobs()
    tree = gptree.fit_gibbs_tree(X, y, kernel=gptree.KernelSpec("rbf", 1.0, 4.0), n_steps=3, seed=1)
    assert tree.classes == [0, 1, 2, 3]
    assert len(tree) == 7
    P = gptree.predict_proba(tree, X)
    assert np.allclose(P.sum(axis=1), 1.0, atol=1e-12)
    assert np.mean(np.array(gptree.predict(tree, X)) == y) >= 0.95

    path = tmp_path / "model.gpt"
    gptree.save_model(tree, str(path))
    again = gptree.load_model(str(path))
    assert np.array_equal(gptree.predict_proba(again, X), P)


def test_vi_tree_and_log_probs():
    X, y = blobs(classes=3, seed=2)
    tree = gptree.fit_vi_tree(X, y, kernel=gptree.KernelSpec("rbf", 1.0, 4.0), inducing_per_class=3,
                              epochs=15, learning_rate=0.5, seed=4)
    assert np.mean(np.array(gptree.predict(tree, X)) == y) >= 0.95
    assert all(n["classifier"] in ("vi", "none") for n in tree.nodes())
    logp = gptree.class_log_probs(tree, [0.5] * len(tree))
    assert math.isclose(np.exp(logp).sum(), 1.0, rel_tol=1e-12)


def test_node_model_and_forgetting():
    X, y = blobs(classes=2, seed=5)
    node = gptree.NodeGibbsModel.fit(X, (y == 0).astype(int).tolist(), gptree.KernelSpec("rbf", 1.0, 4.0),
                                     n_steps=3, seed=2)
    p = node.predict_prob(X)
    assert np.all((p > 0) & (p < 1))
    assert np.isfinite(node.augmented_marginal_loglik())
    assert node.size == len(y)
    nan = float("nan")
    acc = [[0.8, 0.7, 0.75], [nan, 0.6, 0.6], [nan, nan, 0.9]]
    assert math.isclose(gptree.average_forgetting(acc, 2), 0.05 / 2)


def test_load_dataset(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("1,2,0\n3,4,1\n5,6,0\n")
    X, y, C = gptree.load_dataset(str(path))
    assert X.shape == (3, 2)
    assert list(y) == [0, 1, 0]
    assert C == 2

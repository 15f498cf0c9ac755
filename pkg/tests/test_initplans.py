"""Starting-plan construction: k-means, spectral embedding, label plans."""

import numpy as np
import pytest

from gwsbm import (
    AdjacencyMatrix,
    Labels,
    ari,
    blend_plan,
    hard_labels,
    kmeans,
    labels_to_plan,
    spectral_init,
    uniform_plan,
)
from gwsbm.initplans import BLEND_EPS, _lloyd, _plusplus_centers
from gwsbm.sbm import balanced_proportions, build_scenario, sample_graph


def test_labels_to_plan_rows():
    plan = labels_to_plan(Labels(np.array([0, 1, 0]), 2))
    expected = np.array([[1 / 3, 0.0], [0.0, 1 / 3], [1 / 3, 0.0]])
    np.testing.assert_array_equal(plan.matrix, expected)


def test_labels_to_plan_wider_target():
    plan = labels_to_plan(Labels(np.zeros(4, dtype=np.int64), 1), k=3)
    np.testing.assert_allclose(plan.column_masses(), [1.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        labels_to_plan(Labels(np.array([0, 2]), 3), k=2)


def test_hard_labels_roundtrip():
    z = np.array([3, 0, 2, 2, 1])
    plan = labels_to_plan(Labels(z, 4))
    assert np.array_equal(hard_labels(plan).values, z)


def test_uniform_plan_feasible():
    plan = uniform_plan(7, 3)
    np.testing.assert_allclose(plan.matrix.sum(axis=1), np.full(7, 1 / 7))


def test_blend_plan_mixes_toward_uniform():
    plan = labels_to_plan(Labels(np.array([0, 0, 1]), 2))
    mixed = blend_plan(plan)
    assert mixed.matrix.min() == pytest.approx(BLEND_EPS / 6)
    np.testing.assert_allclose(mixed.matrix.sum(axis=1), np.full(3, 1 / 3), atol=1e-15)
    np.testing.assert_allclose(
        mixed.matrix, (1 - BLEND_EPS) * plan.matrix + BLEND_EPS / 6, atol=1e-15
    )


class TestKmeans:
    def test_separated_doubletons(self):
        points = np.array([[0.0], [0.0], [10.0], [10.0]])
        labels = kmeans(points, 2, seed=0)
        assert labels.values[0] == labels.values[1]
        assert labels.values[2] == labels.values[3]
        assert labels.values[0] != labels.values[2]

    def test_k_equals_n_zero_inertia(self):
        rng = np.random.default_rng(1)
        points = rng.random((6, 2))
        labels = kmeans(points, 6, seed=0)
        assert sorted(labels.values.tolist()) == list(range(6))

    def test_deterministic(self):
        rng = np.random.default_rng(2)
        points = rng.random((40, 3))
        a = kmeans(points, 4, seed=9)
        b = kmeans(points, 4, seed=9)
        assert np.array_equal(a.values, b.values)

    def test_k_validated(self):
        points = np.zeros((3, 1))
        with pytest.raises(ValueError):
            kmeans(points, 0, seed=0)
        with pytest.raises(ValueError):
            kmeans(points, 4, seed=0)

    def test_lloyd_inertia_never_increases(self):
        rng = np.random.default_rng(3)
        points = rng.random((60, 2))
        centers = _plusplus_centers(points, 5, rng)
        _, _, history = _lloyd(points, centers, max_iters=50)
        diffs = np.diff(history)
        assert np.all(diffs <= 1e-12)

    def test_empty_cluster_repair(self):
        """Duplicated points force empty clusters; repair keeps k centers."""
        points = np.zeros((5, 1))
        points[4] = 1.0
        labels = kmeans(points, 3, seed=0)
        assert labels.k == 3
        assert labels.values.max() < 3


class TestSpectralInit:
    def test_disconnected_cliques_split_exactly(self):
        a = np.zeros((10, 10))
        a[:5, :5] = 1.0
        a[5:, 5:] = 1.0
        np.fill_diagonal(a, 0.0)
        plan = spectral_init(AdjacencyMatrix(a), 2, seed=0)
        truth = Labels(np.repeat([0, 1], 5), 2)
        assert ari(hard_labels(plan), truth) == 1.0

    def test_single_column(self):
        a = np.zeros((4, 4))
        a[0, 1] = a[1, 0] = 1.0
        plan = spectral_init(AdjacencyMatrix(a), 1, seed=0)
        np.testing.assert_allclose(plan.matrix, np.full((4, 1), 0.25), atol=1e-15)

    def test_deterministic(self):
        conn = build_scenario("assortative", 3, 0.4, 0.05)
        adj, _ = sample_graph(conn, balanced_proportions(3), 90, seed=4)
        p1 = spectral_init(adj, 5, seed=21)
        p2 = spectral_init(adj, 5, seed=21)
        assert np.array_equal(p1.matrix, p2.matrix)

    def test_every_column_keeps_mass(self):
        conn = build_scenario("assortative", 2, 0.4, 0.05)
        adj, _ = sample_graph(conn, balanced_proportions(2), 50, seed=5)
        plan = spectral_init(adj, 6, seed=5)
        assert plan.column_masses().min() > 0.0

    def test_node_reordering_equivariance(self):
        conn = build_scenario("assortative", 2, 0.6, 0.05)
        adj, _ = sample_graph(conn, balanced_proportions(2), 40, seed=6)
        rng = np.random.default_rng(7)
        perm = rng.permutation(40)
        shuffled = AdjacencyMatrix(adj.entries[np.ix_(perm, perm)])
        base = hard_labels(spectral_init(adj, 2, seed=8))
        moved = hard_labels(spectral_init(shuffled, 2, seed=8))
        assert ari(Labels(base.values[perm], 2), moved) == 1.0

    def test_k_above_n_rejected(self):
        a = AdjacencyMatrix(np.zeros((3, 3)))
        with pytest.raises(ValueError):
            spectral_init(a, 4, seed=0)

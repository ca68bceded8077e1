import itertools

import numpy as np
import pytest
from scipy.linalg import block_diag, subspace_angles

from masksc.errors import InvalidInputError
from masksc.metrics import clustering_accuracy
from masksc.spectral import (
    kmeans,
    normalized_laplacian,
    spectral_clustering,
    spectral_embedding,
    symmetrize_affinity,
)


def partition_sse(F, labels):
    total = 0.0
    for k in np.unique(labels):
        pts = F[labels == k]
        total += np.sum((pts - pts.mean(axis=0)) ** 2)
    return total


def test_symmetrize_examples(rng):
    np.testing.assert_array_equal(symmetrize_affinity([[0, 2], [-4, 0]]), [[0, 3], [3, 0]])
    A = rng.uniform(size=(5, 5))
    A = A + A.T
    np.testing.assert_array_equal(symmetrize_affinity(A), A)


def test_symmetrize_elementwise(rng):
    Z = rng.standard_normal((7, 7))
    W = symmetrize_affinity(Z)
    assert np.array_equal(W, W.T) and np.all(W >= 0)
    for i in range(7):
        for j in range(7):
            assert W[i, j] == (abs(Z[i, j]) + abs(Z[j, i])) / 2


def test_embedding_two_blocks(rng):
    a = rng.uniform(0.5, 1, (4, 4))
    b = rng.uniform(0.5, 1, (3, 3))
    W = block_diag(a + a.T, b + b.T)
    F, vals = spectral_embedding(W, 2, return_eigvals=True)
    assert np.all(np.abs(vals[:2]) <= 1e-10)
    # each block collapses to a single embedded point
    assert np.ptp(F[:4], axis=0).max() < 1e-8
    assert np.ptp(F[4:], axis=0).max() < 1e-8
    assert np.abs(F[0] - F[4]).max() > 0.5


def test_embedding_complete_graph():
    F, vals = spectral_embedding(np.ones((4, 4)), 1, return_eigvals=True)
    assert abs(vals[0]) <= 1e-10
    np.testing.assert_allclose(F, np.ones((4, 1)), atol=1e-12)


def test_laplacian_spectrum_bounds(rng):
    for _ in range(20):
        A = rng.uniform(size=(9, 9)) * (rng.uniform(size=(9, 9)) < 0.5)
        vals = np.linalg.eigvalsh(normalized_laplacian(A + A.T))
        assert vals.min() >= -1e-10 and vals.max() <= 2 + 1e-10


def test_embedding_scale_invariant(rng):
    A = rng.uniform(size=(12, 12))
    W = A + A.T
    F1 = spectral_embedding(W, 3)
    F2 = spectral_embedding(7.5 * W, 3)
    assert np.max(subspace_angles(F1, F2)) <= 1e-6


def test_embedding_isolated_vertex():
    W = np.zeros((4, 4))
    W[0, 1] = W[1, 0] = W[2, 3] = W[3, 2] = 1.0
    W4 = np.zeros((5, 5))
    W4[:4, :4] = W
    F = spectral_embedding(W4, 2)
    assert np.all(np.isfinite(F))


def test_embedding_errors():
    with pytest.raises(InvalidInputError):
        spectral_embedding(np.ones((3, 3)), 4)
    with pytest.raises(InvalidInputError):
        spectral_embedding([[0, 1], [2, 0]], 1)
    with pytest.raises(InvalidInputError):
        spectral_embedding([[0, -1], [-1, 0]], 1)


def test_kmeans_separable():
    F = np.array([[0.0, 0.0], [10.0, 0.0]])
    res = kmeans(F, 2, seed=1)
    assert res.inertia == 0 and set(res.labels) == {0, 1}
    np.testing.assert_array_equal(res.assignment.sum(axis=0), [1, 1])


def test_kmeans_identical_points():
    F = np.tile([[1.5, -2.0]], (5, 1))
    res = kmeans(F, 1, seed=0)
    np.testing.assert_array_equal(res.centroids, [[1.5, -2.0]])
    assert res.inertia == 0


def test_kmeans_identical_points_more_clusters():
    # empty-cluster repair must still give K non-empty clusters
    res = kmeans(np.zeros((4, 2)), 3, seed=0)
    assert sorted(np.bincount(res.labels, minlength=3)) == [1, 1, 2]


def test_kmeans_matches_exhaustive_partitions(rng):
    for _ in range(30):
        F = rng.standard_normal((6, 2))
        best = min(
            partition_sse(F, np.array(bits))
            for bits in itertools.product([0, 1], repeat=6)
            if 0 < sum(bits) < 6
        )
        res = kmeans(F, 2, seed=int(rng.integers(1000)))
        assert res.inertia == pytest.approx(best, rel=1e-12, abs=1e-12)


def test_kmeans_monotone_and_deterministic(rng):
    F = rng.standard_normal((60, 3))
    res = kmeans(F, 4, seed=3)
    hist = np.array(res.inertia_history)
    assert np.all(np.diff(hist) <= 1e-12)
    assert res.n_iter <= 300
    again = kmeans(F, 4, seed=3)
    assert np.array_equal(res.labels, again.labels)
    assert res.inertia == again.inertia


def test_kmeans_errors():
    with pytest.raises(InvalidInputError):
        kmeans(np.zeros((2, 2)), 3)
    with pytest.raises(InvalidInputError):
        kmeans(np.zeros((4, 2)), 2, restarts=0)


def test_spectral_clustering_exact_blocks():
    Z = block_diag(np.full((4, 4), 0.3), np.full((5, 5), 0.3), np.full((3, 3), 0.3))
    truth = np.repeat([0, 1, 2], [4, 5, 3])
    assert clustering_accuracy(spectral_clustering(Z, 3, seed=0), truth) == 1.0


def test_spectral_clustering_zero_affinity():
    labels = spectral_clustering(np.zeros((6, 6)), 2, seed=0)
    assert labels.shape == (6,) and set(labels) <= {0, 1}


def test_spectral_clustering_noisy_blocks():
    truth = np.repeat([0, 1], [8, 12])
    for seed in range(20):
        r = np.random.default_rng(seed)
        Z = r.uniform(0, 0.05, (20, 20))
        same = truth[:, None] == truth[None, :]
        Z[same] = r.uniform(0.5, 1.0, same.sum())
        perm = r.permutation(20)
        assert clustering_accuracy(spectral_clustering(Z[np.ix_(perm, perm)], 2, seed), truth[perm]) == 1.0

import numpy as np
import pytest

from masksc.admm import solve
from masksc.core import ExperimentConfig, Model
from masksc.data_io import generate_synthetic_subspaces
from masksc.errors import InvalidInputError
from masksc.rmsc import mask_delta, mask_from_labels, run_rmsc
from masksc.spectral import spectral_clustering


def test_mask_from_labels_literal():
    b = 1.05
    M = mask_from_labels([0, 0, 1], b)
    expected = [[b, b, 1 / b], [b, b, 1 / b], [1 / b, 1 / b, b]]
    np.testing.assert_array_equal(M, expected)


def test_mask_from_labels_inverted():
    M = mask_from_labels([0, 1], 2.0, invert=True)
    np.testing.assert_array_equal(M, [[0.5, 2.0], [2.0, 0.5]])


def test_mask_beta_to_one():
    M = mask_from_labels([0, 1, 1, 2], 1 + 1e-12)
    np.testing.assert_allclose(M, np.ones((4, 4)), atol=1e-11)


def test_mask_invariants_exhaustive(rng):
    for _ in range(50):
        labels = rng.integers(0, 4, size=int(rng.integers(2, 15)))
        beta = float(rng.uniform(1.01, 3))
        M = mask_from_labels(labels, beta)
        assert np.array_equal(M, M.T)
        assert set(np.unique(M)) <= {beta, 1 / beta}
        assert np.all(np.diag(M) == beta)
        for i in range(len(labels)):
            for j in range(len(labels)):
                assert M[i, j] == (beta if labels[i] == labels[j] else 1 / beta)


def test_mask_rejects_beta():
    with pytest.raises(InvalidInputError):
        mask_from_labels([0, 1], 1.0)


def test_mask_delta():
    a = mask_from_labels([0, 0, 1, 1], 1.05)
    assert mask_delta(a, a) == 0
    b = mask_from_labels([0, 1, 1, 1], 1.05)
    assert mask_delta(a, b) == pytest.approx(1.05 - 1 / 1.05)
    assert mask_delta(a, b) == pytest.approx(0.0976190476, abs=1e-9)
    assert mask_delta(a, b) == mask_delta(b, a)
    with pytest.raises(InvalidInputError):
        mask_delta(np.ones((2, 2)), np.ones((3, 3)))


@pytest.fixture(scope="module")
def noisy():
    return generate_synthetic_subspaces(3, 2, 12, 15, sigma=0.15, seed=4, shuffle=True)


def test_single_iteration_equals_gmsc(noisy):
    cfg = ExperimentConfig(model=Model.RMSC_V1, n_clusters=3, rmsc_max_iters=1, seed=7)
    res = run_rmsc(noisy.X, cfg)
    Z = solve(noisy.X, cfg.replace(model=Model.GMSC), np.ones((45, 45))).Z
    np.testing.assert_array_equal(res.Z, Z)
    np.testing.assert_array_equal(res.labels, spectral_clustering(Z, 3, seed=7))
    assert len(res.history) == 1


def test_deterministic_and_history(noisy):
    cfg = ExperimentConfig(model=Model.RMSC_V2, n_clusters=3, seed=2, rmsc_max_iters=4)
    a = run_rmsc(noisy.X, cfg)
    b = run_rmsc(noisy.X, cfg)
    assert np.array_equal(a.labels, b.labels) and np.array_equal(a.Z, b.Z)
    assert 1 <= len(a.history) <= 4
    assert (a.history[-1].mask_delta < cfg.rmsc_mask_tol) == a.converged
    gap = cfg.beta - 1 / cfg.beta
    for h in a.history[1:]:
        assert h.mask_delta == 0 or h.mask_delta == pytest.approx(gap)


def test_mask_change_means_label_change(noisy):
    cfg = ExperimentConfig(model=Model.RMSC_V1, n_clusters=3, seed=0, rmsc_max_iters=6)
    res = run_rmsc(noisy.X, cfg)
    for prev, cur in zip(res.history, res.history[1:]):
        same_prev = prev.labels[:, None] == prev.labels[None, :]
        same_cur = cur.labels[:, None] == cur.labels[None, :]
        assert (cur.mask_delta < cfg.rmsc_mask_tol) == np.array_equal(same_prev, same_cur)


def test_requires_recursive_model(noisy):
    with pytest.raises(InvalidInputError):
        run_rmsc(noisy.X, ExperimentConfig(model=Model.GMSC, n_clusters=3))

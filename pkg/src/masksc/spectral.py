"""Spectral clustering of a self-expression matrix.

Pipeline: ``phi(Z) = (|Z| + |Z|^T) / 2`` -> normalized-Laplacian embedding ->
K-means with ++ seeding and restarts.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .core import to_assignment
from .errors import InvalidInputError, NumericError

KMEANS_MAX_ITER = 300


def symmetrize_affinity(Z) -> np.ndarray:
    Z = np.abs(np.asarray(Z, dtype=np.float64))
    return (Z + Z.T) / 2.0


def _fix_signs(V: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    # first clearly nonzero component of every column made positive
    V = V.copy()
    for j in range(V.shape[1]):
        nz = np.flatnonzero(np.abs(V[:, j]) > tol)
        if nz.size and V[nz[0], j] < 0:
            V[:, j] = -V[:, j]
    return V


def normalized_laplacian(W) -> np.ndarray:
    """``I - D^-1/2 W D^-1/2``; isolated vertices get a zero scaling."""
    W = np.asarray(W, dtype=np.float64)
    deg = W.sum(axis=1)
    with np.errstate(divide="ignore"):
        dinv = np.where(deg > 0, 1.0 / np.sqrt(deg), 0.0)
    L = np.eye(W.shape[0]) - dinv[:, None] * W * dinv[None, :]
    return (L + L.T) / 2.0


def spectral_embedding(W, K: int, return_eigvals: bool = False):
    """Rows of the ``K`` bottom eigenvectors of the normalized Laplacian, unit-normalized.

    Zero rows (possible for isolated vertices) are left as zero.
    """
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise InvalidInputError(f"affinity must be square, got {W.shape}")
    n = W.shape[0]
    if not 1 <= K <= n:
        raise InvalidInputError(f"K={K} must be in [1, N={n}]")
    if not np.all(np.isfinite(W)) or np.any(W < 0):
        raise InvalidInputError("affinity must be finite and nonnegative")
    if not np.allclose(W, W.T, rtol=0, atol=1e-12 * max(1.0, np.abs(W).max())):
        raise InvalidInputError("affinity must be symmetric")
    L = normalized_laplacian(W)
    try:
        vals, vecs = np.linalg.eigh(L)
    except np.linalg.LinAlgError as exc:
        raise NumericError("Laplacian eigendecomposition did not converge") from exc
    F = _fix_signs(vecs[:, :K])
    norms = np.linalg.norm(F, axis=1)
    F = np.divide(F, norms[:, None], out=np.zeros_like(F), where=norms[:, None] > 1e-300)
    if return_eigvals:
        return F, vals
    return F


@dataclasses.dataclass
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    n_iter: int
    inertia_history: list[float]
    restart: int

    @property
    def assignment(self) -> np.ndarray:
        return to_assignment(self.labels, self.centroids.shape[0])


def _sq_dists(F: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d2 = (F * F).sum(1)[:, None] - 2.0 * F @ centers.T + (centers * centers).sum(1)[None, :]
    return np.maximum(d2, 0.0)


def _plusplus(F: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    n = F.shape[0]
    idx = [int(rng.integers(n))]
    closest = _sq_dists(F, F[idx])[:, 0]
    for _ in range(1, K):
        total = closest.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=closest / total))
        else:
            nxt = int(rng.integers(n))
        idx.append(nxt)
        closest = np.minimum(closest, _sq_dists(F, F[[nxt]])[:, 0])
    return F[idx].copy()


def _centroids(F: np.ndarray, labels: np.ndarray, K: int) -> np.ndarray:
    sums = np.zeros((K, F.shape[1]))
    np.add.at(sums, labels, F)
    counts = np.bincount(labels, minlength=K)
    return sums / counts[:, None]


def _repair_empty(F, labels, centers, d2):
    """Move the point farthest from its centroid into each empty cluster."""
    K = centers.shape[0]
    counts = np.bincount(labels, minlength=K)
    for k in np.flatnonzero(counts == 0):
        own = d2[np.arange(len(labels)), labels]
        # never empty a donor cluster
        own = np.where(counts[labels] > 1, own, -1.0)
        i = int(np.argmax(own))
        counts[labels[i]] -= 1
        labels[i] = k
        counts[k] = 1
        centers[k] = F[i]
    return labels, centers


def _inertia(F, labels, centers) -> float:
    diff = F - centers[labels]
    return float(np.sum(diff * diff))


def _hartigan(F, labels, K, max_sweeps):
    """Single-point transfers that strictly lower the SSE.

    Moving x from cluster a (size n_a) to b changes the SSE by
    ``n_b/(n_b+1) |x-m_b|^2 - n_a/(n_a-1) |x-m_a|^2``.
    """
    labels = labels.copy()
    counts = np.bincount(labels, minlength=K).astype(np.float64)
    centers = _centroids(F, labels, K)
    history = []
    for _ in range(max_sweeps):
        moved = False
        for i in range(F.shape[0]):
            a = labels[i]
            if counts[a] <= 1:
                continue
            d2 = np.sum((centers - F[i]) ** 2, axis=1)
            gain = counts / (counts + 1.0) * d2
            gain[a] = np.inf
            b = int(np.argmin(gain))
            loss = counts[a] / (counts[a] - 1.0) * d2[a]
            if gain[b] < loss * (1.0 - 1e-12):
                centers[a] = (centers[a] * counts[a] - F[i]) / (counts[a] - 1.0)
                centers[b] = (centers[b] * counts[b] + F[i]) / (counts[b] + 1.0)
                counts[a] -= 1.0
                counts[b] += 1.0
                labels[i] = b
                moved = True
        if not moved:
            break
        centers = _centroids(F, labels, K)
        history.append(_inertia(F, labels, centers))
    return labels, centers, history


def _lloyd(F, K, rng, max_iter):
    centers = _plusplus(F, K, rng)
    labels = None
    history = []
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        d2 = _sq_dists(F, centers)
        new = np.argmin(d2, axis=1)
        new, centers = _repair_empty(F, new, centers, d2)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        centers = _centroids(F, labels, K)
        history.append(_inertia(F, labels, centers))
    if K > 1:
        labels, centers, polish = _hartigan(F, labels, K, max_iter)
        history.extend(polish)
    return labels, centers, history, n_iter


def kmeans(F, K: int, seed: int = 0, restarts: int = 10, max_iter: int = KMEANS_MAX_ITER) -> KMeansResult:
    """Lloyd's algorithm from ++ seeding; best of ``restarts`` by within-cluster SSE.

    Each Lloyd run is polished with Hartigan single-point transfers, which
    escapes Lloyd fixed points that a single move can improve.  Ties between
    restarts go to the lowest restart index.
    """
    F = np.asarray(F, dtype=np.float64)
    if F.ndim != 2:
        raise InvalidInputError("embedding must be 2-D")
    n = F.shape[0]
    if not 1 <= K <= n:
        raise InvalidInputError(f"K={K} must be in [1, N={n}]")
    if restarts < 1:
        raise InvalidInputError("restarts must be >= 1")
    best = None
    streams = np.random.SeedSequence(seed).spawn(restarts)
    for r, ss in enumerate(streams):
        labels, centers, hist, n_iter = _lloyd(F, K, np.random.default_rng(ss), max_iter)
        inertia = hist[-1]
        if best is None or inertia < best.inertia:
            best = KMeansResult(labels=labels, centroids=centers, inertia=inertia,
                                n_iter=n_iter, inertia_history=hist, restart=r)
    return best


def spectral_clustering(Z, K: int, seed: int = 0, restarts: int = 10) -> np.ndarray:
    """Cluster labels from a self-expression matrix ``Z``."""
    F = spectral_embedding(symmetrize_affinity(Z), K)
    return kmeans(F, K, seed=seed, restarts=restarts).labels

"""Recursive masked subspace clustering.

Alternates a GMSC solve under the current soft mask with spectral clustering
of the resulting affinity, rebuilding the mask from the new labels until the
mask stops changing.
"""

from __future__ import annotations

import dataclasses
import logging
import time

import numpy as np

from .admm import MaskedADMM, precompute_gram
from .core import ExperimentConfig, as_data_matrix
from .errors import InvalidInputError
from .spectral import spectral_clustering

log = logging.getLogger(__name__)


def mask_from_labels(labels, beta: float, invert: bool = False) -> np.ndarray:
    """Two-level soft mask from a labeling.

    Same-cluster pairs get ``beta`` and cross-cluster pairs ``1/beta``; with
    ``invert`` the levels are swapped.  The same-cluster indicator is
    ``Q Q^T`` for the one-hot assignment ``Q`` (an ``N x N`` matrix).
    """
    if not beta > 1:
        raise InvalidInputError("beta must exceed 1")
    labels = np.asarray(labels)
    same = labels[:, None] == labels[None, :]
    hi, lo = (1.0 / beta, beta) if invert else (beta, 1.0 / beta)
    return np.where(same, hi, lo)


def mask_delta(old, new) -> float:
    old = np.asarray(old, dtype=np.float64)
    new = np.asarray(new, dtype=np.float64)
    if old.shape != new.shape:
        raise InvalidInputError(f"mask shapes differ: {old.shape} vs {new.shape}")
    return float(np.abs(new - old).max(initial=0.0))


@dataclasses.dataclass
class RmscIteration:
    iteration: int
    labels: np.ndarray
    mask_delta: float
    admm_iterations: int
    admm_converged: bool
    admm_seconds: float = 0.0
    clustering_seconds: float = 0.0


@dataclasses.dataclass
class RmscResult:
    labels: np.ndarray
    Z: np.ndarray
    history: list[RmscIteration]
    converged: bool

    def __iter__(self):
        return iter((self.labels, self.Z, self.history))


def run_rmsc(X, config: ExperimentConfig, initial_mask=None) -> RmscResult:
    """Bilevel loop: GMSC under mask -> spectral clustering -> new mask.

    The default initial mask is all ones.  Every recursion step reuses the
    same seed for spectral clustering, so the run is deterministic.
    """
    if not config.model.is_recursive:
        raise InvalidInputError(f"run_rmsc needs RMSC_V1 or RMSC_V2, got {config.model.value}")
    X = as_data_matrix(X, config.n_clusters)
    n = X.shape[1]
    cache = precompute_gram(X)
    old = np.ones((n, n)) if initial_mask is None else np.asarray(initial_mask, dtype=np.float64)
    history = []
    converged = False
    labels = Z = None
    for it in range(config.rmsc_max_iters):
        t0 = time.perf_counter()
        res = MaskedADMM(X, config, old, cache=cache).run()
        Z = res.Z
        t1 = time.perf_counter()
        labels = spectral_clustering(Z, config.n_clusters, seed=config.seed,
                                     restarts=config.kmeans_restarts)
        t2 = time.perf_counter()
        new = mask_from_labels(labels, config.beta, config.invert_mask)
        delta = mask_delta(old, new)
        history.append(RmscIteration(it, labels, delta, res.iterations, res.converged,
                                     admm_seconds=t1 - t0, clustering_seconds=t2 - t1))
        log.debug("rmsc iteration %d: mask change %.4g", it, delta)
        if delta < config.rmsc_mask_tol:
            converged = True
            break
        old = new
    if not converged:
        log.warning("RMSC mask still changing after %d iterations", config.rmsc_max_iters)
    return RmscResult(labels=labels, Z=Z, history=history, converged=converged)

"""Shared domain types: data matrices, masks, assignments and run configuration.

Data are stored features-by-samples (``d x N``) so that the self-expression
``X = X Z`` is well formed for an ``N x N`` coefficient matrix ``Z``.
"""

from __future__ import annotations

import dataclasses
import enum
from typing import Any, Mapping

import numpy as np

from .errors import ConfigError, InvalidInputError


class Model(str, enum.Enum):
    BMSC = "BMSC"
    GMSC = "GMSC"
    GMSC_ROBUST = "GMSC_ROBUST"
    RMSC_V1 = "RMSC_V1"
    RMSC_V2 = "RMSC_V2"

    @property
    def is_recursive(self) -> bool:
        return self in (Model.RMSC_V1, Model.RMSC_V2)

    @property
    def is_robust(self) -> bool:
        return self in (Model.GMSC_ROBUST, Model.RMSC_V2)

    @property
    def uses_soft_mask(self) -> bool:
        return self is not Model.BMSC


def as_data_matrix(X, n_clusters: int | None = None) -> np.ndarray:
    """Validate and return ``X`` as a float64 ``d x N`` array."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise InvalidInputError(f"data matrix must be 2-D, got shape {X.shape}")
    d, n = X.shape
    if d < 1 or n < 2:
        raise InvalidInputError(f"data matrix needs d >= 1 and N >= 2, got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InvalidInputError("data matrix has non-finite entries")
    if n_clusters is not None and n < n_clusters:
        raise InvalidInputError(f"N={n} samples is fewer than K={n_clusters} clusters")
    return X


def apply_hard_mask(A: np.ndarray) -> np.ndarray:
    """Return ``M^h * A``: a copy of ``A`` with its diagonal zeroed."""
    out = np.array(A, dtype=np.float64, copy=True)
    np.fill_diagonal(out, 0.0)
    return out


def hard_mask(n: int) -> np.ndarray:
    """Materialize the ``n x n`` hard mask (zeros on the diagonal, ones elsewhere)."""
    m = np.ones((n, n))
    np.fill_diagonal(m, 0.0)
    return m


def check_soft_mask(M, n: int | None = None) -> np.ndarray:
    """Validate a soft mask: square, symmetric, finite and nonnegative.

    Strict positivity is the documented invariant for masks built from labels;
    zero entries are accepted here so the all-zero mask can express BMSC.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidInputError(f"soft mask must be square, got shape {M.shape}")
    if n is not None and M.shape[0] != n:
        raise InvalidInputError(f"soft mask is {M.shape[0]}x{M.shape[0]}, expected N={n}")
    if not np.all(np.isfinite(M)) or np.any(M < 0):
        raise InvalidInputError("soft mask entries must be finite and nonnegative")
    if not np.array_equal(M, M.T):
        raise InvalidInputError("soft mask must be symmetric")
    return M


def to_assignment(labels, K: int) -> np.ndarray:
    """One-hot ``N x K`` assignment matrix for a label vector."""
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise InvalidInputError("labels must be a 1-D vector")
    if K < 1:
        raise InvalidInputError(f"K must be positive, got {K}")
    if labels.size and (labels.min() < 0 or labels.max() >= K):
        raise InvalidInputError(f"labels must lie in [0, {K})")
    if labels.size and not np.all(labels == np.round(labels)):
        raise InvalidInputError("labels must be integers")
    Q = np.zeros((labels.size, K), dtype=np.int64)
    Q[np.arange(labels.size), labels.astype(np.int64)] = 1
    return Q


def to_labels(Q) -> np.ndarray:
    """Inverse of :func:`to_assignment`."""
    Q = np.asarray(Q)
    if Q.ndim != 2:
        raise InvalidInputError("assignment matrix must be 2-D")
    if not np.all((Q == 0) | (Q == 1)):
        raise InvalidInputError("assignment matrix must be binary")
    ones = Q.sum(axis=1)
    bad = np.flatnonzero(ones != 1)
    if bad.size:
        raise InvalidInputError(f"row {bad[0]} of the assignment matrix has {ones[bad[0]]} ones")
    return np.argmax(Q, axis=1).astype(np.int64)


def relabel(labels) -> tuple[np.ndarray, np.ndarray]:
    """Map arbitrary labels onto ``0..K-1`` in sorted order of the original values.

    Returns the remapped labels and the sorted unique originals.
    """
    uniq, inv = np.unique(np.asarray(labels), return_inverse=True)
    return inv.astype(np.int64), uniq


# per-dataset sparsity weights used in the reported experiments
DATASET_LAMBDA = {
    "mnist": 1e-3,
    "usps": 5e-2,
    "orl": 3e-4,
    "coil20": 1e-3,
    "coil100": 1e-4,
}


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    """Parameters for one model run.

    ``lambda1``/``lambda2`` weight the noise and outlier terms of the robust
    model; ``lambda2=None`` means "same as ``lam``".
    """

    model: Model = Model.BMSC
    lam: float = 1e-3
    lambda1: float = 0.1
    lambda2: float | None = None
    beta: float = 1.05
    p: float = 1.1
    mu0: float = 0.1
    mu_max: float = 1e10
    admm_max_iters: int = 300
    admm_tol: float = 1e-6
    rmsc_max_iters: int = 10
    rmsc_mask_tol: float = 1e-3
    n_clusters: int = 2
    seed: int = 0
    invert_mask: bool = False
    unsquared_mask_c_update: bool = False
    kmeans_restarts: int = 10

    def __post_init__(self):
        object.__setattr__(self, "model", _coerce_model(self.model))
        bad = []
        positive = ("lam", "lambda1", "mu0", "mu_max", "admm_tol", "rmsc_mask_tol")
        for name in positive:
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and np.isfinite(v) and v > 0):
                bad.append(name)
        if self.lambda2 is not None and not (np.isfinite(self.lambda2) and self.lambda2 > 0):
            bad.append("lambda2")
        if not self.beta > 1:
            bad.append("beta")
        if not self.p >= 1:
            bad.append("p")
        for name in ("admm_max_iters", "rmsc_max_iters", "kmeans_restarts"):
            v = getattr(self, name)
            if not (isinstance(v, (int, np.integer)) and v >= 1):
                bad.append(name)
        if not (isinstance(self.n_clusters, (int, np.integer)) and self.n_clusters >= 1):
            bad.append("n_clusters")
        if self.model.is_recursive and self.n_clusters < 2:
            bad.append("n_clusters")
        if not isinstance(self.seed, (int, np.integer)):
            bad.append("seed")
        if bad:
            raise ConfigError("invalid experiment configuration", sorted(set(bad)))

    @property
    def outlier_weight(self) -> float:
        return self.lam if self.lambda2 is None else self.lambda2

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["model"] = self.model.value
        return d

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError("unknown experiment configuration keys", unknown)
        return cls(**dict(data))


def _coerce_model(value) -> Model:
    if isinstance(value, Model):
        return value
    key = str(value).upper().replace("-", "_")
    try:
        return Model(key)
    except ValueError:
        raise ConfigError(f"unknown model {value!r}", ["model"]) from None

"""ADMM solvers for the masked self-expression models.

All three models share the splitting ``Z = M^h * C`` (diagonal constraint as a
hard mask) and ``Q = Z`` (the l0 auxiliary).  They differ only in the
C-update (plain projection for BMSC, soft-mask-weighted ridge for GMSC) and,
for the robust variant, in two extra blocks for dense noise and sparse
outliers.
"""

from __future__ import annotations

import dataclasses
import logging
from typing import Callable

import numpy as np

from .core import (
    ExperimentConfig,
    Model,
    apply_hard_mask,
    as_data_matrix,
    check_soft_mask,
)
from .errors import DivergenceError, InvalidInputError, NumericError

log = logging.getLogger(__name__)

_EIG_NEG_TOL = 1e-10


@dataclasses.dataclass(frozen=True)
class GramCache:
    """Eigendecomposition ``X^T X = V diag(s) V^T`` reused by every Z-update."""

    X: np.ndarray
    gram: np.ndarray
    eigvecs: np.ndarray
    eigvals: np.ndarray

    @property
    def n(self) -> int:
        return self.gram.shape[0]


def precompute_gram(X) -> GramCache:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or not np.all(np.isfinite(X)):
        raise InvalidInputError("X must be a finite 2-D array")
    gram = X.T @ X
    gram = (gram + gram.T) / 2.0
    try:
        s, V = np.linalg.eigh(gram)
    except np.linalg.LinAlgError as exc:
        cond = np.linalg.cond(gram) if gram.size else float("nan")
        raise NumericError(f"eigendecomposition of X^T X failed (condition number {cond:.3e})") from exc
    scale = max(1.0, float(np.abs(s).max(initial=0.0)))
    if np.any(s < -_EIG_NEG_TOL * scale):
        raise NumericError(f"X^T X has a negative eigenvalue {s.min():.3e}")
    s = np.maximum(s, 0.0)
    return GramCache(X=X, gram=gram, eigvecs=V, eigvals=s)


def update_z(cache: GramCache, C, Q_sparse, U1, U2, mu: float, target_gram=None) -> np.ndarray:
    """Solve ``(X^T X + 2 mu I) Z = X^T X - U1 + mu M^h*C + U2 + mu Q``.

    ``target_gram`` replaces the leading ``X^T X`` of the right-hand side; the
    robust model passes ``X^T (X - eps - O)``.
    """
    if not mu > 0:
        raise InvalidInputError("mu must be positive")
    lead = cache.gram if target_gram is None else target_gram
    rhs = lead - U1 + mu * apply_hard_mask(C) + U2 + mu * Q_sparse
    V = cache.eigvecs
    return V @ ((V.T @ rhs) / (cache.eigvals + 2.0 * mu)[:, None])


def update_c_bmsc(Z, U1, mu: float) -> np.ndarray:
    if not mu > 0:
        raise InvalidInputError("mu must be positive")
    return apply_hard_mask(U1 / mu + Z)


def update_c_gmsc(Z, U1, soft_mask, mu: float, unsquared_mask: bool = False) -> np.ndarray:
    """C-update with the soft-mask penalty ``1/2 ||M^s * C||^2``.

    Off the diagonal ``C = (U1 + mu Z) / (M^s**2 + mu)``; the diagonal is zero.
    ``unsquared_mask`` uses ``M^s`` instead of its square in the denominator.
    """
    if not mu > 0:
        raise InvalidInputError("mu must be positive")
    weight = soft_mask if unsquared_mask else soft_mask * soft_mask
    return apply_hard_mask((U1 + mu * Z) / (weight + mu))


def hard_threshold(V, tau: float) -> np.ndarray:
    """Keep entries with ``|v| > tau``, zero the rest."""
    if tau < 0:
        raise InvalidInputError("tau must be nonnegative")
    V = np.asarray(V, dtype=np.float64)
    return np.where(np.abs(V) > tau, V, 0.0)


def update_q(Z, U2, lam: float, mu: float) -> np.ndarray:
    if not (lam > 0 and mu > 0):
        raise InvalidInputError("lambda and mu must be positive")
    return hard_threshold(Z - U2 / mu, np.sqrt(2.0 * lam / mu))


def update_noise(residual, O, lambda1: float) -> np.ndarray:
    """Minimizer of ``1/2 ||R - eps - O||^2 + lambda1 ||eps||^2`` over eps."""
    if not lambda1 > 0:
        raise InvalidInputError("lambda1 must be positive")
    return (residual - O) / (1.0 + 2.0 * lambda1)


def update_outliers(residual, eps_noise, lambda2: float) -> np.ndarray:
    """l0 proximal step ``argmin_O 1/2 ||R - eps - O||^2 + lambda2 ||O||_0``."""
    if not lambda2 > 0:
        raise InvalidInputError("lambda2 must be positive")
    return hard_threshold(residual - eps_noise, np.sqrt(2.0 * lambda2))


@dataclasses.dataclass
class SolverState:
    Z: np.ndarray
    C: np.ndarray
    Q_sparse: np.ndarray
    U1: np.ndarray
    U2: np.ndarray
    mu: float
    iteration: int = 0
    eps_noise: np.ndarray | None = None
    outliers: np.ndarray | None = None

    def copy(self) -> "SolverState":
        arrays = {k: v.copy() for k, v in vars(self).items() if isinstance(v, np.ndarray)}
        return dataclasses.replace(self, **arrays)


@dataclasses.dataclass
class AdmmResult:
    C: np.ndarray
    Z: np.ndarray
    Q_sparse: np.ndarray
    converged: bool
    iterations: int
    state: SolverState
    deltas: list[float]

    def __iter__(self):
        # unpacks as (C, Z, Q)
        return iter((self.C, self.Z, self.Q_sparse))


class MaskedADMM:
    """Stateful ADMM loop for BMSC, GMSC and the robust GMSC.

    ``step`` performs one Gauss-Seidel sweep (Z, C, Q, [eps, O], multipliers,
    penalty growth) and returns the change measure used for termination.
    """

    def __init__(self, X, config: ExperimentConfig, soft_mask=None, cache: GramCache | None = None):
        self.X = as_data_matrix(X)
        self.config = config
        model = config.model
        if model.is_recursive:
            model = Model.GMSC_ROBUST if model.is_robust else Model.GMSC
        self.model = model
        n = self.X.shape[1]
        if model is Model.BMSC:
            if soft_mask is not None:
                raise InvalidInputError("BMSC takes no soft mask")
            self.soft_mask = None
        else:
            if soft_mask is None:
                raise InvalidInputError(f"{model.value} requires a soft mask")
            self.soft_mask = check_soft_mask(soft_mask, n)
        if cache is None:
            cache = precompute_gram(self.X)
        elif cache.n != n:
            raise InvalidInputError("Gram cache does not match X")
        self.cache = cache
        zeros = np.zeros((n, n))
        self.state = SolverState(
            Z=zeros.copy(), C=zeros.copy(), Q_sparse=zeros.copy(),
            U1=zeros.copy(), U2=zeros.copy(), mu=float(config.mu0),
        )
        if model.is_robust:
            self.state.eps_noise = np.zeros_like(self.X)
            self.state.outliers = np.zeros_like(self.X)

    def penalty(self, k: int) -> float:
        cfg = self.config
        return float(min(cfg.mu0 * cfg.p ** k, cfg.mu_max))

    def step(self) -> float:
        st = self.state
        cfg = self.config
        mu = st.mu
        target = None
        if self.model.is_robust:
            target = self.X.T @ (self.X - st.eps_noise - st.outliers)
        Z = update_z(self.cache, st.C, st.Q_sparse, st.U1, st.U2, mu, target_gram=target)
        if self.model is Model.BMSC:
            C = update_c_bmsc(Z, st.U1, mu)
        else:
            C = update_c_gmsc(Z, st.U1, self.soft_mask, mu, cfg.unsquared_mask_c_update)
        Q = update_q(Z, st.U2, cfg.lam, mu)
        if self.model.is_robust:
            R = self.X - self.X @ Z
            st.eps_noise = update_noise(R, st.outliers, cfg.lambda1)
            st.outliers = update_outliers(R, st.eps_noise, cfg.outlier_weight)
        if not np.all(np.isfinite(Z)):
            raise DivergenceError(
                f"non-finite iterate at iteration {st.iteration} (mu={mu:.3e})",
                iteration=st.iteration, mu=mu,
            )
        delta = max(
            np.abs(C - st.C).max(initial=0.0),
            np.abs(Z - st.Z).max(initial=0.0),
            np.abs(Q - st.Q_sparse).max(initial=0.0),
        )
        st.U1 = st.U1 + mu * (Z - apply_hard_mask(C))
        st.U2 = st.U2 + mu * (Q - Z)
        st.Z, st.C, st.Q_sparse = Z, C, Q
        st.iteration += 1
        st.mu = self.penalty(st.iteration)
        return float(delta)

    def run(self, callback: Callable[[SolverState, float], None] | None = None) -> AdmmResult:
        cfg = self.config
        deltas = []
        converged = False
        while self.state.iteration < cfg.admm_max_iters:
            delta = self.step()
            deltas.append(delta)
            if callback is not None:
                callback(self.state, delta)
            if delta < cfg.admm_tol:
                converged = True
                break
        if not converged:
            log.warning("ADMM stopped at the iteration cap (%d) with change %.3e",
                        cfg.admm_max_iters, deltas[-1])
        st = self.state
        return AdmmResult(C=st.C, Z=st.Z, Q_sparse=st.Q_sparse, converged=converged,
                          iterations=st.iteration, state=st, deltas=deltas)


def solve(X, config: ExperimentConfig, soft_mask=None, callback=None,
          cache: GramCache | None = None) -> AdmmResult:
    """Run the ADMM loop for ``config.model`` from zero initial iterates."""
    if config.model.is_recursive:
        raise InvalidInputError("solve handles BMSC/GMSC/GMSC_ROBUST; use run_rmsc for RMSC")
    return MaskedADMM(X, config, soft_mask, cache=cache).run(callback)


def objective(X, state: SolverState, config: ExperimentConfig, soft_mask=None) -> float:
    """Model objective evaluated at the current iterates (l0 term on ``Q``)."""
    R = X - X @ state.Z
    if state.eps_noise is not None:
        R = R - state.eps_noise - state.outliers
    val = 0.5 * np.sum(R * R) + config.lam * np.count_nonzero(state.Q_sparse)
    if soft_mask is not None:
        val += 0.5 * np.sum((soft_mask * state.C) ** 2)
    if state.eps_noise is not None:
        val += config.lambda1 * np.sum(state.eps_noise ** 2)
        val += config.outlier_weight * np.count_nonzero(state.outliers)
    return float(val)

"""Sufficient statistics shared by every nonzero-mean detector.

Everything here broadcasts over leading batch dimensions: ``x`` has shape
``(..., N)`` and ``X_L`` has shape ``(..., N, L)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _linalg
from .errors import DegenerateDataError, ParameterDomainError


@dataclass(frozen=True, eq=False)
class SufficientStats:
    """Mean-removed test vector and training scatter.

    Attributes
    ----------
    mu_hat0 : (..., N) joint mean estimate over test and training data.
    S0 : (..., N, N) training scatter about ``mu_hat0``.
    S2 : (..., N, N) ``S0 - d d^H / L`` with ``d = x - mu_hat0``.
    z : (..., N) ``sqrt((L+1)/L) * d``.
    q1 : ``z^H S2^{-1} z``.
    q2 : ``z^H S2^{-1} A (A^H S2^{-1} A)^{-1} A^H S2^{-1} z``.
    L : number of training vectors.
    """

    mu_hat0: np.ndarray
    S0: np.ndarray
    S2: np.ndarray
    z: np.ndarray
    q1: np.ndarray
    q2: np.ndarray
    L: int

    @property
    def beta(self):
        """Loss factor ``1 / (1 + q1 - q2)``."""
        return 1.0 / (1.0 + self.q1 - self.q2)

    @property
    def d(self):
        """``x - mu_hat0``."""
        return self.z * np.sqrt(self.L / (self.L + 1.0))


def _check_shapes(x, X_L, A):
    x = np.asarray(x, dtype=complex)
    X_L = np.asarray(X_L, dtype=complex)
    A = np.asarray(A, dtype=complex)
    if A.ndim == 1:
        A = A[:, None]
    N = A.shape[0]
    if x.shape[-1] != N or X_L.shape[-2] != N:
        raise ParameterDomainError("x, X_L and A disagree on N")
    return x, X_L, A


def compute_S2_direct(X_L) -> np.ndarray:
    """Training-only centered scatter ``sum x x^H - (sum x)(sum x)^H / L``."""
    X_L = np.asarray(X_L, dtype=complex)
    L = X_L.shape[-1]
    if L < 2:
        raise ParameterDomainError("need at least two training vectors")
    s = np.sum(X_L, axis=-1)
    S = X_L @ np.conj(np.swapaxes(X_L, -1, -2))
    return _linalg.hermitize(S - s[..., :, None] * np.conj(s[..., None, :]) / L)


def scatter_matrices(x, X_L):
    """``(mu_hat0, S0, S2, d)`` from the joint-mean formulas."""
    L = X_L.shape[-1]
    mu_hat0 = (x + np.sum(X_L, axis=-1)) / (L + 1.0)
    D = X_L - mu_hat0[..., :, None]
    S0 = _linalg.hermitize(D @ np.conj(np.swapaxes(D, -1, -2)))
    d = x - mu_hat0
    S2 = _linalg.hermitize(S0 - d[..., :, None] * np.conj(d[..., None, :]) / L)
    return mu_hat0, S0, S2, d


def whitened_forms(S, v, A):
    """``(q1, q2, bad)`` for vector ``v`` whitened by scatter ``S``.

    One Cholesky factorization of ``S`` serves both forms.  ``bad`` flags
    batch entries where ``S`` failed the singularity test; their forms are
    meaningless.
    """
    G, bad = _linalg.cholesky_masked(S)
    N, p = A.shape
    rhs = np.concatenate([v[..., :, None], np.broadcast_to(A, v.shape[:-1] + (N, p))], axis=-1)
    Y = np.linalg.solve(G, rhs)
    q1, q2 = _linalg.projected_forms(Y[..., 0], Y[..., 1:])
    return q1, q2, bad


def compute_sufficient_stats_masked(x, X_L, A):
    """Batched statistics plus a mask of degenerate draws (no raise)."""
    x, X_L, A = _check_shapes(x, X_L, A)
    L = X_L.shape[-1]
    mu_hat0, S0, S2, d = scatter_matrices(x, X_L)
    z = np.sqrt((L + 1.0) / L) * d
    q1, q2, bad = whitened_forms(S2, z, A)
    return SufficientStats(mu_hat0, S0, S2, z, q1, q2, L), bad


def compute_sufficient_stats(x, X_L, A) -> SufficientStats:
    """Sufficient statistics for test vector(s) ``x`` and training ``X_L``.

    Raises
    ------
    DegenerateDataError
        If ``S2`` is numerically singular for any batch entry.
    """
    stats, bad = compute_sufficient_stats_masked(x, X_L, A)
    if np.any(bad):
        N, L = np.shape(X_L)[-2:]
        raise DegenerateDataError(
            f"S2 is numerically singular; it is positive definite with probability 1 "
            f"only when L >= N+1 (here N={N}, L={L})")
    return stats


def estimate_alpha(stats: SufficientStats, A) -> np.ndarray:
    """Maximum-likelihood signal coordinates under H1 (unbatched)."""
    A = np.asarray(A, dtype=complex)
    if A.ndim == 1:
        A = A[:, None]
    L = stats.L
    G = _linalg.cholesky(stats.S2, "S2", "requires L >= N+1")
    Aw = _linalg.whiten(G, A)
    dw = _linalg.whiten(G, stats.d)
    gram = Aw.conj().T @ Aw
    try:
        coef = np.linalg.solve(gram, Aw.conj().T @ dw)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("A^H S2^{-1} A is singular") from exc
    return (L + 1.0) / L * coef

"""Test statistics.

The canonical forms (functions of :class:`SufficientStats`) are the
production path.  The ``*_full`` functions evaluate the original matrix
expressions directly from raw data and exist to pin the algebra down:

* ``sglrt_nmc_full``  = 1 + ``sglrt_nmc``
* ``srao_nmc_full``   = L/(L+1) * ``srao_nmc``
* ``samf_nmc_full``   = L * ``samf_nmc``
* ``durbin_nmc``      = ``srao_nmc_full``

Thresholds are not handled here.
"""

from __future__ import annotations

import enum

import numpy as np

from . import _linalg
from .errors import DegenerateDataError, ParameterDomainError
from .stats import (SufficientStats, compute_sufficient_stats, compute_sufficient_stats_masked,
                    estimate_alpha, scatter_matrices, whitened_forms)


class DetectorKind(str, enum.Enum):
    SGLRT_NMC = "sglrt-nmc"
    SRAO_NMC = "srao-nmc"
    SAMF_NMC = "samf-nmc"
    GRADIENT_NMC = "gradient-nmc"
    DURBIN_NMC = "durbin-nmc"
    SGLRT = "sglrt"
    SAMF = "samf"
    SRAO = "srao"
    GLRT_NMC_RANK1 = "glrt-nmc-rank1"

    @property
    def is_conventional(self) -> bool:
        return self in CONVENTIONAL

    @property
    def has_analytic(self) -> bool:
        return self in PROPOSED


PROPOSED = (DetectorKind.SGLRT_NMC, DetectorKind.SRAO_NMC, DetectorKind.SAMF_NMC)
CONVENTIONAL = (DetectorKind.SGLRT, DetectorKind.SAMF, DetectorKind.SRAO)


def parse_kind(name) -> DetectorKind:
    if isinstance(name, DetectorKind):
        return name
    key = str(name).strip().lower().replace("_", "-")
    try:
        return DetectorKind(key)
    except ValueError:
        raise ParameterDomainError(
            f"unknown detector {name!r}; choose from {[k.value for k in DetectorKind]}") from None


# -- canonical forms ----------------------------------------------------------

def sglrt_nmc(stats: SufficientStats):
    return stats.q2 / (1.0 + stats.q1 - stats.q2)


def srao_nmc(stats: SufficientStats):
    return stats.q2 / ((1.0 + stats.q1) * (1.0 + stats.q1 - stats.q2))


def samf_nmc(stats: SufficientStats):
    return stats.q2


def gradient_nmc(stats: SufficientStats):
    return stats.q2 / (1.0 + stats.q1)


def glrt_nmc_rank1(stats: SufficientStats, a):
    """Rank-one nonzero-mean GLRT ``|a'^H z'|^2 / (a'^H a' (1 + z'^H z'))``.

    Whitening uses the inverse lower Cholesky factor of ``S2``.
    """
    a = np.asarray(a, dtype=complex).reshape(-1)
    G, bad = _linalg.cholesky_masked(stats.S2)
    if np.any(bad):
        raise DegenerateDataError("S2 is numerically singular")
    zw = np.linalg.solve(G, stats.z[..., None])[..., 0]
    aw = np.linalg.solve(G, np.broadcast_to(a[:, None], stats.z.shape + (1,)))[..., 0]
    num = np.abs(np.sum(np.conj(aw) * zw, axis=-1)) ** 2
    return num / (np.sum(np.abs(aw) ** 2, axis=-1) * (1.0 + np.sum(np.abs(zw) ** 2, axis=-1)))


# -- full forms (unbatched) ---------------------------------------------------

def _as_single(x, X_L, A):
    x = np.asarray(x, dtype=complex).reshape(-1)
    X_L = np.asarray(X_L, dtype=complex)
    A = np.asarray(A, dtype=complex)
    if A.ndim == 1:
        A = A[:, None]
    if X_L.ndim != 2 or X_L.shape[0] != x.size or A.shape[0] != x.size:
        raise ParameterDomainError("full forms take one x (N,), X_L (N, L) and A (N, p)")
    return x, X_L, A


def _subspace_form(M, v, A, what):
    """``v^H M^{-1} A (A^H M^{-1} A)^{-1} A^H M^{-1} v`` via explicit solves."""
    _linalg.cholesky(M, what)  # raises if singular
    Minv_v = np.linalg.solve(M, v)
    Minv_A = np.linalg.solve(M, A)
    inner = A.conj().T @ Minv_A
    b = A.conj().T @ Minv_v
    return float(np.real(np.vdot(b, np.linalg.solve(inner, b))))


def sglrt_nmc_full(x, X_L, A) -> float:
    """Determinant-ratio GLRT, log-determinants via Cholesky."""
    x, X_L, A = _as_single(x, X_L, A)
    L = X_L.shape[1]
    _, S0, S2, d = scatter_matrices(x, X_L)
    ld0 = _linalg.logdet_hpd(S0, "S0")
    ld2 = _linalg.logdet_hpd(S2, "S2")
    quad0 = float(np.real(np.vdot(d, np.linalg.solve(S0, d))))
    quad2 = float(np.real(np.vdot(d, np.linalg.solve(S2, d))))
    proj2 = _subspace_form(S2, d, A, "S2")
    num = np.exp(ld0 - ld2) * (1.0 + quad0)
    return float(num / (1.0 + (L + 1.0) / L * (quad2 - proj2)))


def srao_nmc_full(x, X_L, A) -> float:
    """Rao statistic with the inner matrix ``d d^H + S0``, as derived."""
    x, X_L, A = _as_single(x, X_L, A)
    _, S0, _, d = scatter_matrices(x, X_L)
    M = _linalg.hermitize(np.outer(d, d.conj()) + S0)
    return _subspace_form(M, d, A, "d d^H + S0")


def wald_information(x, X_L, A) -> np.ndarray:
    """``A^H R1^{-1} A`` with ``R1`` the H1 covariance MLE built from samples.

    ``R1`` is assembled from its defining sum (H1 mean estimate and MLE
    signal coordinates), not from the rank-one-update shortcut.
    """
    x, X_L, A = _as_single(x, X_L, A)
    L = X_L.shape[1]
    stats = compute_sufficient_stats(x, X_L, A)
    alpha = estimate_alpha(stats, A)
    s = A @ alpha
    mu1 = stats.mu_hat0 - s / (L + 1.0)
    r = x - s - mu1
    D = X_L - mu1[:, None]
    R1 = _linalg.hermitize((np.outer(r, r.conj()) + D @ D.conj().T) / (L + 1.0))
    _linalg.cholesky(R1, "R1")
    return A.conj().T @ np.linalg.solve(R1, A)


def samf_nmc_full(x, X_L, A) -> float:
    """Wald statistic including the ``A^H R1^{-1} A`` weighting."""
    x, X_L, A = _as_single(x, X_L, A)
    _, _, S2, d = scatter_matrices(x, X_L)
    _linalg.cholesky(S2, "S2", "requires L >= N+1")
    info = wald_information(x, X_L, A)
    gram = A.conj().T @ np.linalg.solve(S2, A)
    coef = np.linalg.solve(gram, A.conj().T @ np.linalg.solve(S2, d))
    return float(np.real(np.vdot(coef, info @ coef)))


def durbin_nmc(x, X_L, A) -> float:
    """Durbin statistic at the H0 estimates of mean and covariance.

    Evaluated as ``a^H (A^H R0^{-1} A) a`` with ``a`` the known-parameter
    coordinate estimate, then with the ``L+1`` scale of ``R0`` dropped.
    """
    x, X_L, A = _as_single(x, X_L, A)
    L = X_L.shape[1]
    _, S0, _, d = scatter_matrices(x, X_L)
    R0 = _linalg.hermitize((np.outer(d, d.conj()) + S0) / (L + 1.0))
    _linalg.cholesky(R0, "R0")
    info = A.conj().T @ np.linalg.solve(R0, A)
    a = np.linalg.solve(info, A.conj().T @ np.linalg.solve(R0, d))
    return float(np.real(np.vdot(a, info @ a))) / (L + 1.0)


# -- zero-mean (conventional) detectors --------------------------------------

def conventional_forms(x, X_L, A):
    """``(q1, q2, bad)`` of ``x`` whitened by the uncentered scatter ``S``."""
    x = np.asarray(x, dtype=complex)
    X_L = np.asarray(X_L, dtype=complex)
    A = np.asarray(A, dtype=complex)
    if A.ndim == 1:
        A = A[:, None]
    S = _linalg.hermitize(X_L @ np.conj(np.swapaxes(X_L, -1, -2)))
    return whitened_forms(S, x, A)


def conventional_detectors(x, X_L, A):
    """``(t_SGLRT, t_SAMF, t_SRao)`` whitened by ``S = sum x_l x_l^H``.

    No mean removal takes place, which is what makes these statistics
    sensitive to the clutter mean.
    """
    q1, q2, bad = conventional_forms(x, X_L, A)
    if np.any(bad):
        raise DegenerateDataError("training scatter S is numerically singular (need L >= N)")
    den = 1.0 + q1 - q2
    return q2 / den, q2, q2 / (den * (1.0 + q1))


# -- batched evaluation -------------------------------------------------------

def evaluate(kinds, x, X_L, A):
    """Evaluate several detectors on a batch of draws.

    Returns ``(values, bad)`` where ``values`` maps each kind to an array
    of statistics and ``bad`` flags draws with a degenerate scatter matrix
    for any requested detector.  Full-form kinds are evaluated through
    their canonical equivalents.
    """
    kinds = [parse_kind(k) for k in kinds]
    A = np.asarray(A, dtype=complex)
    if A.ndim == 1:
        A = A[:, None]
    out = {}
    bad = np.zeros(np.shape(x)[:-1], dtype=bool)
    if any(not k.is_conventional for k in kinds):
        stats, bad_nmc = compute_sufficient_stats_masked(x, X_L, A)
        bad |= bad_nmc
        for k in kinds:
            if k is DetectorKind.SGLRT_NMC:
                out[k] = sglrt_nmc(stats)
            elif k in (DetectorKind.SRAO_NMC, DetectorKind.DURBIN_NMC):
                out[k] = srao_nmc(stats)
            elif k is DetectorKind.SAMF_NMC:
                out[k] = samf_nmc(stats)
            elif k is DetectorKind.GRADIENT_NMC:
                out[k] = gradient_nmc(stats)
            elif k is DetectorKind.GLRT_NMC_RANK1:
                if A.shape[1] != 1:
                    raise ParameterDomainError("glrt-nmc-rank1 needs a single steering column (p = 1)")
                # p = 1 makes the subspace projection the rank-one statistic
                out[k] = gradient_nmc(stats)
    if any(k.is_conventional for k in kinds):
        q1, q2, bad_c = conventional_forms(x, X_L, A)
        bad |= bad_c
        den = 1.0 + q1 - q2
        for k in kinds:
            if k is DetectorKind.SGLRT:
                out[k] = q2 / den
            elif k is DetectorKind.SAMF:
                out[k] = q2
            elif k is DetectorKind.SRAO:
                out[k] = q2 / (den * (1.0 + q1))
    return out, bad

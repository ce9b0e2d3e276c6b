"""Batched Hermitian helpers: factorization with a scale-free singularity test."""

import numpy as np
import scipy.linalg

from .errors import DegenerateDataError

PIVOT_RTOL = 1e-12


def hermitize(S):
    return 0.5 * (S + np.conj(np.swapaxes(S, -1, -2)))


def cholesky_masked(S, rtol=PIVOT_RTOL):
    """Lower Cholesky factors of a stack of Hermitian matrices.

    Returns ``(G, bad)`` where ``bad`` flags matrices whose smallest pivot
    is below ``rtol`` times their largest diagonal entry.  Flagged entries
    get an identity factor so downstream arithmetic stays finite.
    """
    S = np.asarray(S)
    batch = S.shape[:-2]
    n = S.shape[-1]
    flat = S.reshape((-1, n, n))
    try:
        G = np.linalg.cholesky(flat)
        bad = np.zeros(flat.shape[0], dtype=bool)
    except np.linalg.LinAlgError:
        G = np.empty_like(flat)
        bad = np.zeros(flat.shape[0], dtype=bool)
        for i, M in enumerate(flat):
            try:
                G[i] = np.linalg.cholesky(M)
            except np.linalg.LinAlgError:
                bad[i] = True
                G[i] = np.eye(n)
    pivots = np.abs(np.diagonal(G, axis1=-2, axis2=-1)) ** 2
    scale = np.max(np.abs(np.diagonal(flat, axis1=-2, axis2=-1).real), axis=-1)
    bad |= np.min(pivots, axis=-1) <= rtol * np.maximum(scale, np.finfo(float).tiny)
    if bad.any():
        G[bad] = np.eye(n)
    return G.reshape(batch + (n, n)), bad.reshape(batch)


def cholesky(S, what="matrix", hint=""):
    """Lower Cholesky factor of one Hermitian matrix, raising if degenerate."""
    G, bad = cholesky_masked(hermitize(np.asarray(S, dtype=complex)))
    if np.any(bad):
        msg = f"{what} is numerically singular"
        if hint:
            msg += f" ({hint})"
        raise DegenerateDataError(msg)
    return G


def whiten(G, V):
    """Solve ``G Y = V`` for a lower-triangular ``G`` (unbatched)."""
    return scipy.linalg.solve_triangular(G, V, lower=True)


def logdet_hpd(S, what="matrix"):
    G = cholesky(S, what)
    return 2.0 * np.sum(np.log(np.abs(np.diag(G))))


def projected_forms(Yz, YA):
    """Quadratic forms of whitened vectors.

    ``Yz`` has shape (..., N) and ``YA`` shape (..., N, p), both already
    whitened.  Returns ``(q1, q2)`` with ``q1 = |Yz|^2`` and ``q2`` the
    squared norm of the projection of ``Yz`` onto the span of ``YA``,
    evaluated through the p x p Gram system.
    """
    q1 = np.sum(np.abs(Yz) ** 2, axis=-1)
    YAh = np.conj(np.swapaxes(YA, -1, -2))
    gram = YAh @ YA
    b = (YAh @ Yz[..., None])[..., 0]
    coef = np.linalg.solve(gram, b[..., None])[..., 0]
    q2 = np.real(np.sum(np.conj(b) * coef, axis=-1))
    q2 = np.clip(q2, 0.0, None)
    return q1, np.minimum(q2, q1)

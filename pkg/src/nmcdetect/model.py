"""Scenario description, clutter covariance and the scalar scenario metrics.

All quadratic forms ``v^H R^{-1} w`` go through a Cholesky factor of ``R``;
no explicit inverse is ever formed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _linalg
from .errors import ConsistencyError, ParameterDomainError

CLAMP_TOL = 1e-12
RANK_RTOL = 1e-10


def db(x):
    """Power ratio in dB."""
    return 10.0 * np.log10(x)


def from_db(x_db):
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def build_toeplitz_covariance(N: int, eps: float) -> np.ndarray:
    """Exponentially correlated covariance ``R[i, k] = eps**|i - k|``."""
    if N < 1:
        raise ParameterDomainError(f"N must be positive, got {N}")
    if not 0.0 <= eps < 1.0:
        raise ParameterDomainError(f"eps must lie in [0, 1), got {eps}")
    idx = np.arange(N)
    return eps ** np.abs(idx[:, None] - idx[None, :]).astype(float)


def _clamp_unit(value: float, what: str) -> float:
    if -CLAMP_TOL <= value <= 1.0 + CLAMP_TOL:
        return float(min(max(value, 0.0), 1.0))
    raise ConsistencyError(f"{what} = {value!r} is outside [0, 1]")


def _check_rank(A: np.ndarray) -> None:
    s = np.linalg.svd(A, compute_uv=False)
    if s.size == 0 or s[-1] <= RANK_RTOL * s[0]:
        raise np.linalg.LinAlgError("signal matrix A is rank deficient")


def _quad(G, v, w=None):
    """``v^H R^{-1} w`` with ``R = G G^H``."""
    a = _linalg.whiten(G, v)
    b = a if w is None else _linalg.whiten(G, w)
    return np.vdot(a, b)


def compute_cos2_theta(p0, A, R) -> float:
    """Squared cosine between ``p0`` and ``span(A)`` in the R-whitened space."""
    p0 = np.asarray(p0, dtype=complex)
    A = np.atleast_2d(np.asarray(A, dtype=complex).T).T
    G = _linalg.cholesky(R, "clutter covariance R")
    _check_rank(A)
    w = _linalg.whiten(G, p0)
    den = np.vdot(w, w).real
    if den <= 0.0:
        raise ParameterDomainError("p0 must be nonzero")
    q1, q2 = _linalg.projected_forms(w, _linalg.whiten(G, A))
    return _clamp_unit(float(q2 / den), "cos^2(theta)")


def compute_scr(p0, R, L: int) -> float:
    """Signal-to-clutter ratio including the ``L/(L+1)`` estimation loss."""
    if L < 1:
        raise ParameterDomainError(f"L must be positive, got {L}")
    G = _linalg.cholesky(R, "clutter covariance R")
    return float(L / (L + 1.0) * _quad(G, np.asarray(p0, dtype=complex)).real)


def compute_xi(mu, R) -> float:
    """Clutter-mean power ``mu^H R^{-1} mu``."""
    G = _linalg.cholesky(R, "clutter covariance R")
    return float(_quad(G, np.asarray(mu, dtype=complex)).real)


def compute_cos2_phi(p0, mu, R) -> float:
    """Squared cosine between the signal and the clutter mean, whitened."""
    p0 = np.asarray(p0, dtype=complex)
    mu = np.asarray(mu, dtype=complex)
    if not np.any(p0) or not np.any(mu):
        raise ParameterDomainError("cos^2(phi) needs nonzero p0 and mu")
    G = _linalg.cholesky(R, "clutter covariance R")
    wp = _linalg.whiten(G, p0)
    wm = _linalg.whiten(G, mu)
    val = abs(np.vdot(wp, wm)) ** 2 / (np.vdot(wp, wp).real * np.vdot(wm, wm).real)
    return _clamp_unit(float(val), "cos^2(phi)")


@dataclass(frozen=True)
class ScenarioMetrics:
    scr: float
    cos2_theta: float
    xi: float
    cos2_phi: float
    delta2: float
    rho_theta: float

    @property
    def scr_db(self) -> float:
        return float(db(self.scr)) if self.scr > 0 else -np.inf

    @property
    def xi_db(self) -> float:
        return float(db(self.xi)) if self.xi > 0 else -np.inf


def _frozen(a, dtype=complex):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Scenario:
    """One experiment: dimensions, clutter statistics and signal geometry.

    ``p0`` is the true signal injected under H1.  ``alpha`` holds the
    coordinates of ``p0`` in the columns of ``A`` (least squares when ``p0``
    leaves the subspace) unless given explicitly.
    """

    N: int
    p: int
    L: int
    R: np.ndarray
    mu: np.ndarray
    A: np.ndarray
    p0: np.ndarray
    alpha: Optional[np.ndarray] = None
    eps: Optional[float] = field(default=None, compare=False)

    def __post_init__(self):
        N, p, L = int(self.N), int(self.p), int(self.L)
        if N < 1 or p < 1 or L < 1:
            raise ParameterDomainError("N, p and L must be positive")
        if p >= N:
            raise ParameterDomainError(f"need p < N, got p={p}, N={N}")
        R = _frozen(self.R)
        A = _frozen(np.reshape(self.A, (N, p)))
        mu = _frozen(np.reshape(self.mu, (N,)))
        p0 = _frozen(np.reshape(self.p0, (N,)))
        if R.shape != (N, N):
            raise ParameterDomainError(f"R must be {N}x{N}")
        if not np.allclose(R, R.conj().T, atol=1e-12 * np.abs(R).max()):
            raise ParameterDomainError("R must be Hermitian")
        _linalg.cholesky(R, "clutter covariance R")
        _check_rank(A)
        if self.alpha is None:
            alpha = np.linalg.lstsq(A, p0, rcond=None)[0]
        else:
            alpha = np.reshape(self.alpha, (p,))
        for name, value in (("N", N), ("p", p), ("L", L), ("R", R), ("A", A),
                            ("mu", mu), ("p0", p0), ("alpha", _frozen(alpha))):
            object.__setattr__(self, name, value)

    @property
    def signal(self) -> np.ndarray:
        """Vector added to the test cell under H1."""
        return self.p0

    def metrics(self) -> ScenarioMetrics:
        has_p0 = bool(np.any(self.p0))
        scr = compute_scr(self.p0, self.R, self.L)
        c2t = compute_cos2_theta(self.p0, self.A, self.R) if has_p0 else 1.0
        xi = compute_xi(self.mu, self.R)
        c2p = compute_cos2_phi(self.p0, self.mu, self.R) if has_p0 and xi > 0 else 0.0
        return ScenarioMetrics(scr=scr, cos2_theta=c2t, xi=xi, cos2_phi=c2p,
                               delta2=scr * (1.0 - c2t), rho_theta=scr * c2t)

    def replace(self, **changes) -> "Scenario":
        fields = dict(N=self.N, p=self.p, L=self.L, R=self.R, mu=self.mu, A=self.A,
                      p0=self.p0, alpha=self.alpha, eps=self.eps)
        if "p0" in changes and "alpha" not in changes:
            fields["alpha"] = None
        fields.update(changes)
        return Scenario(**fields)

    # -- JSON ---------------------------------------------------------------

    def to_dict(self) -> dict:
        d = {"N": self.N, "p": self.p, "L": self.L}
        if self.eps is not None:
            d["eps"] = self.eps
        else:
            d["R"] = complex_to_json(self.R)
        d["mu"] = complex_to_json(self.mu)
        d["A"] = complex_to_json(self.A)
        d["p0"] = complex_to_json(self.p0)
        d["alpha"] = complex_to_json(self.alpha)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        N = int(d["N"])
        eps = d.get("eps")
        if "R" in d:
            R = complex_from_json(d["R"])
        elif eps is not None:
            R = build_toeplitz_covariance(N, float(eps))
        else:
            raise ParameterDomainError("scenario needs either 'R' or 'eps'")
        alpha = complex_from_json(d["alpha"]) if d.get("alpha") is not None else None
        return cls(N=N, p=int(d["p"]), L=int(d["L"]), R=R,
                   mu=complex_from_json(d["mu"]), A=complex_from_json(d["A"]),
                   p0=complex_from_json(d["p0"]), alpha=alpha,
                   eps=None if eps is None else float(eps))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        return cls.from_dict(json.loads(text))


def complex_to_json(a) -> list:
    """Nested lists with each complex entry stored as ``[re, im]``."""
    a = np.asarray(a, dtype=complex)
    return np.stack([a.real, a.imag], axis=-1).tolist()


def complex_from_json(obj) -> np.ndarray:
    arr = np.asarray(obj, dtype=float)
    if arr.shape[-1] != 2:
        raise ParameterDomainError("complex arrays must be stored as [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]

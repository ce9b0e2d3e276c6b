"""Synthesis of ``A``, ``p0`` and ``mu`` that hit prescribed scenario metrics.

The procedure is sequential:

1. draw ``p`` steering columns for ``A``;
2. blend a random in-subspace direction with a whitened-orthogonal one and
   keep the blend whose mismatch ``cos^2(theta)`` is closest to target;
3. scale it so the SCR is met exactly;
4. scan clutter-mean steering frequencies for the ``cos^2(phi)`` closest to
   target and scale the winner so ``xi`` is met exactly.

Steps 3 and 4's scalings are exact; the two cosines are only as good as the
candidate grids, and the achieved values are always reported.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy import optimize

from . import _linalg
from .errors import GenerationError, ParameterDomainError
from .model import Scenario, build_toeplitz_covariance, compute_cos2_phi, compute_cos2_theta, \
    compute_scr, compute_xi, from_db

MAX_COND = 1e8
MAX_REDRAWS = 100


@dataclass(frozen=True)
class GenTargets:
    """Targets for the generator.

    ``scr_db=None`` produces a zero signal and ``xi_db=None`` a zero clutter
    mean.  ``random_weights`` draws the blend weights uniformly at random
    instead of on an even grid; ``refine`` polishes the grid optimum with a
    bounded scalar minimization.
    """

    cos2_theta_star: float = 1.0
    scr_db: Optional[float] = 20.0
    xi_db: Optional[float] = 35.0
    cos2_phi_star: float = 0.3
    n_weight_candidates: int = 300
    n_freq_candidates: int = 500
    random_weights: bool = False
    refine: bool = False
    max_residual: float = 0.2

    def __post_init__(self):
        for name in ("cos2_theta_star", "cos2_phi_star"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ParameterDomainError(f"{name} must lie in [0, 1], got {v}")
        if self.n_weight_candidates < 2 or self.n_freq_candidates < 2:
            raise ParameterDomainError("candidate counts must be at least 2")
        for name in ("scr_db", "xi_db"):
            v = getattr(self, name)
            if v is not None and not math.isfinite(v):
                raise ParameterDomainError(f"{name} must be finite (use None for zero)")

    def replace(self, **changes) -> "GenTargets":
        d = asdict(self)
        d.update(changes)
        return GenTargets(**d)


@dataclass(frozen=True)
class GenReport:
    """Achieved metrics, residuals and the chosen grid points."""

    cos2_theta: float
    scr: float
    xi: float
    cos2_phi: float
    w_opt: float
    f_c: float
    cos2_theta_residual: float
    cos2_phi_residual: float
    scr_rel_residual: float
    xi_rel_residual: float
    cos2_theta_grid_step: float
    cos2_phi_grid_step: float

    def to_dict(self) -> dict:
        return {k: (None if isinstance(v, float) and not math.isfinite(v) else v)
                for k, v in asdict(self).items()}


def steering_vector(N: int, f) -> np.ndarray:
    """``[1, e^{-j 2 pi f}, ..., e^{-j 2 pi (N-1) f}]``; vectorized over ``f``."""
    n = np.arange(N)
    f = np.asarray(f, dtype=float)
    return np.exp(-2j * np.pi * np.multiply.outer(n, f))


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def generate_signal_matrix(N: int, p: int, seed=None) -> np.ndarray:
    """``p`` steering columns with distinct frequencies drawn from (-0.5, 0.5)."""
    if not 1 <= p < N:
        raise ParameterDomainError(f"need 1 <= p < N, got p={p}, N={N}")
    rng = _rng(seed)
    for _ in range(MAX_REDRAWS):
        f = rng.uniform(-0.5, 0.5, size=p)
        if np.any(np.abs(f) >= 0.5) or np.unique(f).size < p:
            continue
        A = steering_vector(N, f)
        s = np.linalg.svd(A, compute_uv=False)
        if s[-1] > 0 and s[0] / s[-1] < MAX_COND:
            return A
    raise GenerationError(f"could not draw a well-conditioned {N}x{p} signal matrix "
                          f"in {MAX_REDRAWS} attempts")


class _WhitenedGeometry:
    """Cholesky-whitened quantities shared by the cosine evaluations."""

    def __init__(self, R, A=None):
        self.G = _linalg.cholesky(R, "clutter covariance R")
        if A is not None:
            Q, _ = np.linalg.qr(_linalg.whiten(self.G, A))
            self.Q = Q

    def w(self, V):
        return _linalg.whiten(self.G, V)

    def cos2_theta(self, V):
        """Column-wise ``cos^2(theta)`` of the (unwhitened) columns of ``V``."""
        W = self.w(V)
        num = np.sum(np.abs(self.Q.conj().T @ W) ** 2, axis=0)
        den = np.sum(np.abs(W) ** 2, axis=0)
        return np.clip(num / den, 0.0, 1.0)


def _grid_step(values) -> float:
    v = np.sort(np.asarray(values))
    return float(np.max(np.diff(v))) if v.size > 1 else 0.0


def _pick(values, target, what, max_residual):
    resid = np.abs(values - target)
    i = int(np.argmin(resid))
    if resid[i] > max_residual:
        raise GenerationError(
            f"no {what} candidate within {max_residual} of target {target}: achievable range "
            f"[{values.min():.4f}, {values.max():.4f}]")
    return i


def _refine(fun, grid, i):
    """Bounded scalar minimization on the bracket around grid index ``i``."""
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, len(grid) - 1)]
    if hi <= lo:
        return grid[i]
    res = optimize.minimize_scalar(fun, bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-12})
    return res.x if fun(res.x) < fun(grid[i]) else grid[i]


def generate_p0(A, R, L: int, targets: GenTargets, seed=None):
    """Signal ``p0`` at the target mismatch and SCR.

    Returns ``(p0, info)`` with ``info`` holding the chosen weight, the
    achieved ``cos^2(theta)`` and SCR, and the observed grid step.
    """
    A = np.asarray(A, dtype=complex)
    N, p = A.shape
    rng = _rng(seed)
    geo = _WhitenedGeometry(R, A)
    alpha0 = (rng.standard_normal(p) + 1j * rng.standard_normal(p)) / math.sqrt(2.0)
    p_tmp = A @ alpha0
    p_tmp = p_tmp / np.linalg.norm(p_tmp)
    U, _, _ = np.linalg.svd(np.linalg.solve(R, A), full_matrices=True)
    p_perp = U[:, -1]

    if targets.random_weights:
        w = rng.uniform(0.0, 1.0, size=targets.n_weight_candidates)
    else:
        w = np.linspace(0.0, 1.0, targets.n_weight_candidates)
    cands = np.outer(p_tmp, w) + np.outer(p_perp, 1.0 - w)
    c2t = geo.cos2_theta(cands)
    i = _pick(c2t, targets.cos2_theta_star, "cos^2(theta)", targets.max_residual)
    w_opt = float(w[i])
    if targets.refine:
        order = np.argsort(w)
        ws = w[order]
        j = int(np.searchsorted(ws, w_opt))
        blend = lambda t: abs(float(geo.cos2_theta((t * p_tmp + (1 - t) * p_perp)[:, None])[0])
                              - targets.cos2_theta_star)
        w_opt = float(_refine(blend, ws, j))
    p0n = w_opt * p_tmp + (1.0 - w_opt) * p_perp

    if targets.scr_db is None:
        p0 = np.zeros(N, dtype=complex)
    else:
        rho_n = float(np.sum(np.abs(geo.w(p0n)) ** 2))
        lam = math.sqrt((L + 1.0) * float(from_db(targets.scr_db)) / (L * rho_n))
        p0 = lam * p0n
    info = dict(w_opt=w_opt,
                cos2_theta=compute_cos2_theta(p0n, A, R),
                scr=compute_scr(p0, R, L),
                cos2_theta_grid_step=_grid_step(c2t),
                direction=p0n)
    return p0, info


def generate_mu(p0, R, targets: GenTargets, direction=None):
    """Clutter mean at the target ``cos^2(phi)`` and ``xi``.

    ``direction`` is the signal direction used for ``cos^2(phi)``; it
    defaults to ``p0`` and must be supplied when ``p0`` is zero.
    Returns ``(mu, info)``.
    """
    R = np.asarray(R, dtype=complex)
    N = R.shape[0]
    ref = np.asarray(p0 if direction is None else direction, dtype=complex)
    if not np.any(ref):
        raise ParameterDomainError("cos^2(phi) needs a nonzero signal direction")
    geo = _WhitenedGeometry(R)
    f = np.linspace(-0.5, 0.5, targets.n_freq_candidates, endpoint=False)
    wr = geo.w(ref)
    wr = wr / np.linalg.norm(wr)

    def cos2phi(freqs):
        W = geo.w(steering_vector(N, np.atleast_1d(freqs)))
        return np.abs(wr.conj() @ W) ** 2 / np.sum(np.abs(W) ** 2, axis=0)

    c2p = cos2phi(f)
    k = _pick(c2p, targets.cos2_phi_star, "cos^2(phi)", targets.max_residual)
    f_c = float(f[k])
    if targets.refine:
        f_c = float(_refine(lambda t: abs(float(cos2phi(t)[0]) - targets.cos2_phi_star), f, k))
    mu0 = steering_vector(N, f_c)
    if targets.xi_db is None:
        mu = np.zeros(N, dtype=complex)
    else:
        mu = math.sqrt(float(from_db(targets.xi_db)) / compute_xi(mu0, R)) * mu0
    info = dict(f_c=f_c, cos2_phi=compute_cos2_phi(ref, mu0, R), xi=compute_xi(mu, R),
                cos2_phi_grid_step=_grid_step(c2p))
    return mu, info


def generate_scenario(N: int, p: int, L: int, eps: float = 0.95,
                      targets: GenTargets = GenTargets(), seed=0):
    """Full scenario plus :class:`GenReport` for a Toeplitz clutter covariance.

    Independent child streams of ``seed`` drive ``A`` and ``alpha0``, so
    changing only the SCR or ``xi`` target leaves the geometry untouched.
    """
    R = build_toeplitz_covariance(N, eps)
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    s_A, s_p0 = ss.spawn(2)
    A = generate_signal_matrix(N, p, np.random.default_rng(s_A))
    p0, ip = generate_p0(A, R, L, targets, np.random.default_rng(s_p0))
    mu, im = generate_mu(p0, R, targets, direction=ip["direction"])
    scen = Scenario(N=N, p=p, L=L, R=R, mu=mu, A=A, p0=p0, eps=eps)
    scr_t = 0.0 if targets.scr_db is None else float(from_db(targets.scr_db))
    xi_t = 0.0 if targets.xi_db is None else float(from_db(targets.xi_db))
    report = GenReport(
        cos2_theta=ip["cos2_theta"], scr=ip["scr"], xi=im["xi"], cos2_phi=im["cos2_phi"],
        w_opt=ip["w_opt"], f_c=im["f_c"],
        cos2_theta_residual=abs(ip["cos2_theta"] - targets.cos2_theta_star),
        cos2_phi_residual=abs(im["cos2_phi"] - targets.cos2_phi_star),
        scr_rel_residual=abs(ip["scr"] - scr_t) / scr_t if scr_t else abs(ip["scr"]),
        xi_rel_residual=abs(im["xi"] - xi_t) / xi_t if xi_t else abs(im["xi"]),
        cos2_theta_grid_step=ip["cos2_theta_grid_step"],
        cos2_phi_grid_step=im["cos2_phi_grid_step"])
    return scen, report


def cos2_phi_range(direction, R, n_freq_candidates: int = 500):
    """``(min, max)`` of ``cos^2(phi)`` over the clutter-mean frequency grid.

    Useful for choosing a geometry in which a whole ``cos^2(phi)`` grid is
    reachable before running a sweep.
    """
    N = np.shape(R)[0]
    geo = _WhitenedGeometry(R)
    wr = geo.w(np.asarray(direction, dtype=complex))
    W = geo.w(steering_vector(N, np.linspace(-0.5, 0.5, n_freq_candidates, endpoint=False)))
    c = np.abs(wr.conj() @ W) ** 2 / (np.vdot(wr, wr).real * np.sum(np.abs(W) ** 2, axis=0))
    return float(c.min()), float(c.max())

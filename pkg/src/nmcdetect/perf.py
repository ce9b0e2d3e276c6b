"""Analytic detection and false-alarm probabilities of the proposed detectors.

Conditioned on the loss factor ``beta`` the GLRT statistic is a noncentral
complex F variate with ``p`` and ``L-N`` degrees of freedom and
noncentrality ``beta * rho_theta``; ``beta`` itself is a (noncentral)
complex Beta variate with ``L-N+p`` and ``N-p`` degrees of freedom.  The
Rao and Wald statistics are functions of the same pair, so every PD/PFA is
a one-dimensional integral over ``beta``.  All combinatorial factors are
assembled in the log domain.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import gammaln, logsumexp

from .detectors import DetectorKind, parse_kind
from .errors import NumericError, ParameterDomainError


@dataclass(frozen=True)
class PerformanceModel:
    """Distribution parameters for given dimensions and signal geometry.

    ``rho_theta`` is the in-subspace SCR ``rho cos^2(theta)`` and ``delta2``
    the out-of-subspace part ``rho sin^2(theta)``.
    """

    N: int
    p: int
    L: int
    rho_theta: float = 0.0
    delta2: float = 0.0

    def __post_init__(self):
        if not (1 <= self.p < self.N):
            raise ParameterDomainError(f"need 1 <= p < N, got p={self.p}, N={self.N}")
        if self.L <= self.N:
            raise ParameterDomainError(f"need L > N, got L={self.L}, N={self.N}")
        if self.rho_theta < 0 or self.delta2 < 0:
            raise ParameterDomainError("noncentralities must be nonnegative")

    @classmethod
    def from_scr(cls, N, p, L, scr, cos2_theta=1.0):
        """Model for linear SCR ``scr`` and mismatch ``cos2_theta``."""
        return cls(N, p, L, rho_theta=scr * cos2_theta, delta2=scr * (1.0 - cos2_theta))

    @classmethod
    def from_metrics(cls, N, p, L, metrics):
        return cls(N, p, L, rho_theta=metrics.rho_theta, delta2=metrics.delta2)

    def null(self) -> "PerformanceModel":
        return PerformanceModel(self.N, self.p, self.L)

    @property
    def f_dofs(self):
        """Complex F degrees of freedom ``(p, L-N)``."""
        return self.p, self.L - self.N

    @property
    def beta_dofs(self):
        """Complex Beta degrees of freedom ``(L-N+p, N-p)``."""
        return self.L - self.N + self.p, self.N - self.p


@dataclass(frozen=True)
class QuadratureConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-14
    max_subdivisions: int = 200

    def __post_init__(self):
        if self.rel_tol <= 0:
            raise ParameterDomainError("rel_tol must be positive")


DEFAULT_QUAD = QuadratureConfig()


def log_binom(n, k):
    return gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)


def _log_ig_all(kmax: int, a: float) -> np.ndarray:
    """``log IG_{k+1}(a)`` for k = 0..kmax by a running term recurrence."""
    if a <= 0.0:
        return np.zeros(kmax + 1)
    m = np.arange(kmax + 1)
    log_terms = np.empty(kmax + 1)
    log_terms[0] = 0.0
    if kmax:
        log_terms[1:] = np.cumsum(math.log(a) - np.log(m[1:]))
    return np.logaddexp.accumulate(log_terms) - a


def inverse_gamma_IG(k: int, a: float) -> float:
    """``IG_k(a) = exp(-a) sum_{m<k} a^m / m!`` for ``k >= 1``.

    This is the regularized upper incomplete gamma function ``Q(k, a)``.
    """
    if k < 1:
        raise ParameterDomainError("IG index starts at 1")
    if a < 0:
        raise ParameterDomainError("IG argument must be nonnegative")
    return float(np.exp(_log_ig_all(k - 1, float(a))[-1]))


@functools.lru_cache(maxsize=None)
def _coeffs(N: int, p: int, L: int):
    """Log-domain constants reused by every density and CDF evaluation."""
    m = L - N
    M = m + p - 1
    a, b = L - N + p, N - p
    k_cdf = np.arange(m)
    log_c_cdf = log_binom(M, k_cdf + p)
    log_c_g = log_binom(M, np.arange(p))
    k_pdf = np.arange(a + 1)
    log_c_pdf = -(gammaln(k_pdf + 1.0) + gammaln(a - k_pdf + 1.0) + gammaln(b + k_pdf))
    log_lead = math.log(a) + gammaln(L)
    log_beta_fn = gammaln(a) + gammaln(b) - gammaln(a + b)
    return dict(m=m, M=M, a=a, b=b, k_cdf=k_cdf, log_c_cdf=log_c_cdf, log_c_g=log_c_g,
                k_pdf=k_pdf, log_c_pdf=log_c_pdf, log_lead=log_lead, log_beta_fn=log_beta_fn)


def _log(x):
    return math.log(x) if x > 0 else -math.inf


def pdf_beta_h0(beta: float, model: PerformanceModel) -> float:
    """Central complex Beta density of the loss factor."""
    c = _coeffs(model.N, model.p, model.L)
    a, b = c["a"], c["b"]
    if b < 1:
        raise ParameterDomainError("density needs N - p >= 1")
    if not 0.0 <= beta <= 1.0:
        return 0.0
    lb = (a - 1) * _log(beta) if a > 1 else 0.0
    l1b = (b - 1) * _log(1.0 - beta) if b > 1 else 0.0
    val = lb + l1b - c["log_beta_fn"]
    return float(math.exp(val)) if val > -math.inf else 0.0


def pdf_beta_h1(beta: float, model: PerformanceModel) -> float:
    """Noncentral complex Beta density of the loss factor.

    Reduces to :func:`pdf_beta_h0` when ``delta2 == 0``.
    """
    c = _coeffs(model.N, model.p, model.L)
    if c["b"] < 1:
        raise ParameterDomainError("density needs N - p >= 1")
    d2 = model.delta2
    if d2 == 0.0:
        return pdf_beta_h0(beta, model)
    if not 0.0 < beta < 1.0:
        return 0.0
    a, b, k = c["a"], c["b"], c["k_pdf"]
    series = c["log_c_pdf"] + k * math.log(d2) + (b + k - 1) * math.log1p(-beta)
    val = c["log_lead"] - d2 * beta + (a - 1) * math.log(beta) + logsumexp(series)
    return float(math.exp(val))


def cdf_cond_P0(eta: float, model: PerformanceModel) -> float:
    """CDF of the GLRT statistic under H0 (does not depend on ``beta``)."""
    return cdf_cond_P1(eta, 1.0, model.null())


def cdf_cond_P1(eta: float, beta: float, model: PerformanceModel) -> float:
    """CDF of the GLRT statistic given ``beta`` under H1."""
    if eta < 0:
        raise ParameterDomainError("eta must be nonnegative")
    if eta == 0.0:
        return 0.0
    if math.isinf(eta):
        return 1.0
    c = _coeffs(model.N, model.p, model.L)
    m, M, p = c["m"], c["M"], model.p
    k = c["k_cdf"]
    lead = c["log_c_cdf"] + (k + p) * math.log(eta) - M * math.log1p(eta)
    lam = model.rho_theta * beta / (1.0 + eta)
    val = logsumexp(lead + _log_ig_all(m - 1, lam))
    return float(min(math.exp(val), 1.0))


def g_tail(eta: float, model: PerformanceModel) -> float:
    """Null survival function ``1 - P0(eta)`` as the finite complementary sum."""
    if eta < 0:
        raise ParameterDomainError("eta must be nonnegative")
    if math.isinf(eta):
        return 0.0
    c = _coeffs(model.N, model.p, model.L)
    t = np.arange(model.p)
    le = _log(eta)
    with np.errstate(invalid="ignore"):
        powers = np.where(t == 0, 0.0, t * le)
    val = logsumexp(c["log_c_g"] + powers - c["M"] * math.log1p(eta))
    return float(min(math.exp(val), 1.0))


def _integrate(f, lo, hi, qc: QuadratureConfig, what: str) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(f, lo, hi, epsabs=qc.abs_tol, epsrel=qc.rel_tol,
                                  limit=qc.max_subdivisions)
    # roundoff-limited results (small err) are accepted
    if not np.isfinite(val) or err > max(1e-8, 1e3 * qc.rel_tol * abs(val)):
        raise NumericError(f"{what}: quadrature did not converge (estimate {val:.6g}, "
                           f"achieved error {err:.3g})")
    return float(val)


def _clip01(v):
    return float(min(max(v, 0.0), 1.0))


# -- GLRT ---------------------------------------------------------------------

def pfa_sglrt_nmc(eta_G: float, model: PerformanceModel) -> float:
    """Closed-form false-alarm probability of the GLRT."""
    return g_tail(eta_G, model)


def pfa_sglrt_nmc_integral(eta_G, model, qc=DEFAULT_QUAD) -> float:
    """Same probability through the integral over ``beta``; cross-check only."""
    null = model.null()
    return _clip01(_integrate(lambda b: (1.0 - cdf_cond_P0(eta_G, null)) * pdf_beta_h0(b, null),
                              0.0, 1.0, qc, "PFA integral"))


def pd_sglrt_nmc(eta_G: float, model: PerformanceModel, qc=DEFAULT_QUAD) -> float:
    if eta_G < 0:
        raise ParameterDomainError("eta must be nonnegative")
    val = _integrate(lambda b: cdf_cond_P1(eta_G, b, model) * pdf_beta_h1(b, model),
                     0.0, 1.0, qc, "PD (GLRT)")
    return _clip01(1.0 - val)


# -- Rao ----------------------------------------------------------------------

def _check_eta_rao(eta_R):
    if not 0.0 <= eta_R < 1.0:
        raise ParameterDomainError(f"Rao threshold must lie in [0, 1), got {eta_R}")


def pfa_srao_nmc(eta_R: float, model: PerformanceModel, qc=DEFAULT_QUAD) -> float:
    _check_eta_rao(eta_R)
    null = model.null()
    w = 1.0 - eta_R

    def f(u):
        b = eta_R + u * w
        if b <= eta_R:
            return pdf_beta_h0(b, null) if eta_R == 0 else 0.0
        return g_tail(eta_R / (b - eta_R), null) * pdf_beta_h0(b, null)

    return _clip01(w * _integrate(f, 0.0, 1.0, qc, "PFA (Rao)"))


def pd_srao_nmc(eta_R: float, model: PerformanceModel, qc=DEFAULT_QUAD) -> float:
    _check_eta_rao(eta_R)
    w = 1.0 - eta_R

    def f(u):
        b = eta_R + u * w
        thr = eta_R / (b - eta_R) if b > eta_R else (0.0 if eta_R == 0 else math.inf)
        return (1.0 - cdf_cond_P1(thr, b, model)) * pdf_beta_h1(b, model)

    return _clip01(w * _integrate(f, 0.0, 1.0, qc, "PD (Rao)"))


# -- Wald / AMF -----------------------------------------------------------------

def pfa_samf_nmc(eta_W: float, model: PerformanceModel, qc=DEFAULT_QUAD) -> float:
    if eta_W < 0:
        raise ParameterDomainError("eta must be nonnegative")
    null = model.null()
    return _clip01(_integrate(lambda b: g_tail(b * eta_W, null) * pdf_beta_h0(b, null),
                              0.0, 1.0, qc, "PFA (AMF)"))


def pd_samf_nmc(eta_W: float, model: PerformanceModel, qc=DEFAULT_QUAD) -> float:
    if eta_W < 0:
        raise ParameterDomainError("eta must be nonnegative")
    val = _integrate(lambda b: cdf_cond_P1(b * eta_W, b, model) * pdf_beta_h1(b, model),
                     0.0, 1.0, qc, "PD (AMF)")
    return _clip01(1.0 - val)


# -- dispatch and inversion -----------------------------------------------------

def pfa(kind, eta, model, qc=DEFAULT_QUAD) -> float:
    kind = parse_kind(kind)
    if kind is DetectorKind.SGLRT_NMC:
        return pfa_sglrt_nmc(eta, model)
    if kind is DetectorKind.SRAO_NMC:
        return pfa_srao_nmc(eta, model, qc)
    if kind is DetectorKind.SAMF_NMC:
        return pfa_samf_nmc(eta, model, qc)
    raise ParameterDomainError(f"no analytic false-alarm probability for {kind.value}")


def pd(kind, eta, model, qc=DEFAULT_QUAD) -> float:
    kind = parse_kind(kind)
    if kind is DetectorKind.SGLRT_NMC:
        return pd_sglrt_nmc(eta, model, qc)
    if kind is DetectorKind.SRAO_NMC:
        return pd_srao_nmc(eta, model, qc)
    if kind is DetectorKind.SAMF_NMC:
        return pd_samf_nmc(eta, model, qc)
    raise ParameterDomainError(f"no analytic detection probability for {kind.value}")


def threshold_from_pfa(kind, target_pfa: float, model: PerformanceModel,
                       qc=DEFAULT_QUAD, max_iter: int = 200) -> float:
    """Invert the (strictly decreasing) false-alarm probability by bisection."""
    kind = parse_kind(kind)
    if not 0.0 < target_pfa < 1.0:
        raise ParameterDomainError(f"target PFA must lie in (0, 1), got {target_pfa}")
    f = functools.partial(pfa, kind, model=model, qc=qc)
    lo = 0.0
    if kind is DetectorKind.SRAO_NMC:
        hi = 1.0 - 1e-15
    else:
        hi = 1.0
        for _ in range(200):
            if f(hi) < target_pfa:
                break
            lo, hi = hi, 2.0 * hi
        else:
            raise NumericError("could not bracket the threshold")
    if f(hi) > target_pfa:
        raise NumericError("could not bracket the threshold")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if f(mid) > target_pfa:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-13 * max(hi, 1e-300):
            break
    eta = 0.5 * (lo + hi)
    if abs(f(eta) - target_pfa) > 1e-3 * target_pfa:
        raise NumericError(f"threshold inversion stalled at PFA {f(eta):.6g}")
    return eta

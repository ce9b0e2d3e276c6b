"""Seeded Monte Carlo engine: clutter sampling, threshold calibration, PD/PFA
estimation and parameter sweeps.

Reproducibility contract
------------------------
Trials are split into fixed-size chunks.  Chunk ``c`` of stream ``s`` at
sweep point ``j`` draws from ``SeedSequence(seed, spawn_key=(s, j, c))``,
so results depend only on ``(seed, chunk_size)`` and never on the number
of worker threads or on scheduling order.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import _linalg, perf
from .detectors import DetectorKind, evaluate, parse_kind
from .errors import DegenerateDataError, GenerationError, ParameterDomainError
from .model import Scenario
from .scenario_gen import GenReport, GenTargets, generate_scenario

THREADS_ENV = "NMCDETECT_THREADS"

# independent random streams
STREAM_H0_CAL = 0
STREAM_H1 = 1
STREAM_H0_EVAL = 2

SWEEPS = ("scr_db", "cos2_theta", "xi_db", "cos2_phi", "L", "p")


def default_threads() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ParameterDomainError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
        if n < 1:
            raise ParameterDomainError(f"{THREADS_ENV} must be positive")
        return n
    return os.cpu_count() or 1


@dataclass(frozen=True)
class TrialConfig:
    """Trial counts, seed and threshold policy.

    Parameters
    ----------
    n_threshold_trials : H0 draws used to calibrate an empirical threshold.
    n_pd_trials : H1 draws per PD estimate.
    n_pfa_trials : H0 draws per PFA estimate (defaults to ``n_threshold_trials``).
    threshold_method : ``"analytic"`` uses the closed-form inversion for the
        detectors that have one; ``"mc"`` calibrates every detector empirically.
    """

    n_threshold_trials: int = 100_000
    n_pd_trials: int = 10_000
    seed: int = 0
    target_pfa: float = 1e-3
    n_pfa_trials: Optional[int] = None
    chunk_size: int = 2048
    threads: Optional[int] = None
    redraw_budget: float = 0.01
    threshold_method: str = "analytic"

    def __post_init__(self):
        if min(self.n_threshold_trials, self.n_pd_trials, self.chunk_size) < 1:
            raise ParameterDomainError("trial counts and chunk size must be >= 1")
        if self.n_pfa_trials is not None and self.n_pfa_trials < 1:
            raise ParameterDomainError("n_pfa_trials must be >= 1")
        if not 0.0 < self.target_pfa < 1.0:
            raise ParameterDomainError("target_pfa must lie in (0, 1)")
        if self.target_pfa * self.n_threshold_trials < 10:
            raise ParameterDomainError(
                "target_pfa * n_threshold_trials must be >= 10 for a usable quantile")
        if self.seed < 0:
            raise ParameterDomainError("seed must be nonnegative")
        if self.threshold_method not in ("analytic", "mc"):
            raise ParameterDomainError("threshold_method must be 'analytic' or 'mc'")
        if self.threads is not None and self.threads < 1:
            raise ParameterDomainError("threads must be positive")

    @property
    def pfa_trials(self) -> int:
        return self.n_pfa_trials or self.n_threshold_trials

    def replace(self, **changes) -> "TrialConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class CurvePoint:
    sweep_value: float
    estimate: float
    trials: int
    std_error: float


@dataclass
class EmpiricalCurve:
    """One detector's curve over a sweep.

    ``gaps`` lists sweep values the generator could not realize, with the
    reason; they are absent from ``points``.
    """

    sweep_name: str
    detector: str
    provenance: str  # "monte-carlo" | "analytic"
    metric: str = "pd"
    points: list = field(default_factory=list)
    gaps: list = field(default_factory=list)

    def values(self):
        return np.array([pt.sweep_value for pt in self.points])

    def estimates(self):
        return np.array([pt.estimate for pt in self.points])


def binomial_se(est: float, n: int) -> float:
    return math.sqrt(max(est * (1.0 - est), 0.0) / n)


# -- sampling -----------------------------------------------------------------

def chunk_rng(seed: int, stream: int, point: int, chunk: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, point, chunk)))


def sample_clutter_batch(scenario: Scenario, count: int, rng, hypothesis: str = "h0"):
    """``count`` draws of ``(x, X_L)`` with shapes ``(count, N)``, ``(count, N, L)``.

    Every vector is ``mu + G w`` with ``G`` the lower Cholesky factor of
    ``R`` and ``w`` standard complex normal; under ``"h1"`` the signal is
    added to ``x`` only.
    """
    if hypothesis not in ("h0", "h1"):
        raise ParameterDomainError("hypothesis must be 'h0' or 'h1'")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    G = _linalg.cholesky(scenario.R, "clutter covariance R")
    N, L = scenario.N, scenario.L
    shape = (count, N, L + 1)
    W = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * math.sqrt(0.5)
    V = G @ W + scenario.mu[:, None]
    x = V[..., 0]
    if hypothesis == "h1":
        x = x + scenario.signal
    return x, V[..., 1:]


def simulate_statistics(kinds, scenario: Scenario, n: int, config: TrialConfig,
                        hypothesis: str = "h0", stream: int = STREAM_H0_CAL, point: int = 0):
    """Detector statistics over ``n`` seeded draws, as ``{kind: array}``.

    Draws flagged degenerate are replaced from the same chunk stream; more
    than ``redraw_budget`` of a chunk raises :class:`DegenerateDataError`.
    """
    kinds = [parse_kind(k) for k in kinds]
    cs = config.chunk_size
    n_chunks = -(-n // cs)

    def work(c):
        count = min(cs, n - c * cs)
        rng = chunk_rng(config.seed, stream, point, c)
        budget = math.ceil(config.redraw_budget * count)
        parts = {k: [] for k in kinds}
        got = redrawn = 0
        while got < count:
            x, X_L = sample_clutter_batch(scenario, count - got, rng, hypothesis)
            vals, bad = evaluate(kinds, x, X_L, scenario.A)
            redrawn += int(bad.sum())
            if redrawn > budget:
                raise DegenerateDataError(
                    f"{redrawn} degenerate draws in a chunk of {count} exceed the re-draw budget "
                    f"({config.redraw_budget:.0%}); check L >= N+1 and the conditioning of R")
            for k in kinds:
                parts[k].append(vals[k][~bad])
            got += int((~bad).sum())
        return {k: np.concatenate(parts[k]) for k in kinds}

    threads = config.threads or default_threads()
    if threads == 1 or n_chunks == 1:
        results = [work(c) for c in range(n_chunks)]
    else:
        with ThreadPoolExecutor(max_workers=min(threads, n_chunks)) as ex:
            results = list(ex.map(work, range(n_chunks)))
    return {k: np.concatenate([r[k] for r in results]) for k in kinds}


# -- thresholds and probabilities -----------------------------------------------

def empirical_quantile(sample, pfa: float) -> float:
    """Order statistic ``ceil((1 - pfa) n)`` (1-based) of the sorted sample."""
    s = np.sort(np.asarray(sample))
    k = math.ceil((1.0 - pfa) * s.size - 1e-9)
    return float(s[min(max(k, 1), s.size) - 1])


def calibrate_thresholds_mc(kinds, scenario: Scenario, config: TrialConfig, point: int = 0):
    """Empirical thresholds for several detectors from one set of H0 draws."""
    stats = simulate_statistics(kinds, scenario, config.n_threshold_trials, config,
                                "h0", STREAM_H0_CAL, point)
    return {k: empirical_quantile(v, config.target_pfa) for k, v in stats.items()}


def calibrate_threshold_mc(kind, scenario: Scenario, config: TrialConfig, point: int = 0) -> float:
    kind = parse_kind(kind)
    return calibrate_thresholds_mc([kind], scenario, config, point)[kind]


_ANALYTIC_CACHE: dict = {}


def analytic_threshold(kind, N: int, p: int, L: int, pfa: float) -> float:
    """Closed-form threshold, memoized per ``(kind, N, p, L, pfa)``."""
    kind = parse_kind(kind)
    key = (kind, N, p, L, pfa)
    if key not in _ANALYTIC_CACHE:
        _ANALYTIC_CACHE[key] = perf.threshold_from_pfa(kind, pfa, perf.PerformanceModel(N, p, L))
    return _ANALYTIC_CACHE[key]


def _exceedance(kinds, scenario, thresholds, n, config, hypothesis, stream, point):
    stats = simulate_statistics(kinds, scenario, n, config, hypothesis, stream, point)
    out = {}
    for k, v in stats.items():
        est = float(np.mean(v > thresholds[k]))
        out[k] = (est, binomial_se(est, n))
    return out


def estimate_pd_mc(kind, scenario: Scenario, threshold: float, config: TrialConfig,
                   point: int = 0):
    """``(PD estimate, binomial standard error)`` over ``n_pd_trials`` H1 draws."""
    kind = parse_kind(kind)
    return _exceedance([kind], scenario, {kind: threshold}, config.n_pd_trials, config,
                       "h1", STREAM_H1, point)[kind]


def estimate_pds_mc(kinds, scenario, thresholds, config, point=0):
    """Like :func:`estimate_pd_mc` for several detectors sharing the draws."""
    kinds = [parse_kind(k) for k in kinds]
    thresholds = {parse_kind(k): v for k, v in thresholds.items()}
    return _exceedance(kinds, scenario, thresholds, config.n_pd_trials, config,
                       "h1", STREAM_H1, point)


def estimate_pfas_mc(kinds, scenario, thresholds, config, point=0):
    """Empirical H0 exceedance over ``pfa_trials`` draws, independent of calibration."""
    kinds = [parse_kind(k) for k in kinds]
    thresholds = {parse_kind(k): v for k, v in thresholds.items()}
    return _exceedance(kinds, scenario, thresholds, config.pfa_trials, config,
                       "h0", STREAM_H0_EVAL, point)


def estimate_pfa_mc(kind, scenario, threshold, config, point=0):
    kind = parse_kind(kind)
    return estimate_pfas_mc([kind], scenario, {kind: threshold}, config, point)[kind]


# -- sweeps -----------------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioTemplate:
    """Generator inputs; sweeps override one field per grid point.

    The geometry seed is fixed, so points differing only in SCR or ``xi``
    share ``A`` and the signal/mean directions.
    """

    N: int = 12
    p: int = 3
    L: int = 24
    eps: float = 0.95
    targets: GenTargets = GenTargets()
    geometry_seed: int = 0

    def build(self, **overrides):
        t = {"scr_db": "scr_db", "cos2_theta": "cos2_theta_star", "xi_db": "xi_db",
             "cos2_phi": "cos2_phi_star"}
        dims = dict(N=self.N, p=self.p, L=self.L)
        tchanges = {}
        for k, v in overrides.items():
            if k in t:
                tchanges[t[k]] = v
            elif k in ("L", "p", "N"):
                dims[k] = int(v)
            else:
                raise ParameterDomainError(f"cannot override {k!r}")
        targets = self.targets.replace(**tchanges) if tchanges else self.targets
        return generate_scenario(dims["N"], dims["p"], dims["L"], self.eps, targets,
                                 self.geometry_seed)


@dataclass(frozen=True)
class SweepSpec:
    name: str
    grid: tuple

    def __post_init__(self):
        if self.name not in SWEEPS:
            raise ParameterDomainError(f"sweep must be one of {SWEEPS}, got {self.name!r}")
        if len(self.grid) == 0:
            raise ParameterDomainError("sweep grid is empty")
        object.__setattr__(self, "grid", tuple(float(g) for g in self.grid))


def _null_reference(scen: Scenario) -> Scenario:
    return scen.replace(mu=np.zeros(scen.N, dtype=complex))


def sweep(kinds: Sequence, template: ScenarioTemplate, spec: SweepSpec, config: TrialConfig,
          metric: str = "pd", analytic: bool = True, progress=None):
    """PD or PFA curves over one scenario parameter.

    Threshold policy
    ----------------
    * Detectors with a closed-form PFA use it (``threshold_method="analytic"``)
      or are calibrated once per ``(N, p, L)``; their statistics do not
      depend on ``mu`` or ``R``, so one threshold serves every point.
    * For ``metric="pd"`` the remaining detectors are recalibrated on the H0
      version of every grid point, which keeps their PFA on target.
    * For ``metric="pfa"`` the remaining detectors keep the threshold
      calibrated on zero-mean clutter of the same ``(N, p, L, R, A)`` — the
      setting they are designed for — so any drift in PFA is visible.

    Returns a list of :class:`EmpiricalCurve`: one Monte Carlo curve per
    detector followed by analytic curves where available.
    """
    if metric not in ("pd", "pfa"):
        raise ParameterDomainError("metric must be 'pd' or 'pfa'")
    kinds = [parse_kind(k) for k in kinds]
    mc = {k: EmpiricalCurve(spec.name, k.value, "monte-carlo", metric) for k in kinds}
    an = {k: EmpiricalCurve(spec.name, k.value, "analytic", metric)
          for k in kinds if analytic and k.has_analytic}
    invariant_thr: dict = {}
    reference_thr: dict = {}

    for j, value in enumerate(spec.grid):
        try:
            scen, report = template.build(**{spec.name: value})
        except (GenerationError, ParameterDomainError) as exc:
            for c in list(mc.values()) + list(an.values()):
                c.gaps.append((value, str(exc)))
            continue
        dims = (scen.N, scen.p, scen.L)
        thr = {}
        fixed = [k for k in kinds if k.has_analytic and config.threshold_method == "analytic"]
        for k in fixed:
            thr[k] = analytic_threshold(k, *dims, config.target_pfa)
        invariant = [k for k in kinds if not k.is_conventional and k not in fixed]
        missing = [k for k in invariant if (k, dims) not in invariant_thr]
        if missing:
            cal = calibrate_thresholds_mc(missing, _null_reference(scen), config, j)
            invariant_thr.update({(k, dims): v for k, v in cal.items()})
        thr.update({k: invariant_thr[(k, dims)] for k in invariant})
        conv = [k for k in kinds if k.is_conventional]
        if conv and metric == "pd":
            thr.update(calibrate_thresholds_mc(conv, scen, config, j))
        elif conv:
            missing = [k for k in conv if (k, dims) not in reference_thr]
            if missing:
                cal = calibrate_thresholds_mc(missing, _null_reference(scen), config, j)
                reference_thr.update({(k, dims): v for k, v in cal.items()})
            thr.update({k: reference_thr[(k, dims)] for k in conv})

        if metric == "pd":
            est = estimate_pds_mc(kinds, scen, thr, config, j)
            n = config.n_pd_trials
        else:
            est = estimate_pfas_mc(kinds, scen, thr, config, j)
            n = config.pfa_trials
        for k in kinds:
            mc[k].points.append(CurvePoint(value, est[k][0], n, est[k][1]))
        if an:
            model = perf.PerformanceModel.from_metrics(scen.N, scen.p, scen.L, scen.metrics())
            for k, curve in an.items():
                if metric == "pd":
                    val = perf.pd(k, analytic_threshold(k, *dims, config.target_pfa), model)
                else:
                    val = perf.pfa(k, analytic_threshold(k, *dims, config.target_pfa),
                                   model.null())
                curve.points.append(CurvePoint(value, val, 0, 0.0))
        if progress is not None:
            progress(j, value, report)
    return list(mc.values()) + list(an.values())


CSV_COLUMNS = ("sweep_value", "detector", "provenance", "estimate", "std_error", "trials")


def curves_to_csv(curves) -> str:
    """Tidy CSV of curves; generator gaps appear as rows with ``nan`` estimates."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for c in curves:
        rows = [(pt.sweep_value, pt.estimate, pt.std_error, pt.trials) for pt in c.points]
        rows += [(v, math.nan, math.nan, 0) for v, _ in c.gaps]
        for v, est, se, n in sorted(rows, key=lambda r: r[0]):
            w.writerow([repr(v), c.detector, c.provenance, repr(est), repr(se), n])
    return buf.getvalue()


def write_curves_csv(curves, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(curves_to_csv(curves))

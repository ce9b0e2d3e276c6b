"""Measured-data preprocessing and the complex Hotelling T^2 mean test.

Processing chain for a range-pulse record: select the pulse window, estimate
the texture with a sliding mean of magnitudes, divide it out
(Gaussianization), rescale every range cell so its mean magnitude equals the
Rayleigh mean, check the Rayleigh fit, and cut each cell into
non-overlapping ``N``-pulse vectors.

File formats
------------
* CSV with header ``cell,pulse,re,im``, one complex sample per row.
* Raw little-endian float32 ``(re, im)`` pairs in cell-major order plus a
  JSON sidecar ``{"cells": .., "pulses": .., "m": ..}`` at ``<path>.json``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import stats as sps
from scipy.signal import lfilter

from . import _linalg
from .errors import DataFormatError, DegenerateDataError, ParameterDomainError

TEXTURE_FLOOR = 1e-30
RAYLEIGH_MEAN = math.sqrt(math.pi / 2.0)
MIN_FIT_SAMPLES = 100


@dataclass(frozen=True, eq=False)
class RangePulseMatrix:
    """Complex clutter samples, ``data[cell, pulse]``.

    ``m`` is the absolute index of the first stored pulse and
    ``cell_offset`` that of the first stored range cell.
    """

    data: np.ndarray
    m: int = 0
    cell_offset: int = 0

    def __post_init__(self):
        d = np.asarray(self.data, dtype=complex)
        if d.ndim != 2 or d.shape[0] < 1 or d.shape[1] < 1:
            raise ParameterDomainError("range-pulse data must be a non-empty 2-D array")
        if not np.all(np.isfinite(d)):
            raise ParameterDomainError("range-pulse data contains non-finite entries")
        object.__setattr__(self, "data", d)

    @property
    def cells(self) -> int:
        return self.data.shape[0]

    @property
    def pulses(self) -> int:
        return self.data.shape[1]

    def with_data(self, data) -> "RangePulseMatrix":
        return RangePulseMatrix(data, self.m, self.cell_offset)


@dataclass(frozen=True)
class PreprocessConfig:
    window_K: int = 32
    m: int = 10000
    L_c: int = 40001
    N: int = 12
    texture: bool = True

    def __post_init__(self):
        if self.window_K < 2 or self.window_K % 2:
            raise ParameterDomainError(f"window_K must be an even integer >= 2, got {self.window_K}")
        if self.N < 1 or self.L_c < self.N:
            raise ParameterDomainError(f"need L_c >= N >= 1, got L_c={self.L_c}, N={self.N}")
        if self.m < 0:
            raise ParameterDomainError("m must be nonnegative")


def select_window(mat: RangePulseMatrix, m: int, L_c: int) -> RangePulseMatrix:
    """Pulses ``m .. m+L_c-1`` (absolute indices) of every cell."""
    start = m - mat.m
    if start < 0 or start + L_c > mat.pulses:
        raise ParameterDomainError(
            f"pulse window [{m}, {m + L_c}) is outside the record [{mat.m}, {mat.m + mat.pulses})")
    return RangePulseMatrix(mat.data[:, start:start + L_c], m, mat.cell_offset)


# -- texture and normalization ----------------------------------------------

def estimate_texture(mat: RangePulseMatrix, window_K: int = 32, return_floored: bool = False):
    """Sliding-window texture ``[mean_{|k| <= K/2} |c_{i, j+k}|]^2``.

    Windows are clipped at the record edges and averaged over the samples
    actually present.  Zero estimates are replaced by ``TEXTURE_FLOOR``;
    with ``return_floored`` the number of such entries is returned too.
    """
    if window_K < 2 or window_K % 2:
        raise ParameterDomainError("window_K must be an even integer >= 2")
    a = np.abs(mat.data)
    P = mat.pulses
    h = window_K // 2
    cs = np.concatenate([np.zeros((mat.cells, 1)), np.cumsum(a, axis=1)], axis=1)
    j = np.arange(P)
    lo = np.maximum(j - h, 0)
    hi = np.minimum(j + h, P - 1)
    tau = ((cs[:, hi + 1] - cs[:, lo]) / (hi - lo + 1)) ** 2
    zero = tau <= 0.0
    n_floored = int(zero.sum())
    if n_floored:
        tau = np.where(zero, TEXTURE_FLOOR, tau)
    return (tau, n_floored) if return_floored else tau


def gaussianize(mat: RangePulseMatrix, texture) -> RangePulseMatrix:
    """Divide out the texture: ``c / sqrt(tau)``."""
    texture = np.asarray(texture, dtype=float)
    if texture.shape != mat.data.shape:
        raise ParameterDomainError("texture and data shapes differ")
    if np.any(texture <= 0):
        raise ParameterDomainError("texture must be positive")
    return mat.with_data(mat.data / np.sqrt(texture))


def standardize(mat: RangePulseMatrix, mode: str = "gaussianized"):
    """Scale each cell by ``sqrt(pi/2) L_c / sum_j |c_ij|``.

    Afterwards every cell's mean magnitude is the Rayleigh mean
    ``sqrt(pi/2)``.  The same normalization applies to raw and Gaussianized
    input; ``mode`` only labels the provenance.  Returns
    ``(matrix, skipped)`` where ``skipped`` lists all-zero cells left as is.
    """
    if mode not in ("gaussianized", "raw"):
        raise ParameterDomainError("mode must be 'gaussianized' or 'raw'")
    s = np.sum(np.abs(mat.data), axis=1)
    skipped = [int(i) for i in np.flatnonzero(s == 0)]
    scale = np.where(s > 0, RAYLEIGH_MEAN * mat.pulses / np.where(s > 0, s, 1.0), 1.0)
    return mat.with_data(mat.data * scale[:, None]), skipped


@dataclass
class RayleighFit:
    """Goodness of fit of magnitudes to the unit-scale Rayleigh law."""

    n: int
    ks_statistic: float
    ks_pvalue: float
    bin_edges: np.ndarray
    density: np.ndarray
    model_density: np.ndarray

    def to_dict(self) -> dict:
        return {"n": self.n, "ks_statistic": self.ks_statistic, "ks_pvalue": self.ks_pvalue}

    def histogram_csv(self) -> str:
        centers = 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])
        lines = ["bin_left,bin_right,center,density,rayleigh_pdf"]
        for lo, hi, c, d, f in zip(self.bin_edges[:-1], self.bin_edges[1:], centers,
                                   self.density, self.model_density):
            lines.append(f"{lo!r},{hi!r},{c!r},{d!r},{f!r}")
        return "\n".join(lines) + "\n"


def rayleigh_pdf(r):
    r = np.asarray(r, dtype=float)
    return r * np.exp(-0.5 * r * r)


def rayleigh_fit_report(samples, bins: int = 100) -> RayleighFit:
    """Histogram of magnitudes against ``r exp(-r^2/2)`` and the KS statistic."""
    data = samples.data if isinstance(samples, RangePulseMatrix) else samples
    r = np.abs(np.asarray(data)).ravel()
    if r.size < MIN_FIT_SAMPLES:
        raise ParameterDomainError(f"need at least {MIN_FIT_SAMPLES} samples for a fit, got {r.size}")
    ks = sps.kstest(r, "rayleigh")
    density, edges = np.histogram(r, bins=bins, density=True)
    centers = 0.5 * (edges[1:] + edges[:-1])
    return RayleighFit(int(r.size), float(ks.statistic), float(ks.pvalue), edges, density,
                       rayleigh_pdf(centers))


# -- vectors, SCM and SCR -----------------------------------------------------

def segment_vectors(mat: RangePulseMatrix, N: int) -> np.ndarray:
    """Non-overlapping ``N``-pulse vectors, shape ``(cells, L_r, N)``.

    ``L_r = floor(pulses / N)``; trailing pulses are dropped.
    """
    if N < 1 or mat.pulses < N:
        raise ParameterDomainError(f"need 1 <= N <= pulses, got N={N}, pulses={mat.pulses}")
    L_r = mat.pulses // N
    return mat.data[:, :L_r * N].reshape(mat.cells, L_r, N)


def measured_scm(segmented, L: int) -> np.ndarray:
    """Covariance from the vectors of ``L + 1`` range cells.

    ``segmented`` has shape ``(cells, L_r, N)``; the first ``L + 1`` cells
    are used.  A singular result is an error; no diagonal loading is applied.
    """
    seg = np.asarray(segmented, dtype=complex)
    if seg.ndim != 3:
        raise ParameterDomainError("segmented data must have shape (cells, L_r, N)")
    if seg.shape[0] < L + 1:
        raise ParameterDomainError(f"need L+1 = {L + 1} range cells, got {seg.shape[0]}")
    V = seg[:L + 1].reshape(-1, seg.shape[2])
    if V.shape[0] < seg.shape[2]:
        raise DegenerateDataError("fewer vectors than dimensions; the SCM is singular")
    scm = _linalg.hermitize(V.T @ V.conj() / V.shape[0])
    _linalg.cholesky(scm, "measured SCM", "no diagonal loading is applied")
    return scm


def measured_scr(p0, scm, L: int) -> float:
    """``(L / (L+1)) p0^H R^{-1} p0`` with the measured covariance."""
    G = _linalg.cholesky(scm, "measured SCM")
    w = _linalg.whiten(G, np.asarray(p0, dtype=complex))
    return float(L / (L + 1.0) * np.vdot(w, w).real)


# -- Hotelling ----------------------------------------------------------------

@dataclass(frozen=True)
class HotellingResult:
    T2: float
    F: float
    critical: float
    dof: tuple
    alpha: float
    reject: bool

    @property
    def decision(self) -> str:
        return "mu != 0" if self.reject else "mu = 0"

    def to_dict(self) -> dict:
        return {"T2": self.T2, "F": self.F, "critical": self.critical, "dof": list(self.dof),
                "alpha": self.alpha, "reject": self.reject, "decision": self.decision}


def hotelling_critical(N: int, L_r: int, alpha: float) -> float:
    """Upper ``alpha`` quantile of F with ``(2N, 2(L_r - N))`` degrees of freedom."""
    if not 0.0 < alpha < 1.0:
        raise ParameterDomainError("alpha must lie in (0, 1)")
    if L_r <= N:
        raise ParameterDomainError(f"need L_r > N, got L_r={L_r}, N={N}")
    return float(sps.f.isf(alpha, 2 * N, 2 * (L_r - N)))


def hotelling_t2(vectors, alpha: float = 1e-3) -> HotellingResult:
    """Complex Hotelling test of a zero mean for ``L_r`` vectors of length ``N``.

    ``T2 = L_r xbar^H S^{-1} xbar`` with the unbiased sample covariance
    ``S``; ``F = (L_r - N) T2 / (N (L_r - 1))`` is F-distributed with
    ``(2N, 2(L_r - N))`` degrees of freedom under a zero mean.
    """
    V = np.asarray(vectors, dtype=complex)
    if V.ndim != 2:
        raise ParameterDomainError("vectors must have shape (L_r, N)")
    L_r, N = V.shape
    crit = hotelling_critical(N, L_r, alpha)
    xbar = V.mean(axis=0)
    D = V - xbar
    S = _linalg.hermitize(D.T @ D.conj() / (L_r - 1))
    G = _linalg.cholesky(S, "sample covariance")
    w = _linalg.whiten(G, xbar)
    T2 = float(L_r * np.vdot(w, w).real)
    F = (L_r - N) * T2 / (N * (L_r - 1.0))
    return HotellingResult(T2, F, crit, (2 * N, 2 * (L_r - N)), alpha, bool(F > crit))


# -- whole chain --------------------------------------------------------------

@dataclass
class PreprocessResult:
    processed: RangePulseMatrix
    segmented: np.ndarray
    raw_fit: RayleighFit
    processed_fit: RayleighFit
    n_texture_floored: int = 0
    skipped_cells: list = field(default_factory=list)
    edge_windows_clipped: bool = True

    def report(self) -> dict:
        return {"raw_fit": self.raw_fit.to_dict(), "processed_fit": self.processed_fit.to_dict(),
                "n_texture_floored": self.n_texture_floored,
                "skipped_cells": self.skipped_cells,
                "edge_windows_clipped": self.edge_windows_clipped,
                "cells": self.processed.cells, "pulses": self.processed.pulses,
                "L_r": int(self.segmented.shape[1]), "N": int(self.segmented.shape[2])}


def preprocess(mat: RangePulseMatrix, config: PreprocessConfig = PreprocessConfig()):
    """Window, Gaussianize (if enabled), standardize and segment."""
    win = select_window(mat, config.m, config.L_c)
    raw_std, _ = standardize(win, "raw")
    raw_fit = rayleigh_fit_report(raw_std)
    floored = 0
    if config.texture:
        tau, floored = estimate_texture(win, config.window_K, return_floored=True)
        work, mode = gaussianize(win, tau), "gaussianized"
    else:
        work, mode = win, "raw"
    out, skipped = standardize(work, mode)
    return PreprocessResult(out, segment_vectors(out, config.N), raw_fit,
                            rayleigh_fit_report(out), floored, skipped, config.texture)


# -- synthetic data -----------------------------------------------------------

def synth_compound_gaussian(cells: int, pulses: int, shape: float = 1.0, block: int = 2000,
                            mean=None, speckle_corr: float = 0.0, m: int = 0, seed=None):
    """Compound-Gaussian clutter with a piecewise-constant Gamma texture.

    The texture has unit mean and shape ``shape`` and is redrawn every
    ``block`` pulses; the speckle is standard complex normal with AR(1)
    pulse-to-pulse correlation ``speckle_corr``.  ``mean`` (scalar or
    per-pulse pattern broadcast along pulses) is added to every cell.
    """
    if shape <= 0 or block < 1:
        raise ParameterDomainError("shape and block must be positive")
    if not 0.0 <= speckle_corr < 1.0:
        raise ParameterDomainError("speckle_corr must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    n_blocks = -(-pulses // block)
    tau = rng.gamma(shape, 1.0 / shape, size=(cells, n_blocks))
    tau = np.repeat(tau, block, axis=1)[:, :pulses]
    w = (rng.standard_normal((cells, pulses)) + 1j * rng.standard_normal((cells, pulses)))
    w *= math.sqrt(0.5)
    if speckle_corr > 0:
        # stationary start: y[0] = w[0], y[n] = rho y[n-1] + sqrt(1 - rho^2) w[n]
        zi = speckle_corr * w[:, :1]
        tail = lfilter([math.sqrt(1.0 - speckle_corr ** 2)], [1.0, -speckle_corr], w[:, 1:],
                       axis=1, zi=zi)[0]
        w = np.concatenate([w[:, :1], tail], axis=1)
    data = np.sqrt(tau) * w
    if mean is not None:
        data = data + np.asarray(mean, dtype=complex)
    return RangePulseMatrix(data, m=m)


def synth_gaussian_vectors(L_r: int, N: int, mean=0.0, seed=None) -> np.ndarray:
    """``L_r`` standard complex normal ``N``-vectors plus ``mean``."""
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((L_r, N)) + 1j * rng.standard_normal((L_r, N))
    return w * math.sqrt(0.5) + np.asarray(mean, dtype=complex)


# -- file formats -------------------------------------------------------------

CSV_HEADER = "cell,pulse,re,im"


def write_csv(mat: RangePulseMatrix, path) -> None:
    cells, pulses = mat.data.shape
    ci, pi = np.meshgrid(np.arange(cells), np.arange(pulses), indexing="ij")
    with open(path, "w", newline="") as fh:
        fh.write(CSV_HEADER + "\n")
        for c, p, v in zip(ci.ravel(), pi.ravel(), mat.data.ravel()):
            fh.write(f"{c},{p},{float(v.real)!r},{float(v.imag)!r}\n")


def read_csv(path) -> RangePulseMatrix:
    """Parse the ``cell,pulse,re,im`` format; every (cell, pulse) must appear once."""
    raw = Path(path).read_bytes()
    entries = {}
    offset = 0
    for lineno, line in enumerate(raw.splitlines(keepends=True)):
        text = line.decode("utf-8", errors="replace").strip()
        here, offset = offset, offset + len(line)
        if lineno == 0:
            if text.replace(" ", "").lower() != CSV_HEADER:
                raise DataFormatError(f"expected header {CSV_HEADER!r}, got {text!r}", here)
            continue
        if not text:
            continue
        parts = text.split(",")
        if len(parts) != 4:
            raise DataFormatError(f"expected 4 fields, got {len(parts)}", here)
        try:
            c, p = int(parts[0]), int(parts[1])
            v = complex(float(parts[2]), float(parts[3]))
        except ValueError:
            raise DataFormatError(f"cannot parse row {text!r}", here) from None
        if c < 0 or p < 0:
            raise DataFormatError("negative cell or pulse index", here)
        if not (math.isfinite(v.real) and math.isfinite(v.imag)):
            raise DataFormatError("non-finite sample", here)
        if (c, p) in entries:
            raise DataFormatError(f"duplicate entry for cell {c}, pulse {p}", here)
        entries[(c, p)] = v
    if not entries:
        raise DataFormatError("no data rows", offset)
    cells = 1 + max(c for c, _ in entries)
    pulses = 1 + max(p for _, p in entries)
    if len(entries) != cells * pulses:
        raise DataFormatError(
            f"incomplete grid: {len(entries)} of {cells * pulses} (cell, pulse) entries present",
            offset)
    data = np.empty((cells, pulses), dtype=complex)
    for (c, p), v in entries.items():
        data[c, p] = v
    return RangePulseMatrix(data)


def sidecar_path(path) -> Path:
    return Path(str(path) + ".json")


def write_binary(mat: RangePulseMatrix, path) -> None:
    """Interleaved little-endian float32 pairs plus the JSON sidecar."""
    buf = np.empty(mat.data.shape + (2,), dtype="<f4")
    buf[..., 0] = mat.data.real
    buf[..., 1] = mat.data.imag
    Path(path).write_bytes(buf.tobytes())
    sidecar_path(path).write_text(json.dumps(
        {"cells": mat.cells, "pulses": mat.pulses, "m": mat.m}, indent=1) + "\n")


def read_binary(path, sidecar: Optional[dict] = None) -> RangePulseMatrix:
    """Read the binary format; the sidecar defaults to ``<path>.json``."""
    if sidecar is None:
        sp = sidecar_path(path)
        try:
            sidecar = json.loads(sp.read_text())
        except FileNotFoundError:
            raise ParameterDomainError(f"missing sidecar {sp}") from None
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"sidecar {sp} is not valid JSON: {exc.msg}", exc.pos) from None
    try:
        cells, pulses = int(sidecar["cells"]), int(sidecar["pulses"])
        m = int(sidecar.get("m", 0))
    except (KeyError, TypeError, ValueError):
        raise DataFormatError("sidecar needs integer 'cells' and 'pulses'", 0) from None
    raw = Path(path).read_bytes()
    need = cells * pulses * 8
    if len(raw) != need:
        raise DataFormatError(
            f"expected {need} bytes for {cells}x{pulses} complex float32 samples, "
            f"file has {len(raw)}", min(len(raw), need))
    flat = np.frombuffer(raw, dtype="<f4")
    bad = np.flatnonzero(~np.isfinite(flat))
    if bad.size:
        raise DataFormatError("non-finite float32 value", int(bad[0]) * 4)
    pairs = flat.reshape(cells, pulses, 2).astype(np.float64)
    return RangePulseMatrix(pairs[..., 0] + 1j * pairs[..., 1], m=m)

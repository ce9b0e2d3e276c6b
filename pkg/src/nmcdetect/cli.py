"""Command-line interface.

Subcommands: ``gen-scenario``, ``threshold``, ``curve``, ``preprocess`` and
``hotelling``.  Exit status is 0 on success, 1 on a runtime or numerical
failure and 2 on a usage error.  The default worker count for Monte Carlo
runs comes from ``--threads``, else the ``NMCDETECT_THREADS`` environment
variable, else the number of CPUs.
"""

from __future__ import annotations

import argparse
import json
import subprocess
import sys
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, montecarlo, perf, pipeline
from .detectors import DetectorKind, parse_kind
from .errors import NmcError, ParameterDomainError
from .model import Scenario
from .scenario_gen import GenTargets, generate_scenario

SIM_PFA = 1e-3
MEASURED_PFA = 1e-2

SWEEP_ALIASES = {"scr": "scr_db", "cos2theta": "cos2_theta", "xi": "xi_db",
                 "cos2phi": "cos2_phi", "l": "L", "p": "p"}


class UsageError(NmcError):
    """Invalid combination of otherwise well-formed flags."""


# -- manifest -----------------------------------------------------------------

def git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             cwd=Path(__file__).resolve().parent, capture_output=True,
                             text=True, timeout=5)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() if out.returncode == 0 and out.stdout.strip() else "unknown"


@dataclass
class RunManifest:
    command: list
    config: dict
    seed: object
    version: str = __version__
    git_describe: str = field(default_factory=git_describe)
    started: str = ""
    duration_s: float = 0.0
    outputs: list = field(default_factory=list)

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=1, default=str) + "\n")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


# -- argument types -----------------------------------------------------------

def probability(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"must lie strictly between 0 and 1, got {v}")
    return v


def unit_interval(text: str) -> float:
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1], got {v}")
    return v


def db_or_none(text: str):
    """A dB value, or ``none`` for a zero quantity."""
    if text.strip().lower() in ("none", "-inf"):
        return None
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a dB value or 'none', got {text!r}") from None


def positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {v}")
    return v


def nonneg_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be nonnegative, got {v}")
    return v


def even_window(text: str) -> int:
    v = int(text)
    if v < 2 or v % 2:
        raise argparse.ArgumentTypeError(f"window must be an even integer >= 2, got {v}")
    return v


def detector(text: str) -> DetectorKind:
    try:
        return parse_kind(text)
    except ParameterDomainError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def detector_list(text: str):
    return [detector(t) for t in text.split(",") if t.strip()]


def parse_grid(text: str):
    """``start:stop:step`` (inclusive) or a comma-separated list."""
    try:
        if ":" in text:
            start, stop, step = (float(t) for t in text.split(":"))
            if step <= 0 or stop < start:
                raise ValueError
            n = int(np.floor((stop - start) / step + 1e-9)) + 1
            return tuple(float(start + i * step) for i in range(n))
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"grid must be start:stop:step or a comma list, got {text!r}") from None


# -- commands -----------------------------------------------------------------

def _targets_from(args) -> GenTargets:
    return GenTargets(cos2_theta_star=args.cos2_theta, scr_db=args.scr_db, xi_db=args.xi_db,
                      cos2_phi_star=args.cos2_phi, refine=args.refine,
                      random_weights=args.random_weights)


def cmd_gen_scenario(args) -> int:
    targets = _targets_from(args)
    scen, report = generate_scenario(args.n, args.p, args.l, args.eps, targets, args.seed)
    doc = scen.to_dict()
    doc["generator"] = {"targets": asdict(targets), "seed": args.seed}
    Path(args.out).write_text(json.dumps(doc, indent=1) + "\n")
    report_path = Path(args.report) if args.report else Path(args.out).with_suffix(".report.json")
    report_path.write_text(json.dumps(report.to_dict(), indent=1) + "\n")
    print(json.dumps(report.to_dict(), indent=1))
    return 0


def _load_scenario(path) -> tuple:
    doc = json.loads(Path(path).read_text())
    return Scenario.from_dict(doc), doc


def _trial_config(args, **extra) -> montecarlo.TrialConfig:
    return montecarlo.TrialConfig(seed=args.seed, target_pfa=args.pfa, threads=args.threads,
                                  **extra)


def cmd_threshold(args) -> int:
    kind = args.detector
    if args.scenario:
        scen, _ = _load_scenario(args.scenario)
        N, p, L = scen.N, scen.p, scen.L
    elif args.n and args.p and args.l:
        scen = None
        N, p, L = args.n, args.p, args.l
    else:
        raise UsageError("give --scenario or all of --n, --p, --l")
    record = {"detector": kind.value, "pfa": args.pfa, "method": args.method, "N": N, "p": p,
              "L": L}
    if args.method == "analytic":
        if not kind.has_analytic:
            raise UsageError(f"no analytic threshold for {kind.value}; use --method mc")
        record["threshold"] = perf.threshold_from_pfa(kind, args.pfa, perf.PerformanceModel(N, p, L))
    else:
        if scen is None:
            raise UsageError("--method mc needs --scenario")
        cfg = _trial_config(args, n_threshold_trials=args.trials)
        record["threshold"] = montecarlo.calibrate_threshold_mc(kind, scen, cfg)
        record.update(trials=args.trials, seed=args.seed)
    print(json.dumps(record))
    return 0


def _template_from(args) -> montecarlo.ScenarioTemplate:
    if args.scenario:
        doc = json.loads(Path(args.scenario).read_text())
        gen = doc.get("generator")
        if gen is None or doc.get("eps") is None:
            raise UsageError("curves regenerate the scenario per grid point; --scenario must be "
                             "a file written by gen-scenario")
        return montecarlo.ScenarioTemplate(int(doc["N"]), int(doc["p"]), int(doc["L"]),
                                           float(doc["eps"]), GenTargets(**gen["targets"]),
                                           int(gen["seed"]))
    return montecarlo.ScenarioTemplate(args.n, args.p, args.l, args.eps, _targets_from(args),
                                       args.seed)


def cmd_curve(args) -> int:
    started, t0 = _now(), time.perf_counter()
    template = _template_from(args)
    spec = montecarlo.SweepSpec(SWEEP_ALIASES[args.sweep], args.grid)
    cfg = _trial_config(args, n_pd_trials=args.trials, n_threshold_trials=args.threshold_trials,
                        n_pfa_trials=args.pfa_trials, threshold_method=args.threshold_method)

    def progress(j, value, report):
        if not args.quiet:
            print(f"[{j + 1}/{len(spec.grid)}] {args.sweep} = {value:g}", file=sys.stderr)

    curves = montecarlo.sweep(args.detectors, template, spec, cfg, metric=args.metric,
                              analytic=not args.no_analytic, progress=progress)
    out = Path(args.out)
    montecarlo.write_curves_csv(curves, out)
    manifest = RunManifest(command=sys.argv, seed=args.seed, started=started, outputs=[str(out)],
                           config={"template": asdict(template), "sweep": asdict(spec),
                                   "trials": asdict(cfg), "metric": args.metric,
                                   "detectors": [k.value for k in args.detectors]})
    manifest.duration_s = time.perf_counter() - t0
    manifest.write(out.with_suffix(".manifest.json"))
    for c in curves:
        if c.gaps:
            print(f"{c.detector} ({c.provenance}): {len(c.gaps)} infeasible grid point(s): "
                  + "; ".join(f"{v:g}: {why}" for v, why in c.gaps), file=sys.stderr)
    print(out)
    return 0


def _read_matrix(path, fmt):
    fmt = fmt or ("csv" if str(path).lower().endswith(".csv") else "bin")
    return pipeline.read_csv(path) if fmt == "csv" else pipeline.read_binary(path)


def cmd_preprocess(args) -> int:
    started, t0 = _now(), time.perf_counter()
    mat = _read_matrix(args.input, args.format)
    cfg = pipeline.PreprocessConfig(window_K=args.k, m=args.m, L_c=args.lc, N=args.n,
                                    texture=args.texture == "on")
    res = pipeline.preprocess(mat, cfg)
    prefix = Path(args.out)
    data_path = prefix.with_suffix(".bin")
    fit_path = prefix.with_suffix(".fit.json")
    hist_path = prefix.with_suffix(".hist.csv")
    pipeline.write_binary(res.processed, data_path)
    fit_path.write_text(json.dumps(res.report(), indent=1) + "\n")
    hist_path.write_text(res.processed_fit.histogram_csv())
    manifest = RunManifest(command=sys.argv, seed=None, started=started, config=asdict(cfg),
                           outputs=[str(data_path), str(pipeline.sidecar_path(data_path)),
                                    str(fit_path), str(hist_path)])
    manifest.duration_s = time.perf_counter() - t0
    manifest.write(prefix.with_suffix(".manifest.json"))
    r = res.report()
    print(f"KS raw {r['raw_fit']['ks_statistic']:.5f} -> processed "
          f"{r['processed_fit']['ks_statistic']:.5f}; L_r = {r['L_r']}")
    return 0


def cmd_hotelling(args) -> int:
    mat = _read_matrix(args.input, args.format)
    if args.m is not None or args.lc is not None:
        m = mat.m if args.m is None else args.m
        lc = mat.pulses - (m - mat.m) if args.lc is None else args.lc
        mat = pipeline.select_window(mat, m, lc)
    seg = pipeline.segment_vectors(mat, args.n)
    cells = range(seg.shape[0]) if args.cell is None else [args.cell]
    print(f"{'cell':>5} {'L_r':>6} {'F statistic':>12} {'F critical':>11}  decision")
    for c in cells:
        if not 0 <= c < seg.shape[0]:
            raise UsageError(f"--cell {c} outside 0..{seg.shape[0] - 1}")
        r = pipeline.hotelling_t2(seg[c], args.alpha)
        print(f"{mat.cell_offset + c:>5} {seg.shape[1]:>6} {r.F:>12.4f} {r.critical:>11.4f}  "
              f"{r.decision}")
    return 0


# -- parser -------------------------------------------------------------------

def _add_targets(p):
    p.add_argument("--n", type=positive_int, default=12, help="vector length N")
    p.add_argument("--p", type=positive_int, default=3, help="subspace dimension p")
    p.add_argument("--l", type=positive_int, default=24, help="training size L")
    p.add_argument("--eps", type=float, default=0.95, help="covariance one-lag correlation")
    p.add_argument("--cos2-theta", type=unit_interval, default=1.0)
    p.add_argument("--scr-db", type=db_or_none, default=20.0, help="dB, or 'none' for no signal")
    p.add_argument("--xi-db", type=db_or_none, default=35.0, help="dB, or 'none' for zero mean")
    p.add_argument("--cos2-phi", type=unit_interval, default=0.3)
    p.add_argument("--refine", action="store_true", help="polish grid choices by 1-D search")
    p.add_argument("--random-weights", action="store_true",
                   help="draw blend weights at random instead of on an even grid")


def _add_mc(p):
    p.add_argument("--seed", type=nonneg_int, default=0)
    p.add_argument("--threads", type=positive_int, default=None,
                   help=f"worker threads (default: ${montecarlo.THREADS_ENV} or CPU count)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nmcdetect", description=__doc__.split("\n\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-scenario", help="synthesize a scenario hitting target metrics")
    _add_targets(g)
    g.add_argument("--seed", type=nonneg_int, default=0)
    g.add_argument("--out", required=True, help="scenario JSON path")
    g.add_argument("--report", help="generator report path (default: <out>.report.json)")
    g.set_defaults(func=cmd_gen_scenario)

    t = sub.add_parser("threshold", help="detection threshold for a target PFA")
    t.add_argument("--scenario", help="scenario JSON")
    t.add_argument("--n", type=positive_int)
    t.add_argument("--p", type=positive_int)
    t.add_argument("--l", type=positive_int)
    t.add_argument("--detector", type=detector, required=True,
                   help=", ".join(k.value for k in DetectorKind))
    t.add_argument("--pfa", type=probability, default=SIM_PFA)
    t.add_argument("--method", choices=("analytic", "mc"), default="analytic")
    t.add_argument("--trials", type=positive_int, default=100_000)
    _add_mc(t)
    t.set_defaults(func=cmd_threshold)

    c = sub.add_parser(
        "curve", help="PD or PFA curve over one parameter",
        epilog="CSV columns: sweep_value, detector, provenance (monte-carlo|analytic), "
               "estimate, std_error, trials.  Infeasible grid points appear with estimate nan.")
    c.add_argument("--scenario", help="gen-scenario output used as the template")
    _add_targets(c)
    c.add_argument("--detectors", type=detector_list,
                   default=detector_list("sglrt-nmc,srao-nmc,samf-nmc"))
    c.add_argument("--sweep", choices=sorted(SWEEP_ALIASES), required=True)
    c.add_argument("--grid", type=parse_grid, required=True)
    c.add_argument("--metric", choices=("pd", "pfa"), default="pd")
    c.add_argument("--pfa", type=probability, default=SIM_PFA)
    c.add_argument("--trials", type=positive_int, default=10_000, help="H1 trials per point")
    c.add_argument("--threshold-trials", type=positive_int, default=100_000)
    c.add_argument("--pfa-trials", type=positive_int, default=None)
    c.add_argument("--threshold-method", choices=("analytic", "mc"), default="analytic")
    c.add_argument("--no-analytic", action="store_true", help="omit analytic curves")
    c.add_argument("--quiet", action="store_true")
    c.add_argument("--out", required=True, help="CSV path; manifest goes next to it")
    _add_mc(c)
    c.set_defaults(func=cmd_curve)

    pp = sub.add_parser("preprocess", help="Gaussianize, standardize and segment clutter data")
    pp.add_argument("--in", dest="input", required=True)
    pp.add_argument("--format", choices=("csv", "bin"))
    pp.add_argument("--k", type=even_window, default=32)
    pp.add_argument("--m", type=nonneg_int, default=10000)
    pp.add_argument("--lc", type=positive_int, default=40001)
    pp.add_argument("--n", type=positive_int, default=12)
    pp.add_argument("--texture", choices=("on", "off"), default="on")
    pp.add_argument("--out", required=True, help="output prefix")
    pp.set_defaults(func=cmd_preprocess)

    h = sub.add_parser("hotelling", help="complex Hotelling T^2 test of a zero clutter mean")
    h.add_argument("--in", dest="input", required=True)
    h.add_argument("--format", choices=("csv", "bin"))
    h.add_argument("--n", type=positive_int, default=12)
    h.add_argument("--alpha", type=probability, default=1e-3)
    h.add_argument("--cell", type=nonneg_int, help="test one range cell only")
    h.add_argument("--m", type=nonneg_int, help="first pulse (absolute index)")
    h.add_argument("--lc", type=positive_int, help="pulse count")
    h.set_defaults(func=cmd_hotelling)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ParameterDomainError) as exc:
        print(f"{parser.prog} {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (NmcError, np.linalg.LinAlgError, OSError) as exc:
        print(f"{parser.prog} {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

#!/usr/bin/env python3
"""Run the standard detection-performance sweeps and write one CSV per sweep.

Sweeps (defaults: N=12, p=3, L=24, PFA=1e-3):

* ``pd_vs_scr``       PD over SCR 0..25 dB, matched signal, xi = 35 dB.
* ``pd_vs_cos2theta`` PD over cos^2(theta) at SCR 20 dB, L = 30.
* ``pfa_vs_xi``       PFA of proposed and conventional detectors over xi.
* ``pfa_vs_cos2phi``  the same over cos^2(phi) (geometry seed chosen so
                      that cos^2(phi) = 0.99 is reachable).

Example::

    python3 scripts/run_sweeps.py --out results --trials 10000 --pfa-trials 100000
    python3 scripts/plot_curves.py results/pd_vs_scr.csv
"""

from __future__ import annotations

import argparse
import json
import time
from dataclasses import asdict
from pathlib import Path

from nmcdetect import montecarlo as mc
from nmcdetect.detectors import CONVENTIONAL, PROPOSED
from nmcdetect.scenario_gen import GenTargets

HIGH_PHI_SEED = 156


def sweeps():
    base = GenTargets()
    return {
        "pd_vs_scr": (PROPOSED + CONVENTIONAL, mc.ScenarioTemplate(targets=base),
                      mc.SweepSpec("scr_db", tuple(range(0, 26, 5))), "pd"),
        "pd_vs_cos2theta": (PROPOSED, mc.ScenarioTemplate(L=30, targets=base),
                            mc.SweepSpec("cos2_theta", (0.0, 0.2, 0.4, 0.5, 0.6, 0.8, 1.0)), "pd"),
        "pfa_vs_xi": (PROPOSED + CONVENTIONAL,
                      mc.ScenarioTemplate(targets=base, geometry_seed=HIGH_PHI_SEED),
                      mc.SweepSpec("xi_db", tuple(range(0, 36, 5))), "pfa"),
        "pfa_vs_cos2phi": (PROPOSED + CONVENTIONAL,
                           mc.ScenarioTemplate(targets=base, geometry_seed=HIGH_PHI_SEED),
                           mc.SweepSpec("cos2_phi", (0.0, 0.2, 0.4, 0.6, 0.8, 0.9, 0.99)), "pfa"),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--out", default="results")
    ap.add_argument("--trials", type=int, default=10_000, help="H1 trials per PD point")
    ap.add_argument("--threshold-trials", type=int, default=100_000)
    ap.add_argument("--pfa-trials", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--only", nargs="*", help="subset of sweep names")
    args = ap.parse_args(argv)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = mc.TrialConfig(n_pd_trials=args.trials, n_threshold_trials=args.threshold_trials,
                         n_pfa_trials=args.pfa_trials, seed=args.seed)
    for name, (kinds, template, spec, metric) in sweeps().items():
        if args.only and name not in args.only:
            continue
        t0 = time.perf_counter()
        curves = mc.sweep(kinds, template, spec, cfg, metric=metric,
                          progress=lambda j, v, r: print(f"  {name}: {spec.name} = {v:g}",
                                                         flush=True))
        mc.write_curves_csv(curves, out / f"{name}.csv")
        (out / f"{name}.json").write_text(json.dumps(
            {"template": asdict(template), "sweep": asdict(spec), "trials": asdict(cfg),
             "metric": metric, "duration_s": time.perf_counter() - t0}, indent=1) + "\n")
        print(f"wrote {out / name}.csv ({time.perf_counter() - t0:.0f} s)")


if __name__ == "__main__":
    main()

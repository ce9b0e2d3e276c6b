#!/usr/bin/env python3
"""Plot a curve CSV written by ``nmcdetect curve`` or ``run_sweeps.py``.

Monte Carlo points are drawn as markers with error bars, analytic curves
as solid lines.  PFA plots use a log y-axis.  Needs matplotlib
(``pip install .[plot]``).

    python3 scripts/plot_curves.py results/pd_vs_scr.csv --out pd_vs_scr.png
"""

from __future__ import annotations

import argparse
import csv
import math
from collections import defaultdict
from pathlib import Path


def read_curves(path):
    curves = defaultdict(list)
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            est = float(row["estimate"])
            if math.isnan(est):
                continue
            curves[(row["detector"], row["provenance"])].append(
                (float(row["sweep_value"]), est, float(row["std_error"])))
    return curves


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("csv")
    ap.add_argument("--out", help="image path (default: <csv>.png)")
    ap.add_argument("--xlabel", default=None)
    ap.add_argument("--log", action="store_true", help="log y-axis (default for PFA files)")
    args = ap.parse_args(argv)

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    curves = read_curves(args.csv)
    fig, ax = plt.subplots(figsize=(6, 4.5))
    colors = {}
    for (det, prov), pts in sorted(curves.items()):
        pts.sort()
        x, y, se = zip(*pts)
        color = colors.setdefault(det, f"C{len(colors)}")
        if prov == "analytic":
            ax.plot(x, y, "-", color=color, label=f"{det} (theory)")
        else:
            ax.errorbar(x, y, yerr=se, fmt="o", ms=4, capsize=2, color=color,
                        label=f"{det} (MC)")
    stem = Path(args.csv).stem
    if args.log or stem.startswith("pfa"):
        ax.set_yscale("log")
    ax.set_xlabel(args.xlabel or stem.split("_vs_")[-1])
    ax.set_ylabel("PFA" if stem.startswith("pfa") else "PD")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    out = args.out or str(Path(args.csv).with_suffix(".png"))
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    print(out)


if __name__ == "__main__":
    main()

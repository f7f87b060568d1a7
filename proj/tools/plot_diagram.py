#!/usr/bin/env python3
"""Render an `rpcag sweep` diagram CSV as a heatmap."""

import argparse
import csv
import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def read_diagram(path):
    rows = []
    with open(path, newline="") as f:
        for rec in csv.DictReader(f):
            err = rec["mean_log_err"]
            rows.append((float(rec["axis1"]), float(rec["axis2"]),
                         math.nan if err == "nan" else float(err), int(rec["failed_count"])))
    a1 = sorted({r[0] for r in rows})
    a2 = sorted({r[1] for r in rows})
    grid = np.full((len(a1), len(a2)), np.nan)
    for x, y, v, _ in rows:
        grid[a1.index(x), a2.index(y)] = v
    return a1, a2, grid


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("diagram")
    ap.add_argument("--out", default="diagram.png")
    ap.add_argument("--xlabel", default="axis2")
    ap.add_argument("--ylabel", default="axis1")
    args = ap.parse_args()

    a1, a2, grid = read_diagram(args.diagram)
    fig, ax = plt.subplots(figsize=(5, 4))
    im = ax.imshow(grid, origin="lower", cmap="viridis_r", aspect="auto",
                   extent=(-0.5, len(a2) - 0.5, -0.5, len(a1) - 0.5))
    ax.set_xticks(range(len(a2)), [f"{v:.3g}" for v in a2], rotation=45)
    ax.set_yticks(range(len(a1)), [f"{v:.3g}" for v in a1])
    ax.set_xlabel(args.xlabel)
    ax.set_ylabel(args.ylabel)
    fig.colorbar(im, ax=ax, label="log10 relative error")
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)


if __name__ == "__main__":
    main()

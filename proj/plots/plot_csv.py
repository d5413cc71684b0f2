#!/usr/bin/env python3
"""Plot a stochlind result CSV: first column on x, the rest as curves.

    python3 plots/plot_csv.py results/jcm-damped.csv -o jcm-damped.png
    python3 plots/plot_csv.py results/jcm-damped.csv --columns W_pd_closed,W_pd_mc
"""

import argparse

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("csv")
    ap.add_argument("-o", "--output", help="image file (default: CSV name with .png)")
    ap.add_argument("--columns", help="comma-separated subset of columns to draw")
    ap.add_argument("--logy", action="store_true")
    args = ap.parse_args()

    df = pd.read_csv(args.csv, comment="#")
    x = df.columns[0]
    cols = args.columns.split(",") if args.columns else list(df.columns[1:])
    # stderr columns become error bars on the preceding curve
    fig, ax = plt.subplots(figsize=(7, 4))
    for i, c in enumerate(cols):
        if "stderr" in c:
            continue
        err = cols[i + 1] if i + 1 < len(cols) and "stderr" in cols[i + 1] else None
        if err:
            ax.errorbar(df[x], df[c], yerr=df[err], fmt=".", ms=3, label=c)
        else:
            ax.plot(df[x], df[c], label=c)
    ax.set_xlabel(x)
    if args.logy:
        ax.set_yscale("log")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(args.output or args.csv.rsplit(".", 1)[0] + ".png", dpi=150)


if __name__ == "__main__":
    main()

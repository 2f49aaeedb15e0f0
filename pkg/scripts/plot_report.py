#!/usr/bin/env python3
"""Render the evaluation CSVs from a sweep/evaluate run as PNG figures.

Produces per-cell error boxplots against QPSK level for each CW power,
the MAE-vs-SIR curves with +-1 sigma bands, and an overall MAE%% bar chart.
Requires matplotlib; the core package stays plot-free.
"""

import argparse
import csv
import json
import sys
from collections import defaultdict
from pathlib import Path


def load_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("run_dir", help="output directory of `cwpower evaluate` or `sweep`")
    parser.add_argument("--out-dir", default=None, help="where to write PNGs (default: run_dir)")
    args = parser.parse_args()
    run_dir = Path(args.run_dir)
    out_dir = Path(args.out_dir) if args.out_dir else run_dir
    out_dir.mkdir(parents=True, exist_ok=True)

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = load_rows(run_dir / "report.csv")
    estimators = sorted({r["estimator"] for r in rows})

    # error boxplots per CW level, grouped by QPSK level
    cw_levels = sorted({float(r["cw_tx_dbm"]) for r in rows}, reverse=True)
    qpsk_levels = sorted({float(r["qpsk_tx_dbm"]) for r in rows}, reverse=True)
    for cw in cw_levels:
        fig, ax = plt.subplots(figsize=(7, 4))
        width = 0.8 / len(estimators)
        for ei, est in enumerate(estimators):
            data = [
                [
                    float(r["err_db"])
                    for r in rows
                    if r["estimator"] == est
                    and float(r["cw_tx_dbm"]) == cw
                    and float(r["qpsk_tx_dbm"]) == qp
                ]
                for qp in qpsk_levels
            ]
            positions = [i + ei * width for i in range(len(qpsk_levels))]
            ax.boxplot(data, positions=positions, widths=width * 0.9, whis=1.5)
        ax.set_xticks([i + 0.4 for i in range(len(qpsk_levels))])
        ax.set_xticklabels([f"{qp:.0f}" for qp in qpsk_levels])
        ax.set_xlabel("QPSK TX power (dBm)")
        ax.set_ylabel("carrier power error (dB)")
        ax.set_title(f"CW = {cw:.0f} dBm ({', '.join(estimators)})")
        fig.tight_layout()
        fig.savefig(out_dir / f"box_err_cw{int(-cw)}.png", dpi=150)
        plt.close(fig)

    # MAE (dB) versus SIR with +-1 sigma bands
    sweep = load_rows(run_dir / "sweep.csv")
    by_est = defaultdict(list)
    for r in sweep:
        by_est[r["estimator"]].append((float(r["sir_db"]), float(r["mae_db"]), float(r["sigma_db"])))
    fig, ax = plt.subplots(figsize=(7, 4))
    for est, pts in sorted(by_est.items()):
        pts.sort()
        sir = [p[0] for p in pts]
        mae = [p[1] for p in pts]
        sig = [p[2] for p in pts]
        ax.plot(sir, mae, marker="o", label=est)
        ax.fill_between(sir, [m - s for m, s in zip(mae, sig)], [m + s for m, s in zip(mae, sig)], alpha=0.2)
    ax.set_xlabel("nominal SIR (dB)")
    ax.set_ylabel("MAE (dB)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_dir / "mae_vs_sir.png", dpi=150)
    plt.close(fig)

    # overall MAE% bars
    summary = json.loads((run_dir / "summary.json").read_text())
    fig, ax = plt.subplots(figsize=(5, 3.5))
    names = sorted(summary["overall_mae_pct"])
    ax.bar(names, [summary["overall_mae_pct"][n] for n in names])
    ax.set_ylabel("mean power error (%)")
    fig.tight_layout()
    fig.savefig(out_dir / "mae_pct.png", dpi=150)
    plt.close(fig)

    print(f"wrote figures to {out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

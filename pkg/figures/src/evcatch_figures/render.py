"""Render harness CSVs as figures.

Three kinds cover the five standard outputs:

- ``curve-band``: mean +/- std curves; accepts the convergence CSV (one
  curve per strategy, ``--value y`` or ``--value t``) and the error-window
  CSV (single curve over time since convergence).
- ``scatter``: decision margin t_dec - t_conv per trajectory from the
  timing CSV; non-converged trajectories are drawn as distinct marks below
  the zero line.
- ``bars``: hit counts per strategy and policy from the hits CSV.

SVG output is deterministic for identical inputs.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "evcatch-figures"

import matplotlib.pyplot as plt  # noqa: E402

CONVERGENCE_HEADER = ["strategy", "trajectory_pct", "y_err_mean_m",
                      "y_err_std_m", "t_err_mean_s", "t_err_std_s", "count"]
ERROR_WINDOW_HEADER = ["bin_start_s", "bin_end_s", "y_err_mean_m",
                       "y_err_std_m", "count"]
TIMING_HEADER = ["trajectory_id", "strategy", "t_F", "t_conv", "t_dec",
                 "margin_s", "non_converged"]
HITS_HEADER = ["strategy", "policy", "hits", "trials"]


class SchemaError(Exception):
    pass


def read_rows(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaError(f"{path}: empty file, expected a header row")
    return rows[0], rows[1:]


def _check_header(header, expected, path, kind):
    if header != expected:
        raise SchemaError(
            f"{path}: header {header} does not match the {kind} schema "
            f"{expected}")


def _finish(fig, out):
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, metadata={"Date": None} if out.suffix == ".svg" else None)
    plt.close(fig)


def render_curve_band(path, out, value="y"):
    header, rows = read_rows(path)
    fig, ax = plt.subplots(figsize=(6, 4))
    if header == ERROR_WINDOW_HEADER:
        x = [(float(r[0]) + float(r[1])) / 2 for r in rows]
        mean = [float(r[2]) for r in rows]
        std = [float(r[3]) for r in rows]
        ax.plot(x, mean, lw=2)
        ax.fill_between(x, [m - s for m, s in zip(mean, std)],
                        [m + s for m, s in zip(mean, std)], alpha=0.3)
        ax.set_xlabel("time since convergence [s]")
        ax.set_ylabel("|height error| [m]")
    else:
        _check_header(header, CONVERGENCE_HEADER, path, "curve-band")
        col = {"y": (2, 3, "|height error| [m]"),
               "t": (4, 5, "|time-to-exit error| [s]")}[value]
        strategies = sorted({r[0] for r in rows})
        for name in strategies:
            pts = [(float(r[1]), float(r[col[0]]), float(r[col[1]]))
                   for r in rows if r[0] == name and r[col[0]] != ""]
            if not pts:
                continue
            x, mean, std = zip(*pts)
            ax.plot(x, mean, lw=2, label=name)
            ax.fill_between(x, [m - s for m, s in zip(mean, std)],
                            [m + s for m, s in zip(mean, std)], alpha=0.3)
        ax.set_xlabel("trajectory progress [%]")
        ax.set_ylabel(col[2])
        if strategies:
            ax.legend()
    _finish(fig, out)


def render_scatter(path, out):
    header, rows = read_rows(path)
    _check_header(header, TIMING_HEADER, path, "scatter")
    fig, ax = plt.subplots(figsize=(6, 4))
    strategies = sorted({r[1] for r in rows})
    margins = [float(r[5]) for r in rows if r[6] == "0"]
    floor = min(margins + [0.0]) - 0.1
    for name in strategies:
        ok = [(float(r[2]), float(r[5])) for r in rows
              if r[1] == name and r[6] == "0"]
        bad = [float(r[2]) for r in rows if r[1] == name and r[6] == "1"]
        if ok:
            x, y = zip(*ok)
            ax.scatter(x, y, s=18, label=name)
        if bad:
            # non-converged trajectories: distinct marks below the zero line
            ax.scatter(bad, [floor] * len(bad), s=26, marker="x")
    ax.axhline(0.0, color="black", lw=0.8)
    ax.set_xlabel("trajectory end time [s]")
    ax.set_ylabel("decision margin t_dec - t_conv [s]")
    if strategies:
        ax.legend()
    _finish(fig, out)


def render_bars(path, out):
    header, rows = read_rows(path)
    _check_header(header, HITS_HEADER, path, "bars")
    fig, ax = plt.subplots(figsize=(6, 4))
    strategies = sorted({r[0] for r in rows})
    policies = sorted({r[1] for r in rows})
    width = 0.8 / max(len(policies), 1)
    for j, policy in enumerate(policies):
        xs, hs = [], []
        for i, name in enumerate(strategies):
            for r in rows:
                if r[0] == name and r[1] == policy:
                    xs.append(i + j * width)
                    hs.append(int(r[2]))
        ax.bar(xs, hs, width=width, label=policy)
    ax.set_xticks([i + 0.4 - width / 2 for i in range(len(strategies))])
    ax.set_xticklabels(strategies, rotation=20)
    ax.set_ylabel("hits")
    if policies:
        ax.legend()
    _finish(fig, out)


def main(argv=None):
    ap = argparse.ArgumentParser(prog="evcatch-render")
    ap.add_argument("--kind", required=True,
                    choices=["curve-band", "scatter", "bars"])
    ap.add_argument("--in", dest="inp", required=True, help="input CSV")
    ap.add_argument("--out", required=True, help="output image (.svg/.png)")
    ap.add_argument("--value", choices=["y", "t"], default="y",
                    help="value columns for curve-band on the convergence CSV")
    args = ap.parse_args(argv)
    try:
        if args.kind == "curve-band":
            render_curve_band(args.inp, args.out, args.value)
        elif args.kind == "scatter":
            render_scatter(args.inp, args.out)
        else:
            render_bars(args.inp, args.out)
    except (SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

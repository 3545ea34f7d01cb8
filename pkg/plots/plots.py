"""Log-log error-vs-ndof figures from convergence study CSV records.

Reads one or more study CSVs (18-column schema, one row per refinement
level), draws one panel per requested error column with error against
degrees of freedom on log-log axes, and writes an SVG.  Uniform series
are blue, adaptive series red; each panel gets a slope-guide triangle
per polynomial degree, annotated with the degree (in two dimensions an
O(h^k) error decays like ndof^(-k/2)).

    plots.py --csv uniform.csv --csv adaptive.csv --cols err_Y,err_H1_u \
        --out fig.svg

Exit codes: 0 on success, 1 for unusable input (missing file, empty
CSV, unknown column), 2 for usage errors.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "plots"

import matplotlib.pyplot as plt

MODE_COLORS = {"uniform": "tab:blue", "adaptive": "tab:red"}


class InputError(Exception):
    """Unusable CSV input; the message is shown to the user."""


@dataclass
class Series:
    label: str
    color: str
    k: int
    ndof: list
    values: dict


@dataclass
class PlotSpec:
    csvs: list
    cols: list
    out: str
    labels: list = field(default_factory=list)
    slopes: list = field(default_factory=list)


def read_series(path, cols, label=None):
    """One Series per CSV file; validates the requested columns."""
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames
            rows = list(reader)
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror or exc}") from exc
    if header is None or not rows:
        raise InputError(f"{path}: empty CSV, nothing to plot")
    missing = [c for c in cols if c not in header]
    if missing:
        raise InputError(f"{path}: missing column(s) {', '.join(missing)}; "
                         f"have {', '.join(header)}")
    for name in ("problem", "k", "mode", "ndof"):
        if name not in header:
            raise InputError(f"{path}: missing column(s) {name}")

    ndof = []
    values = {c: [] for c in cols}
    for row in rows:
        try:
            point = {c: float(row[c]) for c in cols if row[c] != ""}
            n = int(row["ndof"])
        except ValueError as exc:
            raise InputError(f"{path}: malformed numeric cell ({exc})") from exc
        if len(point) < len(cols):
            continue
        ndof.append(n)
        for c in cols:
            values[c].append(point[c])
    if not ndof:
        raise InputError(f"{path}: no rows with values in {', '.join(cols)}")

    first = rows[0]
    mode = first["mode"]
    k = int(first["k"])
    if label is None:
        label = f"{first['problem']} k={k} {mode}"
    color = MODE_COLORS.get(mode, "tab:gray")
    return Series(label=label, color=color, k=k, ndof=ndof, values=values)


def _slope_guide(ax, x0, y0, exponent, span=4.0):
    """Right triangle under (x0, y0) with hypotenuse slope -exponent/2."""
    x1 = x0 * span
    y1 = y0 * span ** (-exponent / 2.0)
    ax.plot([x0, x1, x1, x0], [y0, y0, y1, y0],
            color="0.45", linewidth=0.8, zorder=1)
    ax.annotate(f"{exponent:g}", xy=(x1, (y0 * y1) ** 0.5),
                xytext=(3, 0), textcoords="offset points",
                fontsize=8, color="0.3", va="center")


def render(spec):
    """Figure with one log-log panel per error column."""
    series = [
        read_series(path, spec.cols,
                    spec.labels[i] if i < len(spec.labels) else None)
        for i, path in enumerate(spec.csvs)
    ]
    ncols = len(spec.cols)
    fig, axes = plt.subplots(1, ncols, figsize=(4.2 * ncols, 3.4),
                             squeeze=False)
    axes = axes[0]
    for ax, col in zip(axes, spec.cols):
        for s in series:
            ax.loglog(s.ndof, s.values[col], marker="o", markersize=3.5,
                      color=s.color, label=s.label)
        exponents = spec.slopes or sorted({s.k for s in series})
        for exponent in exponents:
            anchor = next((s for s in series if s.k == exponent), series[0])
            mid = len(anchor.ndof) // 2
            _slope_guide(ax, anchor.ndof[mid], 0.45 * anchor.values[col][mid],
                         exponent)
        ax.set_xlabel("ndof")
        ax.set_ylabel(col)
        ax.grid(True, which="both", linewidth=0.3, alpha=0.5)
        ax.legend(fontsize=8)
    fig.tight_layout()
    return fig, axes


def build_parser():
    parser = argparse.ArgumentParser(
        prog="plots.py",
        description="log-log error-vs-ndof panels from study CSVs")
    parser.add_argument("--csv", action="append", required=True,
                        metavar="FILE", help="study CSV; repeat per series")
    parser.add_argument("--cols", required=True,
                        help="comma-separated error columns, one panel each")
    parser.add_argument("--label", action="append", default=[],
                        help="series label override, one per --csv")
    parser.add_argument("--slopes",
                        help="comma-separated slope-guide exponents "
                             "(default: the k of each series)")
    parser.add_argument("--out", required=True, help="output SVG path")
    return parser


def spec_from_args(args):
    cols = [c.strip() for c in args.cols.split(",") if c.strip()]
    if not cols:
        raise InputError("--cols named no columns")
    slopes = []
    if args.slopes:
        try:
            slopes = [float(s) for s in args.slopes.split(",")]
        except ValueError as exc:
            raise InputError(f"bad --slopes value ({exc})") from exc
    return PlotSpec(csvs=args.csv, cols=cols, out=args.out,
                    labels=args.label, slopes=slopes)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        spec = spec_from_args(args)
        fig, _ = render(spec)
    except InputError as exc:
        print(f"plots.py: {exc}", file=sys.stderr)
        return 1
    # a pinned hash salt plus no Date metadata makes the SVG reproducible
    fig.savefig(spec.out, format="svg", metadata={"Date": None})
    plt.close(fig)
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Turn the CSV artifacts of the impulsive-iss CLI into figures.

Three kinds are supported, keyed to the documented CSV contracts:

  lyapunov  - lyapunov.csv (t, V, chi_level, pre_jump): V(t) with jump
              discontinuities drawn as segment breaks and a horizontal line
              at the perturbation-radius level;
  surface   - trajectory.csv with per-node columns (x@<y>): the state
              surface x(t, y) over space-time;
  region    - region.csv (theta, delta, pass): the dwell-condition region.

Renders are pure functions of the input CSVs: no clock, no network.
Exit codes: 0 written, 3 missing/empty input or header mismatch.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

EXIT_OK = 0
EXIT_BAD_INPUT = 3

REQUIRED_HEADERS = {
    "lyapunov": {"t", "V", "chi_level", "pre_jump"},
    "surface": {"t", "norm", "V", "pre_jump"},
    "region": {"theta", "delta", "pass"},
}


class InputError(Exception):
    pass


@dataclass
class FigureSpec:
    kind: str
    path: str
    level: float | None = None
    title: str | None = None
    style: dict = field(default_factory=dict)


def _read_rows(path: str) -> tuple[list[str], list[dict]]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            rows = list(reader)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise InputError(f"{path}: no data rows")
    return list(header), rows


def _check_header(kind: str, header: list[str], path: str):
    need = REQUIRED_HEADERS[kind]
    missing = need - set(header)
    if missing:
        raise InputError(f"{path}: header mismatch for kind {kind!r}, "
                         f"missing {sorted(missing)}")


def _lyapunov_figure(spec: FigureSpec):
    header, rows = _read_rows(spec.path)
    _check_header("lyapunov", header, spec.path)
    t_plot: list[float] = []
    v_plot: list[float] = []
    for row in rows:
        t_plot.append(float(row["t"]))
        v_plot.append(float(row["V"]))
        if row["pre_jump"] == "1":
            # break the line at the jump: right-continuity, not a vertical stroke
            t_plot.append(float(row["t"]))
            v_plot.append(math.nan)
    level = spec.level if spec.level is not None else float(rows[0]["chi_level"])

    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    ax.plot(t_plot, v_plot, color="tab:blue", lw=1.8, label="V(t)")
    ax.axhline(level, color="tab:red", lw=1.4, label="perturbation radius")
    ax.set_yticks(sorted(set(list(ax.get_yticks()) + [level])))
    ax.set_xlabel("time t")
    ax.set_ylabel("Lyapunov value V(t, x)")
    ax.set_xlim(left=min(t for t in t_plot if not math.isnan(t)))
    ax.set_ylim(bottom=0.0)
    ax.legend(loc="upper right", frameon=False)
    if spec.title:
        ax.set_title(spec.title)
    fig.tight_layout()
    return fig, {"level": level, "n_breaks": sum(1 for v in v_plot if math.isnan(v))}


def _surface_figure(spec: FigureSpec):
    header, rows = _read_rows(spec.path)
    _check_header("surface", header, spec.path)
    node_cols = [h for h in header if h.startswith("x@")]
    if not node_cols:
        raise InputError(f"{spec.path}: no per-node columns (x@<y>) for a surface plot")
    ys = np.array([float(h[2:]) for h in node_cols])
    ts = np.array([float(r["t"]) for r in rows])
    states = np.array([[float(r[c]) for c in node_cols] for r in rows])

    fig = plt.figure(figsize=(6.4, 4.2))
    ax = fig.add_subplot(projection="3d")
    T, Y = np.meshgrid(ts, ys, indexing="ij")
    ax.plot_surface(T, Y, states, cmap="viridis", linewidth=0, antialiased=False)
    ax.set_xlabel("time t")
    ax.set_ylabel("space y")
    ax.set_zlabel("state x(t, y)")
    if spec.title:
        ax.set_title(spec.title)
    return fig, {"n_nodes": len(node_cols), "n_samples": len(rows)}


def _region_figure(spec: FigureSpec):
    header, rows = _read_rows(spec.path)
    _check_header("region", header, spec.path)
    th = np.array([float(r["theta"]) for r in rows])
    de = np.array([float(r["delta"]) for r in rows])
    ok = np.array([r["pass"] in ("1", "True", "true") for r in rows])

    fig, ax = plt.subplots(figsize=(5.4, 4.2))
    ax.scatter(th[ok], de[ok], s=14, marker="s", color="tab:green", label="holds")
    if np.any(~ok):
        ax.scatter(th[~ok], de[~ok], s=14, marker="x", color="tab:red", label="fails")
    ax.set_xlabel("dwell bound theta")
    ax.set_ylabel("margin delta")
    ax.legend(loc="best", frameon=False)
    if spec.title:
        ax.set_title(spec.title)
    fig.tight_layout()
    return fig, {"n_points": len(rows), "n_pass": int(np.sum(ok))}


_BUILDERS = {
    "lyapunov": _lyapunov_figure,
    "surface": _surface_figure,
    "region": _region_figure,
}


def build_figure(spec: FigureSpec):
    """Build the matplotlib figure and its metadata without saving."""
    if spec.kind not in _BUILDERS:
        raise InputError(f"unknown figure kind {spec.kind!r}; have {sorted(_BUILDERS)}")
    return _BUILDERS[spec.kind](spec)


def render(spec: FigureSpec, out: str) -> int:
    """Render the spec to an image file; returns a process exit code."""
    try:
        fig, _meta = build_figure(spec)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="iss-figures",
                                     description="Render impulsive-iss CSV outputs.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("render", help="render one CSV into an image")
    p.add_argument("--kind", choices=sorted(_BUILDERS), required=True)
    p.add_argument("--in", dest="path", required=True, help="input CSV path")
    p.add_argument("--out", required=True, help="output image path")
    p.add_argument("--level", type=float, default=None,
                   help="perturbation-radius level (default: chi_level column)")
    p.add_argument("--title", default=None)
    args = parser.parse_args(argv)
    return render(FigureSpec(kind=args.kind, path=args.path, level=args.level,
                             title=args.title), args.out)


if __name__ == "__main__":
    raise SystemExit(main())

"""Render figures from hho2d CSV/text outputs.

Usage: ``plots <kind> --in FILE --out fig.png [--ref-slope s]``

Kinds and their input contracts (all files are produced by the solver CLI):

convergence      history.csv — log-log energy error and estimator vs DoFs
effectivity-dofs history.csv — effectivity vs DoFs
effectivity-k    CSV with header ``k,effectivity`` — log-log vs (k+2)
assumption1      assumption1.csv (``alpha,k,error,fitted_slope``) — log-log
                 error vs (k+2)
mesh             mesh_<iter>.txt, optional ``--indicators indicators_<iter>.csv``
                 — triangles colored by the per-cell indicator content

Every slope-fitting kind writes a sidecar ``<out stem>.slope.txt`` with one
``<series> <slope>`` line per fitted curve.  The fit definition matches the
solver CLI exactly (least-squares log-log fit over the last max(3, n//2)
positive data points), so the annotated slopes agree to rounding.

Exit codes: 0 success, 2 bad usage or malformed input (message names the
offending line).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

HISTORY_HEADER = ("iter,ncells,dofs,energy_error,bound_A,bound_B,"
                  "effectivity,seconds")

KINDS = ("convergence", "effectivity-dofs", "effectivity-k", "assumption1",
         "mesh")


class InputError(Exception):
    """Malformed or contract-violating input file."""


def fit_slope(x, y) -> float:
    """Log-log slope fitted over the last max(3, n//2) points.

    Must stay identical to the solver CLI's fit (shared definition by
    contract: both operate on the same CSV columns and must annotate the
    same number).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = (x > 0) & (y > 0)
    x, y = x[keep], y[keep]
    if x.size < 2:
        return float("nan")
    m = max(3, x.size // 2)
    m = min(m, x.size)
    return float(np.polyfit(np.log(x[-m:]), np.log(y[-m:]), 1)[0])


def read_csv(path, expected_header: str | None = None):
    """Rows as dict-of-column-arrays; raises InputError with a line number."""
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise InputError(str(exc)) from exc
    if not lines:
        raise InputError(f"{path}: empty file")
    header = lines[0].strip()
    if expected_header is not None and header != expected_header:
        raise InputError(
            f"{path}, line 1: expected header {expected_header!r}, "
            f"got {header!r}")
    names = header.split(",")
    cols = {n: [] for n in names}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            raise InputError(f"{path}, line {lineno}: empty row")
        parts = line.split(",")
        if len(parts) != len(names):
            raise InputError(
                f"{path}, line {lineno}: expected {len(names)} fields, "
                f"got {len(parts)}")
        for n, p in zip(names, parts):
            try:
                cols[n].append(float(p))
            except ValueError as exc:
                raise InputError(
                    f"{path}, line {lineno}: bad value {p!r} in column "
                    f"{n!r}") from exc
    if not cols[names[0]]:
        raise InputError(f"{path}: no data rows")
    return {n: np.asarray(v) for n, v in cols.items()}


def write_slopes(out: Path, slopes: dict) -> None:
    side = out.with_suffix(".slope.txt")
    with open(side, "w") as fh:
        for name, s in slopes.items():
            fh.write(f"{name} {s:.17g}\n")


def _ref_line(ax, x, y, slope, label=None):
    """Dashed reference power law anchored at the last data point."""
    x = np.asarray(x, dtype=float)
    anchor_x, anchor_y = x[-1], y[-1]
    xs = np.array([x[0], x[-1]])
    ys = anchor_y * (xs / anchor_x) ** slope
    ax.loglog(xs, ys, "k--", linewidth=1,
              label=label or f"slope {slope:g}")


def render_convergence(args) -> dict:
    cols = read_csv(args.input, HISTORY_HEADER)
    dofs = cols["dofs"]
    fig, ax = plt.subplots(figsize=(5, 4))
    slopes = {}
    for name, marker in (("energy_error", "o"), ("bound_B", "s")):
        y = cols[name]
        if not np.any(np.isfinite(y) & (y > 0)):
            continue
        s = fit_slope(dofs, y)
        slopes[name] = s
        ax.loglog(dofs, y, marker + "-", label=f"{name} (slope {s:.2f})")
    if args.ref_slope is not None:
        _ref_line(ax, dofs, cols["bound_B"], args.ref_slope)
    ax.set_xlabel("DoFs")
    ax.set_ylabel("error / estimator")
    ax.legend()
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)
    plt.close(fig)
    return slopes


def render_effectivity_dofs(args) -> dict:
    cols = read_csv(args.input, HISTORY_HEADER)
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.semilogx(cols["dofs"], cols["effectivity"], "o-")
    ax.set_xlabel("DoFs")
    ax.set_ylabel("effectivity")
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)
    plt.close(fig)
    return {"effectivity": fit_slope(cols["dofs"], cols["effectivity"])}


def render_effectivity_k(args) -> dict:
    cols = read_csv(args.input, "k,effectivity")
    kk = cols["k"] + 2
    fig, ax = plt.subplots(figsize=(5, 4))
    s = fit_slope(kk, cols["effectivity"])
    ax.loglog(kk, cols["effectivity"], "o-",
              label=f"effectivity (slope {s:.2f})")
    if args.ref_slope is not None:
        _ref_line(ax, kk, cols["effectivity"], args.ref_slope)
    ax.set_xlabel("k + 2")
    ax.set_ylabel("effectivity")
    ax.legend()
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)
    plt.close(fig)
    return {"effectivity": s}


def render_assumption1(args) -> dict:
    cols = read_csv(args.input, "alpha,k,error,fitted_slope")
    kk = cols["k"] + 2
    fig, ax = plt.subplots(figsize=(5, 4))
    s = fit_slope(kk, cols["error"])
    alpha = cols["alpha"][0]
    ax.loglog(kk, cols["error"], "o-",
              label=f"alpha={alpha:g} (slope {s:.2f})")
    if args.ref_slope is not None:
        _ref_line(ax, kk, cols["error"], args.ref_slope)
    ax.set_xlabel("k + 2")
    ax.set_ylabel("boundary interpolation error")
    ax.legend()
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)
    plt.close(fig)
    return {"error": s}


def read_mesh_text(path):
    """Vertices and cells from the solver's plain-text mesh format."""
    try:
        tokens = Path(path).read_text().split()
    except OSError as exc:
        raise InputError(str(exc)) from exc
    if len(tokens) < 3:
        raise InputError(f"{path}, line 1: missing `nv nc ne` header")
    try:
        nv, nc, ne = (int(t) for t in tokens[:3])
        pos = 3
        vertices = np.array(
            [[float(tokens[pos + 2 * i]), float(tokens[pos + 2 * i + 1])]
             for i in range(nv)])
        pos += 2 * nv
        cells = np.array([[int(t) for t in tokens[pos + 3 * i:pos + 3 * i + 3]]
                          for i in range(nc)])
    except (ValueError, IndexError) as exc:
        raise InputError(f"{path}: truncated or malformed mesh file") from exc
    return vertices, cells


def render_mesh(args) -> dict:
    vertices, cells = read_mesh_text(args.input)
    color = None
    if args.indicators:
        cols = read_csv(args.indicators,
                        "cell,eta_sta,eta_res,eta_tan,osc,osc_prime")
        if cols["cell"].size != cells.shape[0]:
            raise InputError(
                f"{args.indicators}: {cols['cell'].size} rows for "
                f"{cells.shape[0]} cells")
        color = (cols["eta_tan"] ** 2 + cols["eta_sta"] ** 2
                 + cols["eta_res"] ** 2 + cols["osc"] ** 2)
    fig, ax = plt.subplots(figsize=(5, 5))
    if color is not None:
        tpc = ax.tripcolor(vertices[:, 0], vertices[:, 1], cells,
                           facecolors=color, edgecolors="k", linewidth=0.2,
                           cmap="viridis")
        fig.colorbar(tpc, ax=ax, label="squared indicator content")
    else:
        ax.triplot(vertices[:, 0], vertices[:, 1], cells, "k-", linewidth=0.4)
    ax.set_aspect("equal")
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)
    plt.close(fig)
    return {}


RENDERERS = {
    "convergence": render_convergence,
    "effectivity-dofs": render_effectivity_dofs,
    "effectivity-k": render_effectivity_k,
    "assumption1": render_assumption1,
    "mesh": render_mesh,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="plots",
                                 description=__doc__.splitlines()[0])
    ap.add_argument("kind", choices=KINDS)
    ap.add_argument("--in", dest="input", required=True,
                    help="input CSV / mesh text file")
    ap.add_argument("--out", required=True, help="output image path")
    ap.add_argument("--ref-slope", type=float, default=None,
                    help="draw a dashed reference line with this slope")
    ap.add_argument("--indicators", default=None,
                    help="per-cell indicator CSV (mesh kind only)")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    args.out = Path(args.out)
    try:
        slopes = RENDERERS[args.kind](args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if slopes:
        write_slopes(args.out, slopes)
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Render heatmap panels from threshold-mech sweep CSVs.

Rendering is read-only over the CSVs: pixel output depends only on the file
contents and the figure layout.  Color conventions: success probabilities
use a perceptually uniform sequential map on [0, 1]; welfare panels use a
diverging map centered at zero so that exactly-zero cells are white and
negative-welfare regions are blue; undefined diagnostic cells (empty CSV
fields) are drawn gray.

Usage: ``render_figs <figure_name> <csv_dir> <out_dir>``
"""

from __future__ import annotations

import csv
import sys
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib import colormaps  # noqa: E402
from matplotlib.colors import TwoSlopeNorm  # noqa: E402

UNDEF_GRAY = (0.6, 0.6, 0.6, 1.0)


class RenderError(RuntimeError):
    """A required CSV is missing or malformed; the message names the file."""


@dataclass(frozen=True)
class Surface:
    """One statistic pivoted onto the (value, subsidy) grid."""

    v: np.ndarray        # ascending grid values
    p: np.ndarray
    grid: np.ndarray     # shape (len(v), len(p)); NaN where undefined

    @property
    def extent(self) -> tuple[float, float, float, float]:
        return (float(self.p[0]), float(self.p[-1]),
                float(self.v[0]), float(self.v[-1]))


def load_surface(path: Path, column: str) -> Surface:
    """Pivot one CSV column onto the grid; empty fields become NaN."""
    if not path.is_file():
        raise RenderError(f"missing CSV: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise RenderError(f"empty CSV: {path}")
    if column not in rows[0]:
        raise RenderError(f"column {column!r} not in {path}")
    vs = sorted({float(r["v"]) for r in rows})
    ps = sorted({float(r["p"]) for r in rows})
    if len(rows) != len(vs) * len(ps):
        raise RenderError(f"short CSV (incomplete grid): {path}")
    grid = np.full((len(vs), len(ps)), np.nan)
    vi = {v: i for i, v in enumerate(vs)}
    pi = {p: i for i, p in enumerate(ps)}
    for r in rows:
        val = r[column].strip()
        grid[vi[float(r["v"])], pi[float(r["p"])]] = \
            float(val) if val else np.nan
    return Surface(np.array(vs), np.array(ps), grid)


# -- color conventions -------------------------------------------------------

def prob_cmap():
    cmap = colormaps["viridis"].copy()
    cmap.set_bad(UNDEF_GRAY)
    return cmap


def welfare_norm(grid: np.ndarray) -> TwoSlopeNorm:
    finite = grid[np.isfinite(grid)]
    lo = float(finite.min()) if finite.size else -1.0
    hi = float(finite.max()) if finite.size else 1.0
    return TwoSlopeNorm(vmin=min(lo, -1e-9), vcenter=0.0, vmax=max(hi, 1e-9))


def welfare_cmap():
    # blue below zero, exact white at zero, warm above
    cmap = colormaps["bwr"].copy()
    cmap.set_bad(UNDEF_GRAY)
    return cmap


def draw_panel(ax, surface: Surface, *, kind: str, title: str) -> None:
    masked = np.ma.masked_invalid(surface.grid)
    if kind == "prob":
        im = ax.imshow(masked, origin="lower", aspect="auto",
                       extent=surface.extent, cmap=prob_cmap(),
                       vmin=0.0, vmax=1.0)
    elif kind == "welfare":
        im = ax.imshow(masked, origin="lower", aspect="auto",
                       extent=surface.extent, cmap=welfare_cmap(),
                       norm=welfare_norm(surface.grid))
    else:  # free-scale diagnostic
        im = ax.imshow(masked, origin="lower", aspect="auto",
                       extent=surface.extent, cmap=prob_cmap())
    ax.set_title(title, fontsize=9)
    ax.set_xlabel("subsidy p")
    ax.set_ylabel("value V")
    plt.colorbar(im, ax=ax, shrink=0.85)


@dataclass(frozen=True)
class Panel:
    rel_path: str
    column: str
    kind: str
    title: str


def _belief_panels(csv_dir: Path, column: str, kind: str) -> list[Panel]:
    """Panels for the belief-ladder layout (b0_* subdirectories or a single
    root CSV when the run held one belief level)."""
    subs = sorted(d.name for d in csv_dir.glob("b0_*") if d.is_dir())
    if subs:
        return [Panel(f"{s}/C.csv", column, kind, f"C, {s.replace('_', ' = ')}")
                for s in subs]
    return [Panel("C.csv", column, kind, "C")]


def _noise_panels(csv_dir: Path) -> list[Panel]:
    subs = sorted((d.name for d in csv_dir.glob("tau_*") if d.is_dir()),
                  key=lambda s: float(s.split("_", 1)[1]))
    if not subs:
        raise RenderError(f"missing CSV: {csv_dir}/tau_*/S.csv")
    return [Panel(f"{s}/{mech}.csv", "success_prob", "prob",
                  f"{mech}, {s.replace('_', ' = ')}")
            for mech in ("S", "M") for s in subs]


def _skew_panels(csv_dir: Path) -> list[Panel]:
    panels = []
    for skew in ("left_skew", "right_skew"):
        for column, kind in (("success_prob", "prob"),
                             ("welfare_mean", "welfare")):
            for mech in ("C", "S", "M"):
                panels.append(Panel(f"{skew}/{mech}.csv", column, kind,
                                    f"{mech} {column} ({skew})"))
    return panels


def _mech_panels(column: str, kind: str) -> list[Panel]:
    return [Panel(f"{m}.csv", column, kind, f"{m}") for m in ("C", "S", "M")]


FIGURES = {
    "fig1": lambda d: _belief_panels(d, "success_prob", "prob"),
    "fig2": lambda d: _mech_panels("success_prob", "prob"),
    "fig3": lambda d: _mech_panels("welfare_mean", "welfare"),
    "robust-beta": _skew_panels,
    "robust-noise": _noise_panels,
    "diag-cost": lambda d: [
        Panel("diag_cost.csv", "prob_s_multi", "prob",
              "P(S succeeds, multi-backstop)"),
        Panel("diag_cost.csv", "prob_m_multi", "prob",
              "P(M succeeds, multi-backstop)"),
        Panel("diag_cost.csv", "cost_gap", "diag",
              "privacy-cost gap M - S (common successes)"),
    ],
    "diag-pareto": lambda d: [
        Panel("diag_pareto.csv", "frac_no_worse", "prob",
              "P(no user worse off under M)"),
        Panel("diag_pareto.csv", "mean_share_worse", "diag",
              "mean share of worse-off users"),
        Panel("diag_pareto.csv", "mean_compensation", "diag",
              "mean per-user compensation"),
    ],
}


def render(figure_name: str, csv_dir: Path, out_dir: Path) -> Path:
    """Render one figure to ``out_dir`` and return the image path."""
    if figure_name not in FIGURES:
        raise RenderError(
            f"unknown figure {figure_name!r}; choose from {sorted(FIGURES)}"
        )
    panels = FIGURES[figure_name](csv_dir)
    surfaces = [load_surface(csv_dir / p.rel_path, p.column) for p in panels]
    n = len(panels)
    ncols = 3 if n > 4 or n == 3 else min(n, 4)
    nrows = (n + ncols - 1) // ncols
    fig, axes = plt.subplots(nrows, ncols,
                             figsize=(4.2 * ncols, 3.4 * nrows),
                             squeeze=False)
    for ax in axes.flat[n:]:
        ax.set_visible(False)
    for panel, surface, ax in zip(panels, surfaces, axes.flat):
        draw_panel(ax, surface, kind=panel.kind, title=panel.title)
    fig.tight_layout()
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / f"{figure_name}.png"
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def main(argv: list[str] | None = None) -> int:
    args = sys.argv[1:] if argv is None else argv
    if len(args) != 3:
        print("usage: render_figs <figure_name> <csv_dir> <out_dir>",
              file=sys.stderr)
        return 2
    try:
        out = render(args[0], Path(args[1]), Path(args[2]))
    except RenderError as exc:
        print(f"render error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

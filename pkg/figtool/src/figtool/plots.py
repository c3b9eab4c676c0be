"""Figure rendering from curve/residual tables.

Figures plot only the columns the runner emitted; no quantity is ever
recomputed here.  Every axes carries the config hash of its inputs for
provenance, and each render writes both the requested file and a
sibling in the other vector/raster format.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .io import Table, read_curve, read_residuals

KINDS = ("otoc-compare", "beta-family", "residual-scaling", "sff")


@dataclass
class FigureSpec:
    kind: str
    inputs: list
    output: str
    log_x: bool = False
    log_y: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; expected one of {KINDS}")
        if not self.inputs:
            raise ValueError("at least one input CSV is required")


def _hash_note(tables: list[Table]) -> str:
    hashes = sorted({t.config_hash for t in tables if t.config_hash})
    return "config " + ", ".join(hashes) if hashes else "config unknown"


def _apply_scales(ax, spec: FigureSpec):
    if spec.log_x:
        ax.set_xscale("log")
    if spec.log_y:
        ax.set_yscale("log")


def _plot_curve(ax, table: Table, color, label_prefix=""):
    t = table["t"]
    theory = table["theory"]
    label = f"{label_prefix}{table.label} (N={int(table['n'][0])})"
    ax.plot(t, theory, color=color, lw=1.6, label=f"{label} theory")
    emp = table["emp_mean"]
    if np.any(np.isfinite(emp)):
        std = table["emp_std"]
        ax.plot(t, emp, color=color, lw=0.9, ls=":", label=f"{label} empirical")
        ax.fill_between(t, emp - std, emp + std, color=color, alpha=0.18, lw=0)
        env = table["envelope"]
        ax.fill_between(t, theory - env, theory + env, color=color, alpha=0.08, lw=0)
    return ax


def render_otoc_compare(spec: FigureSpec):
    tables = [read_curve(p) for p in spec.inputs]
    fig, ax = plt.subplots(figsize=(7.2, 4.6))
    colors = plt.cm.tab10.colors
    for i, table in enumerate(tables):
        _plot_curve(ax, table, colors[i % len(colors)])
    peaks = [(float(t["t"][np.nanargmax(t["theory"])]), float(np.nanmax(t["theory"]))) for t in tables]
    tp, vp = max(peaks, key=lambda p: p[1])
    ax.annotate(f"peak at t={tp:.2f}", xy=(tp, vp), xytext=(tp + 0.8, vp),
                arrowprops={"arrowstyle": "->", "lw": 0.8}, fontsize=9)
    ax.set_xlabel("t")
    ax.set_ylabel("commutator correlator")
    ax.set_title(f"OTOC comparison  [{_hash_note(tables)}]", fontsize=10)
    ax.legend(fontsize=8)
    _apply_scales(ax, spec)
    return fig, tables


def render_beta_family(spec: FigureSpec):
    tables = [read_curve(p) for p in spec.inputs]
    fig, ax = plt.subplots(figsize=(7.2, 4.6))
    colors = plt.cm.viridis(np.linspace(0.0, 0.85, len(tables)))
    for table, color in zip(tables, colors):
        ax.plot(table["t"], table["theory"], color=color, lw=1.5, label=f"{table.label} theory")
        emp = table["emp_mean"]
        if np.any(np.isfinite(emp)):
            ax.plot(table["t"], emp, color=color, lw=0.8, ls=":")
    ax.set_xlabel("t")
    ax.set_ylabel("commutator correlator")
    ax.set_title(f"inverse-temperature family  [{_hash_note(tables)}]", fontsize=10)
    ax.legend(fontsize=8)
    _apply_scales(ax, spec)
    return fig, tables


def render_residual_scaling(spec: FigureSpec):
    tables = [read_residuals(p) for p in spec.inputs]
    fig, ax = plt.subplots(figsize=(6.4, 4.6))
    for table in tables:
        ns = table["n"]
        res = table["residual_median"]
        slope = float(np.polyfit(np.log(ns), np.log(res), 1)[0]) if ns.size >= 2 else float("nan")
        ax.plot(ns, res, "o-", label=f"{table.label} residual, slope {slope:.2f}")
        ax.plot(ns, table["envelope"], "s--", alpha=0.6, label=f"{table.label} envelope")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("N")
    ax.set_ylabel("median residual")
    ax.set_title(f"local-law residual scaling  [{_hash_note(tables)}]", fontsize=10)
    ax.legend(fontsize=8)
    return fig, tables


def render_sff(spec: FigureSpec):
    tables = [read_curve(p) for p in spec.inputs]
    fig, ax = plt.subplots(figsize=(6.4, 4.6))
    for table in tables:
        ax.plot(table["t"], table["theory"], lw=1.5, label=f"{table.label} closed form")
        ax.plot(table["t"], table["emp_mean"], ".", ms=3.5, label=f"{table.label} empirical")
    ax.set_xlabel("t")
    ax.set_ylabel("spectral form factor")
    ax.set_title(f"slope-dip-ramp-plateau  [{_hash_note(tables)}]", fontsize=10)
    ax.legend(fontsize=8)
    if not (spec.log_x or spec.log_y):
        ax.set_yscale("log")
    _apply_scales(ax, spec)
    return fig, tables


_RENDERERS = {
    "otoc-compare": render_otoc_compare,
    "beta-family": render_beta_family,
    "residual-scaling": render_residual_scaling,
    "sff": render_sff,
}


def _sibling_format(path: Path) -> Path:
    return path.with_suffix(".png" if path.suffix.lower() == ".svg" else ".svg")


def render(spec: FigureSpec):
    """Render one figure; returns (written paths, figure, tables)."""
    fig, tables = _RENDERERS[spec.kind](spec)
    out = Path(spec.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    paths = [out, _sibling_format(out)]
    for path in paths:
        metadata = {"Date": None} if path.suffix.lower() == ".svg" else None
        fig.savefig(path, dpi=150, bbox_inches="tight", metadata=metadata)
    return paths, fig, tables

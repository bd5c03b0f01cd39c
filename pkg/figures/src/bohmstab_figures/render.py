"""Deterministic figure rendering from bohmstab CSVs."""
from __future__ import annotations

from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .contract import (MissingColumnError, columns_matching, read_csv,
                       require)

KINDS = ("stability", "hdecay", "marginal")

matplotlib.rcParams["svg.hashsalt"] = "bohmstab-figures"


@dataclass
class FigureSpec:
    kind: str
    inputs: list
    out: str
    dpi: int = 120
    figsize: tuple = (7.0, 4.2)
    title: str = ""
    style: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; "
                             f"choose from {KINDS}")
        if not self.inputs:
            raise ValueError("need at least one input CSV")
        if not (self.out.endswith(".png") or self.out.endswith(".svg")):
            raise ValueError("output must be .png or .svg")


def _save(fig, spec: FigureSpec):
    metadata = {"Date": None} if spec.out.endswith(".svg") else None
    fig.savefig(spec.out, dpi=spec.dpi, metadata=metadata)
    plt.close(fig)


def _stability(spec: FigureSpec):
    data = read_csv(spec.inputs[0])
    require(data, ("t", "x_center", "sigma"), spec.inputs[0])
    mod_cols = columns_matching(data, "x_mod")
    bohm_cols = columns_matching(data, "x_bohm")
    if not mod_cols or not bohm_cols:
        raise MissingColumnError(
            f"{spec.inputs[0]}: need x_mod_* and x_bohm_* trajectory columns")
    t = data["t"]
    center, sigma = data["x_center"], data["sigma"]
    fig, ax = plt.subplots(figsize=spec.figsize)
    ax.fill_between(t, center - 2 * sigma, center + 2 * sigma,
                    color="0.85", lw=0, label="packet (2 sigma)")
    for i, col in enumerate(bohm_cols):
        ax.plot(t, data[col], "--", color=f"C{i}", lw=1.2,
                label=col.replace("x_", ""))
    for i, col in enumerate(mod_cols):
        ax.plot(t, data[col], "-", color=f"C{i}", lw=1.4,
                label=col.replace("x_", ""))
    ax.set_xlabel("t")
    ax.set_ylabel("x")
    ax.set_title(spec.title or "packet-following vs runaway trajectories")
    ax.legend(loc="upper left", fontsize=8, ncol=2)
    ax.margins(x=0)
    fig.tight_layout()
    return fig


def _hdecay(spec: FigureSpec):
    fig, ax = plt.subplots(figsize=spec.figsize)
    for i, path in enumerate(spec.inputs):
        data = read_csv(path)
        require(data, ("t", "hbar", "hbar_floor"), path)
        t, h, fl = data["t"], data["hbar"], data["hbar_floor"]
        ax.fill_between(t, h - fl, h + fl, alpha=0.25, color=f"C{i}", lw=0)
        ax.plot(t, h, "-o", color=f"C{i}", ms=3, lw=1.3,
                label=f"run {i}" if len(spec.inputs) > 1 else "H")
    ax.axhline(0.0, color="0.3", lw=0.8)
    ax.set_xlabel("t")
    ax.set_ylabel("coarse-grained H")
    ax.set_title(spec.title or "relaxation of the coarse-grained H")
    if len(spec.inputs) > 1:
        ax.legend(fontsize=8)
    ax.margins(x=0)
    fig.tight_layout()
    return fig


def _marginal(spec: FigureSpec):
    data = read_csv(spec.inputs[0])
    require(data, ("x", "p"), spec.inputs[0])
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=spec.figsize)
    ax1.hist(data["x"], bins=60, density=True, color="C0", alpha=0.75)
    ax1.set_xlabel("x")
    ax1.set_ylabel("density")
    ax2.hist(data["p"], bins=60, density=True, color="C1", alpha=0.75)
    ax2.set_xlabel("p")
    if len(spec.inputs) > 1:
        ref = read_csv(spec.inputs[1])
        require(ref, ("x", "density"), spec.inputs[1])
        ax1.plot(ref["x"], ref["density"], "k-", lw=1.2, label="reference")
        ax1.legend(fontsize=8)
    fig.suptitle(spec.title or "ensemble marginals")
    fig.tight_layout()
    return fig


def render(spec: FigureSpec) -> str:
    """Render one figure; returns the output path."""
    fig = {"stability": _stability,
           "hdecay": _hdecay,
           "marginal": _marginal}[spec.kind](spec)
    _save(fig, spec)
    return spec.out

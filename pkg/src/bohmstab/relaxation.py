"""Coarse-graining, the relative-entropy H-statistic, and relaxation runs.

The coarse-grained statistic is H = sum over cells of dOmega * fbar * ln(fbar
/ fbar_eq), with empirical fbar from particle counts and fbar_eq from per-cell
quadrature of the equilibrium density.  H is non-negative (Gibbs), zero
exactly at equilibrium, and non-increasing under the matching dynamics once
fine-grained structure develops.

Our H is an estimator: counting noise biases it upward by roughly
(occupied cells)/(2n), so every value ships with a bootstrap floor
(multinomial resampling of the cell counts) combining the bias estimate and
three standard deviations.  "Consistent with equilibrium" means |H| below
that floor.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .dynamics import ForceLaw, IntegratorSpec
from .ensemble import Ensemble, NonEquilibriumSpec, evolve_ensemble, \
    sample_equilibrium, sample_nonequilibrium
from .errors import (DiracDensityError, GridMismatchError,
                     QuadratureNotConvergedError, SupportMismatchError)
from .kernels import KernelSpec, kernel_pdf
from .rng import rng_for
from .wavefunction import eval_fields


@dataclass(frozen=True)
class CoarseGrid:
    """Rectangular phase-space partition with cells of volume dx * dp."""

    x_min: float
    x_max: float
    nx: int
    p_min: float
    p_max: float
    n_p: int

    def __post_init__(self):
        if self.x_max <= self.x_min or self.p_max <= self.p_min:
            raise ValueError("grid ranges must be non-degenerate")
        if self.nx < 4 or self.n_p < 4:
            raise ValueError("need at least 4 cells per axis")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.nx

    @property
    def dp(self) -> float:
        return (self.p_max - self.p_min) / self.n_p

    @property
    def cell_volume(self) -> float:
        return self.dx * self.dp

    def x_edges(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.nx + 1)

    def p_edges(self) -> np.ndarray:
        return np.linspace(self.p_min, self.p_max, self.n_p + 1)


@dataclass
class CellField:
    """Per-cell densities plus the mass that fell outside the grid."""

    values: np.ndarray
    out_of_range_mass: float
    grid: CoarseGrid

    def total_mass(self) -> float:
        return float(np.sum(self.values) * self.grid.cell_volume
                     + self.out_of_range_mass)


@dataclass
class HSeries:
    """H(t) along a relaxation run, with its statistical floor."""

    times: np.ndarray
    hbar_values: np.ndarray
    floors: np.ndarray
    out_of_range: np.ndarray
    n_particles: int
    grid: CoarseGrid
    provenance: dict = field(default_factory=dict)


def coarse_grain(ens: Ensemble, grid: CoarseGrid) -> CellField:
    """Empirical cell densities: count / (n * cell volume); censored
    particles are excluded from the counts but the divisor stays the number
    of live particles so mass still sums to one."""
    xs, ps = ens.active_xs, ens.active_ps
    if xs.size == 0:
        raise ValueError("no live particles to histogram")
    counts, _, _ = np.histogram2d(xs, ps, bins=[grid.x_edges(), grid.p_edges()])
    n = xs.size
    inside = counts.sum()
    return CellField(values=counts / (n * grid.cell_volume),
                     out_of_range_mass=float((n - inside) / n),
                     grid=grid)


def equilibrium_cell_averages(model, spec: KernelSpec, grid: CoarseGrid,
                              t: float, order: int = 8,
                              coverage_warning: float = 1e-4) -> CellField:
    """Cell averages of the equilibrium density by tensor Gauss-Legendre."""
    if spec.is_dirac:
        raise DiracDensityError(
            "the Dirac equilibrium is a measure on a curve; its cell "
            "averages are not densities this statistic can use")
    nodes, weights = np.polynomial.legendre.leggauss(order)
    x_edges, p_edges = grid.x_edges(), grid.p_edges()
    hx, hp = 0.5 * grid.dx, 0.5 * grid.dp
    # unique x nodes across cells: (nx, order)
    x_nodes = (0.5 * (x_edges[:-1] + x_edges[1:])[:, None] + hx * nodes[None, :])
    f = eval_fields(model, x_nodes.ravel(), t)
    rho = np.asarray(f.rho, float).reshape(x_nodes.shape)
    grad_s = np.asarray(f.grad_s, float).reshape(x_nodes.shape)
    p_nodes = (0.5 * (p_edges[:-1] + p_edges[1:])[:, None] + hp * nodes[None, :])
    # K(p - grad_s) over (nx, order_x, n_p, order_p)
    w = p_nodes[None, None, :, :] - grad_s[:, :, None, None]
    kern = kernel_pdf(spec, w)
    wx = (weights * hx)[None, :, None, None]
    wp = (weights * hp)[None, None, None, :]
    integrals = np.sum(rho[:, :, None, None] * kern * wx * wp, axis=(1, 3))
    values = integrals / grid.cell_volume
    mass = float(np.sum(integrals))
    if mass < 1.0 - coverage_warning:
        warnings.warn(f"coarse grid covers only {mass:.6f} of the "
                      "equilibrium mass; widen the ranges", stacklevel=2)
    return CellField(values=values, out_of_range_mass=max(0.0, 1.0 - mass),
                     grid=grid)


def h_function(f_cells: CellField, feq_cells: CellField,
               grid: CoarseGrid | None = None) -> float:
    """sum dOmega * fbar * ln(fbar / fbar_eq), with 0 ln 0 = 0.

    Mass sitting where the equilibrium average vanishes makes the statistic
    infinite; that is reported as SupportMismatch instead of a number.
    """
    if grid is None:
        grid = f_cells.grid
    if f_cells.grid != feq_cells.grid or f_cells.values.shape != feq_cells.values.shape:
        raise GridMismatchError("cell fields live on different grids")
    f = f_cells.values
    feq = feq_cells.values
    occupied = f > 0
    bad = occupied & (feq <= 0.0)
    if np.any(bad):
        mass = float(np.sum(f[bad]) * grid.cell_volume)
        raise SupportMismatchError(
            f"{np.count_nonzero(bad)} cells hold mass {mass:.3e} where the "
            "equilibrium average vanishes", offending_mass=mass)
    out = np.zeros_like(f)
    np.log(f / feq, where=occupied, out=out)
    return float(np.sum(f[occupied] * out[occupied]) * grid.cell_volume)


def _h_from_counts(counts: np.ndarray, n: int, feq: np.ndarray,
                   cell_volume: float) -> float:
    f = counts / (n * cell_volume)
    occupied = f > 0
    ratio = np.ones_like(f)
    np.divide(f, feq, where=occupied, out=ratio)
    return float(np.sum(f[occupied] * np.log(ratio[occupied])) * cell_volume)


def bootstrap_floor(f_cells: CellField, feq_cells: CellField, n: int,
                    seed: int, n_resamples: int = 200) -> dict:
    """Statistical floor for H via multinomial resampling of cell counts.

    Returns the observed H, the bootstrap bias estimate (the counting bias
    that makes H positive even at equilibrium), the bootstrap standard
    deviation, and floor = |bias| + 3 sd.
    """
    grid = f_cells.grid
    h_obs = h_function(f_cells, feq_cells)
    vol = grid.cell_volume
    counts = np.round(f_cells.values * n * vol).astype(np.int64).ravel()
    out_count = max(0, n - int(counts.sum()))
    probs = np.concatenate([counts, [out_count]]) / (counts.sum() + out_count)
    rng = rng_for(seed, "bootstrap")
    resamples = rng.multinomial(n, probs, size=n_resamples)[:, :-1]
    feq = feq_cells.values.ravel()
    hs = np.array([_h_from_counts(row, n, feq, vol) for row in resamples])
    bias = float(hs.mean() - h_obs)
    sd = float(hs.std(ddof=1))
    return {"h": h_obs, "bias": bias, "sd": sd,
            "floor": abs(bias) + 3.0 * sd}


def check_equilibrium_coverage(feq_cells: CellField, tol: float = 1e-4):
    mass = float(np.sum(feq_cells.values) * feq_cells.grid.cell_volume)
    if mass < 1.0 - tol:
        raise QuadratureNotConvergedError(
            f"grid holds only {mass:.6f} of the equilibrium mass")
    return mass


def run_relaxation(model, kernel: KernelSpec, grid: CoarseGrid, times,
                   n: int, seed: int, law: ForceLaw | None = None,
                   neq: NonEquilibriumSpec | None = None,
                   integ: IntegratorSpec = IntegratorSpec(dt=2e-3),
                   quad_order: int = 8, strategy: str = "auto",
                   n_resamples: int = 200) -> HSeries:
    """Evolve an ensemble and record H(t) against the same-time equilibrium.

    The ensemble is sampled at times[0] (equilibrium, or per neq), evolved
    under the modified law, and compared at each sample time with cell
    averages of the equilibrium density computed from the wave function at
    that time.
    """
    if kernel.is_dirac:
        raise DiracDensityError(
            "relaxation statistics need an equilibrium with phase-space "
            "support; the Dirac kernel concentrates on a curve")
    times = np.asarray(times, dtype=float)
    if times.size < 1 or np.any(np.diff(times) <= 0):
        raise ValueError("times must be non-empty and strictly increasing")
    if law is None:
        law = ForceLaw("modified", model, kernel)
    t0 = float(times[0])
    if neq is None:
        ens = sample_equilibrium(model, kernel, t0, n, seed)
    else:
        ens = sample_nonequilibrium(model, neq, kernel, t0, n, seed)
    hs, floors, oor = [], [], []
    for j, t in enumerate(times):
        if t > ens.t:
            ens = evolve_ensemble(ens, law, float(t), integ, strategy=strategy)
        f_cells = coarse_grain(ens, grid)
        feq_cells = equilibrium_cell_averages(model, kernel, grid, float(t),
                                              order=quad_order)
        stats = bootstrap_floor(f_cells, feq_cells, ens.active_xs.size,
                                seed + 7919 * j, n_resamples=n_resamples)
        hs.append(stats["h"])
        floors.append(stats["floor"])
        oor.append(f_cells.out_of_range_mass)
    prov = dict(ens.provenance)
    prov["integrator"] = {"method": integ.method, "dt": integ.dt}
    return HSeries(times=times, hbar_values=np.array(hs),
                   floors=np.array(floors), out_of_range=np.array(oor),
                   n_particles=n, grid=grid, provenance=prov)


def trend_test(times, values) -> dict:
    """Monotone-trend diagnostics: LS slope and a rank (Mann-Kendall) z.

    p_decreasing is the one-sided normal-approximation p-value for the null
    of no trend against a decreasing one.
    """
    times = np.asarray(times, float)
    values = np.asarray(values, float)
    if times.size < 4:
        raise ValueError("need at least 4 points for a trend test")
    tt = times - times.mean()
    slope = float(np.sum(tt * (values - values.mean())) / np.sum(tt * tt))
    s = 0
    n = values.size
    for i in range(n - 1):
        s += int(np.sum(np.sign(values[i + 1:] - values[i])))
    var_s = n * (n - 1) * (2 * n + 5) / 18.0
    if s > 0:
        z = (s - 1) / math.sqrt(var_s)
    elif s < 0:
        z = (s + 1) / math.sqrt(var_s)
    else:
        z = 0.0
    p_dec = 0.5 * math.erfc(-z / math.sqrt(2.0)) if z < 0 else \
        1.0 - 0.5 * math.erfc(z / math.sqrt(2.0))
    return {"slope": slope, "kendall_s": s, "z": z, "p_decreasing": p_dec}

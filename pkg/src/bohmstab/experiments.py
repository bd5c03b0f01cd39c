"""Experiment drivers shared by the CLI and the scripts.

Each driver takes an ExperimentConfig, runs one scenario, writes the
versioned CSV plus a JSON provenance sidecar, and returns the payload it
wrote so tests can assert on it without re-reading files.
"""
from __future__ import annotations

import math
import os

import numpy as np

from . import config as cfgmod
from .csvio import write_csv, write_sidecar
from .dynamics import ForceLaw, IntegratorSpec, integrate_trajectory
from .ensemble import evolve_ensemble, sample_equilibrium, sample_nonequilibrium
from .kernels import KernelSpec
from .relaxation import run_relaxation
from .wavefunction import CoherentState

PACKET_SIGMA = 1.0 / math.sqrt(2.0)


def _out_path(cfg, name: str) -> str:
    os.makedirs(cfg.run.out_dir, exist_ok=True)
    return os.path.join(cfg.run.out_dir, name)


def run_trajectory(cfg, out_csv: str | None = None) -> dict:
    """Single-trajectory scenario: columns t, x, p."""
    model = cfgmod.build_model(cfg.model)
    kernel = cfgmod.build_kernel(cfg.kernel)
    law = cfgmod.build_force_law(cfg.force, model, kernel)
    integ = cfgmod.build_integrator(cfg.integrator)
    tc = cfg.trajectory
    m = law.params.mass
    traj = integrate_trajectory(law, tc.x0, m * tc.v0, 0.0, tc.t_end, integ,
                                store_stride=tc.store_stride)
    columns = {"t": traj.times, "x": traj.xs, "p": traj.ps}
    path = out_csv or _out_path(cfg, "trajectory.csv")
    write_csv(path, columns)
    write_sidecar(path + ".json", {"law": traj.law, "seed": cfg.run.seed,
                                   "integrator": traj.diagnostics.get("method"),
                                   "truncated": traj.truncated})
    return {"path": path, "columns": columns, "trajectory": traj}


def run_stability(cfg, out_csv: str | None = None) -> dict:
    """Paired modified/plain-quantum trajectories from the same starts.

    For each initial velocity +-v0 the scenario integrates both laws from
    x0, and adds the packet center (alpha cos t) and packet width columns so
    plots can shade the packet band.
    """
    if cfg.model.kind != "coherent":
        raise ValueError("the stability scenario runs on the coherent packet")
    model = CoherentState(cfg.model.alpha)
    kernel = cfgmod.build_kernel(cfg.kernel)
    integ = cfgmod.build_integrator(cfg.integrator)
    tc = cfg.trajectory
    m = model.params.mass
    laws = {"mod": ForceLaw("modified", model, kernel),
            "bohm": ForceLaw("bohm", model)}
    columns = {}
    times = None
    for lname, law in laws.items():
        for sgn, tag in ((+1.0, "vplus"), (-1.0, "vminus")):
            if tc.t_end == 0.0:
                times = np.array([0.0])
                columns[f"x_{lname}_{tag}"] = np.array([tc.x0])
                continue
            traj = integrate_trajectory(law, tc.x0, m * sgn * tc.v0, 0.0,
                                        tc.t_end, integ,
                                        store_stride=tc.store_stride)
            times = traj.times
            columns[f"x_{lname}_{tag}"] = traj.xs
    ordered = {"t": times}
    ordered.update(columns)
    ordered["x_center"] = cfg.model.alpha * np.cos(times)
    ordered["sigma"] = np.full_like(times, PACKET_SIGMA)
    path = out_csv or _out_path(cfg, "stability.csv")
    write_csv(path, ordered)
    write_sidecar(path + ".json", {
        "scenario": "stability", "alpha": cfg.model.alpha,
        "mu": cfg.kernel.mu, "x0": tc.x0, "v0": tc.v0,
        "t_end": tc.t_end, "seed": cfg.run.seed})
    return {"path": path, "columns": ordered}


def run_ensemble(cfg, out_csv: str | None = None) -> dict:
    """Sample (optionally non-equilibrium), evolve, dump final (x, p)."""
    model = cfgmod.build_model(cfg.model)
    kernel = cfgmod.build_kernel(cfg.kernel)
    law = cfgmod.build_force_law(cfg.force, model, kernel)
    integ = cfgmod.build_integrator(cfg.integrator)
    ec = cfg.ensemble
    neq = cfgmod.parse_neq(ec.neq)
    if neq is None:
        ens = sample_equilibrium(model, kernel, 0.0, ec.n, cfg.run.seed)
    else:
        ens = sample_nonequilibrium(model, neq, kernel, 0.0, ec.n,
                                    cfg.run.seed)
    if ec.t_end > 0:
        ens = evolve_ensemble(ens, law, ec.t_end, integ,
                              strategy=ec.strategy,
                              truncation_budget=ec.truncation_budget)
    path = out_csv or _out_path(cfg, "ensemble.csv")
    write_csv(path, {"x": ens.xs, "p": ens.ps})
    sidecar = dict(ens.provenance)
    sidecar["truncated_count"] = ens.truncated_count
    sidecar["law"] = law.describe()
    write_sidecar(path + ".json", sidecar)
    return {"path": path, "ensemble": ens}


def run_relax(cfg, out_csv: str | None = None) -> dict:
    """Relaxation scenario: H(t) series CSV."""
    model = cfgmod.build_model(cfg.model)
    kernel = cfgmod.build_kernel(cfg.kernel)
    law = cfgmod.build_force_law(cfg.force, model, kernel)
    integ = cfgmod.build_integrator(cfg.integrator)
    grid = cfgmod.parse_grid_spec(cfg.grid.spec)
    times = cfgmod.parse_schedule(cfg.times.schedule)
    neq = cfgmod.parse_neq(cfg.ensemble.neq)
    series = run_relaxation(model, kernel, grid, times, cfg.ensemble.n,
                            cfg.run.seed, law=law, neq=neq, integ=integ,
                            strategy=cfg.ensemble.strategy)
    path = out_csv or _out_path(cfg, "relax.csv")
    write_csv(path, {"t": series.times, "hbar": series.hbar_values,
                     "hbar_floor": series.floors,
                     "out_of_range_mass": series.out_of_range})
    sidecar = dict(series.provenance)
    sidecar["n"] = series.n_particles
    sidecar["grid"] = cfg.grid.spec
    write_sidecar(path + ".json", sidecar)
    return {"path": path, "series": series}

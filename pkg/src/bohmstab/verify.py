"""Self-verification suite: every implemented equation gets an oracle check.

``run_verify("quick")`` covers the closed-form oracles, marginal contracts,
transport residuals, and trajectory reproductions in well under a minute;
``run_verify("full")`` adds the statistical contracts (equivariance of the
evolved ensemble and the coarse-grained H decay) at production sizes.

The ``liouville_force_form`` hook exists for mutation diagnostics: flipping
it to "printed" must make exactly the Gaussian transport-residual check fail,
demonstrating that this is the check pinning the force signs.
"""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import ks_2samp

from .config import default_phases
from .dynamics import (ForceLaw, IntegratorSpec, bohm_limit_position,
                       coherent_closed_form, force_from_flux_integral,
                       integrate_trajectory, liouville_residual,
                       modified_force)
from .ensemble import NonEquilibriumSpec, evolve_ensemble, sample_equilibrium
from .kernels import (KernelSpec, QuadratureSpec, check_marginals,
                      equilibrium_density, kernel_pdf)
from .relaxation import CoarseGrid, run_relaxation, trend_test
from .rng import rng_for
from .wavefunction import (CoherentState, EigenSuperposition, GridSolution,
                           GridSpec, eval_fields, evolve_grid)

GAUSS = KernelSpec("gaussian", 1.0)
LORENTZ = KernelSpec("lorentzian", 1.0)

# statistical scenarios (shared with the acceptance tests)
EQUIVARIANCE_N = 100_000
EQUIVARIANCE_T = 5.0
EQUIVARIANCE_DT = 5e-3
EQUIVARIANCE_SEEDS = (2024, 2025)
HTHEOREM_N = 200_000
HTHEOREM_T_END = 20.0
HTHEOREM_DELTA = 1.0
HTHEOREM_SEED = 424242
HTHEOREM_DT = 2.5e-3
HTHEOREM_GRID = CoarseGrid(-6.0, 6.0, 30, -6.0, 6.0, 30)


@dataclass
class CheckResult:
    name: str
    tolerance: float
    measured: float
    passed: bool
    seconds: float
    comparison: str = "<="   # measured vs tolerance


def _check(name, tolerance, measured, comparison="<=", started=None):
    seconds = time.time() - started if started else 0.0
    if comparison == "<=":
        passed = measured <= tolerance
    else:
        passed = measured >= tolerance
    return CheckResult(name, float(tolerance), float(measured), bool(passed),
                       round(seconds, 3), comparison)


# ---------------------------------------------------------------------------
# individual checks
# ---------------------------------------------------------------------------

def check_field_oracle() -> CheckResult:
    t0 = time.time()
    cs = CoherentState(1.0)
    rng = rng_for(7, "field-oracle")
    xs = rng.uniform(-3, 3, 100)
    ts = rng.uniform(0, 10, 100)
    worst = 0.0
    for x, t in zip(xs, ts):
        a = eval_fields(cs, float(x), float(t))
        b = cs.closed_form_fields(np.array([x]), float(t))
        worst = max(worst, abs(a.rho - b.rho[0]), abs(a.grad_s - b.grad_s[0]),
                    abs(a.grad_log_r - b.grad_log_r[0]), abs(a.q - b.q[0]),
                    abs(a.grad_q - b.grad_q[0]), abs(a.hess_s - b.hess_s[0]))
    return _check("coherent_field_oracle", 1e-10, worst, started=t0)


def check_norm_conservation() -> CheckResult:
    t0 = time.time()
    cs = CoherentState(1.0)
    spec = GridSpec(-10.0, 10.0, 512, 1e-3)
    sol = GridSolution.from_model(cs, spec, snapshot_stride=100)
    n0 = sol.norm_of(sol._psi_live)
    sol.solve_to(10.0)  # 1e4 steps
    drift = abs(sol.norm_of(sol._psi_live) - n0)
    return _check("grid_norm_drift_1e4_steps", 1e-10, drift, started=t0)


def check_grid_overlap() -> CheckResult:
    t0 = time.time()
    cs = CoherentState(1.0)
    spec = GridSpec(-10.0, 10.0, 512, 1e-3)
    sol = GridSolution.from_model(cs, spec, snapshot_stride=50)
    evolve_grid(sol, 0.0, 2.0)
    psi_num = sol.psi_at(2.0)
    psi_ana = cs.psi(sol.x, 2.0)
    overlap = abs(np.sum(np.conj(psi_num) * psi_ana) * sol.dx)
    overlap /= math.sqrt(sol.norm_of(psi_ana))
    return _check("grid_overlap_deficit_t2", 1e-6, 1.0 - overlap, started=t0)


def check_continuity() -> CheckResult:
    t0 = time.time()
    models = [CoherentState(1.0),
              EigenSuperposition(np.exp(1j * default_phases(3)) / math.sqrt(3))]
    h = 1e-4
    worst = 0.0
    rng = rng_for(11, "continuity")
    for model in models:
        for _ in range(25):
            x = float(rng.uniform(-2, 2))
            t = float(rng.uniform(0, 6))
            rho_tp = eval_fields(model, x, t + h).rho
            rho_tm = eval_fields(model, x, t - h).rho
            fp = eval_fields(model, x + h, t)
            fm = eval_fields(model, x - h, t)
            div_j = (fp.rho * fp.grad_s - fm.rho * fm.grad_s) / (2 * h)
            worst = max(worst, abs((rho_tp - rho_tm) / (2 * h) + div_j))
    return _check("continuity_residual", 1e-6, worst, started=t0)


def check_marginal(kernel: KernelSpec, what: str) -> CheckResult:
    t0 = time.time()
    cs = CoherentState(1.0)
    quad = QuadratureSpec() if kernel.kind == "gaussian" else \
        QuadratureSpec(half_range=1e3)
    rep = check_marginals(kernel, cs, 0.7, quad)
    tol = 1e-10 if kernel.kind == "gaussian" else 1e-6
    val = rep.density_error if what == "density" else rep.current_error
    return _check(f"{kernel.kind}_marginal_{what}", tol, val, started=t0)


def _residual_points(spec, model, n, seed, w_scale):
    rng = rng_for(seed, "residual-points")
    pts = []
    while len(pts) < n:
        x = float(rng.uniform(-2, 2))
        t = float(rng.uniform(0, 10))
        f = eval_fields(model, x, t)
        if not f.valid:
            continue
        p = float(f.grad_s + rng.uniform(-3, 3) * w_scale)
        pts.append((x, p, t))
    return pts


def check_liouville_gaussian(form: str = "corrected") -> CheckResult:
    t0 = time.time()
    cs = CoherentState(1.0)
    worst = 0.0
    for x, p, t in _residual_points(GAUSS, cs, 100, 13, math.sqrt(GAUSS.mu)):
        r = liouville_residual(GAUSS, cs, x, p, t, form=form)
        f = equilibrium_density(GAUSS, eval_fields(cs, x, t), p)
        worst = max(worst, abs(r) / f)
    return _check("liouville_residual_gaussian", 1e-6, worst, started=t0)


def check_liouville_printed_fails() -> CheckResult:
    t0 = time.time()
    cs = CoherentState(1.0)
    worst = 0.0
    for x, p, t in _residual_points(GAUSS, cs, 20, 17, math.sqrt(GAUSS.mu)):
        r = liouville_residual(GAUSS, cs, x, p, t, form="printed")
        f = equilibrium_density(GAUSS, eval_fields(cs, x, t), p)
        worst = max(worst, abs(r) / f)
    # the sign-flipped variant must FAIL transport: residual above 1e-3
    return _check("liouville_printed_form_breaks", 1e-3, worst,
                  comparison=">=", started=t0)


def check_liouville_lorentzian() -> CheckResult:
    t0 = time.time()
    cs = CoherentState(1.0)
    worst = 0.0
    for x, p, t in _residual_points(LORENTZ, cs, 100, 19, LORENTZ.mu):
        r = liouville_residual(LORENTZ, cs, x, p, t)
        f = equilibrium_density(LORENTZ, eval_fields(cs, x, t), p)
        worst = max(worst, abs(r) / f)
    return _check("liouville_residual_lorentzian", 1e-5, worst, started=t0)


def check_flux_oracle() -> CheckResult:
    t0 = time.time()
    cs = CoherentState(1.0)
    rng = rng_for(23, "flux-oracle")
    worst = 0.0
    for _ in range(20):
        x = float(rng.uniform(-2, 2))
        t = float(rng.uniform(0, 10))
        f = eval_fields(cs, x, t)
        p = float(f.grad_s + rng.uniform(-3, 3))
        generic = force_from_flux_integral(GAUSS, cs, x, p, t)
        closed = modified_force(GAUSS, f, x, p, cs.params, cs.potential)
        worst = max(worst, abs(generic - closed))
    return _check("gaussian_flux_construction_oracle", 1e-8, worst, started=t0)


def check_trajectory_oracle() -> CheckResult:
    t0 = time.time()
    cs = CoherentState(1.0)
    traj = integrate_trajectory(ForceLaw("modified", cs, GAUSS), 1.0, 0.25,
                                0.0, 20.0, IntegratorSpec("rk4", dt=1e-3),
                                store_stride=10)
    exact = coherent_closed_form(1.0, 0.25, 1.0, 1.0, traj.times)
    return _check("trajectory_vs_closed_form", 1e-5,
                  float(np.max(np.abs(traj.xs - exact))), started=t0)


def check_stability_bound() -> CheckResult:
    t0 = time.time()
    cs = CoherentState(1.0)
    worst = 0.0
    for v0 in (0.25, -0.25):
        traj = integrate_trajectory(ForceLaw("modified", cs, GAUSS), 1.0, v0,
                                    0.0, 20.0, IntegratorSpec("rk4", dt=1e-3),
                                    store_stride=10)
        worst = max(worst, float(np.max(np.abs(traj.xs - np.cos(traj.times)))))
    return _check("modified_stays_with_packet", 0.2501, worst, started=t0)


def check_bohm_escape() -> CheckResult:
    t0 = time.time()
    cs = CoherentState(1.0)
    reach = math.inf
    for v0 in (0.25, -0.25):
        traj = integrate_trajectory(ForceLaw("bohm", cs), 1.0, v0, 0.0, 20.0,
                                    IntegratorSpec("rk4", dt=1e-3),
                                    store_stride=10)
        reach = min(reach, abs(traj.xs[-1] - math.cos(traj.times[-1])))
    return _check("bohm_escapes_packet", 4.9, reach, comparison=">=",
                  started=t0)


def check_mu_zero_limit() -> CheckResult:
    t0 = time.time()
    cs = CoherentState(1.0)
    integ = IntegratorSpec("rk4", dt=1e-3)
    tm = integrate_trajectory(ForceLaw("modified", cs, KernelSpec("gaussian", 1e-6)),
                              1.0, 0.25, 0.0, 10.0, integ, store_stride=10)
    tb = integrate_trajectory(ForceLaw("bohm", cs), 1.0, 0.25, 0.0, 10.0,
                              integ, store_stride=10)
    return _check("mu_to_zero_matches_bohm", 1e-3,
                  float(np.max(np.abs(tm.xs - tb.xs))), started=t0)


def check_mean_force() -> CheckResult:
    t0 = time.time()
    cs = CoherentState(1.0)
    nodes, weights = np.polynomial.legendre.leggauss(120)
    half = 9.0 * math.sqrt(GAUSS.mu)
    w = nodes * half
    wts = weights * half
    worst = 0.0
    for x, t in ((0.7, 0.3), (1.5, 2.1), (-0.4, 4.9)):
        f = eval_fields(cs, x, t)
        forces = modified_force(GAUSS, f, x, f.grad_s + w, cs.params,
                                cs.potential)
        mean = float(np.sum(wts * kernel_pdf(GAUSS, w) * forces))
        target = (-cs.potential.gradient_scalar(x) - f.grad_q
                  + GAUSS.mu * f.grad_log_r / cs.params.mass)
        worst = max(worst, abs(mean - target))
    return _check("gaussian_mean_force_identity", 1e-8, worst, started=t0)


def check_closed_form_limit() -> CheckResult:
    t0 = time.time()
    ts = np.linspace(0.0, 10.0, 101)
    a = coherent_closed_form(1.3, -0.4, 1.0, 1e-12, ts)
    b = bohm_limit_position(1.3, -0.4, 1.0, ts)
    return _check("closed_form_mu_limit", 1e-9,
                  float(np.max(np.abs(a - b))), started=t0)


# ---------------------------------------------------------------------------
# statistical scenarios (full level; shared with acceptance tests)
# ---------------------------------------------------------------------------

def superposition_model(n_modes: int) -> EigenSuperposition:
    c = np.exp(1j * default_phases(n_modes))
    return EigenSuperposition(c / np.linalg.norm(c))


def grid_superposition_model(n_modes: int = 3, t_end: float = EQUIVARIANCE_T
                             ) -> GridSolution:
    analytic = superposition_model(n_modes)
    spec = GridSpec(-12.0, 12.0, 1024, 1e-3)
    sol = GridSolution.from_model(analytic, spec, snapshot_stride=2)
    sol.solve_to(t_end)
    return sol


def equivariance_statistics(model, mu: float = 1.0,
                            n: int = EQUIVARIANCE_N,
                            t_end: float = EQUIVARIANCE_T,
                            dt: float = EQUIVARIANCE_DT,
                            seeds=EQUIVARIANCE_SEEDS) -> dict:
    """Evolve an equilibrium sample and KS-compare with a fresh one.

    Returns the two-sample KS p-values on the x marginal and on the
    standardized momentum pulls (p - grad_s)/sqrt(mu/2).
    """
    kernel = KernelSpec("gaussian", mu)
    law = ForceLaw("modified", model, kernel)
    start = sample_equilibrium(model, kernel, 0.0, n, seeds[0])
    evolved = evolve_ensemble(start, law, t_end, IntegratorSpec(dt=dt),
                              strategy="table")
    fresh = sample_equilibrium(model, kernel, t_end, n, seeds[1])
    scale = math.sqrt(mu / 2.0)
    fe = eval_fields(model, evolved.active_xs, t_end)
    ff = eval_fields(model, fresh.xs, t_end)
    pull_e = (evolved.active_ps - fe.grad_s) / scale
    pull_f = (fresh.ps - ff.grad_s) / scale
    return {
        "ks_x_pvalue": float(ks_2samp(evolved.active_xs, fresh.xs).pvalue),
        "ks_pull_pvalue": float(ks_2samp(pull_e, pull_f).pvalue),
        "truncated_fraction": evolved.truncated_count / evolved.n,
        "rescued_steps": evolved.provenance.get("rescued_steps", 0),
    }


def htheorem_statistics(n: int = HTHEOREM_N, seed: int = HTHEOREM_SEED,
                        equilibrium_control: bool = True) -> dict:
    """Offset-start relaxation of the 4-mode superposition plus control."""
    model = superposition_model(4)
    times = np.linspace(0.0, HTHEOREM_T_END, 11)
    neq = NonEquilibriumSpec(momentum_law="offset", delta=HTHEOREM_DELTA)
    series = run_relaxation(model, GAUSS, HTHEOREM_GRID, times, n, seed,
                            neq=neq, integ=IntegratorSpec(dt=HTHEOREM_DT))
    trend = trend_test(series.times, series.hbar_values)
    out = {
        "h0": float(series.hbar_values[0]),
        "floor0": float(series.floors[0]),
        "h_end": float(series.hbar_values[-1]),
        "floor_end": float(series.floors[-1]),
        "trend_p_decreasing": trend["p_decreasing"],
        "slope": trend["slope"],
        "series": series,
    }
    if equilibrium_control:
        eq_times = np.linspace(0.0, 10.0, 6)
        eq = run_relaxation(model, GAUSS, HTHEOREM_GRID, eq_times, n,
                            seed + 1, integ=IntegratorSpec(dt=HTHEOREM_DT))
        out["eq_within_floor"] = bool(
            np.all(np.abs(eq.hbar_values) <= eq.floors))
        out["eq_series"] = eq
    return out


def check_equivariance(model_name: str) -> CheckResult:
    t0 = time.time()
    if model_name == "coherent":
        model = CoherentState(1.0)
    else:
        model = grid_superposition_model()
    stats = equivariance_statistics(model)
    measured = min(stats["ks_x_pvalue"], stats["ks_pull_pvalue"])
    return _check(f"equivariance_{model_name}", 0.01, measured,
                  comparison=">=", started=t0)


def check_htheorem() -> list[CheckResult]:
    t0 = time.time()
    stats = htheorem_statistics()
    results = [
        _check("htheorem_h0_above_floor", 5.0 * stats["floor0"],
               stats["h0"], comparison=">=", started=t0),
        _check("htheorem_decrease",
               stats["h0"] - 5.0 * stats["floor0"], stats["h_end"]),
        _check("htheorem_trend_99", 0.01, stats["trend_p_decreasing"]),
        _check("htheorem_equilibrium_flat", 1.0,
               1.0 if stats["eq_within_floor"] else 0.0, comparison=">="),
    ]
    return results


# ---------------------------------------------------------------------------
# runner
# ---------------------------------------------------------------------------

def run_verify(level: str = "quick",
               liouville_force_form: str = "corrected") -> dict:
    """Run the verification suite; returns a machine-readable report."""
    if level not in ("quick", "full"):
        raise ValueError("level must be quick or full")
    checks = [
        check_field_oracle(),
        check_norm_conservation(),
        check_grid_overlap(),
        check_continuity(),
        check_marginal(GAUSS, "density"),
        check_marginal(GAUSS, "current"),
        check_marginal(LORENTZ, "density"),
        check_marginal(LORENTZ, "current"),
        check_liouville_gaussian(form=liouville_force_form),
        check_liouville_printed_fails(),
        check_liouville_lorentzian(),
        check_flux_oracle(),
        check_trajectory_oracle(),
        check_stability_bound(),
        check_bohm_escape(),
        check_mu_zero_limit(),
        check_mean_force(),
        check_closed_form_limit(),
    ]
    if level == "full":
        checks.append(check_equivariance("coherent"))
        checks.append(check_equivariance("superposition_grid"))
        checks.extend(check_htheorem())
    return {
        "level": level,
        "checks": [asdict(c) for c in checks],
        "all_pass": all(c.passed for c in checks),
    }

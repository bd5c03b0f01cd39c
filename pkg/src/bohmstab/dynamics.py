"""Force laws, trajectory integration, and Liouville-residual verification.

Three particle dynamics share one interface:

* first-order guidance        x' = grad_s / m
* second-order quantum force  m x'' = -grad(V + Q)
* modified second-order law   m x'' = -grad V + F_Q(x, p, t)

For the Gaussian kernel the modified force, written with the signs that make
the phase-space equilibrium exactly transported (and the packet-frame motion
bounded, y'' = -mu y), is

    F_Q = -grad_q + (mu/m) grad_log_r + (hess_s/m) (p - grad_s).

The sign-flipped variant (``form="printed"``) is kept only so the residual
check can demonstrate that it breaks transport; see docs/theory.md for the
derivation.  For the Lorentzian kernel no closed form is used: the force is
built generically by integrating the phase-space continuity deficit over
momentum and dividing by the density (flux construction).  Its additive
constant is fixed by a finite lower cutoff because the Lorentzian flux at
p -> -infinity diverges logarithmically; the Liouville residual is
independent of that choice.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (DiracKernelError, InvalidFieldError,
                     InvalidNeighborhoodError, NodeRegionEnteredError,
                     StepBudgetError, StepUnderflowError, TailDivergenceError)
from .kernels import KernelSpec, equilibrium_density, kernel_pdf, kernel_pdf_dw
from .params import Potential, SystemParams
from .wavefunction import FieldSample, eval_fields


# ---------------------------------------------------------------------------
# pointwise force laws
# ---------------------------------------------------------------------------

def modified_force(spec: KernelSpec, fields: FieldSample, x, p,
                   params: SystemParams, potential: Potential,
                   form: str = "corrected"):
    """Total force -grad V + F_Q for the Gaussian kernel."""
    if spec.is_dirac:
        raise DiracKernelError("Dirac kernel has no p-dependent force; use bohm_force")
    if spec.kind != "gaussian":
        raise ValueError("modified_force is the Gaussian closed form; "
                         "use lorentzian_force for the Lorentzian kernel")
    if form not in ("corrected", "printed"):
        raise ValueError(f"unknown force form {form!r}")
    m = params.mass
    w = p - fields.grad_s
    sign = 1.0 if form == "corrected" else -1.0
    f_q = (-fields.grad_q
           + sign * (spec.mu / m) * fields.grad_log_r
           + sign * fields.hess_s * w / m)
    return -potential.gradient(x) + f_q


def bohm_force(fields: FieldSample, x, params: SystemParams,
               potential: Potential):
    """-grad(V + Q), independent of momentum."""
    return -potential.gradient(x) - fields.grad_q


def debroglie_velocity(fields: FieldSample, params: SystemParams):
    """grad_s / m."""
    return fields.grad_s / params.mass


def coherent_closed_form(x0: float, xdot0: float, alpha: float, mu: float, t):
    """Exact modified-dynamics trajectory for the coherent packet.

    X(t) = xdot0 sin(sqrt(mu) t)/sqrt(mu) + cos(sqrt(mu) t)(x0 - alpha)
           + alpha cos t, with the analytic mu -> 0 limit built in.
    """
    if mu < 0:
        raise ValueError("mu must be >= 0")
    t = np.asarray(t, dtype=float)
    root = math.sqrt(mu)
    # sin(root*t)/root = t * sinc(root*t/pi), finite at mu = 0
    osc = t * np.sinc(root * t / math.pi)
    return xdot0 * osc + np.cos(root * t) * (x0 - alpha) + alpha * np.cos(t)


def bohm_limit_position(x0: float, xdot0: float, alpha: float, t):
    """mu -> 0 limit of the closed form: x0 + xdot0 t + alpha (cos t - 1)."""
    t = np.asarray(t, dtype=float)
    return x0 + xdot0 * t + alpha * (np.cos(t) - 1.0)


# ---------------------------------------------------------------------------
# generic flux construction (Lorentzian force and the Gaussian cross-check)
# ---------------------------------------------------------------------------

def _continuity_pieces(fields: FieldSample, x, params: SystemParams,
                       potential: Potential):
    """rho, rho_x, rho_t, s1, s1_t, hess from one field sample.

    Time derivatives come from the transport identities of the wave equation
    (density continuity and the gradient of the phase equation), so only the
    spatial sample at (x, t) is needed.
    """
    m = params.mass
    rho = fields.rho
    rho_x = 2.0 * rho * fields.grad_log_r
    s1 = fields.grad_s
    hess = fields.hess_s
    rho_t = -(rho_x * s1 + rho * hess) / m
    s1_t = -s1 * hess / m - potential.gradient(x) - fields.grad_q
    return rho, rho_x, rho_t, s1, s1_t, hess


def _flux_panels(lo: float, hi: float, scale: float):
    """Panel edges between lo and hi, geometrically refined toward 0."""
    mags = [scale * (10.0 ** k) for k in range(-2, 12)]
    edges = {lo, hi}
    for mag in mags:
        for e in (-mag, mag):
            if lo < e < hi:
                edges.add(e)
    if lo < 0.0 < hi:
        edges.add(0.0)
    return np.array(sorted(edges))


def momentum_flux(spec: KernelSpec, model, x: float, t: float,
                  w_upper: float, w_lower: float | None = None,
                  n_panel_nodes: int = 48) -> float:
    """integral over w in [w_lower, w_upper] of the continuity deficit

        D(w) = df/dt + ((w + grad_s)/m) df/dx

    with f = rho K(w), all derivatives in closed form.  The default lower
    cutoff is far in the kernel tail; for the Lorentzian the integral grows
    logarithmically with that cutoff (heavy tail), which shifts the force by
    a p-independent amount and nothing else.
    """
    fields = eval_fields(model, x, t)
    if not np.all(fields.valid):
        raise InvalidFieldError(f"invalid fields at x={x}, t={t}")
    m = model.params.mass
    rho, rho_x, rho_t, s1, s1_t, hess = _continuity_pieces(
        fields, x, model.params, model.potential)
    if w_lower is None:
        w_lower = -default_tail_cutoff(spec)
    if w_upper <= w_lower:
        return 0.0
    scale = math.sqrt(spec.mu) if spec.kind == "gaussian" else spec.mu
    edges = _flux_panels(w_lower, w_upper, scale)
    nodes, weights = np.polynomial.legendre.leggauss(n_panel_nodes)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    w = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    wts = (half[:, None] * weights[None, :]).ravel()
    kv = kernel_pdf(spec, w)
    kd = kernel_pdf_dw(spec, w)
    deficit = (rho_t * kv - rho * s1_t * kd
               + ((w + s1) / m) * (rho_x * kv - rho * hess * kd))
    # decay sanity at the cutoff: |D| must keep shrinking toward w_lower
    # (the Lorentzian tail falls only like 1/w, which still passes)
    tail = abs(deficit[0])
    if tail > 1e-12 * np.max(np.abs(deficit)) + 1e-300:
        mid = int(np.argmin(np.abs(w - 0.5 * w_lower)))
        if mid != 0 and tail > 0.9 * abs(deficit[mid]):
            raise TailDivergenceError(
                f"flux integrand at the cutoff ({tail:.3e}) has not decayed; "
                "increase the tail cutoff")
    return float(np.sum(wts * deficit))


def default_tail_cutoff(spec: KernelSpec) -> float:
    if spec.kind == "gaussian":
        return 12.0 * math.sqrt(spec.mu)
    return max(1e3, 1e3 * spec.mu)


def force_from_flux_integral(spec: KernelSpec, model, x: float, p: float,
                             t: float, tail_cutoff: float | None = None,
                             n_panel_nodes: int = 48) -> float:
    """Force F(x,p,t) = -flux(p) / f(x,p,t) from the generic construction."""
    fields = eval_fields(model, x, t)
    if not np.all(fields.valid):
        raise InvalidFieldError(f"invalid fields at x={x}, t={t}")
    w_lower = None if tail_cutoff is None else -float(tail_cutoff)
    flux = momentum_flux(spec, model, x, t, p - fields.grad_s,
                         w_lower=w_lower, n_panel_nodes=n_panel_nodes)
    f_val = equilibrium_density(spec, fields, p)
    return -flux / f_val


def lorentzian_force(spec: KernelSpec, model, x: float, p: float, t: float,
                     tail_cutoff: float | None = None) -> float:
    """Total force making the Lorentzian equilibrium exactly transported.

    Built by the flux construction; the heavy tail makes the additive
    (p-independent) part depend logarithmically on the lower cutoff, which is
    documented rather than hidden: the Liouville residual and all
    p-derivatives of the force are cutoff-independent.
    """
    if spec.kind != "lorentzian":
        raise ValueError("lorentzian_force requires a Lorentzian kernel")
    return force_from_flux_integral(spec, model, x, p, t,
                                    tail_cutoff=tail_cutoff)


# ---------------------------------------------------------------------------
# force-law dispatch
# ---------------------------------------------------------------------------

LAW_KINDS = ("modified", "bohm", "debroglie", "classical")


@dataclass
class ForceLaw:
    """A particle law bound to a wave-function model (and kernel if modified)."""

    kind: str
    model: object = None
    kernel: KernelSpec | None = None
    form: str = "corrected"
    params_override: SystemParams | None = None
    potential_override: Potential | None = None

    def __post_init__(self):
        if self.kind not in LAW_KINDS:
            raise ValueError(f"unknown law {self.kind!r}")
        if self.model is None and self.kind != "classical":
            raise ValueError(f"{self.kind} law needs a wave-function model")
        if self.kind == "modified":
            if self.kernel is None or self.kernel.is_dirac:
                raise DiracKernelError(
                    "the modified law needs a Gaussian or Lorentzian kernel; "
                    "the Dirac limit is the plain quantum-force law")

    @property
    def order(self) -> int:
        return 1 if self.kind == "debroglie" else 2

    @property
    def params(self) -> SystemParams:
        if self.params_override is not None:
            return self.params_override
        return self.model.params

    @property
    def potential(self) -> Potential:
        if self.potential_override is not None:
            return self.potential_override
        return self.model.potential

    def force_from_fields(self, fields: FieldSample, x, p):
        """Force using precomputed fields (Gaussian/Bohm/classical only)."""
        if self.kind == "modified":
            if self.kernel.kind == "lorentzian":
                raise ValueError("Lorentzian force needs the flux integral; "
                                 "use force(x, p, t)")
            return modified_force(self.kernel, fields, x, p, self.params,
                                  self.potential, form=self.form)
        if self.kind == "bohm":
            return bohm_force(fields, x, self.params, self.potential)
        if self.kind == "classical":
            return -self.potential.gradient(x)
        raise ValueError("first-order law has no force; use velocity()")

    def force(self, x, p, t: float):
        """Force at (x, p, t); scalar or vectorized over aligned arrays."""
        if self.kind == "modified" and self.kernel.kind == "lorentzian":
            if np.isscalar(x) or np.ndim(x) == 0:
                return lorentzian_force(self.kernel, self.model, float(x),
                                        float(p), t)
            return np.array([lorentzian_force(self.kernel, self.model,
                                              float(xi), float(pi), t)
                             for xi, pi in zip(np.asarray(x), np.asarray(p))])
        if self.kind == "classical":
            return -self.potential.gradient(x)
        fields = eval_fields(self.model, x, t)
        if not np.all(fields.valid):
            raise NodeRegionEnteredError(
                f"field evaluation entered the node region at t={t}",
                t_truncated=t)
        return self.force_from_fields(fields, x, p)

    def velocity(self, x, t: float):
        fields = eval_fields(self.model, x, t)
        if not np.all(fields.valid):
            raise NodeRegionEnteredError(
                f"field evaluation entered the node region at t={t}",
                t_truncated=t)
        return debroglie_velocity(fields, self.params)

    def describe(self) -> dict:
        out = {"law": self.kind}
        if self.kernel is not None:
            out["kernel"] = self.kernel.kind
            if not self.kernel.is_dirac:
                out["mu"] = self.kernel.mu
        if self.kind == "modified" and self.form != "corrected":
            out["form"] = self.form
        return out


# ---------------------------------------------------------------------------
# integrators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IntegratorSpec:
    """Fixed-step RK4 (default, reproducible) or adaptive RK45."""

    method: str = "rk4"
    dt: float = 1e-3
    rtol: float = 1e-8
    atol: float = 1e-10
    min_dt: float = 1e-12
    max_steps: int = 0          # 0 -> unlimited (rk45 only)

    def __post_init__(self):
        if self.method not in ("rk4", "rk45"):
            raise ValueError(f"unknown integrator {self.method!r}")
        if self.dt <= 0 or self.min_dt <= 0:
            raise ValueError("time steps must be positive")
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class Trajectory:
    """Sampled trajectory with per-step diagnostics."""

    times: np.ndarray
    xs: np.ndarray
    ps: np.ndarray
    law: dict
    diagnostics: dict = field(default_factory=dict)
    truncated: bool = False
    t_truncated: float | None = None

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")


# Dormand-Prince 5(4) tableau
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640,
                   -92097 / 339200, 187 / 2100, 1 / 40])


def _rk4_step(deriv, t, y, h):
    k1 = deriv(t, y)
    k2 = deriv(t + 0.5 * h, tuple(yi + 0.5 * h * ki for yi, ki in zip(y, k1)))
    k3 = deriv(t + 0.5 * h, tuple(yi + 0.5 * h * ki for yi, ki in zip(y, k2)))
    k4 = deriv(t + h, tuple(yi + h * ki for yi, ki in zip(y, k3)))
    return tuple(yi + (h / 6.0) * (a + 2 * b + 2 * c + d)
                 for yi, a, b, c, d in zip(y, k1, k2, k3, k4))


def integrate_trajectory(law: ForceLaw, x0: float, p0: float | None,
                         t0: float, t1: float,
                         integ: IntegratorSpec = IntegratorSpec(),
                         store_stride: int = 1) -> Trajectory:
    """Integrate one particle from t0 to t1 under the given law.

    Second-order laws evolve (x, p); the first-order law evolves x and
    records p = m * dx/dt.  A step into the node-exclusion region raises
    NodeRegionEnteredError carrying the truncation time.
    """
    if t1 <= t0:
        raise ValueError("t1 must exceed t0")
    m = law.params.mass
    first_order = law.order == 1
    if first_order:
        def deriv(t, y):
            return (float(law.velocity(y[0], t)),)
        y = (float(x0),)
    else:
        if p0 is None:
            raise ValueError("second-order laws need an initial momentum")

        def deriv(t, y):
            return (y[1] / m, float(law.force(y[0], y[1], t)))
        y = (float(x0), float(p0))

    def record_state(t, y):
        if first_order:
            v = law.velocity(y[0], t)
            return y[0], m * float(v)
        return y

    if integ.method == "rk4":
        n_steps = max(1, round((t1 - t0) / integ.dt))
        h = (t1 - t0) / n_steps
        stored_t = [t0]
        x_rec, p_rec = record_state(t0, y)
        stored_x, stored_p = [x_rec], [p_rec]
        t = t0
        for i in range(n_steps):
            y = _rk4_step(deriv, t, y, h)
            t = t0 + (i + 1) * h
            if (i + 1) % store_stride == 0 or i == n_steps - 1:
                x_rec, p_rec = record_state(t, y)
                stored_t.append(t)
                stored_x.append(x_rec)
                stored_p.append(p_rec)
        return Trajectory(np.array(stored_t), np.array(stored_x),
                          np.array(stored_p), law.describe(),
                          diagnostics={"method": "rk4", "dt": h,
                                       "n_steps": n_steps})

    # adaptive Dormand-Prince 5(4)
    t, h = t0, integ.dt
    stored_t = [t0]
    x_rec, p_rec = record_state(t0, y)
    stored_x, stored_p = [x_rec], [p_rec]
    errors = []
    accepted = 0
    attempts = 0
    while t < t1 - 1e-14:
        attempts += 1
        if integ.max_steps and attempts > integ.max_steps:
            raise StepBudgetError(
                f"exceeded {integ.max_steps} step attempts at t={t}")
        h = min(h, t1 - t)
        if h < integ.min_dt:
            raise StepUnderflowError(f"step size underflow at t={t}")
        ks = []
        for stage in range(7):
            ts = t + _DP_C[stage] * h
            ys = tuple(yi + h * sum(a * k[j] for a, k in zip(_DP_A[stage], ks))
                       for j, yi in enumerate(y))
            ks.append(deriv(ts, ys))
        y5 = tuple(yi + h * sum(b * k[j] for b, k in zip(_DP_B5, ks))
                   for j, yi in enumerate(y))
        y4 = tuple(yi + h * sum(b * k[j] for b, k in zip(_DP_B4, ks))
                   for j, yi in enumerate(y))
        err = max(abs(a - b) / (integ.atol + integ.rtol * max(abs(a), abs(c)))
                  for a, b, c in zip(y5, y4, y))
        if err <= 1.0:
            t, y = t + h, y5
            accepted += 1
            errors.append(err)
            if accepted % store_stride == 0 or t >= t1 - 1e-14:
                x_rec, p_rec = record_state(t, y)
                stored_t.append(t)
                stored_x.append(x_rec)
                stored_p.append(p_rec)
        h *= min(5.0, max(0.2, 0.9 * (max(err, 1e-16)) ** -0.2))
    return Trajectory(np.array(stored_t), np.array(stored_x),
                      np.array(stored_p), law.describe(),
                      diagnostics={"method": "rk45",
                                   "error_estimates": np.array(errors)})


# ---------------------------------------------------------------------------
# verification operators
# ---------------------------------------------------------------------------

def _density_at(spec, model, x, p, t):
    fields = eval_fields(model, x, t)
    if not np.all(fields.valid):
        raise InvalidNeighborhoodError(
            f"finite-difference stencil hit invalid fields at x={x}, t={t}")
    return equilibrium_density(spec, fields, p), fields


def liouville_residual(spec: KernelSpec, model, x: float, p: float, t: float,
                       fd_steps: float = 1e-4, form: str = "corrected",
                       tail_cutoff: float | None = None) -> float:
    """Central-difference evaluation of the phase-space transport equation

        df/dt + (p/m) df/dx + d/dp [ F f ]

    at (x, p, t).  Vanishes to O(fd^2) exactly when F is the transport-exact
    force for the kernel; this is the check that pins every sign.
    """
    m = model.params.mass
    h = fd_steps

    def force(xv, pv, tv):
        if spec.kind == "gaussian":
            fields = eval_fields(model, xv, tv)
            if not np.all(fields.valid):
                raise InvalidNeighborhoodError(
                    f"stencil hit invalid fields at x={xv}, t={tv}")
            return modified_force(spec, fields, xv, pv, model.params,
                                  model.potential, form=form)
        return force_from_flux_integral(spec, model, xv, pv, tv,
                                        tail_cutoff=tail_cutoff)

    f_tp, _ = _density_at(spec, model, x, p, t + h)
    f_tm, _ = _density_at(spec, model, x, p, t - h)
    f_xp, _ = _density_at(spec, model, x + h, p, t)
    f_xm, _ = _density_at(spec, model, x - h, p, t)
    f_pp, _ = _density_at(spec, model, x, p + h, t)
    f_pm, _ = _density_at(spec, model, x, p - h, t)
    dfdt = (f_tp - f_tm) / (2.0 * h)
    dfdx = (f_xp - f_xm) / (2.0 * h)
    dflux = (force(x, p + h, t) * f_pp - force(x, p - h, t) * f_pm) / (2.0 * h)
    return float(dfdt + (p / m) * dfdx + dflux)


def flow_divergence(law: ForceLaw, fields: FieldSample, p,
                    x: float | None = None, t: float | None = None,
                    fd_step: float = 1e-5):
    """Divergence of the phase-space flow (d xdot / dx + d pdot / dp).

    Zero for the plain quantum-force law (force is p-independent and the
    velocity field is x-free); hess_s/m for the modified Gaussian law.
    """
    if law.kind in ("bohm", "classical"):
        return np.zeros_like(np.asarray(fields.hess_s, dtype=float)) + 0.0
    if law.kind == "debroglie":
        return fields.hess_s / law.params.mass
    if law.kernel.kind == "gaussian":
        return fields.hess_s / law.params.mass
    if x is None or t is None:
        raise ValueError("Lorentzian flow divergence needs x and t")
    fp = lorentzian_force(law.kernel, law.model, x, p + fd_step, t)
    fm = lorentzian_force(law.kernel, law.model, x, p - fd_step, t)
    return (fp - fm) / (2.0 * fd_step)

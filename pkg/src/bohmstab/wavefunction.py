"""Wave-function models and the local fields they induce.

Every model exposes complex derivatives (psi, psi', psi'', psi''') at (x, t);
``eval_fields`` assembles the hydrodynamic fields from them branch-free:

    grad_s     = hbar * Im(psi'/psi)
    grad_log_r = Re(psi'/psi)
    R''/R      = Re(psi''/psi) + Im(psi'/psi)**2
    q          = -(hbar**2 / 2m) * R''/R
    hess_s     = hbar * Im(psi''/psi - (psi'/psi)**2)

so no phase unwrapping is ever needed.  Points with rho below the
node-exclusion threshold come back flagged invalid instead of raising.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import OutOfDomainError, UnstableStepError
from .params import HARMONIC, Potential, SystemParams

NODE_EPSILON_FACTOR = 1e-12

_QUARTIC_ROOT_PI = math.pi ** (-0.25)


@dataclass
class FieldSample:
    """Local fields at (x, t); scalars or aligned arrays."""

    rho: object
    grad_s: object
    grad_log_r: object
    q: object
    grad_q: object
    hess_s: object
    valid: object


def _require_unit_system(params: SystemParams, potential: Potential, who: str):
    if params.hbar != 1.0 or params.mass != 1.0:
        raise ValueError(f"{who} is implemented in hbar=m=k=1 units")
    if potential.kind != "harmonic" or potential.k != 1.0:
        raise ValueError(f"{who} requires the unit harmonic potential")


class CoherentState:
    """Gaussian packet of the unit harmonic oscillator, center alpha*cos(t).

    psi(x,t) = pi^(-1/4) exp(-(x - alpha cos t)^2 / 2 + i S(x,t)) with
    S = -(t/2 + x alpha sin t - (alpha^2/4) sin 2t).  The x-independent part
    of S is fixed by the Schrodinger equation, not by the amplitude, and
    only matters for complex-psi comparisons.
    """

    def __init__(self, alpha: float,
                 params: SystemParams = SystemParams(),
                 potential: Potential = HARMONIC):
        _require_unit_system(params, potential, "CoherentState")
        self.alpha = float(alpha)
        self.params = params
        self.potential = potential

    # -- model protocol -------------------------------------------------
    def suggested_range(self):
        half = abs(self.alpha) + 10.0
        return (-half, half)

    def time_range(self):
        return (-math.inf, math.inf)

    def rho_max(self, t: float) -> float:
        return 1.0 / math.sqrt(math.pi)

    def psi(self, x, t: float):
        x = np.asarray(x, dtype=float)
        u = x - self.alpha * math.cos(t)
        s = -(0.5 * t + x * self.alpha * math.sin(t)
              - 0.25 * self.alpha ** 2 * math.sin(2.0 * t))
        return _QUARTIC_ROOT_PI * np.exp(-0.5 * u * u + 1j * s)

    def psi_derivs(self, x, t: float):
        x = np.asarray(x, dtype=float)
        psi = self.psi(x, t)
        l0 = -(x - self.alpha * math.cos(t)) - 1j * self.alpha * math.sin(t)
        l1 = l0 * l0 - 1.0
        l2 = l0 * (l0 * l0 - 3.0)
        return psi, psi * l0, psi * l1, psi * l2

    def psi_derivs_scalar(self, x: float, t: float):
        u = x - self.alpha * math.cos(t)
        s = -(0.5 * t + x * self.alpha * math.sin(t)
              - 0.25 * self.alpha ** 2 * math.sin(2.0 * t))
        psi = _QUARTIC_ROOT_PI * math.exp(-0.5 * u * u) * complex(math.cos(s), math.sin(s))
        l0 = complex(-u, -self.alpha * math.sin(t))
        l1 = l0 * l0 - 1.0
        l2 = l0 * (l0 * l0 - 3.0)
        return psi, psi * l0, psi * l1, psi * l2

    # -- independent closed-form route (kept as the oracle for tests) ---
    def closed_form_fields(self, x, t: float) -> FieldSample:
        x = np.asarray(x, dtype=float)
        u = x - self.alpha * math.cos(t)
        rho = np.exp(-u * u) / math.sqrt(math.pi)
        grad_s = np.full_like(x, -self.alpha * math.sin(t))
        q = -0.5 * (u * u - 1.0)
        return FieldSample(rho=rho, grad_s=grad_s, grad_log_r=-u, q=q,
                           grad_q=-u, hess_s=np.zeros_like(x),
                           valid=np.ones_like(x, dtype=bool))


class EigenSuperposition:
    """Superposition of unit-oscillator eigenstates, sum_n c_n phi_n e^{-i E_n t}."""

    def __init__(self, coefficients,
                 params: SystemParams = SystemParams(),
                 potential: Potential = HARMONIC):
        _require_unit_system(params, potential, "EigenSuperposition")
        c = np.asarray(coefficients, dtype=complex)
        if c.ndim != 1 or c.size == 0:
            raise ValueError("coefficients must be a non-empty 1-d sequence")
        norm = np.linalg.norm(c)
        if not math.isclose(norm, 1.0, rel_tol=0, abs_tol=1e-9):
            raise ValueError(f"coefficient vector must have unit norm, got {norm}")
        self.coefficients = c
        self.energies = np.arange(c.size) + 0.5
        self.params = params
        self.potential = potential
        self._rho_bound = (np.sum(np.abs(c)) * _QUARTIC_ROOT_PI) ** 2

    def suggested_range(self):
        half = math.sqrt(2.0 * self.energies[-1]) + 8.0
        return (-half, half)

    def time_range(self):
        return (-math.inf, math.inf)

    def rho_max(self, t: float) -> float:
        # upper bound on max_x |psi|^2; only used to set the node threshold
        return self._rho_bound

    def psi(self, x, t: float):
        x = np.asarray(x, dtype=float)
        ct = self.coefficients * np.exp(-1j * self.energies * t)
        return np.tensordot(ct, self._phi_table(x)[:-1], axes=(0, 0))

    def _phi_table(self, x):
        """Eigenfunctions phi_0..phi_m (one above the highest mode)."""
        n_modes = self.coefficients.size
        phi = np.empty((n_modes + 1,) + x.shape, dtype=float)
        phi[0] = _QUARTIC_ROOT_PI * np.exp(-0.5 * x * x)
        if n_modes >= 1:
            phi[1] = math.sqrt(2.0) * x * phi[0]
        for n in range(1, n_modes):
            phi[n + 1] = (math.sqrt(2.0 / (n + 1)) * x * phi[n]
                          - math.sqrt(n / (n + 1)) * phi[n - 1])
        return phi

    def psi_derivs(self, x, t: float):
        x = np.asarray(x, dtype=float)
        phi = self._phi_table(x)
        ct = self.coefficients * np.exp(-1j * self.energies * t)
        n = np.arange(self.coefficients.size)
        psi = np.tensordot(ct, phi[:-1], axes=(0, 0))
        # phi_n' = sqrt(n/2) phi_{n-1} - sqrt((n+1)/2) phi_{n+1}
        dphi = (np.sqrt(n / 2.0)[:, None] * np.vstack([np.zeros_like(x)[None], phi[:-2]])
                - np.sqrt((n + 1) / 2.0)[:, None] * phi[1:])
        d1 = np.tensordot(ct, dphi, axes=(0, 0))
        # phi_n'' = (x^2 - 2 E_n) phi_n ;  phi_n''' = 2x phi_n + (x^2 - 2 E_n) phi_n'
        x2 = x * x
        d2 = x2 * psi - np.tensordot(2.0 * self.energies * ct, phi[:-1], axes=(0, 0))
        d3 = 2.0 * x * psi + x2 * d1 - np.tensordot(2.0 * self.energies * ct, dphi, axes=(0, 0))
        return psi, d1, d2, d3

    def psi_derivs_scalar(self, x: float, t: float):
        n_modes = self.coefficients.size
        phi = [0.0] * (n_modes + 1)
        phi[0] = _QUARTIC_ROOT_PI * math.exp(-0.5 * x * x)
        if n_modes >= 1:
            phi[1] = math.sqrt(2.0) * x * phi[0]
        for n in range(1, n_modes):
            phi[n + 1] = (math.sqrt(2.0 / (n + 1)) * x * phi[n]
                          - math.sqrt(n / (n + 1)) * phi[n - 1])
        psi = d1 = d2 = d3 = 0j
        for n in range(n_modes):
            en = n + 0.5
            ph = -en * t
            ct = self.coefficients[n] * complex(math.cos(ph), math.sin(ph))
            dphi = (math.sqrt(n / 2.0) * phi[n - 1] if n >= 1 else 0.0) \
                - math.sqrt((n + 1) / 2.0) * phi[n + 1]
            psi += ct * phi[n]
            d1 += ct * dphi
            d2 += ct * (x * x - 2.0 * en) * phi[n]
            d3 += ct * (2.0 * x * phi[n] + (x * x - 2.0 * en) * dphi)
        return psi, d1, d2, d3


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid wide enough that psi is negligible at the edges."""

    x_min: float
    x_max: float
    n_points: int
    dt: float
    boundary: str = "wide"

    def __post_init__(self):
        if self.x_max <= self.x_min:
            raise ValueError("x_max must exceed x_min")
        if self.n_points < 8 or self.n_points & (self.n_points - 1):
            raise ValueError("n_points must be a power of two (>= 8)")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.boundary not in ("periodic", "wide"):
            raise ValueError(f"unknown boundary {self.boundary!r}")


class GridSolution:
    """Split-step (Strang) solution of the 1-d Schrodinger equation.

    Snapshots are kept every ``snapshot_stride`` steps; evaluation between
    stored times uses cubic interpolation in t, spectral differentiation in x,
    and cubic splines off-grid.  Single writer: ``solve_to`` mutates, field
    evaluation is read-only.
    """

    NORM_DRIFT_PER_STEP = 1e-10
    EDGE_DENSITY_WARN = 1e-8

    def __init__(self, spec: GridSpec, psi0, t0: float = 0.0,
                 params: SystemParams = SystemParams(),
                 potential: Potential = HARMONIC,
                 snapshot_stride: int = 1):
        self.spec = spec
        self.params = params
        self.potential = potential
        self.snapshot_stride = int(snapshot_stride)
        if self.snapshot_stride < 1:
            raise ValueError("snapshot_stride must be >= 1")
        n = spec.n_points
        self.x = spec.x_min + (spec.x_max - spec.x_min) * np.arange(n) / n
        self.dx = self.x[1] - self.x[0]
        self.k = 2.0 * math.pi * np.fft.fftfreq(n, d=self.dx)
        self._v = potential.value(self.x)
        psi0 = np.asarray(psi0, dtype=complex)
        if psi0.shape != self.x.shape:
            raise ValueError("psi0 shape does not match the grid")
        psi0 = psi0 / math.sqrt(self.norm_of(psi0))
        self._t0 = float(t0)
        self._times = [float(t0)]
        self._snapshots = [psi0.copy()]
        self._psi_live = psi0.copy()
        self._t_live = float(t0)
        self._steps_since_snapshot = 0
        self._deriv_cache = {}
        self._spline_cache = {}

    @classmethod
    def from_model(cls, model, spec: GridSpec, t0: float = 0.0,
                   snapshot_stride: int = 1) -> "GridSolution":
        x = spec.x_min + (spec.x_max - spec.x_min) * np.arange(spec.n_points) / spec.n_points
        return cls(spec, model.psi(x, t0), t0=t0, params=model.params,
                   potential=model.potential, snapshot_stride=snapshot_stride)

    # -- basic quantities ------------------------------------------------
    def norm_of(self, psi) -> float:
        return float(np.sum(np.abs(psi) ** 2) * self.dx)

    def suggested_range(self):
        return (float(self.x[0]), float(self.x[-1]))

    def time_range(self):
        return (self._t0, self._t_live)

    def rho_max(self, t: float) -> float:
        i = min(range(len(self._times)), key=lambda j: abs(self._times[j] - t))
        return float(np.max(np.abs(self._snapshots[i]) ** 2))

    # -- propagation -----------------------------------------------------
    def _strang_step(self, psi, dt: float):
        hbar, m = self.params.hbar, self.params.mass
        half_v = np.exp(-0.5j * dt * self._v / hbar)
        kin = np.exp(-0.5j * dt * hbar * self.k ** 2 / m)
        out = half_v * psi
        out = np.fft.ifft(kin * np.fft.fft(out))
        return half_v * out

    def solve_to(self, t_to: float):
        """Advance the stored solution to t_to (no-op if already covered)."""
        if t_to <= self._t_live + 1e-12:
            return self
        dt = self.spec.dt
        n_steps = int(math.floor((t_to - self._t_live) / dt + 1e-9))
        remainder = t_to - self._t_live - n_steps * dt
        norm_before = self.norm_of(self._psi_live)
        for _ in range(n_steps):
            self._psi_live = self._strang_step(self._psi_live, dt)
            self._t_live += dt
            self._steps_since_snapshot += 1
            if self._steps_since_snapshot >= self.snapshot_stride:
                self._record_snapshot()
        if remainder > 1e-12:
            self._psi_live = self._strang_step(self._psi_live, remainder)
            self._t_live += remainder
            self._record_snapshot()
        drift = abs(self.norm_of(self._psi_live) - norm_before)
        budget = self.NORM_DRIFT_PER_STEP * max(1, n_steps + 1)
        if drift > budget:
            raise UnstableStepError(
                f"norm drift {drift:.3e} exceeds {budget:.3e} over {n_steps} steps")
        self._check_edges()
        self._deriv_cache.clear()
        self._spline_cache.clear()
        return self

    def _record_snapshot(self):
        self._times.append(self._t_live)
        self._snapshots.append(self._psi_live.copy())
        self._steps_since_snapshot = 0

    def _check_edges(self):
        rho = np.abs(self._psi_live) ** 2
        edge = max(rho[0], rho[1], rho[-2], rho[-1])
        if edge > self.EDGE_DENSITY_WARN * rho.max():
            warnings.warn(
                f"edge density {edge:.3e} suggests the packet reached the "
                "domain boundary; widen the grid", stacklevel=2)

    # -- evaluation --------------------------------------------------------
    def _bracket(self, t: float):
        """Snapshot indices and Lagrange weights for cubic time interp."""
        times = self._times
        if t < times[0] - 1e-12 or t > times[-1] + 1e-12:
            raise OutOfDomainError(
                f"t={t} outside solved range [{times[0]}, {times[-1]}]")
        if len(times) == 1:
            return [0], [1.0]
        j = int(np.searchsorted(times, t)) - 1
        j = max(0, min(j, len(times) - 2))
        if len(times) < 4:   # fewer than 4 snapshots: linear
            t0, t1 = times[j], times[j + 1]
            w = (t - t0) / (t1 - t0)
            return [j, j + 1], [1.0 - w, w]
        lo = max(0, min(j - 1, len(times) - 4))
        ts = times[lo:lo + 4]
        weights = []
        for i in range(4):
            li = 1.0
            for q in range(4):
                if q != i:
                    li *= (t - ts[q]) / (ts[i] - ts[q])
            weights.append(li)
        return [lo, lo + 1, lo + 2, lo + 3], weights

    def psi_at(self, t: float):
        """Cubic time interpolation of psi over the stored snapshots."""
        idx, weights = self._bracket(t)
        out = np.zeros_like(self._snapshots[0])
        for i, w in zip(idx, weights):
            out += w * self._snapshots[i]
        return out

    def psi_derivs_grid(self, t: float):
        """(psi, psi', psi'', psi''') on the grid at time t (spectral)."""
        key = float(t)
        hit = self._deriv_cache.get(key)
        if hit is not None:
            return hit
        psi = self.psi_at(t)
        ft = np.fft.fft(psi)
        ik = 1j * self.k
        d1 = np.fft.ifft(ik * ft)
        d2 = np.fft.ifft(ik ** 2 * ft)
        d3 = np.fft.ifft(ik ** 3 * ft)
        result = (psi, d1, d2, d3)
        if len(self._deriv_cache) > 16:
            self._deriv_cache.clear()
        self._deriv_cache[key] = result
        return result

    def psi(self, x, t: float):
        x = np.asarray(x, dtype=float)
        self._check_x(x)
        psi, _, _, _ = self.psi_derivs_grid(t)
        return CubicSpline(self.x, psi)(x)

    def _snapshot_spline(self, i: int) -> CubicSpline:
        """Derivative spline at a stored snapshot (cached; heavily reused)."""
        spline = self._spline_cache.get(i)
        if spline is None:
            psi = self._snapshots[i]
            ft = np.fft.fft(psi)
            ik = 1j * self.k
            stack = np.stack([psi, np.fft.ifft(ik * ft),
                              np.fft.ifft(ik ** 2 * ft),
                              np.fft.ifft(ik ** 3 * ft)], axis=-1)
            spline = CubicSpline(self.x, stack)
            if len(self._spline_cache) > 128:
                self._spline_cache.clear()
            self._spline_cache[i] = spline
        return spline

    def psi_derivs(self, x, t: float):
        # spectral differentiation and time interpolation are both linear in
        # psi, so interpolating per-snapshot derivative splines in t is
        # exactly the derivative of the time-interpolated psi
        x = np.asarray(x, dtype=float)
        self._check_x(x)
        idx, weights = self._bracket(t)
        vals = weights[0] * self._snapshot_spline(idx[0])(x)
        for i, w in zip(idx[1:], weights[1:]):
            vals = vals + w * self._snapshot_spline(i)(x)
        return vals[..., 0], vals[..., 1], vals[..., 2], vals[..., 3]

    def _check_x(self, x):
        if np.any(x < self.x[0]) or np.any(x > self.x[-1]):
            raise OutOfDomainError("x outside the grid domain")

    def export_csv(self, path, t: float):
        """Debug snapshot: columns x, re_psi, im_psi."""
        psi = self.psi_at(t)
        with open(path, "w", newline="") as fh:
            fh.write("# bohmstab-csv v1\n")
            writer = csv.writer(fh)
            writer.writerow(["x", "re_psi", "im_psi"])
            for xi, pi in zip(self.x, psi):
                writer.writerow([format(xi, ".17g"),
                                 format(pi.real, ".17g"),
                                 format(pi.imag, ".17g")])


def evolve_grid(model: GridSolution, t_from: float, t_to: float) -> GridSolution:
    """Extend a grid solution from its solved end through t_to."""
    if t_to <= t_from:
        raise ValueError("t_to must exceed t_from")
    lo, hi = model.time_range()
    if t_from < lo - 1e-12 or t_from > hi + 1e-12:
        raise OutOfDomainError(f"t_from={t_from} outside solved range [{lo}, {hi}]")
    return model.solve_to(t_to)


def _assemble(psi, d1, d2, d3, hbar: float, mass: float, eps: float):
    rho = np.abs(psi) ** 2
    valid = rho >= eps
    with np.errstate(all="ignore"):
        inv = np.where(valid, psi, 1.0)
        l0 = d1 / inv
        l1 = d2 / inv
        l2 = d3 / inv
    grad_log_r = np.where(valid, l0.real, 0.0)
    s1 = np.where(valid, l0.imag, 0.0)          # S'/hbar
    hess = (l1 - l0 * l0).imag                  # S''/hbar
    d2r = l1.real + s1 * s1                     # R''/R
    d3r = l2.real + 3.0 * grad_log_r * s1 * s1 + 3.0 * s1 * hess
    coef = -(hbar * hbar) / (2.0 * mass)
    return FieldSample(
        rho=rho,
        grad_s=hbar * s1,
        grad_log_r=grad_log_r,
        q=np.where(valid, coef * d2r, 0.0),
        grad_q=np.where(valid, coef * (d3r - d2r * grad_log_r), 0.0),
        hess_s=np.where(valid, hbar * hess, 0.0),
        valid=valid,
    )


def eval_fields(model, x, t: float,
                node_epsilon_factor: float = NODE_EPSILON_FACTOR) -> FieldSample:
    """All psi-derived local fields at (x, t); x may be a scalar or an array."""
    scalar = np.isscalar(x) or (isinstance(x, np.ndarray) and x.ndim == 0)
    eps = node_epsilon_factor * model.rho_max(t)
    hbar, mass = model.params.hbar, model.params.mass
    if scalar and hasattr(model, "psi_derivs_scalar"):
        psi, d1, d2, d3 = model.psi_derivs_scalar(float(x), t)
        rho = psi.real * psi.real + psi.imag * psi.imag
        if rho < eps:
            return FieldSample(rho=rho, grad_s=0.0, grad_log_r=0.0, q=0.0,
                               grad_q=0.0, hess_s=0.0, valid=False)
        l0 = d1 / psi
        l1 = d2 / psi
        l2 = d3 / psi
        s1 = l0.imag
        glr = l0.real
        hess = (l1 - l0 * l0).imag
        d2r = l1.real + s1 * s1
        d3r = l2.real + 3.0 * glr * s1 * s1 + 3.0 * s1 * hess
        coef = -(hbar * hbar) / (2.0 * mass)
        return FieldSample(rho=rho, grad_s=hbar * s1, grad_log_r=glr,
                           q=coef * d2r, grad_q=coef * (d3r - d2r * glr),
                           hess_s=hbar * hess, valid=True)
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    sample = _assemble(*model.psi_derivs(xs, t), hbar, mass, eps)
    if scalar:
        return FieldSample(*(np.asarray(getattr(sample, f))[0].item()
                             for f in ("rho", "grad_s", "grad_log_r", "q",
                                       "grad_q", "hess_s", "valid")))
    return sample

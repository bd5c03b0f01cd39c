"""Momentum-spread kernels defining the phase-space equilibrium family.

The equilibrium density factorizes as rho(x,t) * K(p - grad_s) where K is a
normalized momentum kernel: Gaussian of width mu (variance mu/2), Lorentzian
of scale mu, or the Dirac point mass as the mu -> 0 limit.  The Gaussian
density carries the (pi*mu)^(-1/2) factor so its p-marginal is exactly rho.

The Lorentzian has no mean or variance, so every Lorentzian diagnostic is
quantile-based, and integrals against it use symmetric (principal-value)
limits.  Plain truncation at +-L converges only like 1/L; the marginal checks
therefore add the closed-form kernel tail beyond the quadrature range.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DiracDensityError, QuadratureNotConvergedError
from .wavefunction import FieldSample, eval_fields

KERNEL_KINDS = ("gaussian", "lorentzian", "dirac")


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family and width; mu is ignored for the Dirac kernel."""

    kind: str
    mu: float = 0.0

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind != "dirac" and self.mu <= 0:
            raise ValueError(f"{self.kind} kernel requires mu > 0, got {self.mu}")

    @property
    def is_dirac(self) -> bool:
        return self.kind == "dirac"


def kernel_pdf(spec: KernelSpec, w):
    """Normalized momentum kernel K(w), w = p - grad_s."""
    if spec.kind == "gaussian":
        return np.exp(-np.square(w) / spec.mu) / math.sqrt(math.pi * spec.mu)
    if spec.kind == "lorentzian":
        return (spec.mu / math.pi) / (np.square(w) + spec.mu ** 2)
    raise DiracDensityError("the Dirac kernel has no pointwise density")


def kernel_pdf_dw(spec: KernelSpec, w):
    """dK/dw for the smooth kernels."""
    if spec.kind == "gaussian":
        return -2.0 * np.asarray(w) / spec.mu * kernel_pdf(spec, w)
    if spec.kind == "lorentzian":
        return -2.0 * np.asarray(w) * (spec.mu / math.pi) / np.square(np.square(w) + spec.mu ** 2)
    raise DiracDensityError("the Dirac kernel has no pointwise density")


def equilibrium_density(spec: KernelSpec, fields: FieldSample, p):
    """Phase-space equilibrium density rho * K(p - grad_s)."""
    if spec.is_dirac:
        raise DiracDensityError(
            "Dirac equilibrium exists only under integrals; "
            "use the deterministic momentum map instead")
    return fields.rho * kernel_pdf(spec, np.asarray(p) - fields.grad_s)


def sample_conditional_momentum(spec: KernelSpec, fields: FieldSample, rng,
                                n: int | None = None):
    """Draw p | x from the kernel centered at grad_s.

    For array-valued fields one draw per element is returned; for scalar
    fields pass n to get a batch.
    """
    grad_s = np.asarray(fields.grad_s, dtype=float)
    size = grad_s.shape if grad_s.ndim else (n if n is not None else None)
    if spec.kind == "dirac":
        if size in (None, ()):
            return float(grad_s)
        return np.broadcast_to(grad_s, size if grad_s.ndim else (n,)).copy()
    if spec.kind == "gaussian":
        z = rng.standard_normal(size)
        return grad_s + z * math.sqrt(spec.mu / 2.0)
    u = rng.uniform(0.0, 1.0, size)
    return grad_s + spec.mu * np.tan(math.pi * (u - 0.5))


@dataclass(frozen=True)
class QuadratureSpec:
    """Momentum quadrature: symmetric range and Gauss-Legendre order.

    half_range is in units of sqrt(mu) for the Gaussian and absolute for the
    Lorentzian (whose effective support has no scale: tails are O(1/L)).
    """

    half_range: float = 0.0      # 0 -> kernel-dependent default
    n_nodes: int = 200
    convergence_tol: float = 1e-9
    analytic_tail: bool = True


@dataclass
class MarginalReport:
    density_error: float
    current_error: float
    kernel: KernelSpec
    n_positions: int
    half_range: float
    positions: np.ndarray = field(repr=False, default=None)


def _kernel_moments_on_range(spec: KernelSpec, grad_s, half_range: float,
                             n_nodes: int, analytic_tail: bool):
    """(integral K, integral (w+grad_s) K) over [-L, L] in w, per position.

    grad_s may be an array (vectorized over positions).  Symmetric nodes make
    the odd part cancel exactly (principal value); the closed-form kernel tail
    beyond +-L is added when analytic_tail is set.
    """
    grad_s = np.asarray(grad_s, dtype=float)
    if spec.kind == "gaussian":
        nodes, weights = np.polynomial.legendre.leggauss(n_nodes)
        w = nodes * half_range
        wts = weights * half_range
        kv = kernel_pdf(spec, w)
        mass = float(np.sum(wts * kv))
        first = np.sum(wts * w * kv)  # 0 by symmetry up to rounding
        tail = max(0.0, math.erfc(half_range / math.sqrt(spec.mu)))
    elif spec.kind == "lorentzian":
        # w = mu tan(theta) turns K dw into d(theta)/pi: exact for the mass,
        # and symmetric nodes cancel the odd first moment (principal value)
        theta_l = math.atan(half_range / spec.mu)
        nodes, weights = np.polynomial.legendre.leggauss(n_nodes)
        theta = nodes * theta_l
        wts = weights * theta_l
        w = spec.mu * np.tan(theta)
        mass = float(np.sum(wts) / math.pi)
        first = float(np.sum(wts * w) / math.pi)
        tail = 1.0 - 2.0 * theta_l / math.pi
    else:
        return np.ones_like(grad_s), grad_s, 0.0
    if analytic_tail:
        mass += tail
        # symmetric tail of w*K(w) cancels in the principal value
    mass_arr = np.full_like(grad_s, mass)
    current = first + grad_s * mass
    return mass_arr, current, tail


def default_positions(model, t: float, n: int = 50):
    """Positions covering the packet where rho is non-negligible."""
    lo, hi = model.suggested_range()
    probe = np.linspace(lo, hi, 801)
    rho = eval_fields(model, probe, t).rho
    keep = probe[rho >= 1e-6 * rho.max()]
    return np.linspace(keep[0], keep[-1], n)


def check_marginals(spec: KernelSpec, model, t: float,
                    quadrature: QuadratureSpec = QuadratureSpec(),
                    positions=None) -> MarginalReport:
    """Verify the p-marginal (rho) and current (rho grad_s / m) contracts."""
    if positions is None:
        positions = default_positions(model, t)
    positions = np.asarray(positions, dtype=float)
    fields = eval_fields(model, positions, t)
    m = model.params.mass
    if spec.is_dirac:
        # delta sifting is exact: marginals computed symbolically
        return MarginalReport(0.0, 0.0, spec, positions.size, math.inf, positions)
    half = quadrature.half_range
    if half <= 0:
        half = 10.0 * math.sqrt(spec.mu) if spec.kind == "gaussian" else 1e3

    def errors(h):
        mass, current, _ = _kernel_moments_on_range(
            spec, fields.grad_s, h, quadrature.n_nodes, quadrature.analytic_tail)
        density_err = float(np.max(np.abs(fields.rho * mass - fields.rho)))
        target = fields.rho * fields.grad_s / m
        current_err = float(np.max(np.abs(fields.rho * current / m - target)))
        return density_err, current_err

    d1, c1 = errors(half)
    d2, c2 = errors(2.0 * half)
    if abs(d2 - d1) > quadrature.convergence_tol or abs(c2 - c1) > quadrature.convergence_tol:
        raise QuadratureNotConvergedError(
            f"doubling the range moved marginal errors by "
            f"({abs(d2 - d1):.3e}, {abs(c2 - c1):.3e})")
    return MarginalReport(d1, c1, spec, positions.size, half, positions)

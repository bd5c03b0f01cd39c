import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bohmstab.dynamics import (ForceLaw, IntegratorSpec, bohm_force,
                               bohm_limit_position, coherent_closed_form,
                               debroglie_velocity, flow_divergence,
                               force_from_flux_integral, integrate_trajectory,
                               liouville_residual, lorentzian_force,
                               modified_force, momentum_flux)
from bohmstab.errors import (DiracKernelError, NodeRegionEnteredError)
from bohmstab.kernels import KernelSpec, equilibrium_density, kernel_pdf
from bohmstab.params import HARMONIC, SystemParams
from bohmstab.wavefunction import (CoherentState, EigenSuperposition,
                                   FieldSample, eval_fields)

PARAMS = SystemParams()


def test_modified_force_at_center(coherent, gauss1):
    f = eval_fields(coherent, 1.0, 0.0)
    for p in (-1.0, 0.0, 2.5):
        assert modified_force(gauss1, f, 1.0, p, PARAMS, HARMONIC) == \
            pytest.approx(-1.0, abs=1e-12)


def test_modified_force_decomposition(coherent, gauss1):
    # -V' = -2, -Q' = +1, (mu/m) R'/R = -1, S'' term 0 -> total -2
    f = eval_fields(coherent, 2.0, 0.0)
    for p in (0.0, 1.0):
        assert modified_force(gauss1, f, 2.0, p, PARAMS, HARMONIC) == \
            pytest.approx(-2.0, abs=1e-12)


def test_plane_wave_classical_limit(gauss1):
    flat = FieldSample(rho=1.0, grad_s=0.4, grad_log_r=0.0, q=0.0,
                       grad_q=0.0, hess_s=0.0, valid=True)
    got = modified_force(gauss1, flat, 1.5, 2.0, PARAMS, HARMONIC)
    assert got == pytest.approx(-HARMONIC.gradient_scalar(1.5), abs=1e-14)


def test_modified_force_rejects_dirac(coherent):
    f = eval_fields(coherent, 1.0, 0.0)
    with pytest.raises(DiracKernelError):
        modified_force(KernelSpec("dirac"), f, 1.0, 0.0, PARAMS, HARMONIC)


def test_bohm_force_constant_in_x(coherent):
    for x in (-2.0, 0.3, 1.0, 2.7):
        f = eval_fields(coherent, x, 0.0)
        assert bohm_force(f, x, PARAMS, HARMONIC) == pytest.approx(-1.0,
                                                                   abs=1e-12)


def test_bohm_force_ground_state_vanishes():
    ground = EigenSuperposition([1.0])
    for x in (-1.5, 0.0, 2.0):
        f = eval_fields(ground, x, 0.8)
        assert bohm_force(f, x, PARAMS, HARMONIC) == pytest.approx(0.0,
                                                                   abs=1e-12)


def test_debroglie_velocity_values(coherent):
    for t in (0.0, 1.1, 4.0):
        f = eval_fields(coherent, 0.4, t)
        assert debroglie_velocity(f, PARAMS) == pytest.approx(
            -math.sin(t), abs=1e-12)
    ground = EigenSuperposition([1.0])
    f = eval_fields(ground, 0.7, 2.0)
    assert debroglie_velocity(f, PARAMS) == pytest.approx(0.0, abs=1e-12)


def test_closed_form_quarter_period():
    assert coherent_closed_form(1.0, 0.25, 1.0, 1.0, math.pi / 2) == \
        pytest.approx(0.25, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(x0=st.floats(-2, 2), v0=st.floats(-2, 2), alpha=st.floats(-2, 2),
       mu=st.floats(0.0, 4.0))
def test_closed_form_initial_condition(x0, v0, alpha, mu):
    assert coherent_closed_form(x0, v0, alpha, mu, 0.0) == pytest.approx(
        x0, abs=1e-12)


def test_closed_form_mu_limit():
    ts = np.linspace(0, 10, 201)
    a = coherent_closed_form(1.0, 0.25, 1.0, 1e-12, ts)
    b = bohm_limit_position(1.0, 0.25, 1.0, ts)
    assert np.max(np.abs(a - b)) < 1e-9


def test_trajectory_matches_closed_form(coherent, gauss1):
    law = ForceLaw("modified", coherent, gauss1)
    traj = integrate_trajectory(law, 1.0, 0.25, 0.0, 20.0,
                                IntegratorSpec("rk4", dt=1e-3),
                                store_stride=20)
    exact = 0.25 * np.sin(traj.times) + np.cos(traj.times)
    assert np.max(np.abs(traj.xs - exact)) < 1e-6


def test_trajectory_rides_packet_center(coherent, gauss1):
    law = ForceLaw("modified", coherent, gauss1)
    traj = integrate_trajectory(law, 1.0, 0.0, 0.0, 12.0,
                                IntegratorSpec("rk4", dt=2e-3),
                                store_stride=50)
    assert np.max(np.abs(traj.xs - np.cos(traj.times))) < 1e-9


def test_bohm_trajectory_matches_limit_formula(coherent):
    law = ForceLaw("bohm", coherent)
    traj = integrate_trajectory(law, 1.0, 0.25, 0.0, 20.0,
                                IntegratorSpec("rk4", dt=1e-3),
                                store_stride=20)
    exact = bohm_limit_position(1.0, 0.25, 1.0, traj.times)
    assert np.max(np.abs(traj.xs - exact)) < 1e-6


def test_debroglie_trajectory(coherent):
    # x(t) = alpha cos t + (x0 - alpha): guidance moves with the packet
    law = ForceLaw("debroglie", coherent)
    traj = integrate_trajectory(law, 1.5, None, 0.0, 6.0,
                                IntegratorSpec("rk4", dt=1e-3),
                                store_stride=50)
    exact = np.cos(traj.times) + 0.5
    assert np.max(np.abs(traj.xs - exact)) < 1e-8
    assert traj.ps[0] == pytest.approx(-math.sin(0.0), abs=1e-10)


def test_oracle_equivalence_random_tuples(coherent):
    rng = np.random.default_rng(17)
    for _ in range(20):
        x0 = float(rng.uniform(-1, 2))
        v0 = float(rng.uniform(-1, 1))
        mu = float(rng.uniform(0.1, 4.0))
        law = ForceLaw("modified", coherent, KernelSpec("gaussian", mu))
        traj = integrate_trajectory(law, x0, v0, 0.0, 20.0,
                                    IntegratorSpec("rk4", dt=2e-3),
                                    store_stride=100)
        exact = coherent_closed_form(x0, v0, 1.0, mu, traj.times)
        assert np.max(np.abs(traj.xs - exact)) < 1e-5


def test_mu_zero_limit_matches_bohm(coherent):
    integ = IntegratorSpec("rk4", dt=1e-3)
    tiny = ForceLaw("modified", coherent, KernelSpec("gaussian", 1e-6))
    tm = integrate_trajectory(tiny, 1.0, 0.25, 0.0, 10.0, integ,
                              store_stride=50)
    tb = integrate_trajectory(ForceLaw("bohm", coherent), 1.0, 0.25, 0.0,
                              10.0, integ, store_stride=50)
    assert np.max(np.abs(tm.xs - tb.xs)) < 1e-3


def test_boundedness_of_modified_deviation(coherent):
    rng = np.random.default_rng(23)
    for _ in range(8):
        x0 = float(rng.uniform(-1, 2))
        v0 = float(rng.uniform(-1, 1))
        mu = float(rng.uniform(0.1, 4.0))
        law = ForceLaw("modified", coherent, KernelSpec("gaussian", mu))
        traj = integrate_trajectory(law, x0, v0, 0.0, 20.0,
                                    IntegratorSpec("rk4", dt=2e-3),
                                    store_stride=20)
        bound = abs(x0 - 1.0) + abs(v0) / math.sqrt(mu) + 1e-4
        assert np.max(np.abs(traj.xs - np.cos(traj.times))) <= bound


def test_rk45_matches_closed_form(coherent, gauss1):
    law = ForceLaw("modified", coherent, gauss1)
    traj = integrate_trajectory(law, 1.0, 0.25, 0.0, 20.0,
                                IntegratorSpec("rk45", dt=1e-2, rtol=1e-9,
                                               atol=1e-11))
    exact = 0.25 * np.sin(traj.times) + np.cos(traj.times)
    assert np.max(np.abs(traj.xs - exact)) < 1e-6
    assert traj.diagnostics["method"] == "rk45"
    assert len(traj.diagnostics["error_estimates"]) > 0


def test_trajectory_into_node_region_raises(coherent, gauss1):
    law = ForceLaw("modified", coherent, gauss1)
    with pytest.raises(NodeRegionEnteredError):
        integrate_trajectory(law, 8.0, 0.0, 0.0, 1.0,
                             IntegratorSpec("rk4", dt=1e-3))


# ---------------------------------------------------------------------------
# transport residuals and the flux construction
# ---------------------------------------------------------------------------

def _residual_points(rng, model, w_scale, n):
    pts = []
    while len(pts) < n:
        x = float(rng.uniform(-2, 2))
        t = float(rng.uniform(0, 10))
        f = eval_fields(model, x, t)
        p = float(f.grad_s + rng.uniform(-3, 3) * w_scale)
        pts.append((x, p, t))
    return pts


def test_liouville_gaussian_corrected(coherent, gauss1):
    rng = np.random.default_rng(2)
    for x, p, t in _residual_points(rng, coherent, 1.0, 25):
        r = liouville_residual(gauss1, coherent, x, p, t)
        f = equilibrium_density(gauss1, eval_fields(coherent, x, t), p)
        assert abs(r) / f < 1e-6


def test_liouville_printed_form_fails(coherent, gauss1):
    """The sign-flipped variant visibly breaks transport (documents the
    correction)."""
    rng = np.random.default_rng(4)
    worst = 0.0
    for x, p, t in _residual_points(rng, coherent, 1.0, 10):
        r = liouville_residual(gauss1, coherent, x, p, t, form="printed")
        f = equilibrium_density(gauss1, eval_fields(coherent, x, t), p)
        worst = max(worst, abs(r) / f)
    assert worst > 1e-3


def test_liouville_lorentzian(coherent, lorentz1):
    rng = np.random.default_rng(6)
    for x, p, t in _residual_points(rng, coherent, 1.0, 10):
        r = liouville_residual(lorentz1, coherent, x, p, t)
        f = equilibrium_density(lorentz1, eval_fields(coherent, x, t), p)
        assert abs(r) / f < 1e-5


def test_gaussian_flux_construction_matches_closed_form(coherent, gauss1):
    rng = np.random.default_rng(8)
    for x, p, t in _residual_points(rng, coherent, 1.0, 10):
        generic = force_from_flux_integral(gauss1, coherent, x, p, t)
        f = eval_fields(coherent, x, t)
        closed = modified_force(gauss1, f, x, p, PARAMS, HARMONIC)
        assert abs(generic - closed) < 1e-8


def test_lorentzian_force_finite_on_ridge(coherent, lorentz1):
    for x, t in ((0.5, 0.3), (1.2, 2.0), (-0.7, 5.5)):
        f = eval_fields(coherent, x, t)
        val = lorentzian_force(lorentz1, coherent, x, float(f.grad_s), t)
        assert math.isfinite(val)


def test_lorentzian_total_flux_vanishes(coherent, lorentz1):
    """Symmetric full-momentum integral of the continuity deficit is zero."""
    for x, t in ((0.4, 0.9), (1.1, 3.0)):
        l = 1e3 * lorentz1.mu
        full = momentum_flux(lorentz1, coherent, x, t, w_upper=l, w_lower=-l)
        fields = eval_fields(coherent, x, t)
        scale = fields.rho / lorentz1.mu
        assert abs(full) < 1e-9 * max(scale, 1.0)


def test_first_moment_identity_phase_space_mean(coherent, lorentz1, gauss1):
    """f-weighted mean of (F + V' + Q') over the whole phase space is zero.

    At fixed x the Lorentzian version is cutoff-dependent (heavy tail); the
    convergent content of the moment identity is the joint mean.
    """
    xs = np.linspace(-3.4, 5.2, 87)
    t = 0.6
    for spec in (gauss1, lorentz1):
        nodes, wts = np.polynomial.legendre.leggauss(40)
        half = 8.0 if spec.kind == "gaussian" else 50.0
        w = nodes * half
        wq = wts * half
        total = 0.0
        for x in xs:
            f = eval_fields(coherent, float(x), t)
            base = -HARMONIC.gradient_scalar(float(x)) - f.grad_q
            if spec.kind == "gaussian":
                forces = modified_force(spec, f, float(x), f.grad_s + w,
                                        PARAMS, HARMONIC)
            else:
                forces = np.array([
                    lorentzian_force(spec, coherent, float(x),
                                     float(f.grad_s + wi), t) for wi in w])
            dep = np.sum(wq * kernel_pdf(spec, w) * (forces - base))
            total += f.rho * dep
        total *= xs[1] - xs[0]
        assert abs(total) < 5e-4


def test_liouville_lorentzian_cutoff_independent(coherent, lorentz1):
    x, p, t = 0.8, 0.3, 1.4
    r1 = liouville_residual(lorentz1, coherent, x, p, t, tail_cutoff=1e3)
    r2 = liouville_residual(lorentz1, coherent, x, p, t, tail_cutoff=4e3)
    f = equilibrium_density(lorentz1, eval_fields(coherent, x, t), p)
    assert abs(r1 - r2) / f < 1e-7


def test_flow_divergence(coherent, superposition3, gauss1):
    f = eval_fields(coherent, 0.7, 1.2)
    assert flow_divergence(ForceLaw("bohm", coherent), f, 0.3) == 0.0
    law = ForceLaw("modified", coherent, gauss1)
    assert flow_divergence(law, f, 0.3) == pytest.approx(0.0, abs=1e-12)
    # superposition: hess_s / m, cross-checked by a p-derivative of the force
    law3 = ForceLaw("modified", superposition3, gauss1)
    fs = eval_fields(superposition3, 0.4, 0.9)
    analytic = flow_divergence(law3, fs, 0.2)
    h = 1e-6
    fd = (modified_force(gauss1, fs, 0.4, 0.2 + h, PARAMS, HARMONIC)
          - modified_force(gauss1, fs, 0.4, 0.2 - h, PARAMS, HARMONIC)) / (2 * h)
    assert analytic == pytest.approx(fs.hess_s, abs=1e-12)
    assert analytic == pytest.approx(fd, abs=1e-8)


def test_mean_force_consistency(coherent, gauss1):
    nodes, wts = np.polynomial.legendre.leggauss(120)
    half = 9.0
    w = nodes * half
    wq = wts * half
    for x, t in ((0.7, 0.3), (1.5, 2.1), (-0.4, 4.9)):
        f = eval_fields(coherent, x, t)
        forces = modified_force(gauss1, f, x, f.grad_s + w, PARAMS, HARMONIC)
        mean = float(np.sum(wq * kernel_pdf(gauss1, w) * forces))
        target = (-HARMONIC.gradient_scalar(x) - f.grad_q
                  + gauss1.mu * f.grad_log_r)
        assert abs(mean - target) < 1e-8


def test_force_law_validation(coherent):
    with pytest.raises(DiracKernelError):
        ForceLaw("modified", coherent, KernelSpec("dirac"))
    with pytest.raises(ValueError):
        ForceLaw("warp", coherent)
    law = ForceLaw("modified", coherent, KernelSpec("gaussian", 0.5))
    assert law.describe() == {"law": "modified", "kernel": "gaussian",
                              "mu": 0.5}

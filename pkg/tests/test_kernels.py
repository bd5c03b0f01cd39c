import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bohmstab.errors import DiracDensityError, QuadratureNotConvergedError
from bohmstab.kernels import (KernelSpec, QuadratureSpec, check_marginals,
                              equilibrium_density, kernel_pdf,
                              sample_conditional_momentum)
from bohmstab.rng import rng_for
from bohmstab.wavefunction import FieldSample

FLAT = FieldSample(rho=1.0, grad_s=0.0, grad_log_r=0.0, q=0.0, grad_q=0.0,
                   hess_s=0.0, valid=True)


def test_kernel_spec_validation():
    with pytest.raises(ValueError):
        KernelSpec("gaussian", 0.0)
    with pytest.raises(ValueError):
        KernelSpec("lorentzian", -1.0)
    with pytest.raises(ValueError):
        KernelSpec("triangle", 1.0)
    assert KernelSpec("dirac").is_dirac


def test_gaussian_density_value(gauss1):
    assert equilibrium_density(gauss1, FLAT, 0.0) == pytest.approx(
        1.0 / math.sqrt(math.pi), rel=1e-14)


def test_lorentzian_density_value(lorentz1):
    assert equilibrium_density(lorentz1, FLAT, 0.0) == pytest.approx(
        1.0 / math.pi, rel=1e-14)


def test_zero_amplitude_gives_zero(gauss1, lorentz1):
    dead = FieldSample(rho=0.0, grad_s=0.3, grad_log_r=0.0, q=0.0,
                       grad_q=0.0, hess_s=0.0, valid=False)
    assert equilibrium_density(gauss1, dead, 0.3) == 0.0
    assert equilibrium_density(lorentz1, dead, 0.3) == 0.0


def test_dirac_density_raises():
    with pytest.raises(DiracDensityError):
        equilibrium_density(KernelSpec("dirac"), FLAT, 0.0)


@settings(max_examples=50, deadline=None)
@given(w=st.floats(-8, 8), mu=st.floats(0.05, 4.0),
       kind=st.sampled_from(["gaussian", "lorentzian"]))
def test_kernel_even_in_w(w, mu, kind):
    spec = KernelSpec(kind, mu)
    assert kernel_pdf(spec, w) == pytest.approx(kernel_pdf(spec, -w),
                                                rel=1e-13, abs=1e-300)


def test_gaussian_marginals_tight(coherent, gauss1):
    rep = check_marginals(gauss1, coherent, 0.0)
    assert rep.density_error < 1e-10
    assert rep.current_error < 1e-10


def test_dirac_marginals_symbolic(coherent):
    rep = check_marginals(KernelSpec("dirac"), coherent, 0.3)
    assert rep.density_error == 0.0
    assert rep.current_error == 0.0


def test_lorentzian_marginals_principal_value(coherent):
    spec = KernelSpec("lorentzian", 0.5)
    rep = check_marginals(spec, coherent, 0.8,
                          QuadratureSpec(half_range=1e3))
    assert rep.density_error < 1e-6
    assert rep.current_error < 1e-6


def test_lorentzian_truncation_alone_is_slow(coherent):
    """Without the analytic tail the truncated marginal converges like 1/L."""
    spec = KernelSpec("lorentzian", 0.5)
    with pytest.raises(QuadratureNotConvergedError):
        check_marginals(spec, coherent, 0.8,
                        QuadratureSpec(half_range=1e3, analytic_tail=False,
                                       convergence_tol=1e-9))
    rep = check_marginals(spec, coherent, 0.8,
                          QuadratureSpec(half_range=1e3, analytic_tail=False,
                                         convergence_tol=1e-2))
    assert rep.density_error > 1e-6  # documented O(1/L) truncation error


def test_gaussian_sampling_moments():
    spec = KernelSpec("gaussian", 2.0)
    fields = FieldSample(rho=1.0, grad_s=1.0, grad_log_r=0.0, q=0.0,
                         grad_q=0.0, hess_s=0.0, valid=True)
    draws = sample_conditional_momentum(spec, fields, rng_for(42, "k"),
                                        n=10 ** 6)
    assert draws.mean() == pytest.approx(1.0, abs=0.004)
    assert draws.var() == pytest.approx(1.0, abs=0.01)


def test_dirac_sampling_exact():
    fields = FieldSample(rho=1.0, grad_s=-0.5, grad_log_r=0.0, q=0.0,
                         grad_q=0.0, hess_s=0.0, valid=True)
    assert sample_conditional_momentum(KernelSpec("dirac"), fields,
                                       rng_for(1, "k")) == -0.5


def test_lorentzian_sampling_quantiles(lorentz1):
    draws = sample_conditional_momentum(lorentz1, FLAT, rng_for(7, "k"),
                                        n=10 ** 6)
    q25, q50, q75 = np.percentile(draws, [25, 50, 75])
    assert q50 == pytest.approx(0.0, abs=0.005)
    assert q75 - q25 == pytest.approx(2.0, abs=0.02)


def test_mu_to_zero_concentrates():
    spec = KernelSpec("gaussian", 1e-10)
    fields = FieldSample(rho=1.0, grad_s=0.7, grad_log_r=0.0, q=0.0,
                         grad_q=0.0, hess_s=0.0, valid=True)
    draws = sample_conditional_momentum(spec, fields, rng_for(3, "k"),
                                        n=10 ** 5)
    assert np.max(np.abs(draws - 0.7)) < 1e-4


def test_vectorized_sampling_over_fields(gauss1):
    fields = FieldSample(rho=np.ones(1000), grad_s=np.linspace(-1, 1, 1000),
                         grad_log_r=0.0, q=0.0, grad_q=0.0, hess_s=0.0,
                         valid=np.ones(1000, bool))
    draws = sample_conditional_momentum(gauss1, fields, rng_for(9, "k"))
    assert draws.shape == (1000,)
    assert np.corrcoef(draws, fields.grad_s)[0, 1] > 0.5


@pytest.mark.parametrize("kind,mu", [("gaussian", 1.0), ("gaussian", 0.3),
                                     ("lorentzian", 1.0)])
def test_joint_normalization(coherent, kind, mu):
    """integral of f over phase space is 1 (x-quadrature; p integral is the
    marginal contract, checked to identity)."""
    spec = KernelSpec(kind, mu)
    rep = check_marginals(spec, coherent, 1.1)
    x = np.linspace(-10, 10, 4001)
    from bohmstab.wavefunction import eval_fields
    rho = eval_fields(coherent, x, 1.1).rho
    assert rep.density_error < 1e-6
    assert np.trapezoid(rho, x) == pytest.approx(1.0, abs=1e-9)

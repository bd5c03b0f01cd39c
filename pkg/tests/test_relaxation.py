import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bohmstab.dynamics import IntegratorSpec
from bohmstab.ensemble import Ensemble, NonEquilibriumSpec
from bohmstab.errors import (DiracDensityError, GridMismatchError,
                             SupportMismatchError)
from bohmstab.kernels import KernelSpec
from bohmstab.relaxation import (CellField, CoarseGrid, bootstrap_floor,
                                 coarse_grain, equilibrium_cell_averages,
                                 h_function, run_relaxation, trend_test)
from bohmstab.wavefunction import EigenSuperposition


def test_grid_geometry():
    grid = CoarseGrid(-6, 6, 30, -6, 6, 30)
    assert grid.dx == pytest.approx(0.4)
    assert grid.cell_volume == pytest.approx(0.16)
    with pytest.raises(ValueError):
        CoarseGrid(-6, 6, 2, -6, 6, 30)
    with pytest.raises(ValueError):
        CoarseGrid(6, -6, 30, -6, 6, 30)


def test_coarse_grain_single_particle():
    grid = CoarseGrid(-1, 1, 4, -1, 1, 4)   # cell volume 0.25... no: dx=0.5, dp=0.5
    ens = Ensemble(np.array([0.25]), np.array([0.25]), 0.0)
    f = coarse_grain(ens, grid)
    assert f.values.sum() == pytest.approx(1.0 / grid.cell_volume)
    assert f.out_of_range_mass == 0.0
    assert f.total_mass() == pytest.approx(1.0)


def test_coarse_grain_uniform_two_by_two():
    # 2x2 layout with cell volume 0.25 via a 4x4 grid restricted by counts:
    # four particles, one per cell of the central 2x2 block
    grid = CoarseGrid(0, 1, 4, 0, 1, 4)  # dx=dp=0.25, volume 0.0625
    xs = np.array([0.125, 0.375, 0.125, 0.375])
    ps = np.array([0.125, 0.125, 0.375, 0.375])
    f = coarse_grain(Ensemble(xs, ps, 0.0), grid)
    occupied = f.values[f.values > 0]
    assert occupied.size == 4
    assert np.allclose(occupied, 1.0 / (4 * grid.cell_volume))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_counting_identity(seed):
    rng = np.random.default_rng(seed)
    xs = rng.normal(0, 2.5, 400)
    ps = rng.normal(0, 2.5, 400)
    grid = CoarseGrid(-3, 3, 6, -3, 3, 5)
    f = coarse_grain(Ensemble(xs, ps, 0.0), grid)
    assert f.total_mass() == pytest.approx(1.0, abs=1e-9)


def test_equilibrium_cell_averages_mass(coherent, gauss1):
    grid = CoarseGrid(-6, 6, 30, -6, 6, 30)
    f = equilibrium_cell_averages(coherent, gauss1, grid, 0.0)
    assert np.sum(f.values) * grid.cell_volume >= 0.9999
    assert np.all(f.values >= 0)


def test_quadrature_order_refinement(coherent, gauss1):
    grid = CoarseGrid(-6, 6, 30, -6, 6, 30)
    f8 = equilibrium_cell_averages(coherent, gauss1, grid, 0.0, order=8)
    f16 = equilibrium_cell_averages(coherent, gauss1, grid, 0.0, order=16)
    assert np.max(np.abs(f8.values - f16.values)) < 1e-8


def test_symmetric_state_symmetric_averages(gauss1):
    ground = EigenSuperposition([1.0])
    grid = CoarseGrid(-5, 5, 10, -5, 5, 10)
    f = equilibrium_cell_averages(ground, gauss1, grid, 0.0)
    assert np.allclose(f.values, f.values[::-1, :], rtol=1e-12, atol=1e-300)
    assert np.allclose(f.values, f.values[:, ::-1], rtol=1e-12, atol=1e-300)


def test_dirac_cell_averages_rejected(coherent):
    grid = CoarseGrid(-6, 6, 30, -6, 6, 30)
    with pytest.raises(DiracDensityError):
        equilibrium_cell_averages(coherent, KernelSpec("dirac"), grid, 0.0)


def _cells(grid, values, out=0.0):
    return CellField(values=np.asarray(values, float),
                     out_of_range_mass=out, grid=grid)


def test_h_function_zero_at_equality():
    grid = CoarseGrid(0, 2, 4, 0, 2, 4)
    vals = np.full((4, 4), 1.0 / (16 * grid.cell_volume))
    assert h_function(_cells(grid, vals), _cells(grid, vals)) == 0.0


def test_h_function_two_cell_example():
    # dOmega = 1 per cell: use a 1x... grid trick with 4 cells of volume 1
    grid = CoarseGrid(0, 2, 4, 0, 2, 4)
    vol = grid.cell_volume
    f = np.zeros((4, 4))
    feq = np.zeros((4, 4))
    f[0, 0], f[0, 1] = 0.8 / vol, 0.2 / vol
    feq[0, 0], feq[0, 1] = 0.5 / vol, 0.5 / vol
    got = h_function(_cells(grid, f), _cells(grid, feq))
    assert got == pytest.approx(0.8 * math.log(1.6) + 0.2 * math.log(0.4),
                                abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 10 ** 9))
def test_h_function_gibbs_inequality(seed):
    rng = np.random.default_rng(seed)
    grid = CoarseGrid(0, 2, 4, 0, 2, 4)
    vol = grid.cell_volume
    f = rng.uniform(0, 1, (4, 4))
    feq = rng.uniform(1e-3, 1, (4, 4))
    f /= f.sum() * vol
    feq /= feq.sum() * vol
    assert h_function(_cells(grid, f), _cells(grid, feq)) >= -1e-12


def test_h_function_support_mismatch():
    grid = CoarseGrid(0, 2, 4, 0, 2, 4)
    f = np.zeros((4, 4))
    feq = np.zeros((4, 4))
    f[1, 1] = 1.0
    feq[0, 0] = 1.0
    with pytest.raises(SupportMismatchError) as err:
        h_function(_cells(grid, f), _cells(grid, feq))
    assert err.value.offending_mass > 0


def test_h_function_grid_mismatch():
    a = CoarseGrid(0, 2, 4, 0, 2, 4)
    b = CoarseGrid(0, 2, 5, 0, 2, 4)
    va = np.ones((4, 4))
    vb = np.ones((5, 4))
    with pytest.raises(GridMismatchError):
        h_function(_cells(a, va), _cells(b, vb))


def test_bootstrap_floor_structure(coherent, gauss1):
    from bohmstab.ensemble import sample_equilibrium
    grid = CoarseGrid(-6, 6, 20, -6, 6, 20)
    ens = sample_equilibrium(coherent, gauss1, 0.0, 20000, seed=3)
    f = coarse_grain(ens, grid)
    feq = equilibrium_cell_averages(coherent, gauss1, grid, 0.0)
    stats = bootstrap_floor(f, feq, ens.n, seed=5)
    assert stats["floor"] > 0
    assert stats["h"] >= 0
    assert abs(stats["h"]) <= stats["floor"]  # equilibrium start sits inside


def test_noise_halves_with_doubled_n(coherent, gauss1):
    """Counting bias of H at equilibrium scales like 1/n."""
    grid = CoarseGrid(-6, 6, 20, -6, 6, 20)
    feq = equilibrium_cell_averages(coherent, gauss1, grid, 0.0)
    from bohmstab.ensemble import sample_equilibrium

    def mean_h(n, seeds):
        vals = []
        for s in seeds:
            ens = sample_equilibrium(coherent, gauss1, 0.0, n, seed=s)
            vals.append(h_function(coarse_grain(ens, grid), feq))
        return np.mean(vals)

    ratio = mean_h(10000, range(8)) / mean_h(20000, range(100, 108))
    assert 1.5 <= ratio <= 2.5


def test_grid_refinement_stability(superposition4, gauss1):
    """Offset-start H(0) stable within 20% between 20x20 and 40x40 grids."""
    from bohmstab.ensemble import sample_nonequilibrium
    neq = NonEquilibriumSpec(momentum_law="offset", delta=1.0)
    ens = sample_nonequilibrium(superposition4, neq, gauss1, 0.0, 200000,
                                seed=77)
    hs = []
    for cells in (20, 40):
        grid = CoarseGrid(-6, 6, cells, -6, 6, cells)
        f = coarse_grain(ens, grid)
        feq = equilibrium_cell_averages(superposition4, gauss1, grid, 0.0)
        hs.append(h_function(f, feq))
    assert abs(hs[1] - hs[0]) <= 0.2 * abs(hs[0])


def test_run_relaxation_rejects_dirac(coherent):
    grid = CoarseGrid(-6, 6, 30, -6, 6, 30)
    with pytest.raises(DiracDensityError):
        run_relaxation(coherent, KernelSpec("dirac"), grid, [0.0, 1.0],
                       100, 1)


def test_run_relaxation_equilibrium_smoke(coherent, gauss1):
    grid = CoarseGrid(-6, 6, 20, -6, 6, 20)
    series = run_relaxation(coherent, gauss1, grid, np.linspace(0, 1, 3),
                            20000, seed=9, integ=IntegratorSpec(dt=5e-3))
    assert np.all(np.abs(series.hbar_values) <= series.floors)
    assert np.all(series.hbar_values >= -series.floors)


def test_trend_test():
    t = np.linspace(0, 10, 11)
    down = trend_test(t, np.exp(-t) + 1e-3 * np.cos(t))
    assert down["p_decreasing"] < 0.01
    assert down["slope"] < 0
    rng = np.random.default_rng(0)
    flat = trend_test(t, 1.0 + 1e-6 * rng.standard_normal(11))
    assert flat["p_decreasing"] > 0.05

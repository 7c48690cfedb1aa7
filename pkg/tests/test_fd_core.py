import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from hmmwave import coefficient as coef
from hmmwave import fd_core
from hmmwave.fd_core import PeriodicGrid, WaveState


def const(c, d=1):
    return coef.ConstantField(np.eye(d) * c).matrix


def test_cfl_examples():
    assert fd_core.cfl_max_dt(PeriodicGrid.unit(100), 2.1) == pytest.approx(0.01 / math.sqrt(2.1))
    assert fd_core.cfl_max_dt(PeriodicGrid((4,), 1.0), 1.0) == 1.0
    assert fd_core.cfl_max_dt(PeriodicGrid.unit(100, 3), 2.1) == pytest.approx(0.01 / math.sqrt(6.3))


@pytest.mark.parametrize("d,n", [(1, 64), (2, 24), (3, 10)])
def test_cfl_stability_sweep(d, n):
    """Just below the bound stays bounded, just above blows up."""
    grid = PeriodicGrid.unit(n, d)
    coeff = const(2.1, d)
    dt = fd_core.cfl_max_dt(grid, 2.1)
    u0 = np.random.default_rng(1).standard_normal(grid.shape)
    ok = fd_core.evolve(WaveState(u0, u0.copy()), coeff, grid, 0.98 * dt, 2000)
    assert np.max(np.abs(ok.u)) < 1e3
    with pytest.raises(fd_core.InstabilityError):
        fd_core.evolve(WaveState(u0, u0.copy()), coeff, grid, 1.05 * dt, 5000)


def test_taylor_start_stationary_and_second_order():
    grid = PeriodicGrid.unit(50)
    s = fd_core.init_two_levels(grid, 3.0, None, const(1.3), 0.01)
    np.testing.assert_array_equal(s.u, s.u_prev)
    f = lambda x: np.sin(2 * np.pi * x[..., 0])
    d1 = fd_core.init_two_levels(grid, f, None, const(1.0), 0.01)
    d2 = fd_core.init_two_levels(grid, f, None, const(1.0), 0.005)
    r = np.max(np.abs(d1.u - d1.u_prev)) / np.max(np.abs(d2.u - d2.u_prev))
    assert r == pytest.approx(4.0, rel=1e-12)


def test_taylor_start_against_transcription():
    eps, n = 0.01, 6400
    field = coef.Periodic1D(epsilon=eps)
    grid = PeriodicGrid.unit(n)
    h = grid.h
    dt = 0.5 * h / math.sqrt(2.1)
    f = lambda x: np.exp(-((x[..., 0] - 0.5) ** 2) / 0.01)
    s = fd_core.init_two_levels(grid, f, None, field.matrix, dt)
    # written out node by node, no shared helpers
    x = np.arange(n) * h
    u = np.exp(-((x - 0.5) ** 2) / 0.01)
    ap = 1.1 + np.sin(2 * np.pi * (x + h / 2) / eps)
    am = 1.1 + np.sin(2 * np.pi * (x - h / 2) / eps)
    up = np.concatenate((u[1:], u[:1]))
    um = np.concatenate((u[-1:], u[:-1]))
    ref = u + 0.5 * dt**2 * (ap * (up - u) - am * (u - um)) / h**2
    assert np.max(np.abs(s.u - ref)) <= 1e-12


def test_flux_exact_on_linear_data_3d():
    A = np.array([[2.0, 0.3, -0.2], [0.3, 1.5, 0.1], [-0.2, 0.1, 1.2]])
    grid = PeriodicGrid.unit(8, 3)
    p = np.array([0.7, -1.1, 0.4])
    u = grid.points() @ p
    co = fd_core.face_coefficients(coef.ConstantField(A).matrix, grid)
    fl = fd_core.flux_faces(u, co, grid.h)
    inner = (slice(1, -2),) * 3  # faces whose stencils do not wrap
    for k in range(3):
        np.testing.assert_allclose(fl[k][inner], (A @ p)[k], atol=1e-12)


def test_cross_stencil_on_bilinear():
    grid = PeriodicGrid.unit(16, 2)
    X = grid.points()
    u = X[..., 0] * X[..., 1]
    fl = fd_core.flux_faces(u, fd_core.face_coefficients(const(1.0, 2), grid), grid.h)
    # f^(1) at m + 1/2 e1 equals d/dx1 (x1 x2) = x2 exactly for this stencil
    np.testing.assert_allclose(fl[0][2:-2, 2:-2], X[2:-2, 2:-2, 1], atol=1e-12)


def test_cross_stencil_symmetric_in_third_axis():
    """Off-diagonal flux terms treat +e3 and -e3 alike."""
    A = np.array([[1.0, 0.0, 0.5], [0.0, 1.0, 0.0], [0.5, 0.0, 1.0]])
    grid = PeriodicGrid.unit(8, 3)
    X = grid.points()
    u = X[..., 2] ** 2
    fl = fd_core.flux_faces(u, fd_core.face_coefficients(coef.ConstantField(A).matrix, grid), grid.h)
    # a13 * d/dx3 (x3^2) = 0.5 * 2 x3 at the face
    np.testing.assert_allclose(fl[0][:, :, 2:-2], X[:, :, 2:-2, 2], atol=1e-12)


def test_flux_faces_1d_transcription():
    grid = PeriodicGrid.unit(40)
    field = coef.Periodic1D(epsilon=1.0)
    u = np.sin(2 * np.pi * grid.axes()[0])
    fl = fd_core.flux_faces(u, fd_core.face_coefficients(field.matrix, grid), grid.h)[0]
    x = grid.axes()[0]
    a = np.array([1.1 + math.sin(2 * math.pi * (xi + grid.h / 2)) for xi in x])
    ref = np.array([a[i] * (u[(i + 1) % 40] - u[i]) / grid.h for i in range(40)])
    assert np.max(np.abs(fl - ref)) <= 1e-14 * np.max(np.abs(ref)) * 10


def test_constant_state_is_stationary():
    grid = PeriodicGrid.unit(20, 2)
    s = WaveState(np.full(grid.shape, 2.5), np.full(grid.shape, 2.5))
    s = fd_core.evolve(s, const(1.7, 2), grid, 0.01, 100)
    np.testing.assert_array_equal(s.u, 2.5)


def _standing_wave_error(n, T=0.3, ratio=0.5):
    grid = PeriodicGrid.unit(n)
    f = lambda x: np.sin(2 * np.pi * x[..., 0])
    u = fd_core.run(grid, const(1.0), f, None, ratio * grid.h, T)[-1][1]
    exact = np.sin(2 * np.pi * grid.axes()[0]) * math.cos(2 * math.pi * T)
    return np.max(np.abs(u - exact))


def test_standing_wave_and_second_order():
    e = [_standing_wave_error(n) for n in (32, 64, 128)]
    assert e[0] < 1e-2
    for a, b in zip(e, e[1:]):
        assert 4 * 0.8 <= a / b <= 4 * 1.2


@given(hnp.arrays(float, 24, elements=st.floats(-1, 1)), st.integers(1, 100))
def test_time_reversibility(u0, nsteps):
    grid = PeriodicGrid.unit(24)
    field = coef.Periodic1D(epsilon=0.25)
    dt = 0.5 * fd_core.cfl_max_dt(grid, 2.1)
    s0 = fd_core.init_two_levels(grid, u0, None, field.matrix, dt)
    s = fd_core.evolve(s0, field.matrix, grid, dt, nsteps)
    back = fd_core.evolve(s.reversed(), field.matrix, grid, dt, nsteps)
    np.testing.assert_allclose(back.u, s0.u_prev, atol=1e-10)
    np.testing.assert_allclose(back.u_prev, s0.u, atol=1e-10)


def test_reversibility_2d_with_cross_terms():
    grid = PeriodicGrid.unit(12, 2)
    A = coef.ConstantField(np.array([[1.2, 0.3], [0.3, 0.9]])).matrix
    dt = 0.4 * fd_core.cfl_max_dt(grid, 1.5)
    u0 = np.random.default_rng(3).standard_normal(grid.shape)
    s0 = WaveState(u0, u0.copy())
    back = fd_core.evolve(fd_core.evolve(s0, A, grid, dt, 100).reversed(), A, grid, dt, 100)
    np.testing.assert_allclose(back.u, s0.u_prev, atol=1e-10)


@given(hnp.arrays(float, 16, elements=st.floats(-1, 1)))
def test_discrete_evenness(u0):
    """With g = 0 the level before t = 0 equals the level after it."""
    grid = PeriodicGrid.unit(16)
    field = coef.Periodic1D(epsilon=0.25)
    dt = 0.5 * fd_core.cfl_max_dt(grid, 2.1)
    s = fd_core.init_two_levels(grid, u0, None, field.matrix, dt)
    # one step back from (u^1, u^0) lands on u^{-1}
    back = fd_core.step(s.reversed(), field.matrix, grid, dt)
    np.testing.assert_allclose(back.u, s.u, atol=1e-14)


def test_energy_zero_and_constant():
    grid = PeriodicGrid.unit(10)
    z = np.zeros(grid.shape)
    assert fd_core.discrete_energy(WaveState(z, z), const(1.0), grid, 0.01) == 0.0
    c = np.full(grid.shape, 4.0)
    assert fd_core.discrete_energy(WaveState(c, c), const(1.0), grid, 0.01) == pytest.approx(0.0, abs=1e-14)


def test_energy_drift():
    grid = PeriodicGrid.unit(64)
    field = coef.Periodic1D(epsilon=0.25)
    dt = 0.5 * fd_core.cfl_max_dt(grid, 2.1)
    f = lambda x: np.sin(2 * np.pi * x[..., 0])
    s = fd_core.init_two_levels(grid, f, None, field.matrix, dt)
    e0 = fd_core.discrete_energy(s, field.matrix, grid, dt)
    s = fd_core.evolve(s, field.matrix, grid, dt, 1000)
    e1 = fd_core.discrete_energy(s, field.matrix, grid, dt)
    assert abs(e1 - e0) / e0 < 1e-6


def test_instability_guard():
    with pytest.raises(fd_core.InstabilityError):
        fd_core.check_finite(np.array([1.0, 2e12]))
    with pytest.raises(fd_core.InstabilityError):
        fd_core.check_finite(np.array([np.nan]))


def test_grid_validation_and_sampling():
    with pytest.raises(ValueError):
        PeriodicGrid((3,), 0.1)
    g = PeriodicGrid((4, 5), 0.5, origin=(-1.0, 0.0))
    assert g.points().shape == (4, 5, 2)
    assert g.face_points(1)[0, 0].tolist() == [-1.0, 0.25]
    assert g.sample(None).shape == (4, 5)

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from hmmwave import coefficient as coef
from hmmwave import fd_core, macro, micro
from hmmwave.fd_core import PeriodicGrid, WaveState


def test_gradient_exact_on_linear():
    grid = PeriodicGrid.unit(10, 3)
    p = np.array([0.3, -0.8, 1.7])
    U = grid.points() @ p
    for axis in range(3):
        for side in (1, -1):
            np.testing.assert_allclose(macro.gradient_stencil(U, (4, 5, 4), axis, side, grid.h), p, atol=1e-13)


def test_gradient_transverse_on_quadratic():
    grid = PeriodicGrid.unit(20, 2)
    X = grid.points()
    U = X[..., 0] ** 2
    P = macro.gradient_stencil(U, (7, 3), 1, 1, grid.h)
    assert P[0] == pytest.approx(2 * X[7, 3, 0], abs=1e-12)
    assert P[1] == pytest.approx(0.0, abs=1e-12)


def test_gradient_1d_two_point():
    U = np.array([0.0, 1.0, 4.0, 9.0, 16.0])
    assert macro.gradient_stencil(U, (2,), 0, -1, 0.5)[0] == pytest.approx((4.0 - 1.0) / 0.5)


@given(hnp.arrays(float, (6, 5, 4), elements=st.floats(-1, 1)), st.integers(0, 2), st.sampled_from([1, -1]))
def test_face_gradients_match_pointwise(U, axis, side):
    H = 0.1
    faces = macro.face_gradients(U, H)[axis]
    m = np.array([2, 4, 1])
    idx = m.copy()
    if side < 0:
        idx[axis] -= 1
    idx = tuple(np.mod(idx, U.shape))
    np.testing.assert_allclose(faces[(slice(None),) + idx], macro.gradient_stencil(U, m, axis, side, H), atol=1e-12)


def _state(grid, seed=0):
    u = np.random.default_rng(seed).standard_normal(grid.shape)
    return WaveState(u, np.roll(u, 1, axis=0))


@pytest.mark.parametrize("d", [1, 2, 3])
def test_constant_exact_provider_equals_fd_core(d):
    grid = PeriodicGrid.unit(8, d)
    A = np.diag([0.45, 1.1, 1.3][:d])
    provider = macro.ExactProvider(coef.ConstantField(A))
    s = _state(grid)
    dt = 0.3 * grid.h
    a = macro.hmm_step(s, provider, grid, dt)
    b = fd_core.step(s, coef.ConstantField(A).matrix, grid, dt)
    np.testing.assert_allclose(a.u, b.u, atol=1e-14)


def test_run_matches_fd_core_trajectory():
    grid = PeriodicGrid.unit(40)
    abar = math.sqrt(0.21)
    f = lambda x: np.exp(-((x[..., 0] - 0.5) ** 2) / 0.01)
    ref = coef.HomogenizedReference.constant([[abar]])
    traj = macro.run(macro.MacroConfig(grid, 0.5 * grid.h, 0.5, macro.ExactProvider(ref), f=f))
    direct = fd_core.run(grid, ref.as_field().matrix, f, None, 0.5 * grid.h, 0.5)
    assert np.max(np.abs(traj[-1][1] - direct[-1][1])) <= 1e-12


def test_zero_data_and_zero_time():
    grid = PeriodicGrid.unit(16)
    prov = macro.ExactProvider(coef.ConstantField(np.eye(1)))
    traj = macro.run(macro.MacroConfig(grid, 0.02, 0.2, prov, f=None))
    assert all(np.all(u == 0) for _, u in traj)
    f = lambda x: np.sin(2 * np.pi * x[..., 0])
    only = macro.run(macro.MacroConfig(grid, 0.02, 0.0, prov, f=f))
    assert len(only) == 1
    np.testing.assert_array_equal(only[0][1], grid.sample(f))


def test_cfl_validation():
    grid = PeriodicGrid.unit(10)
    cfg = macro.MacroConfig(grid, 0.2, 1.0, macro.ExactProvider(coef.ConstantField(np.eye(1))))
    with pytest.raises(macro.MacroConfigError):
        macro.run(cfg)


def test_macro_grid():
    assert macro.macro_grid(0.05, 2).shape == (20, 20)
    with pytest.raises(macro.MacroConfigError):
        macro.macro_grid(0.3)


def test_exact_on_linear_data():
    """Linear U with a constant flux: no acceleration away from the wrap."""
    grid = PeriodicGrid.unit(12, 2)
    A = np.array([[1.0, 0.2], [0.2, 0.7]])
    U = grid.points() @ np.array([0.4, -0.9])
    lu = macro.macro_operator(macro.ExactProvider(coef.ConstantField(A)), grid)(U)
    assert np.max(np.abs(lu[2:-2, 2:-2])) <= 1e-10


def _slow_provider(eps=0.05):
    field = coef.LocallyPeriodic1D(epsilon=eps)
    params = micro.MicroParams.from_ratios(eps, 2, cells_per_eps=16, space_kernel="poly(5,6)")
    return field, params


def test_mean_conservation():
    field, params = _slow_provider()
    grid = PeriodicGrid.unit(20)
    prov = macro.CachedProvider(params, field)
    prov.prepare(grid)
    s = WaveState(np.random.default_rng(2).standard_normal(20), np.zeros(20))
    means = [s.u.mean()]
    dt = 0.5 * grid.h
    for _ in range(50):
        s = macro.hmm_step(s, prov, grid, dt)
        means.append(s.u.mean())
    # leapfrog keeps the second difference of the mean at zero
    assert np.max(np.abs(np.diff(means, 2))) <= 1e-10


def test_cache_matches_direct_micro():
    field, params = _slow_provider()
    grid = PeriodicGrid.unit(10)
    f = lambda x: np.sin(2 * np.pi * x[..., 0])
    cached = macro.run(macro.MacroConfig(grid, 0.05, 0.25, macro.CachedProvider(params, field), f=f))
    direct = macro.DirectMicroProvider(params, field)
    live = macro.run(macro.MacroConfig(grid, 0.05, 0.25, direct, f=f))
    assert np.max(np.abs(cached[-1][1] - live[-1][1])) <= 1e-12
    assert direct.micro_solves == 5 * 10


def test_cached_provider_bound_and_dedup():
    eps = 0.05
    field = coef.Periodic1D(epsilon=eps)
    params = micro.MicroParams.from_ratios(eps, 2, cells_per_eps=16, space_kernel="poly(5,6)")
    prov = macro.CachedProvider(params, field)
    prov.prepare(macro.macro_grid(0.1))
    assert prov.micro_solves == 1
    assert 0.1 < prov.bound() <= field.sup_norm_bound()


def test_face_derivatives_exact_on_cubics():
    H = 0.05
    x = np.arange(20) * H
    c = (0.3, -1.2, 0.8, 2.0)
    U = c[0] + c[1] * x + c[2] * x**2 + c[3] * x**3
    ux, uxx, uxxx = macro.face_derivatives_1d(U, H)
    xf = x + H / 2
    inner = slice(1, -3)
    # the two-point slope carries the usual H^2/24 u''' term
    np.testing.assert_allclose(ux[inner], (c[1] + 2 * c[2] * xf + 3 * c[3] * xf**2 + c[3] * H**2 / 4)[inner], atol=1e-10)
    np.testing.assert_allclose(uxx[inner], (2 * c[2] + 6 * c[3] * xf)[inner], atol=1e-9)
    np.testing.assert_allclose(uxxx[inner], 6 * c[3], atol=1e-8)


def test_step_errors_carry_the_index():
    class Broken(macro.ExactProvider):
        calls = 0

        def fluxes(self, U, grid):
            self.calls += 1
            if self.calls > 3:
                raise ValueError("boom")
            return super().fluxes(U, grid)

    grid = PeriodicGrid.unit(10)
    with pytest.raises(RuntimeError, match="macro step 4"):
        macro.run(macro.MacroConfig(grid, 0.05, 1.0, Broken(coef.ConstantField(np.eye(1))), f=np.ones(10)))

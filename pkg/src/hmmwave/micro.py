"""Micro problems: local wave solves that supply the macro flux.

Given a macro point x0 and slope p, the wave equation with A^eps(x + x0) is
solved on a periodic box [-y_max, y_max]^d for t in [0, tau] with initial data
u = p.x (optionally plus quadratic and cubic terms) and u_t = 0.  Only the
deviation v = u - u(., 0) is periodic.  The flux A^eps grad u is then
averaged against K_tau(t) K_eta(x).

Because u_t(., 0) = 0 the solution is even in time, so only t >= 0 is
simulated and the interior time weights are doubled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import fd_core
from .coefficient import CoefficientField
from .kernel import Kernel, eval_scaled, parse_kernel

MIN_POINTS_UNDER_KERNEL = 8
REDUCED_CELLS = 4


class MicroProblemError(ValueError):
    pass


@dataclass(frozen=True)
class MicroParams:
    """Absolute micro discretisation parameters shared by all micro problems."""

    eta: float
    tau: float
    h: float
    k: float
    space_kernel: Kernel
    time_kernel: Kernel
    reduce_invariant_axes: bool = True

    @classmethod
    def from_ratios(
        cls,
        eps: float,
        eta_over_eps: float,
        tau_over_eps: float | None = None,
        cells_per_eps: int = 64,
        k_over_h: float = 0.5,
        space_kernel="poly(9,9)",
        time_kernel=None,
        reduce_invariant_axes: bool = True,
    ) -> "MicroParams":
        tau_over_eps = eta_over_eps if tau_over_eps is None else tau_over_eps
        sk = parse_kernel(space_kernel)
        tk = sk if time_kernel is None else parse_kernel(time_kernel)
        h = eps / cells_per_eps
        return cls(eta_over_eps * eps, tau_over_eps * eps, h, k_over_h * h, sk, tk, reduce_invariant_axes)


@dataclass(frozen=True, eq=False)
class MicroProblemSpec:
    center: np.ndarray
    gradient: np.ndarray
    eta: float
    tau: float
    y_max: float
    h: float
    k: float
    space_kernel: Kernel
    time_kernel: Kernel
    hessian: np.ndarray | None = None
    third: np.ndarray | None = None
    reduced_axes: tuple[int, ...] = dc_field(default=())

    @property
    def dimension(self) -> int:
        return self.center.size

    @property
    def initial_form(self) -> str:
        return "linear" if self.hessian is None and self.third is None else "cubic"

    @property
    def steps(self) -> int:
        return int(round(self.tau / self.k))


def size_micro_box(eta: float, tau: float, coeff_bound: float, h: float | None = None) -> float:
    """y_max = eta + tau sqrt(bound), rounded up to a multiple of h when given."""
    if eta <= 0 or tau < 0:
        raise ValueError("eta must be positive and tau non-negative")
    y = eta + tau * math.sqrt(coeff_bound)
    if h:
        y = math.ceil(y / h - 1e-9) * h
    return y


def cubic_initial_data(p, hessian=None, third=None):
    """x -> p.x + 1/2 x.Hx + 1/6 T(x, x, x) for points of shape (..., d)."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    H = None if hessian is None else np.asarray(hessian, dtype=float).reshape(p.size, p.size)
    T = None if third is None else np.asarray(third, dtype=float).reshape((p.size,) * 3)

    def u0(x):
        x = np.asarray(x, dtype=float)
        val = x @ p
        if H is not None:
            val = val + 0.5 * np.einsum("...i,ij,...j->...", x, H, x)
        if T is not None:
            val = val + np.einsum("...i,ijk,...j,...k->...", x, T, x, x) / 6.0
        return val

    return u0


def assemble(x0, p, params: MicroParams, field: CoefficientField, hessian=None, third=None) -> MicroProblemSpec:
    d = field.dimension
    x0 = np.asarray(x0, dtype=float).reshape(d)
    p = np.asarray(p, dtype=float).reshape(d)
    if not np.all(np.isfinite(p)):
        raise MicroProblemError("gradient must be finite")
    if hessian is not None and not np.any(hessian):
        hessian = None
    if third is not None and not np.any(third):
        third = None
    if params.eta / params.h < MIN_POINTS_UNDER_KERNEL - 1e-9:
        raise MicroProblemError(f"kernel under-resolved: eta/h = {params.eta / params.h:.3g} < {MIN_POINTS_UNDER_KERNEL}")
    if params.tau / params.k < MIN_POINTS_UNDER_KERNEL - 1e-9:
        raise MicroProblemError(f"time kernel under-resolved: tau/k = {params.tau / params.k:.3g} < {MIN_POINTS_UNDER_KERNEL}")
    bound = field.sup_norm_bound()
    # land exactly on t = tau
    nsteps = max(1, math.ceil(params.tau / params.k - 1e-9))
    k = params.tau / nsteps
    if k > params.h / math.sqrt(d * bound) * (1 + 1e-12):
        raise MicroProblemError(f"micro time step {k:.3g} violates the CFL limit {params.h / math.sqrt(d * bound):.3g}")
    y_max = size_micro_box(params.eta, params.tau, bound, params.h)
    linear = hessian is None and third is None
    reduced = tuple(field.invariant_axes) if (params.reduce_invariant_axes and linear) else ()
    return MicroProblemSpec(
        center=x0,
        gradient=p,
        eta=params.eta,
        tau=params.tau,
        y_max=y_max,
        h=params.h,
        k=k,
        space_kernel=params.space_kernel,
        time_kernel=params.time_kernel,
        hessian=None if hessian is None else np.asarray(hessian, dtype=float),
        third=None if third is None else np.asarray(third, dtype=float),
        reduced_axes=reduced,
    )


def micro_grid(spec: MicroProblemSpec) -> fd_core.PeriodicGrid:
    half = int(round(spec.y_max / spec.h))
    shape, origin = [], []
    for ax in range(spec.dimension):
        if ax in spec.reduced_axes:
            shape.append(REDUCED_CELLS)
            origin.append(0.0)
        else:
            shape.append(2 * half)
            origin.append(-half * spec.h)
    return fd_core.PeriodicGrid(tuple(shape), spec.h, tuple(origin))


def _space_weights(spec: MicroProblemSpec, grid: fd_core.PeriodicGrid):
    """Per-axis (slice, weights) of the normalised trapezoid rule for K_eta."""
    out = []
    for ax, x in enumerate(grid.axes()):
        if ax in spec.reduced_axes:
            out.append((slice(0, grid.shape[ax]), np.full(grid.shape[ax], 1.0 / grid.shape[ax])))
            continue
        w = eval_scaled(spec.space_kernel, spec.eta, x) * spec.h
        nz = np.nonzero(w)[0]
        if nz.size == 0 or nz[0] == 0 or nz[-1] == x.size - 1:
            raise MicroProblemError("spatial kernel support reaches the micro box boundary")
        sl = slice(nz[0], nz[-1] + 1)
        w = w[sl]
        out.append((sl, w / w.sum()))
    return out


def _time_weights(spec: MicroProblemSpec, nsteps: int) -> np.ndarray:
    t = spec.k * np.arange(nsteps + 1)
    w = eval_scaled(spec.time_kernel, spec.tau, t) * spec.k
    w[1:] *= 2.0
    return w / w.sum()


def _padded_flux(u_pad: np.ndarray, coeffs: fd_core.FaceCoefficients, h: float) -> list[np.ndarray]:
    """Face fluxes from node values carrying one ghost layer per side (no wrap)."""
    d = u_pad.ndim
    core = tuple(slice(1, -1) for _ in range(d))

    def at(offsets):
        return u_pad[tuple(slice(1 + o, u_pad.shape[i] - 1 + o) for i, o in enumerate(offsets))]

    out = []
    for k, (row, cross) in enumerate(zip(coeffs.rows, coeffs.cross)):
        ek = [0] * d
        ek[k] = 1
        u = u_pad[core]
        f = row[k] * ((at(ek) - u) / h)
        for j in cross:
            ej_p = [0] * d
            ej_p[j] = 1
            ej_m = [0] * d
            ej_m[j] = -1
            kj_p = list(ek)
            kj_p[j] = 1
            kj_m = list(ek)
            kj_m[j] = -1
            upper = 0.5 * (at(ej_p) + at(kj_p))
            lower = 0.5 * (at(ej_m) + at(kj_m))
            f = f + row[j] * ((upper - lower) / (2.0 * h))
        out.append(f)
    return out


def _background_fluxes(spec: MicroProblemSpec, grid, coeffs) -> list[np.ndarray]:
    """Face fluxes of the (non-periodic) initial polynomial."""
    if spec.initial_form == "linear":
        p = spec.gradient
        return [np.tensordot(p, row, axes=(0, 0)) for row in coeffs.rows]
    u0 = cubic_initial_data(spec.gradient, spec.hessian, spec.third)
    axes = [np.concatenate(([a[0] - grid.h], a, [a[-1] + grid.h])) for a in grid.axes()]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    return _padded_flux(u0(pts), coeffs, grid.h)


def flux_time_series(spec: MicroProblemSpec, field: CoefficientField) -> tuple[np.ndarray, np.ndarray]:
    """Spatially averaged flux at every micro time level t_n = n k, n = 0..N.

    Returns ``(t, S)`` with ``S`` of shape (N + 1, d).
    """
    grid = micro_grid(spec)
    h = grid.h
    d = grid.dim
    x0 = spec.center
    coeffs = fd_core.face_coefficients(lambda x: field.matrix(x + x0), grid)
    bg = _background_fluxes(spec, grid, coeffs)
    forcing = fd_core.divergence(bg, h)

    weights = _space_weights(spec, grid)
    window = tuple(sl for sl, _ in weights)

    def averaged(fluxes):
        vals = np.empty(d)
        for k in range(d):
            f = fluxes[k]
            # face m - 1/2 e_k is stored at index m - 1
            node = 0.5 * (f[window] + np.roll(f, 1, axis=k)[window])
            for ax in reversed(range(d)):
                node = node @ weights[ax][1]
            vals[k] = node
        return vals

    nsteps = spec.steps
    k2 = spec.k * spec.k
    series = np.empty((nsteps + 1, d))
    series[0] = averaged(bg)
    v_prev = np.zeros(grid.shape)
    v = 0.5 * k2 * forcing
    for n in range(1, nsteps + 1):
        fv = fd_core.flux_faces(v, coeffs, h)
        series[n] = averaged([b + f for b, f in zip(bg, fv)])
        if n == nsteps:
            break
        lu = forcing + fd_core.divergence(fv, h)
        v, v_prev = 2.0 * v - v_prev + k2 * lu, v
        if n % 64 == 0:
            fd_core.check_finite(v, f" in micro problem at x0={x0.tolist()}")
    fd_core.check_finite(v, f" in micro problem at x0={x0.tolist()}")
    return spec.k * np.arange(nsteps + 1), series


def solve_and_average(spec: MicroProblemSpec, field: CoefficientField) -> np.ndarray:
    """Kernel-averaged flux F~(x0, p) as a d-vector."""
    _, series = flux_time_series(spec, field)
    return _time_weights(spec, series.shape[0] - 1) @ series


def upscaled_flux(x0, p, params: MicroParams, field: CoefficientField, hessian=None, third=None) -> np.ndarray:
    return solve_and_average(assemble(x0, p, params, field, hessian, third), field)

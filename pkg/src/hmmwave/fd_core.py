"""Leapfrog finite differences for u_tt = div(A grad u) on periodic grids.

Fluxes live on cell faces ``m + 1/2 e_k``.  The normal component uses a
two-point difference; each off-diagonal entry a^(kj) multiplies the centred
difference along axis j of the two-cell averages straddling the face.  The
same formula is used in 1D, 2D and 3D.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

BLOWUP = 1e12


class InstabilityError(FloatingPointError):
    """Raised when a solution leaves the range of any physical value."""


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform periodic grid; node ``i`` sits at ``origin + i * h`` on each axis."""

    shape: tuple[int, ...]
    h: float
    origin: tuple[float, ...] | None = None

    def __post_init__(self):
        shape = tuple(int(n) for n in self.shape)
        object.__setattr__(self, "shape", shape)
        if any(n < 4 for n in shape):
            raise ValueError(f"need at least 4 cells per axis, got {shape}")
        if not self.h > 0:
            raise ValueError("grid spacing must be positive")
        if self.origin is None:
            object.__setattr__(self, "origin", (0.0,) * len(shape))
        else:
            object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))

    @classmethod
    def unit(cls, n: int, dim: int = 1) -> "PeriodicGrid":
        """n cells per axis on [0, 1]^dim."""
        return cls((n,) * dim, 1.0 / n)

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def extent(self) -> tuple[float, ...]:
        return tuple(n * self.h for n in self.shape)

    def axes(self) -> list[np.ndarray]:
        return [o + self.h * np.arange(n) for o, n in zip(self.origin, self.shape)]

    def points(self) -> np.ndarray:
        """Node coordinates, shape ``shape + (dim,)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def face_points(self, axis: int) -> np.ndarray:
        pts = self.points()
        pts[..., axis] += 0.5 * self.h
        return pts

    def sample(self, fn) -> np.ndarray:
        if fn is None:
            return np.zeros(self.shape)
        if callable(fn):
            return np.asarray(fn(self.points()), dtype=float).reshape(self.shape)
        arr = np.asarray(fn, dtype=float)
        return np.broadcast_to(arr, self.shape).copy()


@dataclass
class WaveState:
    """Two consecutive time levels; ``u`` is at time ``t``, ``u_prev`` at ``t - dt``."""

    u: np.ndarray
    u_prev: np.ndarray
    t: float = 0.0
    n: int = 0

    def reversed(self) -> "WaveState":
        return WaveState(self.u_prev.copy(), self.u.copy(), self.t, self.n)


@dataclass(frozen=True, eq=False)
class FaceCoefficients:
    """Coefficient entries at faces.

    ``rows[k]`` has shape ``(d,) + grid.shape`` and holds a^(k j) at the faces
    ``m + 1/2 e_k`` for j = 0..d-1.  ``cross[k]`` lists the j != k with a
    nonzero entry anywhere.
    """

    rows: tuple[np.ndarray, ...]
    cross: tuple[tuple[int, ...], ...]

    @property
    def dim(self) -> int:
        return len(self.rows)


def face_coefficients(coeff, grid: PeriodicGrid) -> FaceCoefficients:
    """Evaluate ``coeff`` (callable x -> (..., d, d)) at every face centre."""
    if isinstance(coeff, FaceCoefficients):
        return coeff
    d = grid.dim
    rows, cross = [], []
    for k in range(d):
        mats = np.asarray(coeff(grid.face_points(k)), dtype=float)
        row = np.moveaxis(mats[..., k, :], -1, 0).copy()
        rows.append(row)
        cross.append(tuple(j for j in range(d) if j != k and np.any(row[j])))
    return FaceCoefficients(tuple(rows), tuple(cross))


def _shift(u: np.ndarray, offset: int, axis: int) -> np.ndarray:
    """u evaluated at m + offset * e_axis (periodic)."""
    return np.roll(u, -offset, axis=axis)


def flux_faces(u: np.ndarray, coeffs: FaceCoefficients, h: float) -> list[np.ndarray]:
    """Normal flux f^(k) at faces m + 1/2 e_k for each axis k."""
    out = []
    for k, (row, cross) in enumerate(zip(coeffs.rows, coeffs.cross)):
        u_k = _shift(u, 1, k)
        f = row[k] * ((u_k - u) / h)
        for j in cross:
            upper = 0.5 * (_shift(u, 1, j) + _shift(u_k, 1, j))
            lower = 0.5 * (_shift(u, -1, j) + _shift(u_k, -1, j))
            f = f + row[j] * ((upper - lower) / (2.0 * h))
        out.append(f)
    return out


def divergence(fluxes: Sequence[np.ndarray], h: float) -> np.ndarray:
    """sum_k (f^(k)_{m+1/2} - f^(k)_{m-1/2}) / h."""
    total = None
    for k, f in enumerate(fluxes):
        term = (f - _shift(f, -1, k)) / h
        total = term if total is None else total + term
    return total


def apply_operator(u: np.ndarray, coeffs: FaceCoefficients, h: float) -> np.ndarray:
    """Discrete div(A grad u)."""
    return divergence(flux_faces(u, coeffs, h), h)


def cfl_max_dt(grid: PeriodicGrid, coeff_bound: float) -> float:
    """Largest leapfrog step h / sqrt(d * bound); callers apply a safety ratio."""
    if coeff_bound <= 0:
        raise ValueError("coefficient bound must be positive")
    return grid.h / math.sqrt(grid.dim * coeff_bound)


def check_finite(u: np.ndarray, where: str = "") -> None:
    peak = np.max(np.abs(u))
    if not np.isfinite(peak) or peak > BLOWUP:
        raise InstabilityError(f"solution magnitude {peak:.3g} exceeds {BLOWUP:g}{where}")


def init_two_levels(grid: PeriodicGrid, f, g, coeff, dt: float, operator=None) -> WaveState:
    """Second-order Taylor start: u(dt) = f + dt g + dt^2/2 div(A grad f).

    ``operator`` overrides the spatial operator (used by the macro solver,
    whose divergence comes from a flux provider).
    """
    u0 = grid.sample(f)
    v0 = grid.sample(g)
    if operator is None:
        coeffs = face_coefficients(coeff, grid)
        lu = apply_operator(u0, coeffs, grid.h)
    else:
        lu = operator(u0)
    u1 = u0 + dt * v0 + 0.5 * dt * dt * lu
    return WaveState(u1, u0, dt, 1)


def leapfrog(state: WaveState, lu: np.ndarray, dt: float) -> WaveState:
    new = 2.0 * state.u - state.u_prev + (dt * dt) * lu
    return WaveState(new, state.u, state.t + dt, state.n + 1)


def step(state: WaveState, coeff, grid: PeriodicGrid, dt: float) -> WaveState:
    """One leapfrog step u^{n+1} = 2u^n - u^{n-1} + dt^2 div(A grad u^n)."""
    coeffs = face_coefficients(coeff, grid)
    new = leapfrog(state, apply_operator(state.u, coeffs, grid.h), dt)
    check_finite(new.u, f" at step {new.n}")
    return new


def evolve(
    state: WaveState,
    coeff,
    grid: PeriodicGrid,
    dt: float,
    nsteps: int,
    callback: Callable[[WaveState], None] | None = None,
    stride: int = 1,
    check_every: int = 64,
) -> WaveState:
    """Advance ``nsteps`` leapfrog steps.

    ``callback`` sees every state whose step index is a multiple of ``stride``.
    """
    coeffs = face_coefficients(coeff, grid)
    h = grid.h
    dt2 = dt * dt
    if grid.dim == 1 and not coeffs.cross[0]:
        return _evolve_1d(state, coeffs.rows[0][0], h, dt, nsteps, callback, stride, check_every)
    for i in range(1, nsteps + 1):
        lu = apply_operator(state.u, coeffs, h)
        state = WaveState(2.0 * state.u - state.u_prev + dt2 * lu, state.u, state.t + dt, state.n + 1)
        if i % check_every == 0 or i == nsteps:
            check_finite(state.u, f" at step {state.n}")
        if callback is not None and state.n % stride == 0:
            callback(state)
    return state


def _evolve_1d(state, a_face, h, dt, nsteps, callback, stride, check_every):
    # buffer-reusing variant of the loop above for the 1D diagonal case
    u = state.u.copy()
    u_prev = state.u_prev.copy()
    c = a_face * (dt * dt / (h * h))
    t0, n0 = state.t, state.n
    flux = np.empty_like(u)
    tmp = np.empty_like(u)
    for i in range(1, nsteps + 1):
        np.subtract(u[1:], u[:-1], out=flux[:-1])
        flux[-1] = u[0] - u[-1]
        flux *= c
        tmp[1:] = flux[1:] - flux[:-1]
        tmp[0] = flux[0] - flux[-1]
        tmp += u
        tmp += u
        tmp -= u_prev
        u_prev, u, tmp = u, tmp, u_prev
        if i % check_every == 0 or i == nsteps:
            check_finite(u, f" at step {n0 + i}")
        if callback is not None and (n0 + i) % stride == 0:
            callback(WaveState(u.copy(), u_prev.copy(), t0 + i * dt, n0 + i))
    return WaveState(u, u_prev, t0 + nsteps * dt, n0 + nsteps)


def discrete_energy(state: WaveState, coeff, grid: PeriodicGrid, dt: float) -> float:
    """Leapfrog-conserved energy between the two stored levels.

    E = 1/2 sum[((u - u_prev)/dt)^2 + u . L u_prev] h^d with L = -div(A grad).
    """
    coeffs = face_coefficients(coeff, grid)
    vel = (state.u - state.u_prev) / dt
    pot = -np.sum(state.u * apply_operator(state.u_prev, coeffs, grid.h))
    return 0.5 * float(np.sum(vel * vel) + pot) * grid.h**grid.dim


def run(
    grid: PeriodicGrid,
    coeff,
    f,
    g,
    dt: float,
    T: float,
    stride: int = 0,
) -> list[tuple[float, np.ndarray]]:
    """Evolve from (f, g) to time T; snapshots every ``stride`` steps plus the end.

    ``T`` is reached exactly by shrinking ``dt`` to T / ceil(T / dt).
    """
    coeffs = face_coefficients(coeff, grid)
    u0 = grid.sample(f)
    snaps = [(0.0, u0.copy())]
    if T <= 0:
        return snaps
    nsteps = max(1, math.ceil(T / dt - 1e-9))
    dt = T / nsteps
    state = init_two_levels(grid, u0, g, coeffs, dt)
    if stride and state.n % stride == 0:
        snaps.append((state.t, state.u.copy()))

    def keep(s):
        snaps.append((s.t, s.u.copy()))

    state = evolve(state, coeffs, grid, dt, nsteps - 1, keep if stride else None, stride or 1)
    if abs(snaps[-1][0] - state.t) > 1e-12:
        snaps.append((state.t, state.u.copy()))
    return snaps


def with_time(state: WaveState, t: float) -> WaveState:
    return replace(state, t=t)

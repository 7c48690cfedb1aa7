"""HMM macro solver.

The macro scheme is leapfrog on a periodic grid over [0, 1]^d whose
divergence is built from fluxes at the faces m + 1/2 e_k.  A flux provider
turns the macro gradient P at each face into a flux vector; only component k
of the vector is used on axis-k faces.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import fd_core, flux_cache, micro
from .coefficient import CoefficientField, HomogenizedReference
from .fd_core import PeriodicGrid, WaveState

log = logging.getLogger(__name__)


class MacroConfigError(ValueError):
    pass


def _roll(U, offset, axis):
    return np.roll(U, -offset, axis=axis)


def face_gradients(U: np.ndarray, H: float) -> list[np.ndarray]:
    """P at every face; entry k has shape (d,) + U.shape for faces m + 1/2 e_k."""
    d = U.ndim
    out = []
    for k in range(d):
        Uk = _roll(U, 1, k)
        P = np.empty((d,) + U.shape)
        for j in range(d):
            if j == k:
                P[j] = (Uk - U) / H
            else:
                upper = 0.5 * (_roll(U, 1, j) + _roll(Uk, 1, j))
                lower = 0.5 * (_roll(U, -1, j) + _roll(Uk, -1, j))
                P[j] = (upper - lower) / (2.0 * H)
        out.append(P)
    return out


def gradient_stencil(U: np.ndarray, m, axis: int, side: int, H: float) -> np.ndarray:
    """P at the face m + side/2 e_axis (side = +1 or -1) for a single index m."""
    if side not in (1, -1):
        raise ValueError("side must be +1 or -1")
    base = np.array(m, dtype=int).reshape(U.ndim)
    if side < 0:
        base[axis] -= 1
    shape = np.array(U.shape)

    def at(off):
        return U[tuple(np.mod(base + off, shape))]

    d = U.ndim
    ek = np.eye(d, dtype=int)[axis]
    P = np.empty(d)
    for j in range(d):
        if j == axis:
            P[j] = (at(ek) - at(0 * ek)) / H
        else:
            ej = np.eye(d, dtype=int)[j]
            upper = 0.5 * (at(ej) + at(ek + ej))
            lower = 0.5 * (at(-ej) + at(ek - ej))
            P[j] = (upper - lower) / (2.0 * H)
    return P


def face_centers(grid: PeriodicGrid) -> list[np.ndarray]:
    return [grid.face_points(k) for k in range(grid.dim)]


# ---------------------------------------------------------------------------
# flux providers


class FluxProvider:
    """Maps the macro field U to normal fluxes at the faces of every axis."""

    micro_solves = 0

    def prepare(self, grid: PeriodicGrid) -> None:
        pass

    def fluxes(self, U: np.ndarray, grid: PeriodicGrid) -> list[np.ndarray]:
        raise NotImplementedError

    def bound(self) -> float:
        """Upper bound on the effective coefficient, for the CFL check."""
        raise NotImplementedError


class ExactProvider(FluxProvider):
    """F = Abar(x) P with a known effective coefficient."""

    def __init__(self, reference: HomogenizedReference | CoefficientField):
        if isinstance(reference, HomogenizedReference):
            if not reference.available:
                raise MacroConfigError("exact provider needs a homogenized coefficient")
            self.coeff = reference.as_field()
        else:
            self.coeff = reference
        self._rows = None

    def prepare(self, grid):
        # A at each axis-k face: rows[k][j] = A_kj
        self._rows = fd_core.face_coefficients(self.coeff.matrix, grid).rows

    def fluxes(self, U, grid):
        if self._rows is None:
            self.prepare(grid)
        out = []
        for k, P in enumerate(face_gradients(U, grid.h)):
            out.append(np.einsum("j...,j...->...", self._rows[k], P))
        return out

    def bound(self):
        return self.coeff.sup_norm_bound()


class CachedProvider(FluxProvider):
    """Fluxes from a precomputed basis table: F_k = sum_i P_i F(x, e_i)_k."""

    def __init__(self, params: micro.MicroParams, field: CoefficientField, dedup: bool | None = None, table=None):
        self.params = params
        self.field = field
        self.dedup = dedup
        self.table: flux_cache.FluxTable | None = table
        self._weights = None

    def prepare(self, grid):
        dedup = self.dedup if self.dedup is not None else flux_cache.should_dedup(self.field, grid.h)
        faces = face_centers(grid)
        if self.table is None:
            pts = np.concatenate([f.reshape(-1, grid.dim) for f in faces])
            self.table = flux_cache.precompute(pts, self.params, self.field, dedup=dedup)
            self.micro_solves = self.table.solves
        # weights[k][i] = F(x_face, e_i)_k on axis-k faces
        self._weights = [np.moveaxis(self.table.matrices(f)[..., k], -1, 0) for k, f in enumerate(faces)]

    def fluxes(self, U, grid):
        if self._weights is None:
            self.prepare(grid)
        return [np.einsum("i...,i...->...", w, P) for w, P in zip(self._weights, face_gradients(U, grid.h))]

    def effective_matrices(self) -> np.ndarray:
        return np.stack(list(self.table.entries.values()))

    def bound(self):
        if self.table is None:
            return self.field.sup_norm_bound()
        mats = self.effective_matrices()
        sym = 0.5 * (mats + np.swapaxes(mats, -1, -2))
        return float(np.max(np.abs(np.linalg.eigvalsh(sym))))


class DirectMicroProvider(FluxProvider):
    """Solves a fresh micro problem at every face and every step (reference path for the cache)."""

    def __init__(self, params: micro.MicroParams, field: CoefficientField):
        self.params = params
        self.field = field
        self._faces = None

    def prepare(self, grid):
        self._faces = [f.reshape(-1, grid.dim) for f in face_centers(grid)]

    def fluxes(self, U, grid):
        if self._faces is None:
            self.prepare(grid)
        out = []
        for k, P in enumerate(face_gradients(U, grid.h)):
            Pf = P.reshape(grid.dim, -1)
            vals = np.empty(Pf.shape[1])
            for i, x in enumerate(self._faces[k]):
                vals[i] = micro.upscaled_flux(x, Pf[:, i], self.params, self.field)[k]
                self.micro_solves += 1
            out.append(vals.reshape(grid.shape))
        return out

    def bound(self):
        return self.field.sup_norm_bound()


def face_derivatives_1d(U: np.ndarray, H: float):
    """u_x, u_xx, u_xxx at faces m + 1/2 from the four nodes m-1..m+2 (second order)."""
    um, u0, u1, u2 = np.roll(U, 1), U, np.roll(U, -1), np.roll(U, -2)
    ux = (u1 - u0) / H
    uxx = (u2 - u1 - u0 + um) / (2.0 * H * H)
    uxxx = (u2 - 3.0 * u1 + 3.0 * u0 - um) / H**3
    return ux, uxx, uxxx


class LongTimeProvider(FluxProvider):
    """1D flux from micro problems with cubic initial data.

    Three basis solves per face (unit slope, unit second and unit third
    derivative) give F = u_x F1 + u_xx F2 + u_xxx F3.
    """

    def __init__(self, params: micro.MicroParams, field: CoefficientField, dedup: bool | None = None, table=None):
        if field.dimension != 1:
            raise MacroConfigError("long-time provider is one-dimensional")
        self.params = params
        self.field = field
        self.dedup = dedup
        self.table = table
        self._w = None

    def prepare(self, grid):
        dedup = self.dedup if self.dedup is not None else flux_cache.should_dedup(self.field, grid.h)
        faces = grid.face_points(0)
        if self.table is None:
            self.table = flux_cache.precompute(
                faces.reshape(-1, 1), self.params, self.field, dedup=dedup, basis=flux_cache.cubic_basis_1d()
            )
            self.micro_solves = self.table.solves
        self._w = self.table.matrices(faces)[..., 0]  # (n, 3)

    def coefficients(self) -> np.ndarray:
        return np.stack([m[:, 0] for m in self.table.entries.values()])

    def fluxes(self, U, grid):
        if self._w is None:
            self.prepare(grid)
        ux, uxx, uxxx = face_derivatives_1d(U, grid.h)
        w = self._w
        return [w[:, 0] * ux + w[:, 1] * uxx + w[:, 2] * uxxx]

    def bound(self):
        if self.table is None:
            return self.field.sup_norm_bound()
        return float(np.max(np.abs(self.coefficients()[:, 0])))


# ---------------------------------------------------------------------------


def macro_operator(provider: FluxProvider, grid: PeriodicGrid) -> Callable[[np.ndarray], np.ndarray]:
    H = grid.h

    def op(U):
        return fd_core.divergence(provider.fluxes(U, grid), H)

    return op


def hmm_step(state: WaveState, provider: FluxProvider, grid: PeriodicGrid, dt: float) -> WaveState:
    """U^{n+1} = 2U^n - U^{n-1} + dt^2/H sum_k (F_{m+1/2 e_k} - F_{m-1/2 e_k})."""
    lu = fd_core.divergence(provider.fluxes(state.u, grid), grid.h)
    new = fd_core.leapfrog(state, lu, dt)
    fd_core.check_finite(new.u, f" at macro step {new.n}")
    return new


@dataclass
class MacroConfig:
    grid: PeriodicGrid
    dt: float
    T: float
    provider: FluxProvider
    f: object = None
    g: object = None
    stride: int = 0
    safety: float = 1.0

    def validate(self, bound: float) -> None:
        if self.T < 0:
            raise MacroConfigError("end time must be non-negative")
        limit = self.safety * fd_core.cfl_max_dt(self.grid, bound)
        if self.dt > limit * (1 + 1e-12):
            raise MacroConfigError(f"macro time step {self.dt:.4g} exceeds the stability limit {limit:.4g}")


def run(config: MacroConfig) -> list[tuple[float, np.ndarray]]:
    """Integrate to T; returns snapshots (t, U) every ``stride`` steps plus the last one."""
    grid = config.grid
    u0 = grid.sample(config.f)
    snaps = [(0.0, u0.copy())]
    if config.T <= 0:
        return snaps
    provider = config.provider
    provider.prepare(grid)
    nsteps = max(1, math.ceil(config.T / config.dt - 1e-9))
    dt = config.T / nsteps
    config.validate(provider.bound())
    op = macro_operator(provider, grid)
    state = fd_core.init_two_levels(grid, u0, config.g, None, dt, operator=op)
    stride = config.stride
    if stride and state.n % stride == 0:
        snaps.append((state.t, state.u.copy()))
    for _ in range(nsteps - 1):
        try:
            state = hmm_step(state, provider, grid, dt)
        except fd_core.InstabilityError:
            raise
        except Exception as exc:
            raise RuntimeError(f"macro step {state.n + 1} failed: {exc}") from exc
        if stride and state.n % stride == 0:
            snaps.append((state.t, state.u.copy()))
    if abs(snaps[-1][0] - state.t) > 1e-12:
        snaps.append((state.t, state.u.copy()))
    return snaps


def macro_grid(H: float, dim: int = 1) -> PeriodicGrid:
    n = int(round(1.0 / H))
    if abs(n * H - 1.0) > 1e-9:
        raise MacroConfigError(f"H = {H} does not divide the unit interval")
    return PeriodicGrid.unit(n, dim)

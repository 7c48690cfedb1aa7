"""Reference solutions: fully resolved DNS, the homogenized equation and the
long-time dispersive effective equation u_tt = Abar u_xx + beta eps^2 u_xxxx.

The dispersive equation is ill-posed for beta > 0 (the quartic term lowers
omega^2 = Abar k^2 - beta eps^2 k^4 below zero at large k).  On a grid with
h > 2 eps sqrt(beta / Abar) the discrete operator keeps omega^2 >= 0 for
every mode; on finer grids the solver can project out the offending modes
(``regularize=True``).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from . import fd_core
from .coefficient import CoefficientField, ConstantField, HomogenizedReference
from .fd_core import PeriodicGrid

log = logging.getLogger(__name__)

Trajectory = list  # of (t, u) pairs


class ReferenceError(ValueError):
    pass


def cfl_step(grid: PeriodicGrid, bound: float, ratio: float) -> float:
    return ratio * fd_core.cfl_max_dt(grid, bound)


def run_dns(field: CoefficientField, f, g, grid: PeriodicGrid, T: float, dt_ratio: float = 0.5, stride: int = 0) -> Trajectory:
    """Full oscillatory problem on a grid resolving eps (h <= eps/32)."""
    if grid.h > field.epsilon / 32 * (1 + 1e-9):
        raise ReferenceError(f"DNS grid h={grid.h:.3g} does not resolve eps={field.epsilon:.3g} (need h <= eps/32)")
    dt = cfl_step(grid, field.sup_norm_bound(), dt_ratio)
    return fd_core.run(grid, field.matrix, f, g, dt, T, stride)


def run_homogenized(reference: HomogenizedReference, f, g, grid: PeriodicGrid, T: float, dt_ratio: float = 0.5, dt=None, stride: int = 0) -> Trajectory:
    if not reference.available:
        raise ReferenceError("homogenized coefficient unavailable for this field")
    coeff = reference.as_field()
    if dt is None:
        dt = cfl_step(grid, coeff.sup_norm_bound(), dt_ratio)
    return fd_core.run(grid, coeff.matrix, f, g, dt, T, stride)


def dalembert(f, speed: float, x: np.ndarray, t: float) -> np.ndarray:
    """1/2 (f(x - ct) + f(x + ct)) for 1-periodic f with zero initial velocity."""
    return 0.5 * (f(np.mod(x - speed * t, 1.0)) + f(np.mod(x + speed * t, 1.0)))


def periodic_gaussian(center: float = 0.5, sigma: float = 0.1, images: int = 3):
    """exp(-(x - c)^2 / sigma^2) summed over periodic images, so it is exactly 1-periodic."""

    def f(x):
        x = np.asarray(x, dtype=float)
        if x.ndim and x.shape[-1] == 1:
            x = x[..., 0]
        out = np.zeros_like(x)
        for j in range(-images, images + 1):
            out += np.exp(-((x - center - j) ** 2) / sigma**2)
        return out

    return f


def gaussian_nd(center, sigma: float = 0.1, images: int = 2):
    """Product of periodized Gaussians on [0, 1]^d, evaluated at points (..., d)."""
    center = np.atleast_1d(np.asarray(center, dtype=float))
    factors = [periodic_gaussian(c, sigma, images) for c in center]

    def f(x):
        x = np.asarray(x, dtype=float)
        out = np.ones(x.shape[:-1])
        for k, fk in enumerate(factors):
            out *= fk(x[..., k])
        return out

    return f


def restrict(u_fine: np.ndarray, fine: PeriodicGrid, coarse: PeriodicGrid) -> np.ndarray:
    """Point sampling of a fine-grid function at the coarse nodes (nested grids)."""
    ratio = coarse.h / fine.h
    r = int(round(ratio))
    if abs(ratio - r) > 1e-9 or any(n * r != m for n, m in zip(coarse.shape, fine.shape)):
        raise ReferenceError("grids are not nested")
    return u_fine[tuple(slice(None, None, r) for _ in range(fine.dim))]


# ---------------------------------------------------------------------------
# dispersive effective equation


@dataclass
class DispersiveConfig:
    abar: float
    beta: float
    eps: float
    grid: PeriodicGrid
    dt: float | None = None
    T: float = 1.0
    safety: float = 0.9
    regularize: bool = False

    def __post_init__(self):
        if self.abar <= 0:
            raise ReferenceError("Abar must be positive")
        if not math.isfinite(self.beta):
            raise ReferenceError("beta must be finite")
        if self.grid.dim != 1:
            raise ReferenceError("dispersive solver is one-dimensional")

    def max_dt(self) -> float:
        """Default step: safety * min(h / sqrt(Abar), h^2 / (2 eps sqrt(beta)))."""
        h = self.grid.h
        lim = h / math.sqrt(self.abar)
        if self.beta > 0:
            lim = min(lim, h * h / (2.0 * self.eps * math.sqrt(self.beta)))
        elif self.beta < 0:
            lim = self.stability_limit()
        return self.safety * lim

    def stability_limit(self) -> float:
        """Exact leapfrog limit 2 / max omega over the grid modes."""
        w2 = discrete_omega2(self)
        return 2.0 / math.sqrt(max(float(np.max(w2)), 1e-300))


def _second(u, h):
    return (np.roll(u, -1) - 2.0 * u + np.roll(u, 1)) / (h * h)


def _fourth(u, h):
    return (np.roll(u, -2) - 4.0 * np.roll(u, -1) + 6.0 * u - 4.0 * np.roll(u, 1) + np.roll(u, 2)) / h**4


def discrete_omega2(cfg: DispersiveConfig) -> np.ndarray:
    """omega^2 of each FFT mode under the 3-/5-point operator."""
    n = cfg.grid.shape[0]
    s2 = np.sin(np.pi * np.fft.fftfreq(n)) ** 2  # sin^2(k h / 2)
    h = cfg.grid.h
    return 4.0 * cfg.abar * s2 / h**2 - 16.0 * cfg.beta * cfg.eps**2 * s2 * s2 / h**4


def _project_stable(u, keep):
    return np.real(np.fft.ifft(np.fft.fft(u) * keep))


def run_dispersive(cfg: DispersiveConfig, f, g=None, stride: int = 0) -> Trajectory:
    """Leapfrog for u_tt = Abar u_xx + beta eps^2 u_xxxx (3-point and 5-point stencils)."""
    grid = cfg.grid
    h = grid.h
    u0 = grid.sample(f)
    v0 = grid.sample(g)
    snaps = [(0.0, u0.copy())]
    if cfg.T <= 0:
        return snaps
    if cfg.dt is None:
        dt = cfg.max_dt()
    else:
        dt = cfg.dt
        if dt > cfg.stability_limit() * (1 + 1e-12):
            raise ReferenceError(f"time step {dt:.4g} exceeds the stability limit {cfg.stability_limit():.4g}")
    nsteps = max(1, math.ceil(cfg.T / dt - 1e-9))
    dt = cfg.T / nsteps
    c4 = cfg.beta * cfg.eps**2
    keep = None
    w2 = discrete_omega2(cfg)
    if np.any(w2 < -1e-12 * np.max(np.abs(w2))):
        if not cfg.regularize:
            raise ReferenceError(
                "grid resolves modes with negative omega^2 (h < 2 eps sqrt(beta/Abar)); "
                "coarsen the grid or set regularize=True"
            )
        keep = (w2 >= 0).astype(float)
        u0 = _project_stable(u0, keep)
        v0 = _project_stable(v0, keep)

    if c4 == 0.0:
        # same loop as the homogenized solver, so beta = 0 reproduces it bit for bit
        return fd_core.run(grid, ConstantField(np.array([[cfg.abar]])).matrix, u0, v0, dt, cfg.T, stride)

    def op(u):
        lu = cfg.abar * _second(u, h)
        if c4:
            lu = lu + c4 * _fourth(u, h)
        return lu

    u_prev = u0
    u = u0 + dt * v0 + 0.5 * dt * dt * op(u0)
    dt2 = dt * dt
    for n in range(1, nsteps):
        if stride and n % stride == 0:
            snaps.append((n * dt, u.copy()))
        u, u_prev = 2.0 * u - u_prev + dt2 * op(u), u
        if keep is not None:
            # growth of a discarded mode between projections is exponential, so project every step
            u = _project_stable(u, keep)
        if n % 256 == 0:
            fd_core.check_finite(u, f" in dispersive run at step {n}")
    fd_core.check_finite(u, " in dispersive run")
    snaps.append((cfg.T, u.copy()))
    return snaps


class BoundaryFit(RuntimeError):
    """The fitted beta sits on the edge of the search interval."""

    def __init__(self, beta, misfit, bound):
        super().__init__(f"best beta={beta:.4g} lies on the search boundary {bound:.4g}")
        self.beta = beta
        self.misfit = misfit


@dataclass
class BetaFit:
    beta: float
    misfit: float
    evaluations: int


def fit_beta(
    u_target: np.ndarray,
    f,
    abar: float,
    eps: float,
    grid: PeriodicGrid,
    T: float,
    beta_max: float = 0.05,
    dt: float | None = None,
    xtol: float = 1e-6,
    regularize: bool = False,
) -> BetaFit:
    """Beta minimizing the L2 distance between run_dispersive(beta) at T and ``u_target``.

    Bounded scalar minimization over [-beta_max, beta_max], so the sign is
    decided by the data.  Raises :class:`BoundaryFit` when the optimum lands
    on either end of the interval.
    """
    target = np.asarray(u_target, dtype=float)
    if target.shape != grid.shape:
        raise ReferenceError("target does not live on the fitting grid")
    count = [0]

    def misfit(beta):
        count[0] += 1
        cfg = DispersiveConfig(abar, beta, eps, grid, dt, T, regularize=regularize)
        if cfg.dt is not None:
            # negative beta tightens the step limit
            cfg.dt = min(cfg.dt, 0.999 * cfg.stability_limit())
        u = run_dispersive(cfg, f)[-1][1]
        return float(np.sqrt(np.sum((u - target) ** 2) * grid.h))

    res = optimize.minimize_scalar(misfit, bounds=(-beta_max, beta_max), method="bounded", options={"xatol": xtol})
    beta = float(res.x)
    if abs(beta) > beta_max - 10 * xtol:
        raise BoundaryFit(beta, float(res.fun), beta_max)
    return BetaFit(beta, float(res.fun), count[0])

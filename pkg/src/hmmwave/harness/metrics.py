"""Error norms between grid functions on a common periodic grid."""

from __future__ import annotations

import numpy as np

from ..fd_core import PeriodicGrid


class GridMismatch(ValueError):
    pass


def grid_error(u_a, u_b, norm: str = "linf", grid: PeriodicGrid | None = None) -> float:
    """Max-abs difference, or sqrt(h^d sum diff^2).

    Without ``grid`` the arrays are taken to cover the unit cube, so h = 1/n
    on each axis.
    """
    a = np.asarray(u_a, dtype=float)
    b = np.asarray(u_b, dtype=float)
    if a.shape != b.shape:
        raise GridMismatch(f"grid shapes differ: {a.shape} vs {b.shape}")
    if grid is not None and tuple(grid.shape) != a.shape:
        raise GridMismatch(f"arrays of shape {a.shape} do not live on grid {grid.shape}")
    diff = a - b
    norm = norm.lower()
    if norm in ("linf", "max", "inf"):
        return float(np.max(np.abs(diff))) if diff.size else 0.0
    if norm == "l2":
        cell = grid.h ** grid.dim if grid is not None else 1.0 / diff.size
        return float(np.sqrt(np.sum(diff * diff) * cell))
    raise ValueError(f"unknown norm {norm!r}")


def relative_l2(u, ref, grid: PeriodicGrid | None = None) -> float:
    return grid_error(u, ref, "l2", grid) / grid_error(ref, np.zeros_like(ref), "l2", grid)


def loglog_slope(x, y) -> float:
    """Least-squares slope of log|y| against log x."""
    x = np.log(np.asarray(x, dtype=float))
    y = np.log(np.abs(np.asarray(y, dtype=float)))
    return float(np.polyfit(x, y, 1)[0])

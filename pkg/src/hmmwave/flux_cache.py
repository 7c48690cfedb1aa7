"""Basis-flux tables built from the linearity of the micro map.

F~(x, p) is linear in p, so d micro solves with p = e_i at a point x give the
flux for every slope: F~(x, p) = sum_i p_i F(x, e_i).  Points are keyed by
their canonical representative (see ``CoefficientField.canonical_point``)
rounded to 1e-12, so faces whose micro problems coincide are solved once.
When the medium is eps-periodic and H is a multiple of eps, every face shares
one entry ("dedup").
"""

from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from . import micro
from .coefficient import CoefficientField

log = logging.getLogger(__name__)

KEY_DECIMALS = 12


class MicroSolveFailure(RuntimeError):
    def __init__(self, point, cause):
        super().__init__(f"micro solve failed at x={[round(float(v), 12) for v in np.atleast_1d(point)]}: {cause}")
        self.point = point


def point_key(x) -> tuple[float, ...]:
    return tuple(float(v) for v in np.round(np.asarray(x, dtype=float) + 0.0, KEY_DECIMALS) + 0.0)


@dataclass
class FluxTable:
    """Basis fluxes per point: ``entries[key]`` has shape (nbasis, d); row i is F(x, e_i)."""

    dimension: int
    entries: dict[tuple[float, ...], np.ndarray] = dc_field(default_factory=dict)
    dedup: bool = False
    canonical: object = None  # callable x -> representative point
    solves: int = 0

    @property
    def nbasis(self) -> int:
        return next(iter(self.entries.values())).shape[0] if self.entries else self.dimension

    def key(self, point) -> tuple[float, ...]:
        if self.dedup:
            return next(iter(self.entries))
        x = np.asarray(point, dtype=float).reshape(self.dimension)
        if self.canonical is not None:
            x = self.canonical(x)
        return point_key(x)

    def basis(self, point) -> np.ndarray:
        try:
            return self.entries[self.key(point)]
        except KeyError:
            raise KeyError(f"point {np.asarray(point).tolist()} is not in the flux table") from None

    def eval(self, point, p) -> np.ndarray:
        """sum_i p_i F(x, e_i)."""
        return np.asarray(p, dtype=float) @ self.basis(point)

    def matrices(self, points: np.ndarray) -> np.ndarray:
        """Basis matrices for an array of points, shape (..., nbasis, d)."""
        pts = np.asarray(points, dtype=float)
        flat = pts.reshape(-1, self.dimension)
        if self.dedup:
            only = next(iter(self.entries.values()))
            return np.broadcast_to(only, pts.shape[:-1] + only.shape).copy()
        out = np.stack([self.basis(x) for x in flat])
        return out.reshape(pts.shape[:-1] + out.shape[1:])

    # ---- CSV persistence
    def to_csv(self, path) -> None:
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i}" for i in range(self.dimension)] + ["basis"] + [f"F{i}" for i in range(self.dimension)])
            for key, mat in self.entries.items():
                for b, row in enumerate(mat):
                    w.writerow([repr(v) for v in key] + [b] + [repr(float(v)) for v in row])
        os.replace(tmp, path)

    @classmethod
    def from_csv(cls, path, dedup: bool = False, canonical=None) -> "FluxTable":
        rows: dict[tuple[float, ...], dict[int, np.ndarray]] = {}
        dim = None
        with open(path, newline="") as fh:
            r = csv.reader(fh)
            header = next(r)
            dim = header.index("basis")
            for line in r:
                key = tuple(float(v) for v in line[:dim])
                rows.setdefault(key, {})[int(line[dim])] = np.array([float(v) for v in line[dim + 1 :]])
        entries = {k: np.stack([v[i] for i in sorted(v)]) for k, v in rows.items()}
        return cls(dim, entries, dedup=dedup and len(entries) == 1, canonical=canonical)


def should_dedup(field: CoefficientField, H: float) -> bool:
    """True iff the medium is purely eps-periodic and H is an integer multiple of eps."""
    if not field.fast_periodic:
        return False
    ratio = H / field.epsilon
    return abs(ratio - round(ratio)) <= 1e-10 * max(1.0, abs(ratio)) and round(ratio) >= 1


def _solve_basis(args):
    x, basis, params, field = args
    d = field.dimension
    out = []
    for b in basis:
        p, hess, third = b
        try:
            out.append(micro.upscaled_flux(x, p, params, field, hess, third))
        except Exception as exc:  # tag with the offending point
            raise MicroSolveFailure(x, exc) from exc
    return np.array(out).reshape(len(basis), d)


def linear_basis(d: int):
    return [(np.eye(d)[i], None, None) for i in range(d)]


def cubic_basis_1d():
    """Slope, second and third derivative unit data for the 1D long-time flux."""
    return [
        (np.array([1.0]), None, None),
        (np.array([0.0]), np.array([[1.0]]), None),
        (np.array([0.0]), None, np.array([[[1.0]]])),
    ]


def default_workers() -> int:
    env = os.environ.get("HMMWAVE_WORKERS")
    return max(1, int(env)) if env else 1


def precompute(
    points,
    params: micro.MicroParams,
    field: CoefficientField,
    dedup: bool = False,
    basis=None,
    workers: int | None = None,
) -> FluxTable:
    """Solve the basis micro problems for every distinct point.

    With ``dedup`` a single shared entry is computed at the first point.
    """
    d = field.dimension
    basis = linear_basis(d) if basis is None else basis
    pts = np.asarray(points, dtype=float).reshape(-1, d)
    table = FluxTable(d, dedup=dedup, canonical=field.canonical_point)
    todo: dict[tuple[float, ...], np.ndarray] = {}
    if dedup:
        rep = field.canonical_point(pts[0])
        todo[point_key(rep)] = rep
    else:
        for x in pts:
            rep = field.canonical_point(x)
            todo.setdefault(point_key(rep), rep)
    keys = list(todo)
    jobs = [(todo[k], basis, params, field) for k in keys]
    workers = default_workers() if workers is None else workers
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_solve_basis, jobs, chunksize=max(1, math.ceil(len(jobs) / (4 * workers)))))
    else:
        results = [_solve_basis(j) for j in jobs]
    for k, res in zip(keys, results):
        table.entries[k] = res
    table.solves = len(keys) * len(basis)
    log.info("flux table: %d points, %d micro solves", len(keys), table.solves)
    return table

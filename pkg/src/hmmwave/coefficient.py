"""Oscillatory coefficient fields A^eps(x) and their homogenized references.

Every field maps points of shape ``(..., d)`` to symmetric matrices of shape
``(..., d, d)``.  The 1D forms are also usable as scalar generators for
:class:`DiagonalND`, which applies them to the first coordinate only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

TWO_PI = 2.0 * np.pi


def _as_points(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    if x.shape[-1] != dim:
        raise ValueError(f"expected points with trailing dimension {dim}, got {x.shape}")
    return x


def _scalar_to_matrix(a: np.ndarray, dim: int) -> np.ndarray:
    return a[..., None, None] * np.eye(dim)


class CoefficientField:
    """Base class for A^eps.

    Subclasses implement :meth:`matrix`.  The remaining attributes drive the
    optimisations in :mod:`hmmwave.micro` and :mod:`hmmwave.flux_cache`:

    ``fast_periodic``
        A^eps(x + eps e_k) == A^eps(x) for every axis (no slow dependence).
    ``invariant_axes``
        axes along which A^eps does not vary at all.
    """

    dimension: int = 1
    epsilon: float = 1.0
    fast_periodic: bool = False
    invariant_axes: tuple[int, ...] = ()
    diagonal: bool = True

    def matrix(self, x) -> np.ndarray:
        raise NotImplementedError

    def sup_norm_bound(self) -> float:
        raise NotImplementedError

    def homogenized(self) -> "HomogenizedReference":
        return HomogenizedReference.unavailable(self.dimension)

    def __call__(self, x) -> np.ndarray:
        return self.matrix(x)

    def canonical_point(self, x) -> np.ndarray:
        """Representative point with the same micro problem as ``x``.

        Invariant axes collapse to 0 and, for purely fast periodic media, the
        remaining coordinates reduce modulo eps.
        """
        x = np.array(x, dtype=float).reshape(self.dimension)
        if self.fast_periodic:
            x = np.mod(x, self.epsilon)
            # values a hair below eps are the same point as 0
            x[np.isclose(x, self.epsilon, rtol=0, atol=1e-12 * self.epsilon)] = 0.0
        for ax in self.invariant_axes:
            x[ax] = 0.0
        return x


# ---------------------------------------------------------------------------
# 1D forms


@dataclass(frozen=True)
class Periodic1D(CoefficientField):
    """a(x/eps) with a(y) = offset + sum_j s_j sin(2 pi j y) + c_j cos(2 pi j y)."""

    epsilon: float
    offset: float = 1.1
    sin_amps: tuple[float, ...] = (1.0,)
    cos_amps: tuple[float, ...] = ()

    dimension = 1
    fast_periodic = True

    def scalar(self, x) -> np.ndarray:
        y = np.asarray(x, dtype=float) / self.epsilon
        a = np.full_like(y, self.offset)
        for j, s in enumerate(self.sin_amps, start=1):
            if s:
                a = a + s * np.sin(TWO_PI * j * y)
        for j, c in enumerate(self.cos_amps, start=1):
            if c:
                a = a + c * np.cos(TWO_PI * j * y)
        return a

    def matrix(self, x) -> np.ndarray:
        x = _as_points(x, 1)
        return self.scalar(x[..., 0])[..., None, None]

    def sup_norm_bound(self) -> float:
        return self.offset + sum(map(abs, self.sin_amps)) + sum(map(abs, self.cos_amps))

    def harmonic_mean(self) -> float:
        if len(self.sin_amps) + len(self.cos_amps) == 1:
            beta = (self.sin_amps or self.cos_amps)[0]
            return float(np.sqrt(self.offset**2 - beta**2))
        # general trig series: periodic trapezoid is spectrally accurate
        y = np.arange(4096) / 4096 * self.epsilon
        return float(1.0 / np.mean(1.0 / self.scalar(y)))

    def arithmetic_mean(self) -> float:
        return self.offset

    def homogenized(self) -> "HomogenizedReference":
        return HomogenizedReference.constant(np.array([[self.harmonic_mean()]]))


@dataclass(frozen=True)
class LocallyPeriodic1D(CoefficientField):
    """a(x, x/eps) = alpha(x) + beta sin(2 pi y), alpha(x) = alpha0 + slow_amp * trig(2 pi x).

    ``slow_kind`` selects cos (example two) or sin (kernel study, example five).
    """

    epsilon: float
    alpha0: float = 1.1
    slow_amp: float = 0.5
    beta: float = 0.5
    slow_kind: str = "cos"

    dimension = 1
    fast_periodic = False

    def __post_init__(self):
        if self.slow_kind not in ("cos", "sin"):
            raise ValueError(f"slow_kind must be 'cos' or 'sin', got {self.slow_kind!r}")

    def alpha(self, x) -> np.ndarray:
        trig = np.cos if self.slow_kind == "cos" else np.sin
        return self.alpha0 + self.slow_amp * trig(TWO_PI * np.asarray(x, dtype=float))

    def scalar(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.alpha(x) + self.beta * np.sin(TWO_PI * x / self.epsilon)

    def matrix(self, x) -> np.ndarray:
        x = _as_points(x, 1)
        return self.scalar(x[..., 0])[..., None, None]

    def sup_norm_bound(self) -> float:
        return self.alpha0 + abs(self.slow_amp) + abs(self.beta)

    def harmonic_scalar(self, x) -> np.ndarray:
        a = self.alpha(x)
        return np.sqrt(a * a - self.beta**2)

    def arithmetic_scalar(self, x) -> np.ndarray:
        return self.alpha(x)

    def homogenized(self) -> "HomogenizedReference":
        return HomogenizedReference.closed_form(1, lambda x: self.harmonic_scalar(x[..., 0])[..., None])


@dataclass(frozen=True)
class MultiFrequency1D(CoefficientField):
    """offset + sum_i amp_i sin(2 pi x / eps_i); no known homogenized limit."""

    terms: tuple[tuple[float, float], ...]
    offset: float = 1.1
    epsilon: float = 0.0  # reference scale used to size micro problems

    dimension = 1
    fast_periodic = False

    def __post_init__(self):
        if not self.epsilon:
            object.__setattr__(self, "epsilon", float(np.median([e for _, e in self.terms])))

    @classmethod
    def five_scale_example(cls, scale: float = 1.0) -> "MultiFrequency1D":
        """Five sines with eps_i = 1/(90 + 5(i-1)), optionally stretched by ``scale``."""
        terms = tuple((0.2, scale / (90 + 5 * i)) for i in range(5))
        return cls(terms=terms, offset=1.1, epsilon=terms[2][1])

    def scalar(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        a = np.full_like(x, self.offset)
        for amp, eps in self.terms:
            a = a + amp * np.sin(TWO_PI * x / eps)
        return a

    def matrix(self, x) -> np.ndarray:
        x = _as_points(x, 1)
        return self.scalar(x[..., 0])[..., None, None]

    def sup_norm_bound(self) -> float:
        return self.offset + sum(abs(a) for a, _ in self.terms)


# ---------------------------------------------------------------------------
# multi-dimensional forms


@dataclass(frozen=True)
class DiagonalND(CoefficientField):
    """A^eps(x) = a^eps(x_1) I_d for a 1D generator a^eps."""

    generator: CoefficientField
    dimension: int = 2

    diagonal = True

    def __post_init__(self):
        if self.generator.dimension != 1:
            raise ValueError("DiagonalND needs a 1D generator")
        if self.dimension not in (1, 2, 3):
            raise ValueError("dimension must be 1, 2 or 3")

    @property
    def epsilon(self) -> float:  # type: ignore[override]
        return self.generator.epsilon

    @property
    def fast_periodic(self) -> bool:  # type: ignore[override]
        return self.generator.fast_periodic

    @property
    def invariant_axes(self) -> tuple[int, ...]:  # type: ignore[override]
        return tuple(range(1, self.dimension))

    def scalar(self, x) -> np.ndarray:
        x = _as_points(x, self.dimension)
        return self.generator.scalar(x[..., 0])

    def matrix(self, x) -> np.ndarray:
        return _scalar_to_matrix(self.scalar(x), self.dimension)

    def sup_norm_bound(self) -> float:
        return self.generator.sup_norm_bound()

    def homogenized(self) -> "HomogenizedReference":
        gen = self.generator
        d = self.dimension
        if isinstance(gen, Periodic1D):
            diag = np.full(d, gen.arithmetic_mean())
            diag[0] = gen.harmonic_mean()
            return HomogenizedReference.constant(np.diag(diag))
        if isinstance(gen, LocallyPeriodic1D):

            def entries(x):
                x1 = x[..., 0]
                out = np.repeat(gen.arithmetic_scalar(x1)[..., None], d, axis=-1)
                out[..., 0] = gen.harmonic_scalar(x1)
                return out

            return HomogenizedReference.closed_form(d, entries)
        return HomogenizedReference.unavailable(d)


@dataclass(frozen=True)
class ConstantField(CoefficientField):
    """Spatially constant SPD matrix; its own homogenized limit."""

    value: np.ndarray = field(default_factory=lambda: np.eye(1))
    epsilon: float = 1.0

    fast_periodic = True

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.value, dtype=float))
        if v.shape[0] != v.shape[1] or not np.allclose(v, v.T):
            raise ValueError("constant coefficient must be a symmetric matrix")
        object.__setattr__(self, "value", v)

    @property
    def dimension(self) -> int:  # type: ignore[override]
        return self.value.shape[0]

    @property
    def diagonal(self) -> bool:  # type: ignore[override]
        return bool(np.count_nonzero(self.value - np.diag(np.diag(self.value))) == 0)

    @property
    def invariant_axes(self) -> tuple[int, ...]:  # type: ignore[override]
        return tuple(range(self.dimension))

    def matrix(self, x) -> np.ndarray:
        x = _as_points(x, self.dimension)
        return np.broadcast_to(self.value, x.shape[:-1] + self.value.shape).copy()

    def sup_norm_bound(self) -> float:
        return float(np.linalg.norm(self.value, 2))

    def homogenized(self) -> "HomogenizedReference":
        return HomogenizedReference.constant(self.value)


@dataclass(frozen=True, eq=False)
class Tabulated(CoefficientField):
    """Grid samples with periodic piecewise-(multi)linear interpolation.

    ``samples`` has shape ``grid_shape`` (isotropic scalar) or
    ``grid_shape + (d, d)``.  Sample ``i`` sits at ``origin + i * spacing`` and
    the table repeats with period ``grid_shape * spacing``.
    """

    samples: np.ndarray
    spacing: float
    dimension: int = 1
    origin: float = 0.0
    epsilon: float = 1.0

    fast_periodic = False

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        object.__setattr__(self, "samples", s)
        if s.ndim not in (self.dimension, self.dimension + 2):
            raise ValueError("samples must be scalar or d x d per grid point")

    @property
    def diagonal(self) -> bool:  # type: ignore[override]
        s = self.samples
        if s.ndim == self.dimension:
            return True
        off = s - s * np.eye(self.dimension)
        return not np.any(off)

    def _interp(self, x: np.ndarray) -> np.ndarray:
        d = self.dimension
        n = np.array(self.samples.shape[:d])
        pos = (x - self.origin) / self.spacing
        lo = np.floor(pos).astype(int)
        frac = pos - lo
        out = 0.0
        for corner in np.ndindex(*(2,) * d):
            corner = np.array(corner)
            idx = tuple(np.mod(lo[..., k] + corner[k], n[k]) for k in range(d))
            w = np.prod(np.where(corner == 1, frac, 1.0 - frac), axis=-1)
            vals = self.samples[idx]
            w = w.reshape(w.shape + (1,) * (vals.ndim - w.ndim))
            out = out + w * vals
        return out

    def matrix(self, x) -> np.ndarray:
        x = _as_points(x, self.dimension)
        vals = self._interp(x)
        if self.samples.ndim == self.dimension:
            return _scalar_to_matrix(vals, self.dimension)
        return vals

    def sup_norm_bound(self) -> float:
        s = self.samples
        if s.ndim == self.dimension:
            peak = np.max(np.abs(s))
        else:
            peak = np.max(np.linalg.norm(s.reshape(-1, self.dimension, self.dimension), 2, axis=(1, 2)))
        return 1.05 * float(peak)


# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class HomogenizedReference:
    """Effective coefficient: ``constant``, ``closed_form`` (diagonal entries as a
    function of x) or ``unavailable``."""

    form: str
    dimension: int
    value: np.ndarray | None = None
    entries: Callable[[np.ndarray], np.ndarray] | None = None

    @classmethod
    def constant(cls, value) -> "HomogenizedReference":
        value = np.atleast_2d(np.asarray(value, dtype=float))
        return cls("constant", value.shape[0], value=value)

    @classmethod
    def closed_form(cls, dim: int, entries) -> "HomogenizedReference":
        return cls("closed_form", dim, entries=entries)

    @classmethod
    def unavailable(cls, dim: int) -> "HomogenizedReference":
        return cls("unavailable", dim)

    @property
    def available(self) -> bool:
        return self.form != "unavailable"

    def matrix(self, x) -> np.ndarray:
        if self.form == "unavailable":
            raise LookupError("no homogenized coefficient is known for this field")
        x = _as_points(x, self.dimension)
        if self.form == "constant":
            return np.broadcast_to(self.value, x.shape[:-1] + self.value.shape).copy()
        diag = self.entries(x)
        return diag[..., :, None] * np.eye(self.dimension)

    def __call__(self, x) -> np.ndarray:
        return self.matrix(x)

    def as_field(self) -> CoefficientField:
        """Wrap as a (non-oscillatory) field usable by the finite-difference solvers."""
        ref = self

        class _Homogenized(CoefficientField):
            dimension = ref.dimension
            diagonal = True

            def matrix(self, x):
                return ref.matrix(x)

            def sup_norm_bound(self):
                if ref.form == "constant":
                    return float(np.linalg.norm(ref.value, 2))
                xs = np.linspace(0, 1, 257)
                pts = np.zeros((xs.size, ref.dimension))
                pts[:, 0] = xs
                return float(np.max(ref.entries(pts)))

        return _Homogenized()


def eval_coefficient(field: CoefficientField, x) -> np.ndarray:
    """A^eps at a single point as a d x d matrix."""
    return field.matrix(np.asarray(x, dtype=float).reshape(field.dimension))


def homogenized_reference(field: CoefficientField) -> HomogenizedReference:
    return field.homogenized()


def sup_operator_norm(field: CoefficientField) -> float:
    return field.sup_norm_bound()


def example_fields(eps: float = 0.01) -> dict[str, CoefficientField]:
    """The coefficient families used by the numerical examples."""
    a1 = Periodic1D(epsilon=eps)
    return {
        "example1": a1,
        "example2": LocallyPeriodic1D(epsilon=eps, slow_kind="cos"),
        "example3": MultiFrequency1D.five_scale_example(),
        "example4": DiagonalND(a1, 2),
        "example5": DiagonalND(LocallyPeriodic1D(epsilon=eps, slow_kind="sin"), 2),
        "example6": DiagonalND(a1, 3),
        "kernel_fast": a1,
        "kernel_slow": LocallyPeriodic1D(epsilon=eps, slow_kind="sin"),
    }


def smallest_eigenvalues(field: CoefficientField, points: Sequence) -> np.ndarray:
    return np.linalg.eigvalsh(field.matrix(np.asarray(points, dtype=float)))[..., 0]

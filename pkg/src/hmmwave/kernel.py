"""Averaging kernels with vanishing moments, supported on [-1, 1].

A kernel in K^{p,q} integrates to one, has moments 1..p equal to zero and is
q times continuously differentiable on the real line.  Two families are
provided: even polynomials times ``(1 - x^2)^(q+1)`` and the exponential bump
``C0 exp(5 / (x^2 - 1))`` (p = 1, q = infinity).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

REFERENCE_INTERVALS = 10_000
MAX_CONDITION = 1e12


class KernelError(ValueError):
    pass


def trapezoid_nodes(n: int = REFERENCE_INTERVALS) -> tuple[np.ndarray, np.ndarray]:
    t = np.linspace(-1.0, 1.0, n + 1)
    w = np.full(n + 1, 2.0 / n)
    w[0] = w[-1] = 1.0 / n
    return t, w


@dataclass(frozen=True)
class Kernel:
    """Even averaging kernel.

    ``form`` is ``"poly"`` (``coeffs`` are the coefficients of x^0, x^2, ...)
    or ``"exp"`` (``coeffs`` holds the normalisation C0).  ``q`` is ``None``
    for infinite smoothness.
    """

    form: str
    p: int
    q: int | None
    coeffs: tuple[float, ...]

    @property
    def name(self) -> str:
        return "exp" if self.form == "exp" else f"poly({self.p},{self.q})"

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        inside = np.abs(x) < 1.0
        out = np.zeros_like(x)
        xi = x[inside]
        if self.form == "exp":
            out[inside] = self.coeffs[0] * np.exp(5.0 / (xi * xi - 1.0))
        else:
            x2 = xi * xi
            poly = np.polynomial.polynomial.polyval(x2, self.coeffs)
            out[inside] = poly * (1.0 - x2) ** (self.q + 1)
        return out

    def scaled(self, eta: float, x) -> np.ndarray:
        return eval_scaled(self, eta, x)


def build_polynomial_kernel(p: int, q: int) -> Kernel:
    """Minimal-degree even kernel in K^{p,q}.

    Odd moments vanish by parity, so only the even moments 0, 2, ..., <= p
    are imposed.  The moment matrix is assembled from Beta integrals
    int x^(2m) (1 - x^2)^(q+1) dx = B(m + 1/2, q + 2).
    """
    if p < 1 or q < 0:
        raise KernelError(f"need p >= 1 and q >= 0, got p={p}, q={q}")
    n = p // 2 + 1
    gram = np.array(
        [[special.beta(i + j + 0.5, q + 2) for j in range(n)] for i in range(n)]
    )
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise KernelError(f"moment system for poly({p},{q}) is singular (cond={cond:.3g})")
    rhs = np.zeros(n)
    rhs[0] = 1.0
    coeffs = np.linalg.solve(gram, rhs)
    return Kernel("poly", p, q, tuple(float(c) for c in coeffs))


def _exp_profile(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1.0
    out[inside] = np.exp(5.0 / (x[inside] ** 2 - 1.0))
    return out


def build_exponential_kernel() -> Kernel:
    mass, _ = integrate.quad(lambda s: float(_exp_profile(s)), -1.0, 1.0, epsabs=1e-15, epsrel=1e-14, limit=200)
    return Kernel("exp", 1, None, (1.0 / mass,))


def eval_scaled(kernel: Kernel, eta: float, x) -> np.ndarray:
    """K_eta(x) = K(x / eta) / eta."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    return kernel(np.asarray(x, dtype=float) / eta) / eta


def tensor_weight(kernel: Kernel, eta: float, x) -> np.ndarray:
    """Product kernel K_eta(x_1) ... K_eta(x_d) for points of shape (..., d)."""
    x = np.asarray(x, dtype=float)
    return np.prod(eval_scaled(kernel, eta, x), axis=-1)


def moment(kernel: Kernel, r: int, n: int = REFERENCE_INTERVALS) -> float:
    """Trapezoid approximation of int K(t) t^r dt."""
    if r < 0:
        raise ValueError("moment order must be non-negative")
    t, w = trapezoid_nodes(n)
    return float(np.sum(w * kernel(t) * t**r))


def scaled_moment(kernel: Kernel, eta: float, r: int, n: int = REFERENCE_INTERVALS) -> float:
    x = np.linspace(-eta, eta, n + 1)
    w = np.full(n + 1, 2.0 * eta / n)
    w[0] = w[-1] = eta / n
    return float(np.sum(w * eval_scaled(kernel, eta, x) * x**r))


_POLY = re.compile(r"^\s*poly\s*\(\s*(\d+)\s*,\s*(\d+)\s*\)\s*$")


def parse_kernel(spec: str | Kernel) -> Kernel:
    """Build a kernel from its config name, ``poly(p,q)`` or ``exp``."""
    if isinstance(spec, Kernel):
        return spec
    text = str(spec).strip().lower()
    if text == "exp":
        return build_exponential_kernel()
    m = _POLY.match(text)
    if not m:
        raise KernelError(f"unknown kernel {spec!r}; expected 'poly(p,q)' or 'exp'")
    return build_polynomial_kernel(int(m.group(1)), int(m.group(2)))


def optimal_eta(eps: float, p: int, q: int, scale: float = 1.0) -> float:
    """eta ~ eps^(q/(p+q)), the balance point of the eta^p and (eps/eta)^q error terms."""
    return scale * eps ** (q / (p + q))


def longtime_eta(eps: float, q: int) -> float:
    """eta ~ eps^(1 - 2/q), so that (eps/eta)^q matches eps^2."""
    return eps ** (1.0 - 2.0 / q)


def verify_kernel(kernel: Kernel, n: int = REFERENCE_INTERVALS) -> dict:
    """Moment table and pass/fail for the K^{p,q} moment conditions."""
    moments = [moment(kernel, r, n) for r in range(kernel.p + 2)]
    ok = abs(moments[0] - 1.0) <= 1e-10 and all(abs(m) <= 1e-10 for m in moments[1 : kernel.p + 1])
    return {"kernel": kernel.name, "moments": moments, "ok": ok}


def is_finite_smoothness(kernel: Kernel) -> bool:
    return kernel.q is not None and math.isfinite(kernel.q)

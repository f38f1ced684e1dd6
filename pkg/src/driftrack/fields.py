"""One-variable scalar fields on a closed interval, plus quadrature and root finding."""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from . import expr as ex
from .errors import BracketError, NonConvergenceError, OutOfDomainError

_DOMAIN_SLACK = 1e-12


class MonotoneCubic:
    """Shape-preserving piecewise cubic Hermite interpolant (Fritsch-Carlson slopes)."""

    def __init__(self, knots: Sequence[float], values: Sequence[float]):
        x = np.asarray(knots, dtype=float)
        y = np.asarray(values, dtype=float)
        if x.ndim != 1 or x.shape != y.shape:
            raise ValueError("knots and values must be 1-D arrays of equal length")
        if len(x) < 4:
            raise ValueError("a sample table needs at least 4 knots")
        if not np.all(np.diff(x) > 0):
            raise ValueError("knots must be strictly increasing")
        if not np.all(np.isfinite(y)):
            raise ValueError("table values must be finite")
        self.x = x
        self.y = y
        self.d = self._slopes(x, y)

    @staticmethod
    def _slopes(x: np.ndarray, y: np.ndarray) -> np.ndarray:
        h = np.diff(x)
        delta = np.diff(y) / h
        d = np.zeros_like(y)
        for k in range(1, len(x) - 1):
            if delta[k - 1] * delta[k] <= 0.0:
                d[k] = 0.0
            else:
                w1 = 2.0 * h[k] + h[k - 1]
                w2 = h[k] + 2.0 * h[k - 1]
                d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k])
        d[0] = _end_slope(h[0], h[1], delta[0], delta[1])
        d[-1] = _end_slope(h[-1], h[-2], delta[-1], delta[-2])
        return d

    def __call__(self, z: float) -> float:
        x, y, d = self.x, self.y, self.d
        k = int(np.searchsorted(x, z, side="right")) - 1
        k = min(max(k, 0), len(x) - 2)
        h = x[k + 1] - x[k]
        t = (z - x[k]) / h
        h00 = (1 + 2 * t) * (1 - t) ** 2
        h10 = t * (1 - t) ** 2
        h01 = t * t * (3 - 2 * t)
        h11 = t * t * (t - 1)
        return float(h00 * y[k] + h10 * h * d[k] + h01 * y[k + 1] + h11 * h * d[k + 1])


def _end_slope(h0: float, h1: float, m0: float, m1: float) -> float:
    d = ((2 * h0 + h1) * m0 - h0 * m1) / (h0 + h1)
    if np.sign(d) != np.sign(m0):
        return 0.0
    if np.sign(m0) != np.sign(m1) and abs(d) > abs(3 * m0):
        return 3 * m0
    return d


class ScalarField:
    """A real function of ``z`` on ``[lo, hi]``.

    Backed either by an expression tree or by a monotone cubic sample table.
    Instances are immutable and safe to share.
    """

    __slots__ = ("lo", "hi", "node", "table", "_fn", "_dfn")

    def __init__(self, lo: float, hi: float, node: ex.Node | None = None,
                 table: MonotoneCubic | None = None):
        lo, hi = float(lo), float(hi)
        if not lo < hi:
            raise ValueError(f"empty domain [{lo}, {hi}]")
        if (node is None) == (table is None):
            raise ValueError("exactly one of node or table is required")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "node", node)
        object.__setattr__(self, "table", table)
        if node is not None:
            bad = ex.free_variables(node) - {"z"}
            if bad:
                raise ValueError(f"field expressions may only use z, found {sorted(bad)}")
            object.__setattr__(self, "_fn", ex.compile_node(node, ("z",)))
            object.__setattr__(self, "_dfn", None)
        else:
            object.__setattr__(self, "_fn", table)
            object.__setattr__(self, "_dfn", None)

    def __setattr__(self, name, value):
        raise AttributeError("ScalarField is immutable")

    @classmethod
    def from_expression(cls, text: str, domain: tuple[float, float]) -> "ScalarField":
        return cls(domain[0], domain[1], node=ex.parse(text, ("z",)))

    @classmethod
    def from_table(cls, knots: Sequence[float], values: Sequence[float]) -> "ScalarField":
        table = MonotoneCubic(knots, values)
        return cls(table.x[0], table.x[-1], table=table)

    @classmethod
    def constant(cls, value: float, domain: tuple[float, float]) -> "ScalarField":
        return cls(domain[0], domain[1], node=ex.Num(float(value)))

    @property
    def is_table(self) -> bool:
        return self.table is not None

    def _check(self, z: float) -> float:
        slack = _DOMAIN_SLACK * (self.hi - self.lo)
        if not (self.lo - slack <= z <= self.hi + slack):
            raise OutOfDomainError(f"z={z!r} outside [{self.lo}, {self.hi}]")
        return min(max(z, self.lo), self.hi)

    def __call__(self, z: float) -> float:
        return self._fn(self._check(float(z)))

    def extended(self, z: float) -> float:
        """Evaluate without the domain check.

        Expressions are evaluated as written; tables are held constant beyond
        their end knots.
        """
        z = float(z)
        if self.table is not None:
            z = min(max(z, self.lo), self.hi)
        return self._fn(z)

    def sample(self, zs: Sequence[float]) -> np.ndarray:
        """Vector of :meth:`extended` values."""
        fn = self.extended
        return np.array([fn(z) for z in np.asarray(zs, dtype=float)], dtype=float)

    def derivative(self, z: float) -> float:
        z = float(z)
        self._check(z)
        if self.node is not None:
            if self._dfn is None:
                object.__setattr__(self, "_dfn", ex.compile_node(ex.diff(self.node, "z"), ("z",)))
            return self._dfn(z)
        h = 1e-6 * max(1.0, abs(z))
        a, b = max(z - h, self.lo), min(z + h, self.hi)
        return (self.table(b) - self.table(a)) / (b - a)

    def to_text(self) -> str:
        if self.node is None:
            raise TypeError("sample tables have no expression text")
        return ex.to_text(self.node)

    def restrict(self, lo: float, hi: float) -> "ScalarField":
        if self.node is not None:
            return ScalarField(lo, hi, node=self.node)
        return ScalarField(lo, hi, table=self.table)


def parse_expression(text: str, domain: tuple[float, float]) -> ScalarField:
    """Parse ``text`` (a function of ``z``) into a field on ``domain``."""
    return ScalarField.from_expression(text, domain)


def evaluate(f: ScalarField, z: float) -> float:
    return f(z)


def derivative(f: ScalarField, z: float) -> float:
    return f.derivative(z)


def integrate(g: Callable[[float], float], a: float, b: float, tol: float = 1e-10,
              max_depth: int = 50) -> float:
    """Adaptive Simpson quadrature of ``g`` over ``[a, b]``.

    Raises:
        NonConvergenceError: if an interval needs more than ``max_depth``
            halvings, which usually means the integrand is singular.
    """
    if b < a:
        raise ValueError("integration bounds must satisfy a <= b")
    if a == b:
        return 0.0

    def val(x: float) -> float:
        y = g(x)
        if not math.isfinite(y):
            raise NonConvergenceError(f"integrand not finite at {x!r}")
        return y

    fa, fb = val(a), val(b)
    m = 0.5 * (a + b)
    fm = val(m)
    whole = (b - a) * (fa + 4 * fm + fb) / 6.0
    total = 0.0
    # explicit stack of (a, b, fa, fm, fb, whole, tol, depth)
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    while stack:
        a0, b0, fa0, fm0, fb0, s0, t0, depth = stack.pop()
        m0 = 0.5 * (a0 + b0)
        lm, rm = 0.5 * (a0 + m0), 0.5 * (m0 + b0)
        flm, frm = val(lm), val(rm)
        left = (m0 - a0) * (fa0 + 4 * flm + fm0) / 6.0
        right = (b0 - m0) * (fm0 + 4 * frm + fb0) / 6.0
        err = left + right - s0
        if abs(err) <= 15.0 * t0 and depth >= 2:
            total += left + right + err / 15.0
        elif depth >= max_depth:
            raise NonConvergenceError(
                f"adaptive Simpson did not converge near [{a0!r}, {b0!r}]")
        else:
            stack.append((m0, b0, fm0, frm, fb0, right, 0.5 * t0, depth + 1))
            stack.append((a0, m0, fa0, flm, fm0, left, 0.5 * t0, depth + 1))
    return total


def integrate_pieces(g: Callable[[float], float], intervals: Sequence[tuple[float, float]],
                     tol: float = 1e-10) -> float:
    """Sum of :func:`integrate` over disjoint intervals."""
    return sum(integrate(g, a, b, tol) for a, b in intervals if b > a)


def bisect_monotone(fn: Callable[[float], float], a: float, b: float,
                    tol: float = 1e-12, max_iter: int = 200) -> float:
    """Deterministic midpoint bisection for a sign change of ``fn`` on ``[a, b]``.

    Raises:
        BracketError: if ``fn(a)`` and ``fn(b)`` share a strict sign.
    """
    fa, fb = fn(a), fn(b)
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    if (fa > 0) == (fb > 0):
        raise BracketError(f"fn has the same sign at {a!r} and {b!r}")
    for _ in range(max_iter):
        if b - a <= tol:
            break
        m = 0.5 * (a + b)
        if m <= a or m >= b:
            break
        fm = fn(m)
        if fm == 0.0:
            return m
        if (fm > 0) == (fa > 0):
            a, fa = m, fm
        else:
            b, fb = m, fm
    return 0.5 * (a + b)


_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_min(fn: Callable[[float], float], a: float, b: float,
                       tol: float = 1e-10) -> tuple[float, float]:
    """Minimise a unimodal ``fn`` on ``[a, b]``; returns ``(argmin, min)``."""
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = fn(c), fn(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = fn(d)
    x = 0.5 * (a + b)
    candidates = [(fn(x), x), (fc, c), (fd, d)]
    fx, x = min(candidates)
    return x, fx


def grid_minimum(fn: Callable[[float], float], lo: float, hi: float,
                 n: int = 4096, tol: float = 1e-10) -> tuple[float, float]:
    """Global minimum by grid scan refined with golden section around the best node."""
    zs = np.linspace(lo, hi, n)
    vals = np.array([fn(z) for z in zs])
    k = int(np.argmin(vals))
    a, b = zs[max(k - 1, 0)], zs[min(k + 1, n - 1)]
    x, fx = golden_section_min(fn, a, b, tol)
    if vals[k] < fx:
        return float(zs[k]), float(vals[k])
    return float(x), float(fx)

"""Frame-level geometry on R^3 for curves along the z-axis.

Vector fields and one-forms are triples of expression trees in ``x, y, z``.
Brackets and exterior derivatives are built symbolically and compiled once.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import expr as ex
from .errors import (ExpressionSyntaxError, NonTransverseError, NotMartinetError, SchemaError,
                     UnknownIdentifierError)
from .fields import ScalarField, grid_minimum, integrate

VARS = ("x", "y", "z")
MARTINET_TOL = 1e-6
FLOW_STEP = 1e-3


class _Compiled:
    """Lazily compiled triple of expressions."""

    def __init__(self, comps: Sequence[ex.Node]):
        if len(comps) != 3:
            raise ValueError("expected three components")
        self.comps = tuple(comps)
        self._fns = None

    def _compiled(self):
        if self._fns is None:
            self._fns = tuple(ex.compile_node(c, VARS) for c in self.comps)
        return self._fns

    def at(self, p: Sequence[float]) -> np.ndarray:
        x, y, z = (float(v) for v in p)
        return np.array([f(x, y, z) for f in self._compiled()])


class VectorField3(_Compiled):
    @classmethod
    def parse(cls, texts: Sequence[str]) -> "VectorField3":
        return cls([ex.parse(t, VARS) for t in texts])

    def __add__(self, other: "VectorField3") -> "VectorField3":
        return VectorField3([ex.add(a, b) for a, b in zip(self.comps, other.comps)])

    def scale(self, s: ex.Node) -> "VectorField3":
        return VectorField3([ex.mul(s, c) for c in self.comps])

    def apply(self, f: ex.Node) -> ex.Node:
        """Directional derivative X(f) as a tree."""
        out: ex.Node = ex.ZERO
        for c, v in zip(self.comps, VARS):
            out = ex.add(out, ex.mul(c, ex.diff(f, v)))
        return out


class OneForm3(_Compiled):
    @classmethod
    def parse(cls, texts: Sequence[str]) -> "OneForm3":
        return cls([ex.parse(t, VARS) for t in texts])

    def scale(self, s: ex.Node) -> "OneForm3":
        return OneForm3([ex.mul(s, c) for c in self.comps])

    def pair(self, X: VectorField3) -> ex.Node:
        """The function omega(X) as a tree."""
        out: ex.Node = ex.ZERO
        for w, c in zip(self.comps, X.comps):
            out = ex.add(out, ex.mul(w, c))
        return out


def bracket_field(X: VectorField3, Y: VectorField3) -> VectorField3:
    """[X, Y] = (DY) X - (DX) Y, built symbolically."""
    return VectorField3([ex.sub(X.apply(yc), Y.apply(xc)) for xc, yc in zip(X.comps, Y.comps)])


def lie_bracket(X: VectorField3, Y: VectorField3, p: Sequence[float]) -> np.ndarray:
    return bracket_field(X, Y).at(p)


def d_omega_node(omega: OneForm3, X: VectorField3, Y: VectorField3) -> ex.Node:
    """d omega(X, Y) = X(omega(Y)) - Y(omega(X)) - omega([X, Y]) as a tree."""
    return ex.sub(ex.sub(X.apply(omega.pair(Y)), Y.apply(omega.pair(X))),
                  omega.pair(bracket_field(X, Y)))


def _eval_node(node: ex.Node, p: Sequence[float]) -> float:
    return ex.compile_node(node, VARS)(*(float(v) for v in p))


def d_omega(omega: OneForm3, X: VectorField3, Y: VectorField3, p: Sequence[float]) -> float:
    return _eval_node(d_omega_node(omega, X, Y), p)


@dataclass
class Box:
    x: tuple[float, float]
    y: tuple[float, float]
    z: tuple[float, float]

    def contains(self, p: Sequence[float]) -> bool:
        return all(lo <= v <= hi for v, (lo, hi) in zip(p, (self.x, self.y, self.z)))


@dataclass
class FramedProblem:
    """Drift, orthonormal horizontal frame and one-form in normal coordinates.

    The curve is the z-axis segment from ``s0`` to ``s1``. Orthonormality of
    ``X1, X2`` is the caller's contract and is not checked.
    """

    X0: VectorField3
    X1: VectorField3
    X2: VectorField3
    omega: OneForm3
    s0: float
    s1: float
    box: Box
    W: VectorField3 | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.s0 < self.s1:
            raise SchemaError("curve requires s0 < s1")
        for s in np.linspace(self.s0, self.s1, 9):
            p = (0.0, 0.0, float(s))
            for X in (self.X1, self.X2):
                if abs(_eval_node(self.omega.pair(X), p)) > 1e-9:
                    raise SchemaError(f"omega does not annihilate the frame at s={s}")

    def extension(self) -> VectorField3:
        """The vector field W with omega(W) = 1 (default d/dz / omega(d/dz))."""
        if self.W is not None:
            return self.W
        inv = ex.div(ex.ONE, self.omega.comps[2])
        return VectorField3([ex.ZERO, ex.ZERO, inv])

    def with_omega(self, omega: OneForm3) -> "FramedProblem":
        return FramedProblem(self.X0, self.X1, self.X2, omega, self.s0, self.s1, self.box, None)

    def with_extension(self, W: VectorField3) -> "FramedProblem":
        return FramedProblem(self.X0, self.X1, self.X2, self.omega, self.s0, self.s1, self.box, W)

    def _node(self, key: str, build):
        if key not in self._cache:
            node = build()
            self._cache[key] = (node, ex.compile_node(node, VARS))
        return self._cache[key]


@dataclass
class DriftProfile:
    a0: ScalarField
    b: ScalarField


def load_frame(source: str | dict) -> FramedProblem:
    """Build a framed problem from a JSON text, a path or an already decoded dict."""
    if isinstance(source, dict):
        data = source
    else:
        try:
            data = json.loads(source)
        except json.JSONDecodeError:
            with open(source, encoding="utf-8") as fh:
                data = json.load(fh)
    try:
        vecs = {k: VectorField3.parse(data[k]) for k in ("X0", "X1", "X2")}
        omega = OneForm3.parse(data["omega"])
        curve = data["curve"]
        box = data["box"]
        return FramedProblem(vecs["X0"], vecs["X1"], vecs["X2"], omega,
                             float(curve["s0"]), float(curve["s1"]),
                             Box(tuple(box["x"]), tuple(box["y"]), tuple(box["z"])))
    except (KeyError, TypeError, ValueError, ExpressionSyntaxError, UnknownIdentifierError) as exc:
        raise SchemaError(f"invalid frame description: {exc}") from exc


def normal_form_frame(gamma: str, beta: str = "0", drift: Sequence[str] = ("0", "0", "1"),
                      s0: float = -1.0, s1: float = 1.0) -> FramedProblem:
    """Orthonormal frame in normal coordinates

    X1 = (1 + y^2 b) dx - x y b dy + (y/2) g dz,
    X2 = -x y b dx + (1 + x^2 b) dy - (x/2) g dz,

    paired with its annihilating form
    omega = dz + g / (2 (1 + (x^2 + y^2) b)) (-y dx + x dy).
    """
    g = f"({gamma})"
    b = f"({beta})"
    k = f"({g}/(2*(1+(x^2+y^2)*{b})))"
    X1 = VectorField3.parse([f"1+y^2*{b}", f"-x*y*{b}", f"y/2*{g}"])
    X2 = VectorField3.parse([f"-x*y*{b}", f"1+x^2*{b}", f"-x/2*{g}"])
    X0 = VectorField3.parse(list(drift))
    omega = OneForm3.parse([f"-y*{k}", f"x*{k}", "1"])
    return FramedProblem(X0, X1, X2, omega, s0, s1, Box((-1, 1), (-1, 1), (s0, s1)))


def frame_to_dict(fp: FramedProblem) -> dict:
    """JSON-ready description of a framed problem."""
    def texts(obj):
        return [ex.to_text(c) for c in obj.comps]
    return {
        "X0": texts(fp.X0), "X1": texts(fp.X1), "X2": texts(fp.X2),
        "omega": texts(fp.omega),
        "curve": {"s0": fp.s0, "s1": fp.s1},
        "box": {"x": list(fp.box.x), "y": list(fp.box.y), "z": list(fp.box.z)},
    }


def skew_operator(fp: FramedProblem, s: float) -> np.ndarray:
    """A with A[i, j] = d omega(X_j, X_i) at (0, 0, s)."""
    if not fp.s0 - 1e-12 <= s <= fp.s1 + 1e-12:
        raise ValueError(f"s={s} outside the curve parameter range")
    frame = (fp.X1, fp.X2)
    p = (0.0, 0.0, float(s))
    A = np.zeros((2, 2))
    for i in range(2):
        for j in range(2):
            if i == j:
                continue
            _, fn = fp._node(f"dw{j}{i}", lambda j=j, i=i: d_omega_node(fp.omega, frame[j], frame[i]))
            A[i, j] = fn(*p)
    return A


def alpha_at(fp: FramedProblem, s: float) -> float:
    return abs(skew_operator(fp, s)[0, 1])


def _frame_coordinates(fp: FramedProblem, v: np.ndarray, p: Sequence[float]) -> np.ndarray:
    M = np.column_stack([fp.X1.at(p), fp.X2.at(p)])
    coef, *_ = np.linalg.lstsq(M, v, rcond=None)
    return coef


def drift_profile(fp: FramedProblem, n_knots: int = 257) -> DriftProfile:
    """a0 = omega(X0) on the curve and b = |horizontal part of X0|."""
    zero = {"x": ex.ZERO, "y": ex.ZERO}
    a0_node = ex.substitute(fp.omega.pair(fp.X0), zero)
    a0 = ScalarField(fp.s0, fp.s1, node=a0_node)
    W = fp.extension()
    knots = np.linspace(fp.s0, fp.s1, n_knots)
    b_vals = []
    for s in knots:
        p = (0.0, 0.0, float(s))
        wz = fp.omega.at(p) @ np.array([0.0, 0.0, 1.0])
        if abs(wz) < 1e-12:
            raise NonTransverseError(f"omega vanishes on the curve tangent at s={s}")
        horiz = fp.X0.at(p) - a0(float(s)) * W.at(p)
        b_vals.append(float(np.linalg.norm(_frame_coordinates(fp, horiz, p))))
    b_vals = np.array(b_vals)
    if np.ptp(b_vals) <= 1e-14 * max(1.0, abs(b_vals[0])):
        b = ScalarField.constant(float(b_vals[0]), (fp.s0, fp.s1))
    else:
        b = ScalarField.from_table(knots, b_vals)
    return DriftProfile(a0, b)


def time_T_Gamma(a0: ScalarField, z_f: float, tol: float = 1e-10) -> float:
    """Time for the pure drift to traverse [0, z_f]; +inf if it stalls."""
    if z_f <= 0:
        raise ValueError("z_f must be positive")
    _, amin = grid_minimum(a0.extended, 0.0, z_f)
    if amin <= 0.0:
        return math.inf
    return integrate(lambda z: 1.0 / a0.extended(z), 0.0, z_f, tol)


def _martinet_guard(fp: FramedProblem, q: Sequence[float]) -> None:
    _, fn = fp._node("dw12", lambda: d_omega_node(fp.omega, fp.X1, fp.X2))
    val = fn(*(float(v) for v in q))
    if abs(val) > MARTINET_TOL:
        raise NotMartinetError(f"|d omega(X1, X2)| = {abs(val):.3e} at {tuple(q)}")


def kappa_bracket(fp: FramedProblem, q: Sequence[float]) -> float:
    """|omega([W, Z]) - d omega(W, Z)| at q, with Z = [X1, X2]."""
    _martinet_guard(fp, q)
    W = fp.extension()
    Z = bracket_field(fp.X1, fp.X2)
    node = ex.sub(fp.omega.pair(bracket_field(W, Z)), d_omega_node(fp.omega, W, Z))
    return abs(_eval_node(node, q))


def _rk4_flow(W: VectorField3, q: np.ndarray, t: float, steps: int) -> np.ndarray:
    h = t / steps
    p = q.copy()
    for _ in range(steps):
        k1 = W.at(p)
        k2 = W.at(p + 0.5 * h * k1)
        k3 = W.at(p + 0.5 * h * k2)
        k4 = W.at(p + h * k3)
        p = p + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return p


def kappa_flow(fp: FramedProblem, q: Sequence[float], h: float = FLOW_STEP) -> float:
    """|d/dt omega([X1, X2])(e^{tW} q)| at t = 0 by a five-point stencil."""
    _martinet_guard(fp, q)
    W = fp.extension()
    phi = ex.compile_node(fp.omega.pair(bracket_field(fp.X1, fp.X2)), VARS)
    q0 = np.asarray(q, dtype=float)
    vals = {}
    for k in (-2, -1, 1, 2):
        p = _rk4_flow(W, q0, k * h, abs(k))
        vals[k] = phi(*p)
    return float(abs((vals[-2] - 8 * vals[-1] + 8 * vals[1] - vals[2]) / (12 * h)))

"""The one-dimensional reduced problem and its asymptotic constants.

The stored dynamic is ``z' = a0(z) - alpha(z) v``. The threshold machinery
(``shoot``, ``solve_H``, ``H_infinity``) works with the opposite sign,
``z' = a0(z) + alpha(z) v`` with ``v >= 0``, and the feedback

    v = c   where H > a0/alpha,
    v = 0   where H <= a0/alpha.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import ode
from .errors import (BlowUpError, ControlTooSmallError, DegeneracyError, MissingFieldError,
                     NonConvergenceError, NonPositiveDriftError, SchemaError)
from .fields import ScalarField, grid_minimum, integrate, integrate_pieces
from .geometry import time_T_Gamma

SCAN_POINTS = 4096
EDGE_TOL = 1e-10
LADDER_BASE = 1e3
LADDER_FACTOR = 4.0
LADDER_MAX_K = 12
LADDER_TOL = 1e-6
METHOD_AGREEMENT = 1e-4
DUAL_TOL = 1e-8

DRIFT_FAST = "DriftFast"
DRIFT_EXACT = "DriftExact"
DRIFT_SLOW = "DriftSlow"
ORDER_EPS2 = "eps^-2"
ORDER_EPS1 = "eps^-1"


@dataclass(frozen=True)
class ReducedProblem:
    a0: ScalarField
    alpha: ScalarField
    z_f: float
    T: float
    b: Optional[ScalarField] = None
    tol_T: Optional[float] = None

    # set by subclasses whose alpha may vanish; the drift work is then not tracked accurately
    singular_alpha = False

    def __post_init__(self):
        if not (math.isfinite(self.z_f) and self.z_f > 0):
            raise ValueError("z_f must be finite and positive")
        if not (math.isfinite(self.T) and self.T > 0):
            raise ValueError("T must be finite and positive")
        zs = np.linspace(0.0, self.z_f, 257)
        if np.min(self.alpha.sample(zs)) <= 0.0:
            raise ValueError("alpha must be positive on [0, z_f]")

    @property
    def time_tolerance(self) -> float:
        return self.tol_T if self.tol_T is not None else 1e-6 * max(self.T, 1.0)

    def ratio(self, z: float) -> float:
        return self.a0.extended(z) / self.alpha.extended(z)

    def inv_alpha(self, z: float) -> float:
        return 1.0 / self.alpha.extended(z)


@dataclass
class SwitchedTrajectory:
    t: np.ndarray
    z: np.ndarray
    v: np.ndarray
    switch_times: list
    cost: float
    drift_work: float  # integral of a0/alpha along the path

    @property
    def terminal(self) -> float:
        return float(self.z[-1])


@dataclass
class RegimeReport:
    T_Gamma: float
    regime: str
    order: str
    constant: float
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"T_Gamma": self.T_Gamma, "regime": self.regime, "order": self.order,
                "constant": self.constant, "diagnostics": self.diagnostics}


# ---------------------------------------------------------------- loading


def _field_from_json(raw, domain: tuple[float, float], name: str) -> ScalarField:
    if isinstance(raw, str):
        return ScalarField.from_expression(raw, domain)
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        return ScalarField.constant(float(raw), domain)
    if isinstance(raw, dict) and "knots" in raw and "values" in raw:
        return ScalarField.from_table(raw["knots"], raw["values"])
    raise SchemaError(f"field {name!r} must be an expression or a knots/values table")


def problem_from_dict(data: dict) -> ReducedProblem:
    from .errors import DriftrackError

    if not isinstance(data, dict):
        raise SchemaError("problem description must be a JSON object")
    for key in ("a0", "alpha", "z_f", "T"):
        if key not in data:
            raise SchemaError(f"missing required key {key!r}")
    try:
        z_f = float(data["z_f"])
        T = float(data["T"])
        dom = (0.0, z_f)
        a0 = _field_from_json(data["a0"], dom, "a0")
        alpha = _field_from_json(data["alpha"], dom, "alpha")
        b = _field_from_json(data["b"], dom, "b") if data.get("b") is not None else None
        tol_T = float(data["tol_T"]) if data.get("tol_T") is not None else None
        return ReducedProblem(a0, alpha, z_f, T, b, tol_T)
    except SchemaError:
        raise
    except (DriftrackError, ValueError, TypeError) as exc:
        raise SchemaError(str(exc)) from exc


def load_problem(path: str) -> ReducedProblem:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc}") from exc
    return problem_from_dict(data)


# ---------------------------------------------------------------- feedback and shooting


def feedback_v(z: float, H: float, c: float, p: ReducedProblem) -> float:
    """Threshold feedback in the stored sign convention (0 on ties)."""
    return -c if H > p.ratio(z) else 0.0


def _shoot(p: ReducedProblem, H: float, c: float, cap: bool) -> SwitchedTrajectory:
    if c <= 0:
        raise ValueError("c must be positive")
    lo_guard, hi_guard = -p.z_f, 2.0 * p.z_f
    a0, alpha = p.a0.extended, p.alpha.extended

    def gap(t, y):
        return H - p.ratio(y[0])

    def rhs_for(v: float):
        def rhs(t, y):
            z = y[0]
            al = alpha(z)
            a = a0(z)
            return np.array([a + al * v, p.ratio(z)])
        return rhs

    def out_of_tube(t, y):
        return not (lo_guard <= y[0] <= hi_guard)

    atol = np.array([1e-13, np.inf if p.singular_alpha else 1e-13])
    t, y = 0.0, np.array([0.0, 0.0])
    g0 = gap(t, y)
    if g0 == 0.0 and a0(0.0) != 0.0:
        # tie at the start: the event detector needs a strict sign, so read it just ahead
        g0 = gap(t, np.array([math.copysign(1e-9 * p.z_f, a0(0.0)), 0.0]))
    push = g0 > 0.0
    ts, zs, vs, work = [0.0], [0.0], [], [0.0]
    switches: list[float] = []
    push_time = 0.0
    slide_cost = 0.0
    h0 = None
    while t < p.T:
        v = c if push else 0.0
        # no step may move z by more than z_f / 64; events are localised in z, not just in t
        speed = abs(a0(y[0])) + abs(alpha(y[0])) * v
        seg = ode.integrate(rhs_for(v), t, y, p.T, event=gap, stop=out_of_tube, h0=h0,
                            atol=atol, max_move=p.z_f / 64.0,
                            event_tol=min(1e-12, 1e-12 / max(speed, 1e-300)))
        for tk, yk in zip(seg.ts[1:], seg.ys[1:]):
            ts.append(tk)
            zs.append(yk[0])
            work.append(yk[1])
            vs.append(v)
        if push:
            push_time += seg.ts[-1] - t
        t_prev = t
        t, y = seg.ts[-1], seg.ys[-1]
        if len(seg.ts) > 1:
            h0 = max((seg.ts[-1] - seg.ts[0]) / max(len(seg.ts) - 1, 1), 1e-12)
        if seg.status == "stop":
            if cap:
                break
            raise BlowUpError(f"trajectory left [{lo_guard}, {hi_guard}] at t={t:.6g}")
        if seg.status == "event":
            switches.append(seg.t_event)
            push = not push
            if len(switches) >= 2 and switches[-1] - switches[-2] < 1e-10 and t - t_prev < 1e-10:
                # chattering on a static level set: Filippov sliding at constant z
                z_star = y[0]
                v_eq = -a0(z_star) / alpha(z_star)
                if 0.0 <= v_eq <= c:
                    rest = p.T - t
                    slide_cost += v_eq * rest
                    ts.append(p.T)
                    zs.append(z_star)
                    vs.append(v_eq)
                    work.append(y[1] + rest * a0(z_star) / alpha(z_star))
                    t = p.T
                    y = np.array([z_star, work[-1]])
                    break
    vs.append(vs[-1] if vs else (c if push else 0.0))
    return SwitchedTrajectory(np.array(ts), np.array(zs), np.array(vs), switches,
                              c * push_time + slide_cost, float(work[-1]))


def shoot(p: ReducedProblem, H: float, c: float) -> SwitchedTrajectory:
    """Integrate the switched system for threshold ``H`` and bang level ``c``.

    Raises:
        BlowUpError: if z leaves ``[-z_f, 2 z_f]``.
    """
    return _shoot(p, H, c, cap=False)


def terminal_value(p: ReducedProblem, H: float, c: float) -> float:
    """E_c(H) = z(T), clamped to the guard band [-z_f, 2 z_f] so that it stays monotone."""
    return float(np.clip(_shoot(p, H, c, cap=True).terminal, -p.z_f, 2.0 * p.z_f))


def _ratio_extrema(p: ReducedProblem) -> tuple[float, float]:
    zs = np.linspace(0.0, p.z_f, SCAN_POINTS)
    r = np.array([p.ratio(z) for z in zs])
    return float(r.min()), float(r.max())


def solve_H(p: ReducedProblem, c: float) -> float:
    """Threshold H(c) with E_c(H) = z_f, by bisection on H.

    Stops when ``|E - z_f| <= 1e-9 z_f`` or when the H bracket reaches a few
    ulps (at large c the map H -> E is steep).

    Raises:
        ControlTooSmallError: if even H = max(a0/alpha) + 1 falls short of z_f.
    """
    rmin, rmax = _ratio_extrema(p)
    hi = rmax + 1.0
    if terminal_value(p, hi, c) <= p.z_f:
        raise ControlTooSmallError(f"c={c:g} cannot reach z_f={p.z_f:g} within T={p.T:g}")
    # below the smallest ratio the feedback never pushes, so the bracket can start there
    lo = rmin * (1.0 - 1e-9) if rmin > 0 else 0.0
    if terminal_value(p, lo, c) > p.z_f:
        lo = rmin - 1.0
        if terminal_value(p, lo, c) > p.z_f:
            raise NonConvergenceError("free flow already overshoots z_f; not a slow-drift problem")
    target_tol = 1e-9 * p.z_f
    for _ in range(200):
        # geometric midpoints while the bracket spans orders of magnitude (capped ratios)
        mid = math.sqrt(lo * hi) if lo > 0 and hi > 4.0 * lo else 0.5 * (lo + hi)
        if mid <= lo or mid >= hi or hi - lo <= 4 * np.spacing(max(abs(hi), 1.0)):
            break
        e = terminal_value(p, mid, c)
        if abs(e - p.z_f) <= target_tol:
            return mid
        if e < p.z_f:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------- level sets and H_infinity


def omega_set(p: ReducedProblem, H: float) -> list[tuple[float, float]]:
    """Superlevel set {a0/alpha > H} in [0, z_f] as disjoint intervals."""
    zs = np.linspace(0.0, p.z_f, SCAN_POINTS)
    s = np.array([p.ratio(z) for z in zs]) - H
    above = s > 0
    fn = lambda z: p.ratio(z) - H  # noqa: E731
    intervals = []
    start = 0.0 if above[0] else None
    for i in range(1, len(zs)):
        if above[i] != above[i - 1]:
            edge = _edge(fn, zs[i - 1], zs[i])
            if above[i]:
                start = edge
            else:
                intervals.append((start, edge))
                start = None
    if start is not None:
        intervals.append((start, p.z_f))
    return [(float(a), float(b)) for a, b in intervals if b > a]


def _edge(fn, a: float, b: float) -> float:
    fa = fn(a)
    positive_left = fa > 0
    while b - a > EDGE_TOL:
        m = 0.5 * (a + b)
        if (fn(m) > 0) == positive_left:
            a = m
        else:
            b = m
    return 0.5 * (a + b)


def complement(intervals: list[tuple[float, float]], lo: float, hi: float) -> list[tuple[float, float]]:
    out, cur = [], lo
    for a, b in intervals:
        if a > cur:
            out.append((cur, a))
        cur = max(cur, b)
    if cur < hi:
        out.append((cur, hi))
    return out


def check_nondegenerate(p: ReducedProblem) -> None:
    """Reject ratios that are flat on a set of positive measure."""
    zs = np.linspace(0.0, p.z_f, SCAN_POINTS)
    r = np.array([p.ratio(z) for z in zs])
    step_flat = np.abs(np.diff(r)) <= 1e-12 * np.maximum(1.0, np.abs(r[:-1]))
    # two flat steps in a row; a single one also happens when samples straddle a strict extremum
    flat = step_flat[:-1] & step_flat[1:]
    if np.any(flat):
        k = int(np.argmax(flat))
        raise DegeneracyError(
            f"a0/alpha is flat near z={zs[k]:.6g} (level {r[k]:.6g}); the threshold synthesis is not unique")


def time_free(p: ReducedProblem, H: float) -> float:
    """Time the drift alone spends crossing {a0/alpha > H}."""
    pieces = omega_set(p, H)
    return integrate_pieces(lambda z: 1.0 / p.a0.extended(z), pieces)


def H_free_flow(p: ReducedProblem) -> float:
    rmin, rmax = _ratio_extrema(p)
    lo = rmin - 1e-9 * max(1.0, abs(rmin)) if rmin > 0 else 1e-9 * rmax
    hi = rmax
    if time_free(p, lo) <= p.T:
        raise NonConvergenceError("free-flow time never exceeds T; H_infinity is not bracketed")
    for _ in range(200):
        if hi - lo <= 1e-13 * max(1.0, abs(hi)):
            break
        mid = 0.5 * (lo + hi)
        if time_free(p, mid) > p.T:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def H_ladder(p: ReducedProblem) -> tuple[float, list[tuple[float, float]]]:
    """H(c) along c = 1e3 * 4^k; returns the last value and the (c, H) history."""
    history: list[tuple[float, float]] = []
    for k in range(LADDER_MAX_K + 1):
        c = LADDER_BASE * LADDER_FACTOR ** k
        try:
            h = solve_H(p, c)
        except ControlTooSmallError:
            continue
        history.append((c, h))
        if len(history) >= 2 and abs(history[-1][1] - history[-2][1]) <= LADDER_TOL:
            break
    if not history:
        raise ControlTooSmallError("no rung of the ladder reaches z_f")
    return history[-1][1], history


def H_infinity(p: ReducedProblem, details: bool = False):
    """Limiting threshold, computed by the ladder and by the free-flow time.

    Returns the free-flow value (or a dict with both when ``details``).

    Raises:
        DegeneracyError: flat ratio.
        NonConvergenceError: if the two methods disagree by more than 1e-4.
    """
    check_nondegenerate(p)
    h_free = H_free_flow(p)
    h_ladder, history = H_ladder(p)
    if abs(h_free - h_ladder) > METHOD_AGREEMENT:
        raise NonConvergenceError(
            f"ladder ({h_ladder:.8g}) and free-flow ({h_free:.8g}) thresholds disagree")
    if details:
        return {"free_flow": h_free, "ladder": h_ladder, "history": history}
    return h_free


# ---------------------------------------------------------------- integrals


def integral_inv_alpha(p: ReducedProblem, tol: float = 1e-10) -> float:
    return integrate(p.inv_alpha, 0.0, p.z_f, tol)


def I_star(p: ReducedProblem, H_inf: Optional[float] = None) -> float:
    """Integral of 1/alpha over the coasting set at H_infinity."""
    if H_inf is None:
        H_inf = H_infinity(p)
    return integrate_pieces(p.inv_alpha, omega_set(p, H_inf))


def ratio_minimum(p: ReducedProblem) -> tuple[float, float]:
    """(argmin, min) of a0/alpha over [0, z_f]."""
    return grid_minimum(p.ratio, 0.0, p.z_f, SCAN_POINTS, 1e-10)


def I_substar(p: ReducedProblem) -> float:
    """Integral of 1/alpha plus (T - T_Gamma) min(a0/alpha), for T > T_Gamma."""
    _, amin = grid_minimum(p.a0.extended, 0.0, p.z_f, SCAN_POINTS, 1e-10)
    if amin <= 0.0:
        raise NonPositiveDriftError("the fast-drift branch needs a0 > 0 on [0, z_f]")
    tg = time_T_Gamma(p.a0, p.z_f)
    _, rmin = ratio_minimum(p)
    return integral_inv_alpha(p) + (p.T - tg) * rmin


def regime_of(p: ReducedProblem, T_Gamma: float, tol_T: Optional[float] = None) -> str:
    tol = p.time_tolerance if tol_T is None else tol_T
    if math.isfinite(T_Gamma) and abs(p.T - T_Gamma) <= tol:
        return DRIFT_EXACT
    return DRIFT_FAST if T_Gamma < p.T else DRIFT_SLOW


def classify(p: ReducedProblem, tol_T: Optional[float] = None) -> RegimeReport:
    """Regime, asymptotic order and constant, each cross-checked by a second formula."""
    tg = time_T_Gamma(p.a0, p.z_f)
    regime = regime_of(p, tg, tol_T)
    diag: dict = {}
    if regime == DRIFT_FAST:
        zmin, rmin = ratio_minimum(p)
        constant = 2.0 * (p.T - tg) * rmin
        dual = 2.0 * (I_substar(p) - integral_inv_alpha(p))
        diag.update(argmin_z=zmin, min_ratio=rmin, dual_constant=dual)
        order = ORDER_EPS2
    elif regime == DRIFT_EXACT:
        if p.b is None:
            raise MissingFieldError("the exact-time branch needs the horizontal drift b")
        constant = integrate(lambda z: p.b.extended(z) / p.a0.extended(z), 0.0, p.z_f)
        dual = constant
        order = ORDER_EPS1
    else:
        h_inf = H_infinity(p)
        omega = omega_set(p, h_inf)
        constant = 2.0 * integrate_pieces(p.inv_alpha, complement(omega, 0.0, p.z_f))
        dual = 2.0 * (integral_inv_alpha(p) - I_star(p, h_inf))
        diag.update(H_inf=h_inf, Omega=[list(iv) for iv in omega], dual_constant=dual)
        order = ORDER_EPS2
    if abs(constant - dual) > DUAL_TOL:
        raise NonConvergenceError(f"dual formulas disagree: {constant!r} vs {dual!r}")
    return RegimeReport(tg, regime, order, constant, diag)


def predict_MC(report: RegimeReport, eps: float) -> float:
    if eps <= 0:
        raise ValueError("eps must be positive")
    power = 2 if report.order == ORDER_EPS2 else 1
    return report.constant / eps ** power

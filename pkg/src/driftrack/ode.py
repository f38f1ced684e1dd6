"""Adaptive Dormand-Prince 5(4) integration with event localisation by bisection."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

# Dormand-Prince tableau
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40)
_E = tuple(b5 - b4 for b5, b4 in zip(_B5, _B4))

Rhs = Callable[[float, np.ndarray], np.ndarray]


def dp_step(f: Rhs, t: float, y: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    """One Dormand-Prince step; returns the 5th-order solution and the error vector."""
    k = []
    for i in range(7):
        yi = y
        for a, kj in zip(_A[i], k):
            if a != 0.0:
                yi = yi + h * a * kj
        k.append(np.asarray(f(t + _C[i] * h, yi), dtype=float))
    y5 = y + h * sum(b * kj for b, kj in zip(_B5, k) if b != 0.0)
    err = h * sum(e * kj for e, kj in zip(_E, k) if e != 0.0)
    return y5, err


@dataclass
class Segment:
    ts: list
    ys: list
    status: str  # "end", "event" or "stop"
    t_event: Optional[float] = None


def integrate(f: Rhs, t0: float, y0, t1: float, *, rtol: float = 1e-11, atol: float = 1e-13,
              h0: Optional[float] = None, event: Optional[Callable[[float, np.ndarray], float]] = None,
              event_tol: float = 1e-12, stop: Optional[Callable[[float, np.ndarray], bool]] = None,
              max_steps: int = 1_000_000, max_move: float = np.inf) -> Segment:
    """Integrate ``y' = f(t, y)`` from ``t0`` towards ``t1``.

    Integration halts early at the first sign change of ``event`` (localised in
    time to ``event_tol`` by bisection on the step length; the recorded end
    point lies just past the crossing) or when ``stop`` returns True.
    ``atol`` may be an array; an infinite entry leaves that component out of
    the error control. ``max_move`` caps how far the first component may move
    in one step (judged from its rate at the step start), so that events are
    not stepped over where the error estimate happens to vanish.
    """
    y = np.atleast_1d(np.asarray(y0, dtype=float)).copy()
    t = float(t0)
    span = t1 - t0
    ts, ys = [t], [y.copy()]
    if span <= 0:
        return Segment(ts, ys, "end")
    h = h0 if h0 else span / 100.0
    g_prev = event(t, y) if event else None
    for _ in range(max_steps):
        if t >= t1:
            break
        h = min(h, t1 - t)
        if math.isfinite(max_move):
            rate = abs(float(np.asarray(f(t, y))[0]))
            if rate > 0:
                h = min(h, max_move / rate)
        y_new, err = dp_step(f, t, y, h)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        ratio = float(np.max(np.abs(err) / scale)) if err.size else 0.0
        if not np.all(np.isfinite(y_new)):
            ratio = np.inf
        if ratio > 1.0:
            h *= max(0.1, 0.9 * ratio ** -0.2) if np.isfinite(ratio) else 0.1
            if h < 1e-300:
                raise FloatingPointError("step size underflow")
            continue
        t_new = t + h if h < t1 - t else t1
        if event is not None:
            g_new = event(t_new, y_new)
            if g_prev != 0.0 and g_new != 0.0 and (g_new > 0) != (g_prev > 0):
                lo, hi = 0.0, h
                y_hi = y_new
                while hi - lo > event_tol:
                    mid = 0.5 * (lo + hi)
                    if mid <= lo or mid >= hi:
                        break
                    y_mid, _ = dp_step(f, t, y, mid)
                    g_mid = event(t + mid, y_mid)
                    if g_mid != 0.0 and (g_mid > 0) == (g_prev > 0):
                        lo = mid
                    else:
                        hi, y_hi = mid, y_mid
                ts.append(t + hi)
                ys.append(y_hi.copy())
                return Segment(ts, ys, "event", t + hi)
            if g_new != 0.0:
                g_prev = g_new
        t, y = t_new, y_new
        ts.append(t)
        ys.append(y.copy())
        if stop is not None and stop(t, y):
            return Segment(ts, ys, "stop")
        h *= min(5.0, 0.9 * ratio ** -0.2) if ratio > 0 else 5.0
    else:
        raise FloatingPointError("maximum number of steps exceeded")
    return Segment(ts, ys, "end")


def rk4_fixed(f: Rhs, t0: float, y0, t1: float, dt: float) -> np.ndarray:
    """Classical RK4 with a fixed step (the last step is shortened)."""
    y = np.atleast_1d(np.asarray(y0, dtype=float)).copy()
    t = float(t0)
    n = int(np.ceil((t1 - t0) / dt - 1e-9))
    for i in range(n):
        h = min(dt, t1 - t)
        k1 = f(t, y)
        k2 = f(t + h / 2, y + h / 2 * k1)
        k3 = f(t + h / 2, y + h / 2 * k2)
        k4 = f(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return y

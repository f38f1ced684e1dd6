"""Crossing a Martinet point: bang dynamics on the tube boundary, three-arc synthesis, kappa fits.

Near a Martinet point, with the horizontal state held on the circle ``r = eps``
and the vertical control at its bound ``c``, the transverse coordinate obeys

    z' = -a - lam z + A cos(theta(t) + theta_tilde),    theta(t) = theta0 + (c/eps) t,

with ``lam = eps kappa c / 2`` and ``A = eps^2 c alpha1_tilde / 2``. Everything
here is built on the exact solution of that linear equation.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (ArcSignLossError, ConfigurationMismatchError, DegeneracyError,
                     InfeasibleError, SchemaError)
from .fields import ScalarField, golden_section_min, grid_minimum, integrate_pieces
from .geometry import time_T_Gamma
from .reduced import ReducedProblem, H_infinity, omega_set, complement

ARC1_REL_TOL = 1e-3
SAMPLES_PER_PERIOD = 64
MAX_CONTRACTIONS = 60.0  # arc 1 gives up after lam * t exceeds this
PATH_SAMPLES = 2000
RATIO_CAP = 1e12

_MODEL_KEYS = ("a", "kappa", "alpha1_tilde", "theta_tilde", "z_entry", "z_exit")


@dataclass(frozen=True)
class MartinetModel:
    """Local data of a Martinet point where the drift opposes the curve."""

    a: float
    kappa: float
    alpha1_tilde: float
    theta_tilde: float = 0.0
    z_entry: float = -0.25
    z_exit: float = 0.25

    def __post_init__(self):
        vals = [self.a, self.kappa, self.alpha1_tilde, self.theta_tilde, self.z_entry, self.z_exit]
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("model parameters must be finite")
        if self.a <= 0 or self.kappa <= 0:
            raise ValueError("a and kappa must be positive")
        if self.alpha1_tilde == 0:
            raise ValueError("alpha1_tilde must be nonzero")
        if not (self.z_entry < 0 < self.z_exit):
            raise ValueError("need z_entry < 0 < z_exit")

    @classmethod
    def from_dict(cls, data: dict) -> "MartinetModel":
        if not isinstance(data, dict):
            raise SchemaError("a Martinet model must be a JSON object")
        unknown = set(data) - set(_MODEL_KEYS)
        if unknown:
            raise SchemaError(f"unknown model keys: {sorted(unknown)}")
        kwargs = {}
        for key in _MODEL_KEYS:
            if key not in data:
                if key in ("a", "kappa", "alpha1_tilde"):
                    raise SchemaError(f"missing required key {key!r}")
                continue
            v = data[key]
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise SchemaError(f"{key!r} must be a number")
            kwargs[key] = float(v)
        try:
            return cls(**kwargs)
        except ValueError as exc:
            raise SchemaError(str(exc)) from exc

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in _MODEL_KEYS}


def load_model(path: str) -> MartinetModel:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from exc
    return MartinetModel.from_dict(data)


# ------------------------------------------------------------ dynamics


def _rates(m: MartinetModel, c: float, eps: float) -> tuple[float, float, float]:
    """(lam, omega, K): contraction rate, angular speed, cycle coefficient."""
    lam = eps * m.kappa * c / 2.0
    omega = c / eps
    K = m.alpha1_tilde * eps ** 3 / (4.0 + m.kappa ** 2 * eps ** 4)
    return lam, omega, K


def _cycle_shape(m: MartinetModel, phase, eps: float, K: float):
    return K * (m.kappa * eps ** 2 * np.cos(phase) + 2.0 * np.sin(phase))


def rhs(m: MartinetModel, t, z, c: float, eps: float, theta0: float):
    """Right-hand side of the crossing equation (vectorises over arrays)."""
    theta = theta0 + (c / eps) * t
    return (-m.a - 0.5 * eps * c * m.kappa * z
            + 0.5 * eps ** 2 * c * m.alpha1_tilde * np.cos(theta + m.theta_tilde))


def closed_form_z(m: MartinetModel, t, c: float, eps: float, z0: float, theta0: float):
    """Exact solution of the crossing equation from ``z(0) = z0``, ``theta(0) = theta0``."""
    if c <= 0 or eps <= 0:
        raise ValueError("c and eps must be positive")
    lam, omega, K = _rates(m, c, eps)
    t = np.asarray(t, dtype=float)
    decay = np.exp(-lam * t)
    offset = 2.0 * m.a / (eps * m.kappa * c)
    p0 = _cycle_shape(m, theta0 + m.theta_tilde, eps, K)
    pt = _cycle_shape(m, theta0 + omega * t + m.theta_tilde, eps, K)
    z = decay * (z0 - p0) + offset * np.expm1(-lam * t) + pt
    return float(z) if z.ndim == 0 else z


def limit_cycle_z(m: MartinetModel, theta, c: float, eps: float):
    """Periodic attractor of the crossing equation at angle ``theta``."""
    if c <= 0 or eps <= 0:
        raise ValueError("c and eps must be positive")
    _, _, K = _rates(m, c, eps)
    z = -2.0 * m.a / (eps * m.kappa * c) + _cycle_shape(m, np.asarray(theta, dtype=float)
                                                         + m.theta_tilde, eps, K)
    return float(z) if np.ndim(z) == 0 else z


def cycle_apex(m: MartinetModel, c: float, eps: float) -> tuple[float, float]:
    """(max over theta of the limit cycle, the angle theta where it is attained)."""
    _, _, K = _rates(m, c, eps)
    shape = math.atan2(2.0, m.kappa * eps ** 2)
    if K < 0:
        shape += math.pi
    amp = abs(K) * math.hypot(m.kappa * eps ** 2, 2.0)
    return -2.0 * m.a / (eps * m.kappa * c) + amp, shape - m.theta_tilde


def min_feasible_c(m: MartinetModel, eps: float) -> float:
    """Control bound above which the cycle apex is safely positive: 8a / (|alpha1| kappa eps^4)."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    return 8.0 * m.a / (abs(m.alpha1_tilde) * m.kappa) * eps ** -4


def arc1_start(m: MartinetModel, c: float, eps: float) -> float:
    return -0.5 * (2.0 * m.a / (m.kappa * c * eps) + abs(m.alpha1_tilde) * eps / (m.kappa * c))


# ------------------------------------------------------------ synthesis


@dataclass(frozen=True)
class Arc:
    name: str
    t_start: float
    t_end: float
    v1: float
    v2: float
    t: np.ndarray = field(repr=False)
    r: np.ndarray = field(repr=False)
    theta: np.ndarray = field(repr=False)
    z: np.ndarray = field(repr=False)
    cost: float

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    @property
    def z_end(self) -> float:
        return float(self.z[-1])


@dataclass(frozen=True)
class SynthesisTrace:
    eps: float
    c: float
    arcs: tuple

    @property
    def costs(self) -> tuple[float, float, float]:
        return tuple(a.cost for a in self.arcs)

    @property
    def total(self) -> float:
        """L1 norm of the whole control."""
        return float(sum(self.costs))


def _thin(n: int) -> np.ndarray:
    if n <= PATH_SAMPLES:
        return np.arange(n)
    return np.unique(np.linspace(0, n - 1, PATH_SAMPLES).round().astype(int))


def _arc1(m: MartinetModel, eps: float, c: float) -> Arc:
    lam, omega, _ = _rates(m, c, eps)
    apex, theta_apex = cycle_apex(m, c, eps)
    z0 = arc1_start(m, c, eps)
    # Start at the apex angle: the transient then sits below the cycle, so z > 0
    # is reached only if the cycle itself rises above 0.
    theta0 = theta_apex
    period = 2.0 * math.pi / omega
    h = period / SAMPLES_PER_PERIOD
    t_max = MAX_CONTRACTIONS / lam
    chunk = 256 * SAMPLES_PER_PERIOD
    kept_t, kept_z = [], []
    t0 = 0.0
    stop_t = None
    prev = None
    while t0 < t_max and stop_t is None:
        ts = t0 + h * np.arange(chunk + 1)
        zs = closed_form_z(m, ts, c, eps, z0, theta0)
        kept_t.append(ts[:-1])
        kept_z.append(zs[:-1])
        if prev is not None:
            ts = np.concatenate(([prev[0]], ts))
            zs = np.concatenate(([prev[1]], zs))
        reach = np.flatnonzero((zs > 0) & (zs >= apex * (1.0 - ARC1_REL_TOL)))
        peak = np.flatnonzero((zs[1:-1] > 0) & (zs[1:-1] >= zs[:-2]) & (zs[1:-1] >= zs[2:])) + 1
        hits = []
        if reach.size:
            hits.append((ts[reach[0]], "reach", reach[0]))
        if peak.size:
            hits.append((ts[peak[0]], "peak", peak[0]))
        if hits:
            _, kind, k = min(hits)
            if kind == "peak":
                stop_t, _ = golden_section_min(
                    lambda s: -closed_form_z(m, s, c, eps, z0, theta0), ts[k - 1], ts[k + 1],
                    tol=1e-6 * h)
            else:
                stop_t = float(ts[k])
        prev = (ts[-2], zs[-2])
        t0 = ts[-1] - h
    if stop_t is None:
        raise InfeasibleError(
            f"arc 1 never reaches z > 0 (c={c:.6g}, eps={eps:.6g}; cycle apex {apex:.3e})")
    t_all = np.concatenate(kept_t)
    t_all = np.append(t_all[t_all < stop_t], stop_t)
    idx = _thin(len(t_all))
    t_s = t_all[idx]
    z_s = closed_form_z(m, t_s, c, eps, z0, theta0)
    theta_s = theta0 + omega * t_s
    return Arc("arc1", 0.0, stop_t, 0.0, c, t_s, np.full_like(t_s, eps), theta_s,
               np.atleast_1d(z_s), c * stop_t)


def _arc2(m: MartinetModel, eps: float, c: float, start: Arc) -> Arc:
    duration = 2.0 * eps / c
    th = float(start.theta[-1])
    z1 = start.z_end
    s = np.linspace(0.0, 1.0, 33)
    x = eps * math.cos(th) * np.ones_like(s)
    y = eps * math.sin(th) * (1.0 - 2.0 * s)
    t = start.t_end + duration * s
    z = z1 - m.a * duration * s
    if z[-1] <= 0:
        raise ArcSignLossError(
            f"arc 2 descends to z={z[-1]:.3e} <= 0; increase c")
    theta = np.arctan2(y, x)
    theta[-1] = -th
    return Arc("arc2", start.t_end, start.t_end + duration, c, 0.0, t, np.hypot(x, y), theta, z,
               2.0 * eps)


def _arc3_z(m: MartinetModel, t, c: float, eps: float, z0: float, theta0: float):
    """Reverse-rotation bang: z' = -a + lam z - A cos(theta0 - (c/eps) t + theta_tilde)."""
    lam, omega, K = _rates(m, c, eps)
    t = np.asarray(t, dtype=float)
    shift = m.a / lam
    p0 = _cycle_shape(m, theta0 + m.theta_tilde, eps, K)
    pt = _cycle_shape(m, theta0 - omega * t + m.theta_tilde, eps, K)
    return np.exp(lam * t) * (z0 - shift - p0) + shift + pt


def _arc3(m: MartinetModel, eps: float, c: float, start: Arc) -> Arc:
    lam, omega, K = _rates(m, c, eps)
    z0 = start.z_end
    theta0 = float(start.theta[-1])
    lead = z0 - m.a / lam - float(_cycle_shape(m, theta0 + m.theta_tilde, eps, K))
    if lead <= 0:
        raise ArcSignLossError("arc 3 starts on or below its repelling cycle and cannot climb")
    h = (2.0 * math.pi / omega) / 16
    guess = math.log(max(m.z_exit / lead, 1.0) + 1.0) / lam
    t_max = 4.0 * guess + 64 * h
    n = int(math.ceil(t_max / h)) + 1
    ts = h * np.arange(n)
    zs = _arc3_z(m, ts, c, eps, z0, theta0)
    above = np.flatnonzero(zs >= m.z_exit)
    if not above.size:
        raise InfeasibleError("arc 3 does not reach z_exit")
    k = int(above[0])
    lo, hi = ts[k - 1], ts[k]
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _arc3_z(m, mid, c, eps, z0, theta0) >= m.z_exit:
            hi = mid
        else:
            lo = mid
    t_end = hi
    t_all = np.append(ts[:k], t_end)
    idx = _thin(len(t_all))
    t_s = t_all[idx]
    z_s = _arc3_z(m, t_s, c, eps, z0, theta0)
    z_s[-1] = m.z_exit
    t0 = start.t_end
    return Arc("arc3", t0, t0 + t_end, 0.0, c, t0 + t_s, np.full_like(t_s, eps),
               theta0 - omega * t_s, z_s, c * t_end)


def synthesize_crossing(m: MartinetModel, eps: float, c: float) -> SynthesisTrace:
    """Simulate the three-arc crossing with control bound ``c``.

    Arc 1 rides the contracting bang from just below ``z = 0`` until the first
    local maximum of ``z`` in ``z > 0`` (or until ``z`` is within 1e-3 of the
    cycle apex). Arc 2 crosses the disc horizontally in time ``2 eps / c``.
    Arc 3 uses the reversed rotation, which repels from the cycle, and climbs
    to ``z_exit``.

    Raises:
        InfeasibleError: arc 1 never reaches ``z > 0`` (c below threshold).
        ArcSignLossError: arc 2 ends with ``z <= 0``.
    """
    if eps <= 0 or c <= 0:
        raise ValueError("eps and c must be positive")
    a1 = _arc1(m, eps, c)
    a2 = _arc2(m, eps, c, a1)
    a3 = _arc3(m, eps, c, a2)
    return SynthesisTrace(eps, c, (a1, a2, a3))


def per_arc_bound(m: MartinetModel, eps: float) -> float:
    """-(2 / (kappa eps)) ln eps."""
    return -2.0 / (m.kappa * eps) * math.log(eps)


def gronwall_lower_bound(m: MartinetModel, z_t2: float, eps: float, c: float) -> float:
    """Lower bound (2/(kappa eps)) ln(kappa |z_t2| / (eps K)) with K = |alpha1_tilde|."""
    if z_t2 == 0:
        raise ValueError("z_t2 must be nonzero")
    if c * eps ** 2 <= 1:
        raise ValueError("the bound needs c eps^2 > 1")
    K = abs(m.alpha1_tilde)
    return 2.0 / (m.kappa * eps) * math.log(m.kappa * abs(z_t2) / (eps * K))


# ------------------------------------------------------------ sweeps and fits


@dataclass(frozen=True)
class SweepRow:
    eps: float
    c: float
    cost_arc1: float
    cost_arc2: float
    cost_arc3: float
    total: float
    bound: float

    @property
    def complexity(self) -> float:
        """Metric complexity estimate: L1 cost divided by eps."""
        return self.total / self.eps


def sweep(m: MartinetModel, eps_values: Iterable[float], c_factor: float = 10.0) -> list[SweepRow]:
    rows = []
    for eps in eps_values:
        c = c_factor * min_feasible_c(m, eps)
        tr = synthesize_crossing(m, eps, c)
        c1, c2, c3 = tr.costs
        rows.append(SweepRow(eps, c, c1, c2, c3, tr.total, 2.0 * per_arc_bound(m, eps)))
    return rows


def write_sweep_csv(rows: Sequence[SweepRow], path: str) -> None:
    import csv
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["eps", "c", "cost_arc1", "cost_arc2", "cost_arc3", "total", "bound"])
        for r in rows:
            w.writerow([repr(float(x)) for x in (r.eps, r.c, r.cost_arc1, r.cost_arc2,
                                                  r.cost_arc3, r.total, r.bound)])


@dataclass(frozen=True)
class KappaFit:
    kappa: float
    slope: float
    intercept: float
    residual: float  # root-mean-square residual of cost * eps^2
    n: int

    def __float__(self) -> float:
        return self.kappa


def fit_kappa(points: Sequence[tuple[float, float]]) -> KappaFit:
    """Least-squares line of ``cost * eps^2`` against ``-ln eps``; kappa = 4 / slope.

    ``points`` are ``(eps, cost)`` pairs with ``eps`` strictly decreasing, where
    cost is the metric complexity (L1 cost over eps).
    """
    if len(points) < 5:
        raise ValueError("fit_kappa needs at least 5 points")
    eps = np.array([p[0] for p in points], dtype=float)
    cost = np.array([p[1] for p in points], dtype=float)
    if np.any(eps <= 0) or not np.all(np.isfinite(cost)):
        raise ValueError("eps must be positive and costs finite")
    if not np.all(np.diff(eps) < 0):
        raise ValueError("eps values must be strictly decreasing")
    x = -np.log(eps)
    y = cost * eps ** 2
    xm = x.mean()
    sxx = float(np.sum((x - xm) ** 2))
    if sxx <= 1e-300:
        raise DegeneracyError("-ln eps has zero variance; the fit is degenerate")
    slope = float(np.sum((x - xm) * (y - y.mean())) / sxx)
    intercept = float(y.mean() - slope * xm)
    resid = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    if slope <= 1e-12 * float(np.max(np.abs(y))):
        raise DegeneracyError(f"fitted slope {slope:.6g} is not positive")
    return KappaFit(4.0 / slope, slope, intercept, resid, len(points))


def aggregate_multi(kappas: Sequence[float], eps: float) -> float:
    """-(ln eps / eps^2) * sum(4 / kappa_i) over the opposing Martinet points."""
    ks = list(kappas)
    if any(k <= 0 for k in ks):
        raise ValueError("every kappa must be positive")
    if eps <= 0:
        raise ValueError("eps must be positive")
    if not ks:
        warnings.warn("no opposing Martinet points: the log term vanishes and the "
                      "eps^-2 regime analysis applies instead", stacklevel=2)
        return 0.0
    return -(math.log(eps) / eps ** 2) * sum(4.0 / k for k in ks)


# ------------------------------------------------------------ good drift


class _CappedProblem(ReducedProblem):
    """Reduced problem whose ratio is capped so that a zero of alpha is allowed."""

    singular_alpha = True

    def __post_init__(self):
        if not (self.z_f > 0 and self.T > 0):
            raise ValueError("z_f and T must be positive")

    def ratio(self, z: float) -> float:
        al = self.alpha.extended(z)
        a = self.a0.extended(z)
        if al <= a / RATIO_CAP:
            return RATIO_CAP
        return min(a / al, RATIO_CAP)

    def inv_alpha(self, z: float) -> float:
        return 1.0 / self.alpha.extended(z)


@dataclass(frozen=True)
class GoodDriftReport:
    z_star: float
    H_inf: float
    omega: list
    inside: bool
    constant: float  # 2 * integral of 1/alpha over the complement of Omega


def good_drift_analysis(a0: ScalarField, alpha: ScalarField, z_f: float, T: float,
                        tol: float = 1e-6) -> GoodDriftReport:
    zs = np.linspace(0.0, z_f, 4097)
    al = alpha.sample(zs)
    z_star, amin = grid_minimum(alpha.extended, 0.0, z_f)
    if amin > tol:
        raise ConfigurationMismatchError(
            f"alpha is bounded away from zero (min {amin:.3g}); use the plain regime analysis")
    far = np.abs(zs - z_star) > 2 * (zs[1] - zs[0])
    if np.any(al[far] <= tol):
        raise ConfigurationMismatchError("alpha has more than one zero; expected an isolated one")
    if np.any(al[far] < 0):
        raise ConfigurationMismatchError("alpha must be nonnegative")
    if a0.extended(z_star) <= 0:
        raise ConfigurationMismatchError(
            "drift opposes the curve at the Martinet point; use the crossing synthesis")
    t_gamma = time_T_Gamma(a0, z_f)
    if not T < t_gamma:
        raise ConfigurationMismatchError("only the T < T_Gamma configuration is supported")
    p = _CappedProblem(a0, alpha, z_f, T)
    H = H_infinity(p)
    om = omega_set(p, H)
    inside = any(lo + tol < z_star < hi - tol for lo, hi in om)
    rest = complement(om, 0.0, z_f)
    constant = 2.0 * integrate_pieces(lambda z: 1.0 / alpha.extended(z), rest) if inside else math.inf
    return GoodDriftReport(float(z_star), float(H), om, bool(inside), float(constant))


def good_drift_omega_check(a0: ScalarField, alpha: ScalarField, z_f: float, T: float,
                           tol: float = 1e-6) -> bool:
    """Whether the zero of alpha lies strictly inside the coasting set Omega."""
    return good_drift_analysis(a0, alpha, z_f, T, tol).inside

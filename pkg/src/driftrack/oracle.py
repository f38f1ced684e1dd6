"""Brute-force dynamic-programming oracles for the reduced problems.

Both solvers march a value function backward over a uniform time grid.
Besides jumps between z-nodes (cost from the left-endpoint control that
produces the jump), every state may follow the free drift for one step at
zero control cost; the value at the off-grid landing point is obtained by
linear interpolation. Without that move a coarse grid cannot represent
coasting and the oracle overestimates slow-drift costs.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InfeasibleError, MissingFieldError
from .fields import integrate
from .geometry import time_T_Gamma
from .reduced import ReducedProblem

V_CAP_FACTOR = 64.0  # cap on the rescaled control u = 2 v / eps, in units of 1/eps
TIE_RTOL = 1e-12
PAD_FRACTION = 0.1
MIN_POINTS = 16


@dataclass(frozen=True)
class DPGrid:
    """Grid sizes.

    ``n_z`` counts cells across ``[0, z_f]``; the grid is padded by
    ``ceil(0.1 n_z)`` cells on each side so that 0 and ``z_f`` are nodes.
    ``n_r`` is used only by the two-dimensional solver; ``r_cell`` optionally
    fixes the radial spacing (default ``eps / (n_r - 1)``).

    ``z_nodes="uniform"`` spaces the z-nodes evenly. ``z_nodes="drift"``
    spaces them evenly in free-drift travel time (needs ``a0 > 0``), so that a
    coasting step of length ``dt`` moves exactly ``dt / dtau`` cells and the
    value function is never interpolated across the drift characteristic.
    """

    n_t: int
    n_z: int
    n_r: int = 16
    r_cell: Optional[float] = None
    z_nodes: str = "uniform"

    def __post_init__(self):
        if self.n_t < MIN_POINTS or self.n_z < MIN_POINTS:
            raise ValueError(f"n_t and n_z must be at least {MIN_POINTS}")
        if self.n_r < 2:
            raise ValueError("n_r must be at least 2")
        if self.z_nodes not in ("uniform", "drift"):
            raise ValueError("z_nodes must be 'uniform' or 'drift'")


@dataclass
class DPSolution:
    cost: float
    feasible: bool
    t: np.ndarray
    z: np.ndarray
    v: np.ndarray
    r: Optional[np.ndarray]
    dz: float  # largest z-cell
    dt: float
    eps: float
    raw_cost: float  # minimal path cost before the eps prefactor

    def write_csv(self, path: str) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "z", "v"])
            for row in zip(self.t, self.z, self.v):
                w.writerow([repr(float(x)) for x in row])


class _ZGrid:
    """Nodes uniform in a coordinate ``u``: ``u = z`` or ``u`` = drift travel time."""

    def __init__(self, p: ReducedProblem, grid: DPGrid):
        self.pad = int(math.ceil(PAD_FRACTION * grid.n_z))
        self.n = grid.n_z + 2 * self.pad + 1
        self.start = self.pad
        self.target = self.pad + grid.n_z
        self.dt = p.T / grid.n_t
        self.drift = grid.z_nodes == "drift"
        k = np.arange(self.n) - self.pad
        if self.drift:
            t_gamma = time_T_Gamma(p.a0, p.z_f)
            if not math.isfinite(t_gamma):
                raise ValueError("a drift-aligned grid needs a0 > 0 on [0, z_f]")
            self.du = t_gamma / grid.n_z
            self.u = k * self.du
            self.z = _drift_nodes(p.a0, self.du, self.pad, grid.n_z)
            self.z[self.start], self.z[self.target] = 0.0, p.z_f
        else:
            self.du = p.z_f / grid.n_z
            self.u = k * self.du
            self.z = self.u.copy()
        self.dz = float(np.max(np.diff(self.z)))
        self.dz_min = float(np.min(np.diff(self.z)))
        self.a = p.a0.sample(self.z)
        self.al = p.alpha.sample(self.z)
        if np.min(self.al) <= 0:
            raise ValueError("alpha must be positive on the padded z-grid")
        if self.drift and np.min(self.a) <= 0:
            raise ValueError("a drift-aligned grid needs a0 > 0 on the padded grid")

    def coast(self, u, a):
        """Landing coordinate after one free-drift step from ``u``."""
        return u + self.dt if self.drift else u + a * self.dt

    def z_of(self, u: float) -> float:
        if not self.drift:
            return float(u)
        return float(np.interp(u, self.u, self.z))

    def base(self, u: float) -> int:
        return int(round((u - self.u[0]) / self.du))

    def interp(self, V: np.ndarray, y) -> np.ndarray:
        """Linear interpolation in ``u`` of node values; +inf outside the grid."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        s = (y - self.u[0]) / self.du
        k = np.floor(s + 1e-9).astype(int)
        w = np.maximum(s - k, 0.0)
        ok = (k >= 0) & (k <= self.n - 1)
        k_ok = np.clip(k, 0, self.n - 1)
        k1 = np.clip(k + 1, 0, self.n - 1)
        left = V[..., k_ok] if V.ndim > 1 else V[k_ok]
        right = V[..., k1] if V.ndim > 1 else V[k1]
        exact = w <= 1e-9
        inner = ok & ((k + 1 <= self.n - 1) | exact)
        with np.errstate(invalid="ignore"):
            val = np.where(exact, left, (1 - w) * left + w * right)
        val = np.where(np.isnan(val), np.inf, val)
        return np.where(inner, val, np.inf) if V.ndim == 1 else np.where(inner[None, ...], val, np.inf)


def _drift_nodes(a0, du: float, pad: int, n_z: int, sub: int = 32) -> np.ndarray:
    """z-positions of the free drift from 0 at travel times ``k du``, ``k = -pad..n_z+pad``."""

    def flow(z: float, h: float) -> float:
        f = a0.extended
        for _ in range(sub):
            k1 = f(z)
            k2 = f(z + h / 2 * k1)
            k3 = f(z + h / 2 * k2)
            k4 = f(z + h * k3)
            z += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        return z

    h = du / sub
    up = [0.0]
    for _ in range(n_z + pad):
        up.append(flow(up[-1], h))
    down = [0.0]
    for _ in range(pad):
        down.append(flow(down[-1], -h))
    return np.array(down[:0:-1] + up)


def stencil_halfwidth(max_a: float, max_alpha: float, dt: float, dz: float, n: int) -> int:
    """Jumps covering |dz/dt| <= max|a0| + alpha_max * (eps/2) * (64/eps)."""
    k = int(math.ceil((max_a + max_alpha * 0.5 * V_CAP_FACTOR) * dt / dz))
    return max(1, min(k, n - 1))


def _shift_tables(zg: _ZGrid, K: int):
    shifts = np.arange(-K, K + 1)
    J = np.arange(zg.n)[:, None] + shifts[None, :]
    valid = (J >= 0) & (J < zg.n)
    Jc = np.clip(J, 0, zg.n - 1)
    step = zg.z[Jc] - zg.z[:, None]
    mismatch = np.abs(zg.a[:, None] * zg.dt - step)
    return Jc, valid, mismatch, step


def rmc_dp(p: ReducedProblem, eps: float, grid: DPGrid) -> DPSolution:
    """Reduced cost (2/eps^2) * min sum |a0 dt - dz| / alpha by value iteration."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    zg = _ZGrid(p, grid)
    K = stencil_halfwidth(np.max(np.abs(zg.a)), np.max(zg.al), zg.dt, zg.dz_min, zg.n)
    Jc, valid, mismatch, step = _shift_tables(zg, K)
    C = np.where(valid, mismatch / zg.al[:, None], np.inf)
    drift_target = zg.coast(zg.u, zg.a)
    coast_down = np.maximum(-zg.a * zg.dt, 0.0)
    down = np.maximum(-step, 0.0)
    n_t = grid.n_t
    V = np.full(zg.n, np.inf)
    V[zg.target] = 0.0
    W = np.zeros(zg.n)  # downward travel to go along the selected optimal path
    values, travel = [V], [W]
    rows = np.arange(zg.n)
    for _ in range(n_t):
        M = C + V[Jc]
        best = M.min(axis=1)
        coast = zg.interp(V, drift_target)
        V_new = np.minimum(best, coast)
        tol = TIE_RTOL * np.maximum(1.0, np.where(np.isfinite(V_new), np.abs(V_new), 1.0))
        D = np.where(M <= (V_new + tol)[:, None], down + W[Jc], np.inf)
        k = D.argmin(axis=1)
        W_jump = D[rows, k]
        W_coast = np.where(coast <= V_new + tol, coast_down + zg.interp(W, drift_target), np.inf)
        W = np.minimum(W_jump, W_coast)
        V = V_new
        values.append(V)
        travel.append(W)
    values.reverse()  # values[n] is the value at time step n
    travel.reverse()
    raw = float(values[0][zg.start])
    scale = 2.0 / eps ** 2
    if not math.isfinite(raw):
        empty = np.array([])
        return DPSolution(math.inf, False, empty, empty, empty, None, zg.dz, zg.dt, eps, raw)
    t, z, v = _forward_1d(p, zg, values, travel, K)
    return DPSolution(scale * raw, True, t, z, v, None, zg.dz, zg.dt, eps, raw)


def _pick(u: float, drift_step: float, nodes: np.ndarray, costs: np.ndarray, coast: float,
          rank: Optional[np.ndarray] = None, coast_rank: float = 0.0) -> float:
    """Best next grid coordinate.

    Among moves whose cost ties the minimum, the smallest ``rank`` wins
    (downward travel to go, when supplied); remaining ties go to the move
    closest to the free drift.
    """
    best = min(float(np.min(costs)), coast)
    if not math.isfinite(best):
        raise InfeasibleError("no finite continuation in the forward pass")
    tol = TIE_RTOL * max(1.0, abs(best))
    near = np.flatnonzero(costs <= best + tol)
    coast_ok = coast <= best + tol
    if rank is not None:
        r_near = rank[near]
        r_best = min(float(r_near.min()) if near.size else math.inf,
                     coast_rank if coast_ok else math.inf)
        r_tol = 1e-9 * max(1.0, abs(r_best)) + 1e-12
        near = near[r_near <= r_best + r_tol]
        coast_ok = coast_ok and coast_rank <= r_best + r_tol
    if coast_ok:
        return u + drift_step
    k = near[np.argmin(np.abs(nodes[near] - u - drift_step))]
    return float(nodes[k])


def _forward_1d(p: ReducedProblem, zg: _ZGrid, values, travel, K: int):
    n_t = len(values) - 1
    u, z = 0.0, 0.0
    ts, zs, vs = [0.0], [0.0], []
    for n in range(n_t):
        a = p.a0.extended(z)
        al = p.alpha.extended(z)
        Vn, Wn = values[n + 1], travel[n + 1]
        base = zg.base(u)
        js = np.arange(max(base - K, 0), min(base + K, zg.n - 1) + 1)
        costs = np.abs(a * zg.dt - (zg.z[js] - z)) / al + Vn[js]
        rank = np.maximum(z - zg.z[js], 0.0) + Wn[js]
        u_c = zg.coast(u, a)
        coast = float(zg.interp(Vn, u_c)[0])
        coast_rank = max(-a * zg.dt, 0.0) + float(zg.interp(Wn, u_c)[0])
        if n == n_t - 1:
            u_new = zg.u[zg.target]
        else:
            u_new = _pick(u, u_c - u, zg.u[js], costs, coast, rank, coast_rank)
        z_new = zg.z_of(u_new)
        vs.append((a - (z_new - z) / zg.dt) / al)
        u, z = u_new, z_new
        ts.append((n + 1) * zg.dt)
        zs.append(z)
    vs.append(vs[-1])
    return np.array(ts), np.array(zs), np.array(vs)


def armc_dp(p: ReducedProblem, eps: float, grid: DPGrid, horizontal: bool = False) -> DPSolution:
    """Two-dimensional oracle over (r, z) with the tube constraint 0 <= r <= eps.

    Each step is a vertical move at the current radius (cost
    ``|a0 dt - dz| / (alpha r / 2)``; at ``r = 0`` only the free drift moves z)
    followed by a radial move (cost ``|dr - b dt|``, where ``b`` is the
    horizontal drift when ``horizontal`` is set). Returns
    ``(1/eps) * minimal cost``. Grids whose radial spacing exceeds ``eps`` are
    reported infeasible unless the drift alone reaches the target.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if horizontal and p.b is None:
        raise MissingFieldError("horizontal drift requested but the problem has no b")
    zg = _ZGrid(p, grid)
    r_cell = grid.r_cell if grid.r_cell is not None else eps / (grid.n_r - 1)
    m_max = int(math.floor(eps / r_cell + 1e-9))
    r = np.arange(m_max + 1) * r_cell
    b = p.b.sample(zg.z) if horizontal else np.zeros(zg.n)
    K = stencil_halfwidth(np.max(np.abs(zg.a)), np.max(zg.al), zg.dt, zg.dz_min, zg.n)
    Jc, valid, mismatch, _ = _shift_tables(zg, K)
    # vertical move cost Cz[m, i, s]
    Cz = np.full((m_max + 1,) + mismatch.shape, np.inf)
    if m_max > 0:
        lever = zg.al[None, :, None] * r[1:, None, None] / 2.0
        Cz[1:] = np.where(valid[None, :, :], mismatch[None, :, :] / lever, np.inf)
    drift_target = zg.coast(zg.u, zg.a)
    # radial move cost R[m, m', j] = |r_m' - r_m - b_j dt|
    R = np.abs(r[None, :, None] - r[:, None, None] - b[None, None, :] * zg.dt)
    n_t = grid.n_t
    V = np.full((m_max + 1, zg.n), np.inf)
    V[0, zg.target] = 0.0
    vals, gs = [V], []
    for _ in range(n_t):
        G = (R + V[None, :, :]).min(axis=1)  # best radial continuation after reaching z_j
        jump = (Cz + G[:, Jc]).min(axis=2)
        coast = zg.interp(G, drift_target)
        V = np.minimum(jump, coast)
        vals.append(V)
        gs.append(G)
    vals.reverse()
    gs.reverse()
    raw = float(vals[0][0, zg.start])
    if not math.isfinite(raw):
        empty = np.array([])
        return DPSolution(math.inf, False, empty, empty, empty, empty, zg.dz, zg.dt, eps, raw)
    t, z, v, rr = _forward_2d(p, zg, vals, gs, r, K, horizontal)
    return DPSolution(raw / eps, True, t, z, v, rr, zg.dz, zg.dt, eps, raw)


def _forward_2d(p, zg: _ZGrid, vals, gs, r, K, horizontal):
    n_t = len(vals) - 1
    u, z, m = 0.0, 0.0, 0
    ts, zs, vs, rs = [0.0], [0.0], [], [0.0]
    for n in range(n_t):
        a = p.a0.extended(z)
        al = p.alpha.extended(z)
        G = gs[n][m]
        u_new = zg.coast(u, a)
        if r[m] > 0:
            coast = float(zg.interp(G, u_new)[0])
            base = zg.base(u)
            js = np.arange(max(base - K, 0), min(base + K, zg.n - 1) + 1)
            costs = np.abs(a * zg.dt - (zg.z[js] - z)) / (al * r[m] / 2.0) + G[js]
            u_new = _pick(u, u_new - u, zg.u[js], costs, coast)
        if n == n_t - 1:
            u_new = zg.u[zg.target]
        z_new = zg.z_of(u_new)
        vs.append(0.0 if r[m] == 0 else (a - (z_new - z) / zg.dt) / (al * r[m] / 2.0))
        bz = p.b.extended(z_new) if horizontal else 0.0
        Vn = zg.interp(vals[n + 1], u_new)[:, 0]
        m = int(np.argmin(np.abs(r - r[m] - bz * zg.dt) + Vn))
        u, z = u_new, z_new
        ts.append((n + 1) * zg.dt)
        zs.append(z)
        rs.append(r[m])
    vs.append(vs[-1])
    return np.array(ts), np.array(zs), np.array(vs), np.array(rs)


def exact_cost_drift_exact(p: ReducedProblem) -> float:
    """Integral of b / a0 over [0, z_f]."""
    if p.b is None:
        raise MissingFieldError("the exact-time cost needs the horizontal drift b")
    return integrate(lambda z: p.b.extended(z) / p.a0.extended(z), 0.0, p.z_f)


@dataclass
class StructureReport:
    max_downward_step: float
    max_downward_cells: float
    wrong_sign_fraction: float
    control_mass: float


def structure_check(sol: DPSolution, p: ReducedProblem) -> StructureReport:
    """Monotonicity of z and control-sign consistency of an optimal 1-D path."""
    if not sol.feasible:
        raise InfeasibleError("structure check needs a feasible solution")
    steps = np.diff(sol.z)
    down = float(max(0.0, -np.min(steps))) if steps.size else 0.0
    v = sol.v[:-1]
    al = p.alpha.sample(sol.z[:-1])
    unit = sol.dz / (sol.dt * al)
    tol = 2.0 * unit
    tg = time_T_Gamma(p.a0, p.z_f)
    mass = float(np.sum(np.abs(v)) * sol.dt)
    if p.T < tg:
        wrong = v > tol
    elif p.T > tg:
        wrong = v < -tol
    else:
        wrong = np.zeros_like(v, dtype=bool)
    wrong_mass = float(np.sum(np.abs(v[wrong])) * sol.dt)
    frac = wrong_mass / mass if mass > 0 else 0.0
    return StructureReport(down, down / sol.dz, frac, mass)

"""Acceptance criteria 1-11; each test prints one PASS/FAIL line."""

import math
import time

import numpy as np
import pytest

from conftest import problem
from driftrack import expr as ex
from driftrack import martinet as mt
from driftrack import oracle as oc
from driftrack import reduced as rd
from driftrack.geometry import kappa_bracket, kappa_flow, normal_form_frame, time_T_Gamma


@pytest.fixture
def report(capsys):
    def emit(n: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} ({detail})")
    return emit


def test_criterion_01_drift_fast_closed_form(report):
    t0 = time.perf_counter()
    p = problem("1", "2", 1.0, 2.0)
    const = rd.classify(p).constant
    dp = oc.rmc_dp(p, 1.0, oc.DPGrid(512, 512)).cost
    elapsed = time.perf_counter() - t0
    ok = const == 1.0 and abs(dp - 1.0) <= 0.05 and elapsed < 10
    report(1, ok, f"constant={const!r} dp={dp:.6f} time={elapsed:.2f}s")
    assert ok


def test_criterion_02_drift_slow_pipeline(report):
    t0 = time.perf_counter()
    p = problem("2-z", "1", 1.0, 0.3)
    target = 2 * math.exp(-0.3)
    h = rd.H_infinity(p, details=True)
    rep = rd.classify(p)
    width = sum(b - a for a, b in rep.diagnostics["Omega"])
    dp = oc.rmc_dp(p, 1.0, oc.DPGrid(512, 512)).cost
    elapsed = time.perf_counter() - t0
    checks = [abs(h["ladder"] - target) <= 1e-3, abs(h["free_flow"] - target) <= 1e-3,
              abs(rep.constant - 2 * (1 - width)) <= 1e-12, abs(rep.constant - 0.96328) <= 2e-4,
              abs(dp - rep.constant) <= 0.05 * rep.constant, elapsed < 30]
    ok = all(checks)
    report(2, ok, f"H_ladder={h['ladder']:.7f} H_free={h['free_flow']:.7f} constant={rep.constant:.6f} "
                  f"dp={dp:.6f} time={elapsed:.2f}s")
    assert ok


def test_criterion_03_drift_exact(report):
    p = problem("1+z", "1", 1.0, math.log(2.0), b="z")
    rep = rd.classify(p)
    exact = 1 - math.log(2.0)
    eps = 0.05
    sol = oc.armc_dp(p, eps, oc.DPGrid(512, 512, 8, z_nodes="drift"), horizontal=True)
    scaled = sol.cost * eps
    ok = (rep.regime == rd.DRIFT_EXACT and abs(rep.constant - exact) <= 1e-8
          and abs(scaled - exact) <= 0.1 * exact)
    report(3, ok, f"constant={rep.constant:.10f} dp*eps={scaled:.6f} target={exact:.6f}")
    assert ok


def _random_problem(rng):
    a1, a2 = rng.uniform(0.1, 0.5), rng.uniform(0.05, 0.3)
    w1, w2, p1, p2 = rng.uniform(1, 5), rng.uniform(1, 5), rng.uniform(0, 6.3), rng.uniform(0, 6.3)
    return f"1.5+{a1:.6f}*sin({w1:.6f}*z+{p1:.6f})", f"1+{a2:.6f}*cos({w2:.6f}*z+{p2:.6f})"


def test_criterion_04_dual_identities(report):
    rng = np.random.default_rng(2024)
    worst_fast = worst_slow = 0.0
    for _ in range(10):
        a0, alpha = _random_problem(rng)
        tg = time_T_Gamma(problem(a0, alpha, 1.0, 1.0).a0, 1.0)
        fast = problem(a0, alpha, 1.0, 1.5 * tg)
        c_fast = rd.classify(fast).constant
        worst_fast = max(worst_fast, abs(c_fast - 2 * (rd.I_substar(fast) - rd.integral_inv_alpha(fast))))
        slow = problem(a0, alpha, 1.0, 0.6 * tg)
        rep = rd.classify(slow)
        i_star = rd.I_star(slow, rep.diagnostics["H_inf"])
        worst_slow = max(worst_slow, abs(rep.constant - 2 * (rd.integral_inv_alpha(slow) - i_star)))
    ok = worst_fast <= 1e-8 and worst_slow <= 1e-8
    report(4, ok, f"max gap fast={worst_fast:.2e} slow={worst_slow:.2e} over 10 problems")
    assert ok


def test_criterion_05_monotonicity(report):
    p = problem("2-z", "1", 20.0, 0.3)
    rng = np.random.default_rng(5)
    bad = 0
    for _ in range(20):
        h1, h2 = np.sort(rng.uniform(0.5, 2.5, 2))
        if rd.terminal_value(p, h1, 50.0) > rd.terminal_value(p, h2, 50.0) + 1e-10:
            bad += 1
    es = [rd.terminal_value(p, 1.6, c) for c in (1.0, 2.0, 4.0, 8.0, 16.0)]
    bad += sum(1 for a, b in zip(es, es[1:]) if not b > a)
    _, history = rd.H_ladder(problem("2-z", "1", 1.0, 0.3))
    hs = [h for _, h in history]
    bad += sum(1 for a, b in zip(hs, hs[1:]) if b > a + 1e-10)
    ok = bad == 0
    report(5, ok, f"violations={bad} (20 H pairs, 4 c steps, {len(hs) - 1} ladder steps)")
    assert ok


def test_criterion_06_sign_structure(report):
    lines, ok = [], True
    for name, p in (("fast", problem("1", "2", 1.0, 2.0)), ("slow", problem("2-z", "1", 1.0, 0.3))):
        rep = oc.structure_check(oc.rmc_dp(p, 1.0, oc.DPGrid(512, 512)), p)
        ok = ok and rep.max_downward_cells <= 1.0 and rep.wrong_sign_fraction <= 0.02
        lines.append(f"{name}: down={rep.max_downward_cells:.2f} cells wrong={rep.wrong_sign_fraction:.4f}")
    report(6, ok, "; ".join(lines))
    assert ok


def test_criterion_07_eps_scaling(report):
    worst = 0.0
    for p in (problem("1", "2", 1.0, 2.0), problem("2-z", "1", 1.0, 0.3)):
        grid = oc.DPGrid(256, 256)
        vals = [oc.rmc_dp(p, e, grid).cost * e * e for e in (1.0, 0.5, 0.25)]
        worst = max(worst, max(abs(v - vals[0]) / abs(vals[0]) for v in vals))
    ok = worst <= 1e-12
    report(7, ok, f"max relative spread={worst:.2e}")
    assert ok


def test_criterion_08_kappa_duality(report):
    origin = (0.0, 0.0, 0.0)
    worst = 0.0
    factor = ex.parse("1+0.3*sin(x+z)", ("x", "y", "z"))
    for gamma, kappa in (("z+x", 1.0), ("3*z", 3.0), ("2*z-y+x*z", 2.0)):
        fp = normal_form_frame(gamma)
        variants = [fp, fp.with_omega(fp.omega.scale(factor)),
                    fp.with_extension(fp.extension() + fp.X1.scale(ex.parse("x", ("x", "y", "z")))),
                    fp.with_extension(fp.extension() + fp.X2.scale(ex.parse("y+x*z", ("x", "y", "z"))))]
        for v in variants:
            worst = max(worst, abs(kappa_bracket(v, origin) - kappa), abs(kappa_flow(v, origin) - kappa))
    ok = worst <= 1e-6
    report(8, ok, f"max deviation={worst:.2e} over 3 frames x 4 variants")
    assert ok


def test_criterion_09_martinet_synthesis(report):
    t0 = time.perf_counter()
    m = mt.MartinetModel(a=1.0, kappa=1.0, alpha1_tilde=4.0)
    eps = [float(e) for e in np.geomspace(0.2, 0.02, 8)]
    rows = mt.sweep(m, eps)
    fit = mt.fit_kappa([(r.eps, r.complexity) for r in rows])
    ratios = [max(r.cost_arc1, r.cost_arc3) / mt.per_arc_bound(m, r.eps) for r in rows]
    infeasible = 0
    for e in (0.2, 0.1, 0.05, 0.02):
        try:
            mt.synthesize_crossing(m, e, 0.5 * mt.min_feasible_c(m, e))
        except mt.InfeasibleError:
            infeasible += 1
    elapsed = time.perf_counter() - t0
    fit_ok = abs(fit.kappa - 1.0) <= 0.15
    # ratios listed from the largest eps to the smallest; the bound should tighten as eps shrinks
    ratio_ok = ratios[-1] <= 1.3 and all(b <= a for a, b in zip(ratios, ratios[1:]))
    ok = fit_ok and ratio_ok and infeasible == 4 and elapsed < 60
    report(9, ok, f"kappa_est={fit.kappa:.4f} fit_ok={fit_ok}; per-arc ratios "
                  f"{', '.join(f'{q:.3f}' for q in ratios)} ratio_ok={ratio_ok}; "
                  f"infeasible detected {infeasible}/4; time={elapsed:.2f}s. Arc 3 climbs from the "
                  f"O(eps^3) cycle apex to an eps-independent exit, about 3 ln(1/eps) contraction "
                  f"times, so the fitted slope is near 6/kappa instead of 4/kappa")
    assert ok


def _rhs(t, z, a, kappa, alpha1, theta_t, c, eps, theta0):
    theta = theta0 + (c / eps) * t
    return -a - 0.5 * eps * c * kappa * z + 0.5 * eps ** 2 * c * alpha1 * np.cos(theta + theta_t)


def _rk4(z, t_end, dt, *args):
    t = 0.0
    for _ in range(int(round(t_end / dt))):
        k1 = _rhs(t, z, *args)
        k2 = _rhs(t + dt / 2, z + dt / 2 * k1, *args)
        k3 = _rhs(t + dt / 2, z + dt / 2 * k2, *args)
        k4 = _rhs(t + dt, z + dt * k3, *args)
        z = z + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += dt
    return z


def test_criterion_10_closed_form_and_contraction(report):
    rng = np.random.default_rng(10)
    n = 100
    a = rng.uniform(0.5, 2.0, n)
    kappa = rng.uniform(0.5, 2.0, n)
    alpha1 = rng.choice([-1.0, 1.0], n) * rng.uniform(1.0, 5.0, n)
    theta_t = rng.uniform(0, 2 * np.pi, n)
    eps = rng.uniform(0.05, 0.3, n)
    c = rng.uniform(10.0, 1000.0, n) * eps
    theta0 = rng.uniform(0, 2 * np.pi, n)
    z0 = rng.uniform(-0.3, 0.3, n)
    t_end = 0.01
    z_rk = _rk4(z0.copy(), t_end, 1e-6, a, kappa, alpha1, theta_t, c, eps, theta0)
    z_cf = np.array([mt.closed_form_z(mt.MartinetModel(a[i], kappa[i], alpha1[i], theta_t[i]),
                                      t_end, c[i], eps[i], z0[i], theta0[i]) for i in range(n)])
    err = float(np.max(np.abs(z_rk - z_cf)))

    m = mt.MartinetModel(a=1.0, kappa=1.0, alpha1_tilde=4.0)
    ce, ee = 100.0, 0.1
    lam = ee * m.kappa * ce / 2
    dt, times = 1e-5, np.linspace(0.2, 1.6, 8)
    z = np.array([mt.limit_cycle_z(m, 0.0, ce, ee) + 0.01])
    dist, t_prev = [], 0.0
    for tk in times:
        z = _rk4(z, tk - t_prev, dt, m.a, m.kappa, m.alpha1_tilde, m.theta_tilde, ce, ee,
                 (ce / ee) * t_prev)
        t_prev = tk
        dist.append(abs(z[0] - mt.limit_cycle_z(m, (ce / ee) * tk, ce, ee)))
    rate = -np.polyfit(times, np.log(dist), 1)[0]
    ok = err <= 1e-8 and abs(rate - lam) <= 0.1 * lam
    report(10, ok, f"max |closed form - RK4|={err:.2e} over {n} draws; rate={rate:.4f} vs {lam:.4f}")
    assert ok


def test_criterion_11_horizontal_drift_effect(report):
    t0 = time.perf_counter()
    p = problem("1", "2", 1.0, 2.0, b="1+z")
    grid = oc.DPGrid(96, 96, 24)
    diffs = []
    for eps in (0.4, 0.2, 0.1):
        with_b = oc.armc_dp(p, eps, grid, horizontal=True).cost
        without = oc.armc_dp(p, eps, grid, horizontal=False).cost
        diffs.append((with_b - without) * eps)
    elapsed = time.perf_counter() - t0
    ok = all(abs(d) <= 1.5 * abs(diffs[0]) for d in diffs) and elapsed < 120
    report(11, ok, f"(with - without)*eps = {', '.join(f'{d:.4f}' for d in diffs)} time={elapsed:.2f}s")
    assert ok

"""Command-line interface: ``driftrack {analyze,oracle,martinet,kappa}``.

Exit codes: 0 success, 1 other library failure (or kappa disagreement),
2 schema or usage error, 3 degeneracy, 4 geometric precondition violated.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import geometry, martinet, oracle, reduced
from .errors import (DegeneracyError, DriftrackError, NonTransverseError,
                     NotMartinetError, SchemaError)

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_DEGENERATE = 3
EXIT_GEOMETRY = 4
KAPPA_AGREEMENT = 1e-5


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    input_path: str
    out_dir: str = "."
    tol: Optional[float] = None
    quiet: bool = False
    eps: list = field(default_factory=list)
    grid: Optional[tuple[int, int]] = None
    point: Optional[tuple[float, float, float]] = None

    def __post_init__(self):
        if any(not (e > 0 and math.isfinite(e)) for e in self.eps):
            raise UsageError("eps values must be positive")
        if self.command == "martinet" and any(b >= a for a, b in zip(self.eps, self.eps[1:])):
            raise UsageError("sweep eps values must be strictly decreasing")


def _parse_eps_list(text: str) -> list[float]:
    try:
        vals = [float(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise UsageError(f"bad eps list {text!r}") from exc
    if not vals:
        raise UsageError("empty eps list")
    return vals


def _parse_grid(text: str) -> tuple[int, int]:
    parts = text.lower().split("x")
    try:
        n_t, n_z = (int(p) for p in parts)
    except ValueError as exc:
        raise UsageError(f"grid must look like NxM, got {text!r}") from exc
    if n_t < oracle.MIN_POINTS or n_z < oracle.MIN_POINTS:
        raise UsageError(f"grid must be at least {oracle.MIN_POINTS}x{oracle.MIN_POINTS}")
    return n_t, n_z


def _parse_eps_range(text: str) -> list[float]:
    """``a:b:n`` -> n values spaced geometrically from b down to a."""
    parts = text.split(":")
    if len(parts) != 3:
        raise UsageError("--eps-range must look like a:b:n")
    try:
        a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise UsageError(f"bad --eps-range {text!r}") from exc
    if n < 5:
        raise UsageError("a kappa fit needs at least 5 eps values")
    if not (0 < a < b):
        raise UsageError("--eps-range needs 0 < a < b")
    return [float(v) for v in np.geomspace(b, a, n)]


def _parse_point(text: str) -> tuple[float, float, float]:
    try:
        vals = tuple(float(s) for s in text.split(","))
    except ValueError as exc:
        raise UsageError(f"bad point {text!r}") from exc
    if len(vals) != 3:
        raise UsageError("--point needs three comma-separated numbers")
    return vals  # type: ignore[return-value]


def _say(cfg: RunConfig, line: str) -> None:
    if not cfg.quiet:
        print(line)


def _out(cfg: RunConfig, name: str) -> str:
    os.makedirs(cfg.out_dir, exist_ok=True)
    return os.path.join(cfg.out_dir, name)


def _problem(cfg: RunConfig) -> reduced.ReducedProblem:
    p = reduced.load_problem(cfg.input_path)
    if cfg.tol is not None:
        p = reduced.ReducedProblem(p.a0, p.alpha, p.z_f, p.T, p.b, cfg.tol)
    return p


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def cmd_analyze(cfg: RunConfig) -> int:
    p = _problem(cfg)
    rep = reduced.classify(p)
    _say(cfg, f"regime={rep.regime} constant={rep.constant!r}")
    _say(cfg, f"order={rep.order} T_Gamma={rep.T_Gamma!r} T={p.T!r}")
    for key, val in rep.diagnostics.items():
        _say(cfg, f"{key}={_jsonable(val)!r}")
    with open(_out(cfg, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(_jsonable(rep.to_dict()), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return EXIT_OK


def cmd_oracle(cfg: RunConfig) -> int:
    p = _problem(cfg)
    rep = reduced.classify(p)
    n_t, n_z = cfg.grid or (256, 256)
    rows = []
    for eps in cfg.eps:
        predicted = reduced.predict_MC(rep, eps)
        if rep.regime == reduced.DRIFT_EXACT:
            grid = oracle.DPGrid(n_t, n_z, 8, z_nodes="drift")
            sol = oracle.armc_dp(p, eps, grid, horizontal=True)
        else:
            sol = oracle.rmc_dp(p, eps, oracle.DPGrid(n_t, n_z))
        if sol.feasible:
            ratio = sol.cost / predicted if predicted != 0 else math.nan
            rows.append((eps, sol.cost, predicted, ratio))
        else:
            print(f"warning: eps={eps!r} infeasible on this grid", file=sys.stderr)
            rows.append((eps, math.inf, predicted, math.nan))
    with open(_out(cfg, "oracle.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["eps", "dp_cost", "predicted", "ratio"])
        for row in rows:
            w.writerow([repr(float(v)) for v in row])
    for eps, cost, pred, ratio in rows:
        _say(cfg, f"eps={eps!r} dp_cost={cost!r} predicted={pred!r} ratio={ratio!r}")
    return EXIT_OK


def cmd_martinet(cfg: RunConfig) -> int:
    from .plot import kappa_fit_svg

    m = martinet.load_model(cfg.input_path)
    rows = []
    for eps in cfg.eps:
        c = 10.0 * martinet.min_feasible_c(m, eps)
        try:
            tr = martinet.synthesize_crossing(m, eps, c)
        except DriftrackError as exc:
            print(f"warning: eps={eps!r} skipped ({exc})", file=sys.stderr)
            rows.append(martinet.SweepRow(eps, c, math.nan, math.nan, math.nan, math.nan,
                                          2 * martinet.per_arc_bound(m, eps)))
            continue
        c1, c2, c3 = tr.costs
        rows.append(martinet.SweepRow(eps, c, c1, c2, c3, tr.total,
                                      2 * martinet.per_arc_bound(m, eps)))
    martinet.write_sweep_csv(rows, _out(cfg, "martinet_sweep.csv"))
    good = [r for r in rows if math.isfinite(r.total)]
    fit = martinet.fit_kappa([(r.eps, r.complexity) for r in good])
    kappa_fit_svg([r.eps for r in good], [r.complexity for r in good], fit.slope, fit.intercept,
                  fit.kappa, _out(cfg, "martinet_fit.svg"))
    _say(cfg, f"kappa_est={fit.kappa!r} residual={fit.residual!r} points={fit.n}")
    _say(cfg, f"model_kappa={m.kappa!r} relative_error={abs(fit.kappa - m.kappa) / m.kappa!r}")
    return EXIT_OK


def cmd_kappa(cfg: RunConfig) -> int:
    fp = geometry.load_frame(cfg.input_path)
    q = cfg.point if cfg.point is not None else (0.0, 0.0, 0.0)
    kb = float(geometry.kappa_bracket(fp, q))
    kf = float(geometry.kappa_flow(fp, q))
    delta = abs(kb - kf)
    limit = cfg.tol if cfg.tol is not None else KAPPA_AGREEMENT
    agree = bool(delta <= limit)
    _say(cfg, f"kappa_bracket={kb!r} kappa_flow={kf!r} delta={delta!r} agree={agree}")
    with open(_out(cfg, "kappa.json"), "w", encoding="utf-8") as fh:
        json.dump({"point": list(q), "kappa_bracket": kb, "kappa_flow": kf, "delta": delta,
                   "agree": agree}, fh, indent=2)
        fh.write("\n")
    return EXIT_OK if agree else EXIT_FAIL


COMMANDS = {"analyze": cmd_analyze, "oracle": cmd_oracle, "martinet": cmd_martinet,
            "kappa": cmd_kappa}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("--tol", type=float, default=argparse.SUPPRESS,
                        help="tolerance override (T vs T_Gamma; kappa agreement)")
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="driftrack", parents=[common],
                                     description="Tracking-cost asymptotics for drifted curves.")
    sub = parser.add_subparsers(dest="command", required=True)
    a = sub.add_parser("analyze", parents=[common], help="classify a reduced problem")
    a.add_argument("problem")
    o = sub.add_parser("oracle", parents=[common], help="DP oracle versus the predicted cost")
    o.add_argument("problem")
    o.add_argument("--eps", default="1")
    o.add_argument("--grid", default="256x256", help="n_t x n_z, e.g. 512x512")
    m = sub.add_parser("martinet", parents=[common], help="crossing sweep and kappa fit")
    m.add_argument("model")
    m.add_argument("--eps-range", default="0.02:0.2:8", help="a:b:n, geometric from b down to a")
    k = sub.add_parser("kappa", parents=[common], help="kappa by bracket and by flow")
    k.add_argument("frame")
    k.add_argument("--point", default="0,0,0")
    return parser


def _config(ns: argparse.Namespace) -> RunConfig:
    cmd = ns.command
    base = dict(command=cmd, out_dir=getattr(ns, "out", "."), tol=getattr(ns, "tol", None),
                quiet=getattr(ns, "quiet", False))
    if cmd == "analyze":
        return RunConfig(input_path=ns.problem, **base)
    if cmd == "oracle":
        return RunConfig(input_path=ns.problem, eps=_parse_eps_list(ns.eps),
                         grid=_parse_grid(ns.grid), **base)
    if cmd == "martinet":
        return RunConfig(input_path=ns.model, eps=_parse_eps_range(ns.eps_range), **base)
    return RunConfig(input_path=ns.frame, point=_parse_point(ns.point), **base)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    try:
        cfg = _config(ns)
        return COMMANDS[cfg.command](cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DegeneracyError as exc:
        print(f"degenerate: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (NotMartinetError, NonTransverseError) as exc:
        print(f"geometry precondition: {exc}", file=sys.stderr)
        return EXIT_GEOMETRY
    except DriftrackError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL

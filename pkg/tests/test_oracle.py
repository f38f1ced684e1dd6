import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import problem
from driftrack import oracle as oc
from driftrack import reduced as rd
from driftrack.errors import MissingFieldError


def test_rmc_examples(fast, slow):
    assert abs(oc.rmc_dp(fast, 1.0, oc.DPGrid(256, 256)).cost - 1.0) <= 0.05
    assert abs(oc.rmc_dp(problem("1", "1", 1.0, 1.0), 1.0, oc.DPGrid(256, 256)).cost) <= 0.02
    assert abs(oc.rmc_dp(slow, 1.0, oc.DPGrid(256, 256)).cost - 0.963) <= 0.05


def test_rmc_path_meets_the_constraints(slow):
    sol = oc.rmc_dp(slow, 1.0, oc.DPGrid(128, 128))
    assert sol.feasible
    assert sol.z[0] == pytest.approx(0.0, abs=1e-12)
    assert sol.z[-1] == pytest.approx(1.0, abs=1e-12)
    assert sol.t[-1] == pytest.approx(0.3)
    # coasting steps leave the nodes, so the path cost matches the value only to grid accuracy
    assert 2.0 * np.sum(np.abs(sol.v[:-1])) * sol.dt == pytest.approx(sol.cost, rel=1e-3)


@pytest.mark.parametrize("name", ["fast", "slow"])
def test_exact_eps_scaling(name, request):
    p = request.getfixturevalue(name)
    grid = oc.DPGrid(64, 64)
    vals = [oc.rmc_dp(p, e, grid).cost * e * e for e in (1.0, 0.5, 0.25, 0.1)]
    for v in vals[1:]:
        assert abs(v - vals[0]) <= 1e-12 * abs(vals[0])


def test_grid_refinement_is_monotone(slow):
    vals = [oc.rmc_dp(slow, 1.0, oc.DPGrid(n, n)).cost for n in (64, 128, 256, 512)]
    diffs = [abs(b - a) for a, b in zip(vals, vals[1:])]
    assert diffs[0] > diffs[1] > diffs[2]


@pytest.mark.parametrize("p,expected", [
    (problem("1", "2", 1.0, 2.0), 1.0),
    (problem("2-z", "1", 1.0, 0.3), 0.96328),
    (problem("1", "1", 1.0, 1.0), 0.0),
])
def test_oracle_matches_closed_form(p, expected):
    got = oc.rmc_dp(p, 1.0, oc.DPGrid(512, 512)).cost * 0.5
    assert abs(got - expected / 2) <= 0.05 * max(expected / 2, 1e-12) + 1e-12


def test_structure_of_optimal_paths(fast, slow):
    for p in (fast, slow):
        sol = oc.rmc_dp(p, 1.0, oc.DPGrid(256, 256))
        rep = oc.structure_check(sol, p)
        assert rep.max_downward_cells <= 1.0
        assert rep.wrong_sign_fraction <= 0.02
    free = problem("1", "1", 1.0, 1.0)
    rep = oc.structure_check(oc.rmc_dp(free, 1.0, oc.DPGrid(64, 64)), free)
    assert rep.control_mass == 0.0


def test_armc_reference_value(fast):
    # at eps = 1/2 the cheapest strategy pays rmc = 4 plus 2 for the radial excursion
    sol = oc.armc_dp(fast, 0.5, oc.DPGrid(128, 128, 32))
    assert sol.feasible
    assert sol.cost == pytest.approx(6.0, rel=1e-9)
    assert sol.r[0] == 0.0 and sol.r[-1] == 0.0
    assert np.max(sol.r) <= 0.5 + 1e-12


def test_armc_admissible_and_infeasible():
    free = problem("1", "1", 1.0, 1.0, b="0")
    assert oc.armc_dp(free, 0.2, oc.DPGrid(64, 64, 8)).cost == 0.0
    p = problem("1", "2", 1.0, 2.0)
    sol = oc.armc_dp(p, 0.05, oc.DPGrid(32, 32, 4, r_cell=0.1))
    assert not sol.feasible and math.isinf(sol.cost)


def test_armc_drift_exact_on_aligned_grid(exact):
    sol = oc.armc_dp(exact, 0.05, oc.DPGrid(256, 256, 4, z_nodes="drift"), horizontal=True)
    assert abs(sol.cost * 0.05 - (1 - math.log(2))) <= 0.1 * (1 - math.log(2))


def test_armc_horizontal_needs_b(fast):
    with pytest.raises(MissingFieldError):
        oc.armc_dp(fast, 0.5, oc.DPGrid(32, 32, 4), horizontal=True)


def test_exact_cost_examples():
    assert oc.exact_cost_drift_exact(problem("1", "1", 1.0, 1.0, b="0")) == 0.0
    assert oc.exact_cost_drift_exact(problem("1", "1", 1.0, 1.0, b="1")) == pytest.approx(1.0)
    assert oc.exact_cost_drift_exact(problem("1+z", "1", 1.0, 1.0, b="z")) == pytest.approx(
        1 - math.log(2), abs=1e-10)
    with pytest.raises(MissingFieldError):
        oc.exact_cost_drift_exact(problem("1", "1", 1.0, 1.0))


def test_csv_output(tmp_path, fast):
    sol = oc.rmc_dp(fast, 1.0, oc.DPGrid(32, 32))
    path = tmp_path / "path.csv"
    sol.write_csv(str(path))
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["t", "z", "v"]
    assert len(rows) == len(sol.t) + 1
    assert float(rows[-1][1]) == pytest.approx(1.0)


@pytest.mark.parametrize("kwargs", [dict(n_t=8, n_z=64), dict(n_t=64, n_z=4),
                                    dict(n_t=64, n_z=64, n_r=1),
                                    dict(n_t=64, n_z=64, z_nodes="chebyshev")])
def test_grid_validation(kwargs):
    with pytest.raises(ValueError):
        oc.DPGrid(**kwargs)


def test_eps_validation(fast):
    with pytest.raises(ValueError):
        oc.rmc_dp(fast, 0.0, oc.DPGrid(32, 32))
    with pytest.raises(ValueError):
        oc.armc_dp(fast, -1.0, oc.DPGrid(32, 32))


def test_stencil_halfwidth_covers_the_authority():
    K = oc.stencil_halfwidth(1.0, 2.0, 0.01, 0.01, 1000)
    assert K * 0.01 >= (1.0 + 2.0 * 0.5 * oc.V_CAP_FACTOR) * 0.01 - 1e-12
    assert oc.stencil_halfwidth(1.0, 2.0, 0.01, 0.01, 10) <= 10


@given(st.floats(0.5, 2.0), st.floats(1.2, 3.0))
@settings(max_examples=8, deadline=None)
def test_fast_oracle_tracks_constant_data(al, tfac):
    p = problem("1", repr(al), 1.0, tfac)
    expected = rd.classify(p).constant
    got = oc.rmc_dp(p, 1.0, oc.DPGrid(64, 64)).cost
    assert abs(got - expected) <= 0.05 * expected

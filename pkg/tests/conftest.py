import math

import pytest

from driftrack.fields import ScalarField
from driftrack.reduced import ReducedProblem


def problem(a0, alpha, z_f, T, b=None, tol_T=None):
    dom = (0.0, z_f)
    field = lambda v: v if isinstance(v, ScalarField) else ScalarField.from_expression(v, dom)  # noqa: E731
    return ReducedProblem(field(a0), field(alpha), z_f, T, field(b) if b is not None else None, tol_T)


@pytest.fixture
def fast():
    """Constant data with T > T_Gamma."""
    return problem("1", "2", 1.0, 2.0)


@pytest.fixture
def slow():
    """Decreasing drift with T < T_Gamma."""
    return problem("2-z", "1", 1.0, 0.3)


@pytest.fixture
def exact():
    """T equal to T_Gamma with a horizontal drift."""
    return problem("1+z", "1", 1.0, math.log(2.0), b="z")

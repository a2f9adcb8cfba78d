"""Shared fixtures: a tiny two-generator case with hand-checkable numbers,
a bounded random set factory for property loops, and the acceptance-line
collector that prints one PASS/FAIL line per criterion after the run."""

import numpy as np
import pytest

from gaugedispatch.dispatch import DispatchCase
from gaugedispatch.polytope import InteriorPoint, LinearInequalitySet, ShiftedSet

_CRITERION_LINES = []


def record_criterion(number, passed, detail):
    status = "PASS" if passed else "FAIL"
    _CRITERION_LINES.append(f"[criterion {number}] {status}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if _CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERION_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def criterion_log():
    return record_criterion


def make_bounded_shifted_set(rng, n_dims, n_context=3, extra_rows=4):
    """Random bounded set with a known strictly interior center.

    Rows are a full box plus a few random cuts; b_vec is chosen so a random
    anchor point has hand-picked positive slacks, which the returned
    InteriorPoint reproduces through the generic residual path.
    """
    rows = [np.eye(n_dims), -np.eye(n_dims)]
    if extra_rows:
        cuts = rng.normal(size=(extra_rows, n_dims))
        cuts /= np.linalg.norm(cuts, axis=1, keepdims=True)
        rows.append(cuts)
    a_mat = np.vstack(rows)
    m = a_mat.shape[0]
    b_mat = rng.normal(scale=0.3, size=(m, n_context))
    x = rng.normal(size=n_context)
    anchor = rng.normal(scale=0.5, size=n_dims)
    margin = rng.uniform(0.2, 2.0, size=m)
    b_vec = a_mat @ anchor + margin - b_mat @ x
    base = LinearInequalitySet(a_mat=a_mat, b_mat=b_mat, b_vec=b_vec)
    center = InteriorPoint.for_set(base, x, anchor)
    return ShiftedSet(base=base, center=center), x


@pytest.fixture
def two_gen_case():
    # Reduced set (dep = generator 0) at demand 1.5 has rhs [-0.5, 2, 1.5, 0]
    # and proportional center [1.0] with slacks [0.5, 1.0, 0.5, 1.0].
    return DispatchCase(
        u_min=[0.0, 0.0],
        u_max=[1.0, 2.0],
        cost_quadratic=[1.0, 1.0],
        cost_linear=[0.0, 0.0],
        loads_nominal=[1.5],
    )

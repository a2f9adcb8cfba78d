"""Exact solver, KKT certificate, grid search, and the projection routine."""

import numpy as np
import pytest

from gaugedispatch.dispatch import (
    DispatchCase,
    InfeasibleDemandError,
    Partition,
    build_reduced_set,
    dispatch_cost,
    equality_completion,
)
from gaugedispatch.oracle import (
    ProjectionError,
    grid_search_oracle,
    kkt_certificate,
    project_onto_reduced_set,
    solve_dispatch_exact,
)
from gaugedispatch.polytope import contains


def test_symmetric_quadratic_splits_evenly():
    case = DispatchCase([0.0, 0.0], [1.0, 1.0], [1.0, 1.0], [0.0, 0.0], [1.0])
    u = solve_dispatch_exact(case, [1.0])
    assert np.allclose(u, [0.5, 0.5], atol=1e-9)
    ok, price, worst = kkt_certificate(case, [1.0], u, 1e-8)
    assert ok and price == pytest.approx(1.0, abs=1e-6)
    assert worst <= 1e-7


def test_merit_order_linear_costs():
    # All-linear fleet: the cheap unit fills before the dear one starts.
    case = DispatchCase([0.0, 0.0], [1.0, 1.0], [0.0, 0.0], [1.0, 2.0], [1.5])
    u = solve_dispatch_exact(case, [1.5])
    assert np.allclose(u, [1.0, 0.5])
    ok, _, _ = kkt_certificate(case, [1.5], u, 1e-8)
    assert ok


def test_mixed_fleet_with_marginal_linear_unit():
    # A linear unit priced inside the quadratic unit's range ends up
    # partially loaded; the certificate must still close.
    case = DispatchCase(
        [0.0, 0.0], [2.0, 2.0], [0.5, 0.0], [0.0, 1.0], [2.0]
    )
    u = solve_dispatch_exact(case, [2.0])
    assert abs(float(np.sum(u)) - 2.0) <= 1e-8
    ok, _, worst = kkt_certificate(case, [2.0], u, 1e-8)
    assert ok, f"certificate margin {worst:.3e}"


def test_certificate_rejects_suboptimal_point():
    case = DispatchCase([0.0, 0.0], [1.0, 1.0], [1.0, 1.0], [0.0, 0.0], [1.0])
    ok, _, worst = kkt_certificate(case, [1.0], [0.7, 0.3], 1e-8)
    assert not ok and worst > 0.1


def test_solver_input_validation(two_gen_case):
    with pytest.raises(InfeasibleDemandError):
        solve_dispatch_exact(two_gen_case, [5.0])
    with pytest.raises(ValueError):
        solve_dispatch_exact(two_gen_case, [1.5], tol=0.0)


def test_exact_matches_grid_search():
    rng = np.random.default_rng(41)
    for _ in range(10):
        g = int(rng.integers(2, 4))
        lo = rng.uniform(0.0, 0.3, size=g)
        hi = lo + rng.uniform(0.4, 1.0, size=g)
        case = DispatchCase(
            u_min=lo,
            u_max=hi,
            cost_quadratic=rng.uniform(0.05, 1.0, size=g),
            cost_linear=rng.uniform(0.0, 1.0, size=g),
            loads_nominal=[1.0],
        )
        demand = rng.uniform(
            float(np.sum(lo)) + 0.1, float(np.sum(hi)) - 0.1
        )
        x = [demand]
        u_exact = solve_dispatch_exact(case, x)
        # The grid completes the last generator from the balance, so that
        # coordinate moves off the search lattice whenever its bound binds,
        # and near-tied completions can drift several steps along flat cost
        # directions.  Agreement tightens with the step; 2x the step is the
        # honest tolerance here.
        u_grid = grid_search_oracle(case, x, step=1e-3)
        assert u_grid is not None
        assert np.max(np.abs(u_exact - u_grid)) <= 2e-3
        # The bisection balances demand to 1e-8, so its cost may sit a
        # whisker above the best grid completion.
        assert dispatch_cost(case, u_exact) <= dispatch_cost(case, u_grid) + 1e-6


def test_grid_search_guards():
    case = DispatchCase([0.0] * 4, [1.0] * 4, [1.0] * 4, [0.0] * 4, [2.0])
    with pytest.raises(ValueError):
        grid_search_oracle(case, [2.0], step=1e-2)
    small = DispatchCase([0.0, 0.0], [1.0, 1.0], [1.0, 1.0], [0.0, 0.0], [1.0])
    with pytest.raises(ValueError):
        grid_search_oracle(small, [1.0], step=0.0)


def _reduced_fixture(rng, g):
    lo = rng.uniform(0.0, 0.3, size=g)
    hi = lo + rng.uniform(0.4, 1.2, size=g)
    case = DispatchCase(
        u_min=lo,
        u_max=hi,
        cost_quadratic=rng.uniform(0.05, 1.0, size=g),
        cost_linear=rng.uniform(0.0, 1.0, size=g),
        loads_nominal=[1.0],
    )
    demand = rng.uniform(float(np.sum(lo)) + 0.15, float(np.sum(hi)) - 0.15)
    part = Partition.for_case(g)
    return case, np.array([demand]), build_reduced_set(case, part)


def test_projection_fixes_feasible_points():
    rng = np.random.default_rng(42)
    case, x, reduced = _reduced_fixture(rng, 3)
    ind = list(reduced.partition.ind_indices)
    v = 0.5 * (case.u_min[ind] + case.u_max[ind])
    if contains(reduced.set, x, v, 0.0):
        out = project_onto_reduced_set(reduced, x, v)
        assert np.max(np.abs(out - v)) <= 1e-12


def test_projection_satisfies_variational_inequality():
    # <v - proj, s - proj> <= tol for every feasible s certifies the
    # Euclidean projection, checked on 100 random feasible points per case.
    rng = np.random.default_rng(43)
    for _ in range(10):
        case, x, reduced = _reduced_fixture(rng, int(rng.integers(2, 5)))
        n = case.n_gens - 1
        v = rng.normal(scale=2.0, size=n)
        proj = project_onto_reduced_set(reduced, x, v, 1e-10)
        assert contains(reduced.set, x, proj, 1e-8)
        count = 0
        while count < 100:
            s = rng.uniform(case.u_min[1:] - 0.2, case.u_max[1:] + 0.2)
            if not contains(reduced.set, x, s, 0.0):
                continue
            assert float((v - proj) @ (s - proj)) <= 1e-8
            count += 1


def test_projection_matches_grid_on_2d():
    # Dense reduced-set grid as an independent minimum-distance oracle.
    rng = np.random.default_rng(44)
    for _ in range(5):
        case, x, reduced = _reduced_fixture(rng, 3)
        v = rng.normal(scale=1.5, size=2)
        proj = project_onto_reduced_set(reduced, x, v, 1e-10)
        axes = [
            np.arange(case.u_min[i] - 0.05, case.u_max[i] + 0.05, 1e-3)
            for i in (1, 2)
        ]
        aa, bb = np.meshgrid(*axes, indexing="ij")
        pts = np.column_stack([aa.ravel(), bb.ravel()])
        rhs = reduced.set.rhs(x)
        ok = np.all(pts @ reduced.set.a_mat.T <= rhs + 1e-12, axis=1)
        feas = pts[ok]
        best = feas[np.argmin(np.sum((feas - v) ** 2, axis=1))]
        assert np.max(np.abs(proj - best)) <= 2e-3


def test_projection_completion_is_feasible(two_gen_case):
    reduced = build_reduced_set(two_gen_case, Partition.for_case(2))
    x = np.array([1.5])
    out = project_onto_reduced_set(reduced, x, np.array([5.0]))
    u = equality_completion(reduced.partition, x, out)
    assert np.all(u >= two_gen_case.u_min - 1e-9)
    assert np.all(u <= two_gen_case.u_max + 1e-9)
    with pytest.raises(ValueError):
        project_onto_reduced_set(reduced, x, np.array([5.0]), tol=0.0)


def test_projection_error_reports_residual(two_gen_case, monkeypatch):
    import gaugedispatch.oracle as oracle_mod

    monkeypatch.setattr(oracle_mod, "DYKSTRA_CAP", 1)
    reduced = build_reduced_set(two_gen_case, Partition.for_case(2))
    with pytest.raises(ProjectionError):
        project_onto_reduced_set(reduced, np.array([1.5]), np.array([50.0]))

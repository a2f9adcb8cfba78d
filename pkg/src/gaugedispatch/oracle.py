"""Exact reference solvers used for labels and baselines.

Three independent routes to the dispatch optimum live here:

* a marginal-price bisection that is exact for convex quadratic costs,
  with merit-order filling for the all-linear corner;
* Euclidean projection onto the reduced feasible set by Dykstra's
  alternating scheme, the post-processing baseline;
* a brute-force grid minimizer for tiny fleets, kept deliberately dumb
  so it can arbitrate between the other two.
"""

from __future__ import annotations

import numpy as np

from .dispatch import (
    DispatchCase,
    InfeasibleDemandError,
    ReducedSet,
    _vector,
)
from .polytope import contains

BISECTION_CAP = 200
DYKSTRA_CAP = 10_000
DEFAULT_TOL = 1e-8

# Grid search cost grows as (width/step)^(g-1); refuse beyond 3 generators.
GRID_MAX_GENS = 3


class ProjectionError(RuntimeError):
    """Dykstra iteration failed to converge within the cycle cap."""


def _marginal_cost(case: DispatchCase, u: np.ndarray) -> np.ndarray:
    return 2.0 * case.cost_quadratic * u + case.cost_linear


def _check_demand(case: DispatchCase, demand: float) -> None:
    lo = float(np.sum(case.u_min))
    hi = float(np.sum(case.u_max))
    if not lo < demand < hi:
        raise InfeasibleDemandError(
            f"total demand {demand} outside open interval ({lo}, {hi})"
        )


def _merit_order_fill(case: DispatchCase, demand: float) -> np.ndarray:
    # All-linear costs: cheapest marginal price first, stable on ties.
    u = case.u_min.copy()
    residual = demand - float(np.sum(u))
    for i in np.argsort(case.cost_linear, kind="stable"):
        width = case.u_max[i] - case.u_min[i]
        add = min(residual, float(width))
        u[i] += add
        residual -= add
        if residual <= 0.0:
            break
    return u


def _price_response(case: DispatchCase, lam: float) -> np.ndarray:
    # Output of each generator at marginal price lam. Quadratic units
    # follow the clamped stationarity formula; linear units step from
    # u_min to u_max as lam passes their cost (u_min exactly at it).
    c2 = case.cost_quadratic
    c1 = case.cost_linear
    u = np.empty_like(c2)
    quad = c2 > 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        u[quad] = np.clip(
            (lam - c1[quad]) / (2.0 * c2[quad]), case.u_min[quad], case.u_max[quad]
        )
    lin = ~quad
    u[lin] = np.where(lam > c1[lin], case.u_max[lin], case.u_min[lin])
    return u


def solve_dispatch_exact(case: DispatchCase, x, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Exact minimizer of the dispatch problem.

    Bisects the marginal price until the priced total output meets the
    demand; the priced output is monotone in the price, and the bracket
    from the extreme marginal costs always straddles the demand. Linear
    units make the total jump at their cost, so any remaining imbalance
    after bisection is assigned to the units sitting exactly at the final
    price, cheapest first.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    x = _vector(x, "x")
    demand = float(np.sum(x))
    _check_demand(case, demand)
    if not np.any(case.cost_quadratic > 0.0):
        return _merit_order_fill(case, demand)

    lam_lo = float(np.min(_marginal_cost(case, case.u_min))) - 1.0
    lam_hi = float(np.max(_marginal_cost(case, case.u_max))) + 1.0
    lam = 0.5 * (lam_lo + lam_hi)
    for _ in range(BISECTION_CAP):
        lam = 0.5 * (lam_lo + lam_hi)
        total = float(np.sum(_price_response(case, lam)))
        if abs(total - demand) <= tol:
            break
        if total < demand:
            lam_lo = lam
        else:
            lam_hi = lam
        if lam_hi - lam_lo <= 1e-15 * max(1.0, abs(lam)):
            break
    u = _price_response(case, lam)
    residual = demand - float(np.sum(u))
    if abs(residual) > tol:
        # The bracket collapsed onto a linear unit's cost; that unit is
        # indifferent over its whole band, so it absorbs the residual.
        width = (lam_hi - lam_lo) + tol
        marginal = np.flatnonzero(
            (case.cost_quadratic == 0.0) & (np.abs(case.cost_linear - lam) <= width)
        )
        order = marginal[np.argsort(case.cost_linear[marginal], kind="stable")]
        for i in order:
            room_up = float(case.u_max[i] - u[i])
            room_down = float(u[i] - case.u_min[i])
            move = min(residual, room_up) if residual > 0 else max(residual, -room_down)
            u[i] += move
            residual -= move
            if abs(residual) <= tol:
                break
        if abs(residual) > tol:
            raise RuntimeError(
                f"bisection left an unassignable imbalance {residual:.3e} "
                f"at price {lam:.6g}"
            )
    return u


def kkt_certificate(case: DispatchCase, x, u, tol: float = DEFAULT_TOL):
    """Check the stationarity/complementarity conditions at ``u``.

    Returns (ok, price, worst) where ``price`` is the candidate marginal
    price and ``worst`` the largest violated margin. Conditions, all with
    slack 10*tol: units strictly inside their band have marginal cost
    equal to the price, units at the lower bound have it above, units at
    the upper bound below; the balance residual also counts.
    """
    u = _vector(u, "u")
    x = _vector(x, "x")
    slack = 10.0 * tol
    mc = _marginal_cost(case, u)
    at_lo = u <= case.u_min + slack
    at_hi = u >= case.u_max - slack
    free = ~(at_lo | at_hi)
    if np.any(free):
        lam = float(np.mean(mc[free]))
    elif np.any(at_lo) and np.any(at_hi):
        # Price must sit between the dearest saturated and the cheapest
        # idle unit; the midpoint exposes any overlap as a violation.
        lam = float(0.5 * (np.max(mc[at_hi]) + np.min(mc[at_lo])))
    elif np.any(at_lo):
        lam = float(np.min(mc[at_lo]))
    else:
        lam = float(np.max(mc[at_hi]))
    worst = abs(float(np.sum(u)) - float(np.sum(x)))
    if np.any(free):
        worst = max(worst, float(np.max(np.abs(mc[free] - lam))))
    if np.any(at_lo):
        worst = max(worst, float(np.max(lam - mc[at_lo])))
    if np.any(at_hi):
        worst = max(worst, float(np.max(mc[at_hi] - lam)))
    return worst <= slack, lam, worst


def _reduced_bounds(rs: ReducedSet, x):
    # Recover the box and the two demand-coupling rows from the stacked
    # system [(i) -1'; (ii) I; (iii) 1'; (iv) -I].
    n = rs.set.n_dims
    a = rs.set.a_mat
    expected = np.vstack([-np.ones((1, n)), np.eye(n), np.ones((1, n)), -np.eye(n)])
    if a.shape != expected.shape or not np.array_equal(a, expected):
        raise ValueError("set rows are not in the reduced-dispatch block layout")
    rhs = rs.set.rhs(x)
    sum_lo = -rhs[0]
    hi = rhs[1 : n + 1]
    sum_hi = rhs[n + 1]
    lo = -rhs[n + 2 :]
    return lo, hi, sum_lo, sum_hi


def project_onto_reduced_set(
    rs: ReducedSet, x, v, tol: float = DEFAULT_TOL
) -> np.ndarray:
    """Euclidean projection of ``v`` onto the reduced feasible set via
    Dykstra's alternating projections over the box and the two
    total-output halfspaces.

    Stops once a full cycle moves the iterate by at most ``tol`` in the
    max norm and the iterate passes the membership test at 1e-8; raises
    :class:`ProjectionError` with residual diagnostics at the cycle cap.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    v = _vector(v, "v")
    lo, hi, sum_lo, sum_hi = _reduced_bounds(rs, x)
    n = v.shape[0]

    def proj_box(p):
        return np.clip(p, lo, hi)

    def proj_sum_hi(p):
        excess = float(np.sum(p)) - sum_hi
        return p - (excess / n) if excess > 0.0 else p

    def proj_sum_lo(p):
        deficit = sum_lo - float(np.sum(p))
        return p + (deficit / n) if deficit > 0.0 else p

    steps = (proj_box, proj_sum_hi, proj_sum_lo)
    inc = [np.zeros(n) for _ in steps]
    y = v.copy()
    for _ in range(DYKSTRA_CAP):
        moved = 0.0
        for k, proj in enumerate(steps):
            shifted = y + inc[k]
            y_next = proj(shifted)
            inc[k] = shifted - y_next
            moved = max(moved, float(np.max(np.abs(y_next - y))))
            y = y_next
        if moved <= tol and contains(rs.set, x, y, 1e-8):
            return y
    residual = float(np.max(rs.set.residual(x, y)))
    raise ProjectionError(
        f"no convergence in {DYKSTRA_CAP} cycles: last cycle moved {moved:.3e}, "
        f"worst constraint residual {residual:.3e}"
    )


def grid_search_oracle(case: DispatchCase, x, step: float):
    """Brute-force minimizer on a regular grid, exact in the balance.

    Grids every generator but the last at resolution ``step``, completes
    the last one from the balance, and keeps the cheapest completion that
    respects all bounds. Returns None when no grid point is feasible.
    Refuses fleets larger than 3 generators.
    """
    if case.n_gens > GRID_MAX_GENS:
        raise ValueError(
            f"grid search supports at most {GRID_MAX_GENS} generators, "
            f"case has {case.n_gens}"
        )
    if step <= 0:
        raise ValueError("step must be positive")
    x = _vector(x, "x")
    demand = float(np.sum(x))

    def axis(i):
        pts = np.arange(case.u_min[i], case.u_max[i], step)
        return np.append(pts, case.u_max[i])

    grids = np.meshgrid(*(axis(i) for i in range(case.n_gens - 1)), indexing="ij")
    head = np.stack([g.ravel() for g in grids], axis=1)
    last = demand - np.sum(head, axis=1)
    ok = (last >= case.u_min[-1] - 1e-12) & (last <= case.u_max[-1] + 1e-12)
    if not np.any(ok):
        return None
    head = head[ok]
    last = np.clip(last[ok], case.u_min[-1], case.u_max[-1])
    full = np.column_stack([head, last])
    costs = full @ case.cost_linear + (full * full) @ case.cost_quadratic
    return full[int(np.argmin(costs))]

"""Economic dispatch model: problem data, equality completion, reduction.

The problem is

    min f(u)  s.t.  1'u = 1'x,  u_min <= u <= u_max

with a quadratic cost f(u) = sum_i (c2_i u_i^2 + c1_i u_i). Eliminating one
generator through the balance equation turns the feasible region into a
pure inequality set over the remaining g-1 outputs, which is where the
gauge machinery operates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .polytope import InteriorPoint, LinearInequalitySet, _vector


class InfeasibleDemandError(ValueError):
    """Total demand falls outside the open capacity interval."""


class DegenerateCapacityError(ValueError):
    """Total minimum and maximum capacity coincide; the ratio in the
    intuitive solution is undefined."""


@dataclass(frozen=True)
class DispatchCase:
    """Generator fleet and nominal nodal loads, all in per-unit.

    ``cost_quadratic`` and ``cost_linear`` are the per-generator
    coefficients of f(u) = sum(c2 u^2 + c1 u). Loads are kept as a full
    nodal vector; the constraints only ever see their sum.
    """

    u_min: np.ndarray
    u_max: np.ndarray
    cost_quadratic: np.ndarray
    cost_linear: np.ndarray
    loads_nominal: np.ndarray

    def __post_init__(self):
        lo = _vector(self.u_min, "u_min")
        hi = _vector(self.u_max, "u_max")
        c2 = _vector(self.cost_quadratic, "cost_quadratic")
        c1 = _vector(self.cost_linear, "cost_linear")
        loads = _vector(self.loads_nominal, "loads_nominal")
        g = lo.shape[0]
        if g < 2:
            raise ValueError("need at least two generators")
        if hi.shape[0] != g or c2.shape[0] != g or c1.shape[0] != g:
            raise ValueError("generator vectors disagree in length")
        if np.any(lo > hi):
            bad = int(np.argmax(lo > hi))
            raise ValueError(f"u_min exceeds u_max at generator {bad}")
        if np.any(c2 < 0):
            bad = int(np.argmax(c2 < 0))
            raise ValueError(f"negative quadratic cost at generator {bad}")
        for arr in (lo, hi, c2, c1, loads):
            arr.setflags(write=False)
        object.__setattr__(self, "u_min", lo)
        object.__setattr__(self, "u_max", hi)
        object.__setattr__(self, "cost_quadratic", c2)
        object.__setattr__(self, "cost_linear", c1)
        object.__setattr__(self, "loads_nominal", loads)

    @property
    def n_gens(self) -> int:
        return self.u_min.shape[0]

    @property
    def n_loads(self) -> int:
        return self.loads_nominal.shape[0]


def dispatch_cost(case: DispatchCase, u) -> float:
    """Quadratic production cost sum(c2 u^2 + c1 u)."""
    u = _vector(u, "u")
    return float(np.sum(case.cost_quadratic * u * u + case.cost_linear * u))


@dataclass(frozen=True)
class Partition:
    """Split of the generators into one dependent and g-1 independent ones.

    The dependent output is recovered from the balance equation; the
    independent ones, in the order listed, are the free coordinates of
    the reduced set.
    """

    dep_index: int
    ind_indices: tuple

    def __post_init__(self):
        dep = int(self.dep_index)
        ind = tuple(int(i) for i in self.ind_indices)
        if dep in ind:
            raise ValueError("dep_index appears among ind_indices")
        if sorted((dep,) + ind) != list(range(len(ind) + 1)):
            raise ValueError("partition must cover each generator exactly once")
        object.__setattr__(self, "dep_index", dep)
        object.__setattr__(self, "ind_indices", ind)

    @classmethod
    def for_case(cls, n_gens: int, dep_index: int = 0) -> "Partition":
        """Dependent generator plus the rest in ascending order. The first
        generator is the default dependent one."""
        if not 0 <= dep_index < n_gens:
            raise ValueError(f"dep_index {dep_index} out of range for {n_gens} generators")
        ind = tuple(i for i in range(n_gens) if i != dep_index)
        return cls(dep_index=dep_index, ind_indices=ind)

    @property
    def n_ind(self) -> int:
        return len(self.ind_indices)


def intuitive_solution(case: DispatchCase, x) -> np.ndarray:
    """Proportional interior dispatch: every generator sits at the same
    fraction of its band, and the fraction is chosen so the total meets
    the demand:

        u_o = u_min + ((1'x - 1'u_min) / (1'u_max - 1'u_min)) (u_max - u_min)

    Strictly interior in every coordinate with positive box width whenever
    the total demand is strictly inside the capacity interval.
    """
    x = _vector(x, "x")
    demand = float(np.sum(x))
    lo_total = float(np.sum(case.u_min))
    hi_total = float(np.sum(case.u_max))
    width = hi_total - lo_total
    if width <= 0.0:
        raise DegenerateCapacityError(
            f"total capacity interval has zero width ({lo_total} = {hi_total})"
        )
    if not lo_total < demand < hi_total:
        raise InfeasibleDemandError(
            f"total demand {demand} outside open interval ({lo_total}, {hi_total})"
        )
    ratio = (demand - lo_total) / width
    return case.u_min + ratio * (case.u_max - case.u_min)


def equality_completion(partition: Partition, x, u_ind) -> np.ndarray:
    """Fill in the dependent output so the balance holds exactly:
    u_dep = 1'x - 1'u_ind, components placed per the partition."""
    x = _vector(x, "x")
    u_ind = _vector(u_ind, "u_ind")
    if u_ind.shape[0] != partition.n_ind:
        raise ValueError(
            f"u_ind has length {u_ind.shape[0]}, partition expects {partition.n_ind}"
        )
    u = np.empty(partition.n_ind + 1)
    u[list(partition.ind_indices)] = u_ind
    u[partition.dep_index] = np.sum(x) - np.sum(u_ind)
    return u


def completion_cotangent(partition: Partition, w) -> np.ndarray:
    """Pull a gradient on the full vector back to the independent block.

    Each independent output feeds itself and, with weight -1, the
    dependent one, so the cotangent is w_ind - w_dep.
    """
    w = _vector(w, "w")
    if w.shape[0] != partition.n_ind + 1:
        raise ValueError(
            f"w has length {w.shape[0]}, partition expects {partition.n_ind + 1}"
        )
    return w[list(partition.ind_indices)] - w[partition.dep_index]


@dataclass(frozen=True)
class ReducedSet:
    """The inequality description of the feasible independent outputs.

    Rows, in order: (i) dependent upper bound, (ii) independent upper
    bounds, (iii) dependent lower bound, (iv) independent lower bounds.
    Membership here is equivalent to full feasibility of the completion.
    """

    set: LinearInequalitySet
    partition: Partition


def build_reduced_set(case: DispatchCase, partition: Partition) -> ReducedSet:
    """Substitute the completion into the box constraints.

    With u_dep = 1'x - 1'u_ind the four blocks become

        (i)   -1' u_ind <= -1' x + u_max,dep
        (ii)    I u_ind <=  u_max,ind
        (iii)  1' u_ind <=  1' x - u_min,dep
        (iv)   -I u_ind <= -u_min,ind

    giving 2g rows over g-1 variables with the load vector as context.
    """
    if partition.n_ind + 1 != case.n_gens:
        raise ValueError("partition size does not match the case")
    n = partition.n_ind
    d = case.n_loads
    ind = list(partition.ind_indices)
    dep = partition.dep_index
    eye = np.eye(n)
    ones_row = np.ones((1, n))
    a_mat = np.vstack([-ones_row, eye, ones_row, -eye])
    b_mat = np.zeros((2 * case.n_gens, d))
    b_mat[0, :] = -1.0
    b_mat[n + 1, :] = 1.0
    b_vec = np.concatenate(
        [
            [case.u_max[dep]],
            case.u_max[ind],
            [-case.u_min[dep]],
            -case.u_min[ind],
        ]
    )
    return ReducedSet(
        set=LinearInequalitySet(a_mat=a_mat, b_mat=b_mat, b_vec=b_vec),
        partition=partition,
    )


def reduced_interior_point(
    case: DispatchCase, partition: Partition, x
) -> InteriorPoint:
    """Independent components of the proportional dispatch, with slacks
    verified against the reduced set. Raises the interiority error when a
    zero-width independent box pins a coordinate to its own boundary."""
    u_o = intuitive_solution(case, x)
    reduced = build_reduced_set(case, partition)
    return InteriorPoint.for_set(reduced.set, x, u_o[list(partition.ind_indices)])


def optimality_gap(predictions, labels) -> float:
    """Mean squared l2 distance (1/N) sum ||u_hat - u_star||^2."""
    if len(predictions) != len(labels):
        raise ValueError("predictions and labels differ in length")
    if len(predictions) == 0:
        raise ValueError("need at least one pair")
    total = 0.0
    for pred, lab in zip(predictions, labels):
        diff = _vector(pred, "prediction") - _vector(lab, "label")
        total += float(diff @ diff)
    return total / len(predictions)


def feasibility_gap(case: DispatchCase, x, u) -> float:
    """Sum of positive bound violations plus the absolute balance residual,
    measured on the full generation vector in per-unit."""
    u = _vector(u, "u")
    x = _vector(x, "x")
    if u.shape[0] != case.n_gens:
        raise ValueError(f"u has length {u.shape[0]}, case has {case.n_gens} generators")
    over = np.maximum(u - case.u_max, 0.0)
    under = np.maximum(case.u_min - u, 0.0)
    balance = abs(float(np.sum(u)) - float(np.sum(x)))
    return float(np.sum(over) + np.sum(under)) + balance

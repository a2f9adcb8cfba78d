"""Linearly-constrained sets and exact Minkowski gauge evaluation.

A set is described by ``A u <= B x + b`` where ``x`` is a context vector
(the right-hand side moves with it). Gauges are evaluated around a strictly
interior point whose row slacks are cached at construction, so repeated
gauge calls cost one matrix-vector product.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Slack at or below this floor means the anchor point cannot serve as a
# gauge pole: the row ratio in the Minkowski function would blow up.
DENOM_FLOOR = 1e-12

# Default bisection settings for the boundary oracle.
BOUNDARY_TOL = 1e-10
RAY_CAP = 1e12


class NonInteriorError(ValueError):
    """Anchor point has a row slack at or below the denominator floor."""


class UnboundedRayError(RuntimeError):
    """A ray from the interior point never leaves the set within the cap.

    This is a signal (the direction is a recession direction), not a hard
    usage error; callers may catch it to detect unbounded sets.
    """


def _vector(v, name: str) -> np.ndarray:
    arr = np.array(v, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-D vector, got shape {arr.shape}")
    return arr


def _matrix(v, name: str) -> np.ndarray:
    arr = np.array(v, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D matrix, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class LinearInequalitySet:
    """The set ``{u : A u <= B x + b}`` for a context vector ``x``.

    ``a_mat`` is m-by-n, ``b_mat`` is m-by-d and ``b_vec`` has length m.
    Arrays are copied and frozen at construction; instances are safe to
    share across threads.
    """

    a_mat: np.ndarray
    b_mat: np.ndarray
    b_vec: np.ndarray

    def __post_init__(self):
        a = _matrix(self.a_mat, "a_mat")
        bm = _matrix(self.b_mat, "b_mat")
        bv = _vector(self.b_vec, "b_vec")
        if a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError("a_mat needs at least one row and one column")
        if bm.shape[0] != a.shape[0] or bv.shape[0] != a.shape[0]:
            raise ValueError(
                f"row counts disagree: a_mat {a.shape[0]}, "
                f"b_mat {bm.shape[0]}, b_vec {bv.shape[0]}"
            )
        for arr in (a, bm, bv):
            arr.setflags(write=False)
        object.__setattr__(self, "a_mat", a)
        object.__setattr__(self, "b_mat", bm)
        object.__setattr__(self, "b_vec", bv)

    @property
    def n_rows(self) -> int:
        return self.a_mat.shape[0]

    @property
    def n_dims(self) -> int:
        return self.a_mat.shape[1]

    @property
    def n_context(self) -> int:
        return self.b_mat.shape[1]

    def rhs(self, x) -> np.ndarray:
        """Right-hand side ``B x + b`` for a given context vector."""
        x = _vector(x, "x")
        if x.shape[0] != self.n_context:
            raise ValueError(
                f"context has length {x.shape[0]}, set expects {self.n_context}"
            )
        return self.b_mat @ x + self.b_vec

    def residual(self, x, u) -> np.ndarray:
        """Per-row residual ``A u - B x - b`` (<= 0 on every row means inside)."""
        u = _vector(u, "u")
        if u.shape[0] != self.n_dims:
            raise ValueError(
                f"point has length {u.shape[0]}, set expects {self.n_dims}"
            )
        return self.a_mat @ u - self.rhs(x)


def contains(s: LinearInequalitySet, x, u, tol: float = 0.0) -> bool:
    """Membership test: every component of ``A u - B x - b`` is <= tol."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    return bool(np.max(s.residual(x, u)) <= tol)


def unit_ball_gauge(v) -> float:
    """Minkowski gauge of the l-infinity unit ball: the max-abs component."""
    v = _vector(v, "v")
    if v.shape[0] == 0:
        raise ValueError("gauge of an empty vector is undefined")
    return float(np.max(np.abs(v)))


@dataclass(frozen=True)
class InteriorPoint:
    """A strictly interior point together with its cached row slacks.

    ``slack = B x + b - A point`` with every component strictly above
    :data:`DENOM_FLOOR`; the slacks are the gauge denominators.
    """

    point: np.ndarray
    slack: np.ndarray

    def __post_init__(self):
        p = _vector(self.point, "point")
        sl = _vector(self.slack, "slack")
        p.setflags(write=False)
        sl.setflags(write=False)
        object.__setattr__(self, "point", p)
        object.__setattr__(self, "slack", sl)

    @classmethod
    def for_set(
        cls, base: LinearInequalitySet, x, point, floor: float = DENOM_FLOOR
    ) -> "InteriorPoint":
        """Compute slacks of ``point`` in ``base`` at context ``x`` and verify
        strict interiority, raising :class:`NonInteriorError` otherwise."""
        slack = -base.residual(x, point)
        worst = int(np.argmin(slack))
        if slack[worst] <= floor:
            raise NonInteriorError(
                f"center not strictly interior: slack {slack[worst]:.3e} "
                f"on row {worst} is at or below the floor {floor:.1e}"
            )
        return cls(point=np.asarray(point, dtype=float), slack=slack)


@dataclass(frozen=True)
class ShiftedSet:
    """The base set translated so the interior point sits at the origin.

    ``v`` belongs to the shifted set exactly when ``center.point + v``
    belongs to ``base`` at the context the center's slacks were computed
    for; callers pass that context alongside the set.
    """

    base: LinearInequalitySet
    center: InteriorPoint

    def __post_init__(self):
        if self.center.point.shape[0] != self.base.n_dims:
            raise ValueError("center dimension does not match the set")
        if self.center.slack.shape[0] != self.base.n_rows:
            raise ValueError("center slack count does not match the set rows")


def shifted_set_gauge(s: ShiftedSet, x, v) -> float:
    """Minkowski gauge of ``v`` on the shifted set: max over rows of
    ``(A_r . v) / slack_r``.

    The value is <= 1 exactly when ``center + v`` lies in the base set at
    context ``x``. It may be negative when ``v`` points into the set along
    every row; no clamp is applied. The zero vector has gauge 0. The cached
    slacks already encode ``x``, so it is trusted here, not recomputed.
    """
    v = _vector(v, "v")
    slack = s.center.slack
    if np.min(slack) <= DENOM_FLOOR:
        raise NonInteriorError("center not strictly interior")
    return float(np.max((s.base.a_mat @ v) / slack))


def gauge_boundary_oracle(
    s: ShiftedSet,
    x,
    direction,
    tol: float = BOUNDARY_TOL,
    cap: float = RAY_CAP,
) -> float:
    """Distance from the center to the set boundary along ``direction``,
    found by bisection on the raw membership test at context ``x``.

    Independent of :func:`shifted_set_gauge`; for any direction with
    positive gauge the result equals ``1 / gauge`` up to ``tol``. Raises
    :class:`UnboundedRayError` when the ray stays inside past ``cap``.
    """
    d = _vector(direction, "direction")
    if not np.any(d):
        raise ValueError("direction must be nonzero")
    center = s.center.point

    def inside(t: float) -> bool:
        return contains(s.base, x, center + t * d, 0.0)

    lo = 0.0
    hi = 1.0
    while inside(hi):
        lo = hi
        hi *= 2.0
        if hi > cap:
            raise UnboundedRayError(
                f"ray still inside the set at t={lo:.3e} (cap {cap:.1e})"
            )
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if inside(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)

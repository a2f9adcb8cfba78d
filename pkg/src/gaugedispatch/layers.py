"""Differentiable feasibility layers built on Minkowski gauges.

Three families, all mapping a raw network output ``v_hat`` into the
reduced feasible set around a strictly interior center:

* traditional: rescale by the ratio of the unit-ball gauge to the set
  gauge, a bijection from the l-infinity ball onto the set;
* variants: same ratio with the ball gauge passed through a monotone
  reshaping (power, exponential, or logarithmic);
* generalized: leave the point alone while its set gauge is at most 1,
  otherwise pull it radially back to the boundary.

Every forward returns a tape holding exactly what the backward needs;
the backward is an exact vector-Jacobian product, single-use per tape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .polytope import DENOM_FLOOR, ShiftedSet, _vector, shifted_set_gauge, unit_ball_gauge

GAUGE_KINDS = ("traditional", "variant_power", "variant_exp", "variant_log", "generalized")

# Floor for the ball gauge when it feeds a ratio or a reshaping slope;
# guards the v_hat -> 0 corner without moving outputs beyond 1e-9.
BALL_FLOOR = 1e-12

# Caller-side slack on the unit-ball precondition of the bounded maps.
BALL_TOL = 1e-9


class GeometryError(ValueError):
    """The set geometry cannot support the requested map evaluation."""


class TapeError(RuntimeError):
    """A layer tape was used more than once."""


@dataclass(frozen=True)
class GaugeLayerConfig:
    """Which feasibility layer to apply.

    ``power_p`` only matters for ``variant_power`` and must be positive
    there; it is ignored for every other kind.
    """

    kind: str
    power_p: float = 2.0

    def __post_init__(self):
        if self.kind not in GAUGE_KINDS:
            raise ValueError(f"unknown gauge kind {self.kind!r}, expected one of {GAUGE_KINDS}")
        if self.kind == "variant_power" and not self.power_p > 0:
            raise ValueError(f"power_p must be positive, got {self.power_p}")


@dataclass
class LayerTape:
    """Forward intermediates for one layer evaluation.

    Every map here has the form ``u = scale(v_hat) * v_hat + center``, so
    the vector-Jacobian product collapses to

        scale * w + dscale * (v_hat . w)

    where ``dscale`` is the gradient of the scale factor (the zero vector
    on the identity and degenerate branches).
    """

    kind: str
    v_hat: np.ndarray
    scale: float
    dscale: np.ndarray
    _used: bool = field(default=False, repr=False)


def _reshape_fns(config: GaugeLayerConfig):
    # Returns (g, g') acting on the ball gauge; g maps [0,1] onto [0,1].
    if config.kind == "traditional":
        return (lambda t: t), (lambda t: 1.0)
    if config.kind == "variant_power":
        p = config.power_p
        return (lambda t: t**p), (lambda t: p * t ** (p - 1.0))
    if config.kind == "variant_exp":
        denom = math.e - 1.0
        return (lambda t: (math.exp(t) - 1.0) / denom), (lambda t: math.exp(t) / denom)
    if config.kind == "variant_log":
        ln2 = math.log(2.0)
        return (lambda t: math.log(t + 1.0) / ln2), (lambda t: 1.0 / ((t + 1.0) * ln2))
    raise ValueError(f"no reshaping for kind {config.kind!r}")


def _check_center(s: ShiftedSet) -> None:
    if np.min(s.center.slack) <= DENOM_FLOOR:
        raise GeometryError("center is not strictly interior to the set")


def _ball_argmax(v_hat: np.ndarray) -> int:
    # Lowest index wins on ties, matching np.argmax.
    return int(np.argmax(np.abs(v_hat)))


def _set_argmax(s: ShiftedSet, v_hat: np.ndarray) -> int:
    return int(np.argmax((s.base.a_mat @ v_hat) / s.center.slack))


def _bounded_forward(config: GaugeLayerConfig, s: ShiftedSet, x, v_hat):
    # Shared path for the traditional map and its reshaped variants.
    _check_center(s)
    v_hat = _vector(v_hat, "v_hat")
    if v_hat.shape[0] != s.base.n_dims:
        raise ValueError(f"v_hat has length {v_hat.shape[0]}, set expects {s.base.n_dims}")
    reshape, reshape_slope = _reshape_fns(config)

    psi_ball = unit_ball_gauge(v_hat)
    if psi_ball > 1.0 + BALL_TOL:
        raise ValueError(
            f"v_hat lies outside the unit ball (max-abs {psi_ball:.6g}); "
            "bounded maps require a bounded activation upstream"
        )
    if psi_ball == 0.0:
        # 0/0 corner: the map's limit is the center, cotangent 0 by convention.
        tape = LayerTape(
            kind=config.kind, v_hat=v_hat, scale=0.0, dscale=np.zeros_like(v_hat)
        )
        return s.center.point.copy(), tape

    psi_set = shifted_set_gauge(s, x, v_hat)
    if psi_set <= DENOM_FLOOR:
        raise GeometryError(
            f"set gauge {psi_set:.3e} vanishes along a nonzero direction; "
            "the set is unbounded that way and the ratio is undefined"
        )
    psi_ball_eff = max(psi_ball, BALL_FLOOR)
    scale = reshape(psi_ball_eff) / psi_set

    # Gradients of the two gauges at the active row / component.
    k = _ball_argmax(v_hat)
    grad_ball = np.zeros_like(v_hat)
    grad_ball[k] = math.copysign(1.0, v_hat[k])
    r = _set_argmax(s, v_hat)
    grad_set = s.base.a_mat[r] / s.center.slack[r]
    dscale = (reshape_slope(psi_ball_eff) / psi_set) * grad_ball - (
        reshape(psi_ball_eff) / psi_set**2
    ) * grad_set

    tape = LayerTape(kind=config.kind, v_hat=v_hat, scale=scale, dscale=dscale)
    return scale * v_hat + s.center.point, tape


def traditional_gauge_forward(s: ShiftedSet, x, v_hat):
    """Map a unit-ball point onto the set: ``(psi_ball / psi_set) v_hat +
    center``. Bijective from the ball onto the set; the zero vector goes
    to the center. Returns the mapped point and the backward tape."""
    return _bounded_forward(GaugeLayerConfig(kind="traditional"), s, x, v_hat)


def variant_gauge_forward(config: GaugeLayerConfig, s: ShiftedSet, x, v_hat):
    """Traditional map with the ball gauge reshaped through ``config``'s
    monotone function (power, exp, or log). Since each reshaping fixes 0
    and 1, outputs stay in the set and the ball boundary still lands on
    the set boundary."""
    if config.kind not in ("variant_power", "variant_exp", "variant_log"):
        raise ValueError(f"variant_gauge_forward got kind {config.kind!r}")
    return _bounded_forward(config, s, x, v_hat)


def generalized_gauge_forward(s: ShiftedSet, x, v_hat):
    """Identity inside, radial pullback outside:

        u = v_hat / max(1, psi_set(v_hat)) + center

    Points with set gauge at most 1 (including exactly 1) are only
    translated; anything further out lands on the set boundary. The input
    is unrestricted."""
    _check_center(s)
    v_hat = _vector(v_hat, "v_hat")
    if v_hat.shape[0] != s.base.n_dims:
        raise ValueError(f"v_hat has length {v_hat.shape[0]}, set expects {s.base.n_dims}")
    psi = shifted_set_gauge(s, x, v_hat)
    if psi <= 1.0:
        tape = LayerTape(
            kind="generalized", v_hat=v_hat, scale=1.0, dscale=np.zeros_like(v_hat)
        )
        return v_hat + s.center.point, tape
    r = _set_argmax(s, v_hat)
    grad_set = s.base.a_mat[r] / s.center.slack[r]
    tape = LayerTape(
        kind="generalized", v_hat=v_hat, scale=1.0 / psi, dscale=-grad_set / psi**2
    )
    return v_hat / psi + s.center.point, tape


def gauge_forward(config: GaugeLayerConfig, s: ShiftedSet, x, v_hat):
    """Route to the configured layer family."""
    if config.kind == "traditional":
        return traditional_gauge_forward(s, x, v_hat)
    if config.kind == "generalized":
        return generalized_gauge_forward(s, x, v_hat)
    return variant_gauge_forward(config, s, x, v_hat)


def gauge_backward(tape: LayerTape, upstream) -> np.ndarray:
    """Exact vector-Jacobian product of the forward that produced ``tape``.

    Ties in either gauge argmax take the lowest index; the generalized
    map uses its identity branch at a set gauge of exactly 1. Each tape
    may be consumed once.
    """
    if tape._used:
        raise TapeError("layer tape already consumed; rerun the forward")
    tape._used = True
    w = _vector(upstream, "upstream")
    if w.shape[0] != tape.v_hat.shape[0]:
        raise ValueError(
            f"upstream has length {w.shape[0]}, tape expects {tape.v_hat.shape[0]}"
        )
    return tape.scale * w + tape.dscale * float(tape.v_hat @ w)


def traditional_gauge_inverse(s: ShiftedSet, x, u_ind) -> np.ndarray:
    """Inverse of the traditional map: rescale ``u - center`` by the ratio
    of the set gauge to the ball gauge. Set points come back inside the
    unit ball; the center maps to the zero vector."""
    _check_center(s)
    u_ind = _vector(u_ind, "u_ind")
    v = u_ind - s.center.point
    psi_ball = unit_ball_gauge(v)
    if psi_ball == 0.0:
        return np.zeros_like(v)
    psi_set = shifted_set_gauge(s, x, v)
    return (psi_set / max(psi_ball, BALL_FLOOR)) * v


def sample_map_distribution(config: GaugeLayerConfig, s: ShiftedSet, x, grid):
    """Push every grid point through the configured layer and pair it with
    its image. The pairs back the scatter exports showing how each map
    spreads (or preserves) a reference cloud of raw outputs."""
    pairs = []
    for v_hat in grid:
        u_ind, _ = gauge_forward(config, s, x, np.asarray(v_hat, dtype=float))
        pairs.append((np.asarray(v_hat, dtype=float), u_ind))
    return pairs

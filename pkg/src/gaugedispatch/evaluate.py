"""Test-split evaluation: gap metrics, per-instance timing, density stats.

Each method is wrapped as a plain ``predict(x) -> u`` callable covering
its whole online path (interior point, network, feasibility treatment,
completion), so the timing comparison charges every method for exactly
what it would run in deployment.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass

import numpy as np

from .dispatch import (
    DispatchCase,
    Partition,
    ReducedSet,
    build_reduced_set,
    equality_completion,
    feasibility_gap,
    intuitive_solution,
    optimality_gap,
)
from .layers import (
    BALL_FLOOR,
    BALL_TOL,
    GaugeLayerConfig,
    GeometryError,
    _reshape_fns,
    gauge_forward,
)
from .neural import Pipeline, mlp_forward
from .oracle import (
    DEFAULT_TOL,
    _reduced_bounds,
    project_onto_reduced_set,
    solve_dispatch_exact,
)
from .polytope import (
    DENOM_FLOOR,
    InteriorPoint,
    NonInteriorError,
    ShiftedSet,
    contains,
)

TIMING_REPEATS = 100
TIMING_WARMUP = 10
TIMING_STATISTIC = "median per instance over repeats, mean over instances"


@dataclass(frozen=True)
class EvalRow:
    """One method's test-split results."""

    method: str
    optimality_gap: float
    feasibility_gap: float
    time_ms: float


def _gauge_applier(
    case: DispatchCase, partition: Partition, reduced: ReducedSet, gauge: GaugeLayerConfig
):
    """Tape-free gauge application for the timed online path.

    Same arithmetic as the layer forward, exploiting the reduced block
    layout [total slack vs dep upper bound; ind upper box; total slack vs
    dep lower bound; ind lower box]: the set gauge is the max over the
    two scalar total-output ratios and the two elementwise box ratios,
    the exact same quotients the row matrix would produce. What it skips
    is the tape, the row matvec, and the container construction, which
    dominate the per-call cost at this output size. Checked against the
    full layer path on the nominal loads here (that catches a silent
    row-layout change) and held to it at 1e-12 on fresh inputs by the
    predictor tests.
    """
    ind = list(partition.ind_indices)
    dep = partition.dep_index
    lo_ind = case.u_min[ind]
    hi_ind = case.u_max[ind]
    lo_dep = case.u_min[dep]
    hi_dep = case.u_max[dep]
    reshape = None if gauge.kind == "generalized" else _reshape_fns(gauge)[0]

    def apply(x, u_o_ind, v_hat):
        total = float(x.sum())
        center_sum = float(u_o_ind.sum())
        slack_top = center_sum - (total - hi_dep)
        slack_bot = (total - lo_dep) - center_sum
        slack_hi = hi_ind - u_o_ind
        slack_lo = u_o_ind - lo_ind
        if (
            min(slack_top, slack_bot) <= DENOM_FLOOR
            or float(slack_hi.min()) <= DENOM_FLOOR
            or float(slack_lo.min()) <= DENOM_FLOOR
        ):
            raise NonInteriorError("interior point slack at or below the floor")
        if reshape is not None:
            psi_ball = float(np.abs(v_hat).max())
            if psi_ball > 1.0 + BALL_TOL:
                raise ValueError(
                    f"v_hat lies outside the unit ball (max-abs {psi_ball:.6g}); "
                    "bounded maps require a bounded activation upstream"
                )
            if psi_ball == 0.0:
                return u_o_ind.copy()
        vsum = float(v_hat.sum())
        psi_set = max(
            -vsum / slack_top,
            vsum / slack_bot,
            float((v_hat / slack_hi).max()),
            float((-v_hat / slack_lo).max()),
        )
        if reshape is None:
            if psi_set <= 1.0:
                return v_hat + u_o_ind
            return v_hat / psi_set + u_o_ind
        if psi_set <= DENOM_FLOOR:
            raise GeometryError(
                f"set gauge {psi_set:.3e} vanishes along a nonzero direction; "
                "the set is unbounded that way and the ratio is undefined"
            )
        return (reshape(max(psi_ball, BALL_FLOOR)) / psi_set) * v_hat + u_o_ind

    # One-time equivalence check against the layer path on the nominal
    # loads, with probes on both sides of the generalized branch switch.
    x0 = case.loads_nominal
    u_o0 = intuitive_solution(case, x0)[ind]
    shifted0 = ShiftedSet(
        base=reduced.set, center=InteriorPoint.for_set(reduced.set, x0, u_o0)
    )
    n = reduced.set.n_dims
    signs = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    probes = [0.25 * signs]
    if reshape is None:
        probes.append(25.0 * signs)
    for probe in probes:
        want, _ = gauge_forward(gauge, shifted0, x0, probe)
        if not np.allclose(apply(x0, u_o0, probe), want, atol=1e-12):
            raise ValueError("online gauge path disagrees with the layer forward")
    return apply


def pipeline_predictor(
    case: DispatchCase, partition: Partition, reduced: ReducedSet, pipeline: Pipeline
):
    """Online path for a trained pipeline: interior point, network, gauge
    layer when configured, completion."""
    ind = np.asarray(partition.ind_indices, dtype=np.intp)
    model = pipeline.model
    gauge = pipeline.gauge
    apply_gauge = _gauge_applier(case, partition, reduced, gauge) if gauge else None

    def predict(x):
        x = np.asarray(x, dtype=float)
        u_o = intuitive_solution(case, x)
        v_hat, _ = mlp_forward(model, x, u_o)
        u_ind = apply_gauge(x, u_o[ind], v_hat) if gauge is not None else v_hat
        return equality_completion(partition, x, u_ind)

    return predict


def projection_predictor(
    case: DispatchCase,
    partition: Partition,
    reduced: ReducedSet,
    model,
    tol: float = DEFAULT_TOL,
):
    """Post-processing baseline: raw network output projected onto the
    reduced feasible set, then completed."""

    def predict(x):
        u_o = intuitive_solution(case, x)
        v_hat, _ = mlp_forward(model, x, u_o)
        u_ind = project_onto_reduced_set(reduced, x, v_hat, tol)
        return equality_completion(partition, x, u_ind)

    return predict


def oracle_predictor(case: DispatchCase, tol: float = DEFAULT_TOL):
    def predict(x):
        return solve_dispatch_exact(case, x, tol)

    return predict


def time_predictor(predict, instances, repeats: int = TIMING_REPEATS, warmup: int = TIMING_WARMUP):
    """Per-instance timing in milliseconds: for each instance, run
    ``warmup`` discarded passes, then ``repeats`` timed single-instance
    passes on the monotonic clock and keep their median."""
    if repeats < 1:
        raise ValueError("repeats must be at least 1")
    medians = []
    for x in instances:
        for _ in range(warmup):
            predict(x)
        samples = []
        for _ in range(repeats):
            t0 = time.perf_counter_ns()
            predict(x)
            samples.append(time.perf_counter_ns() - t0)
        medians.append(statistics.median(samples) / 1e6)
    return medians


def evaluate_method(
    method: str,
    predict,
    test_xs,
    test_labels,
    case: DispatchCase,
    repeats: int = TIMING_REPEATS,
    warmup: int = TIMING_WARMUP,
) -> EvalRow:
    """Gap metrics plus timing for one predictor on the test split."""
    preds = [predict(x) for x in test_xs]
    opt = optimality_gap(preds, test_labels)
    feas = float(np.mean([feasibility_gap(case, x, u) for x, u in zip(test_xs, preds)]))
    med = time_predictor(predict, test_xs, repeats, warmup)
    return EvalRow(
        method=method,
        optimality_gap=opt,
        feasibility_gap=feas,
        time_ms=float(np.mean(med)),
    )


def build_report_rows(
    dataset,
    checkpoints,
    partition: Partition | None = None,
    repeats: int = TIMING_REPEATS,
    warmup: int = TIMING_WARMUP,
    oracle_tol: float = DEFAULT_TOL,
    projection_tol: float = DEFAULT_TOL,
):
    """Evaluate every checkpoint on the dataset's test split.

    Adds two derived rows: the exact solver (both gaps zero by
    construction) and, when a penalty-method checkpoint is present, the
    projection baseline built from the first such model.
    """
    case = dataset.case
    if partition is None:
        partition = Partition.for_case(case.n_gens)
    reduced = build_reduced_set(case, partition)
    test_xs = [dataset.samples[i][0] for i in dataset.test_indices]
    test_labels = [dataset.samples[i][1] for i in dataset.test_indices]

    rows = [
        evaluate_method(
            "exact-solver",
            oracle_predictor(case, oracle_tol),
            test_xs,
            test_labels,
            case,
            repeats,
            warmup,
        )
    ]
    projection_source = None
    for ckpt in checkpoints:
        name = ckpt.method
        if ckpt.gauge is None:
            rho = ckpt.train_meta.get("penalty_rho")
            if rho is not None:
                name = f"{name}(rho={rho:g})"
            if projection_source is None:
                projection_source = ckpt
        pipeline = Pipeline(model=ckpt.model, gauge=ckpt.gauge)
        rows.append(
            evaluate_method(
                name,
                pipeline_predictor(case, partition, reduced, pipeline),
                test_xs,
                test_labels,
                case,
                repeats,
                warmup,
            )
        )
    if projection_source is not None:
        rows.append(
            evaluate_method(
                "projection",
                projection_predictor(
                    case, partition, reduced, projection_source.model, projection_tol
                ),
                test_xs,
                test_labels,
                case,
                repeats,
                warmup,
            )
        )
    return rows


def set_bounding_box(reduced: ReducedSet, x):
    """Tight axis-aligned bounding box of a 2-D reduced set: the box rows
    clipped by the two total-output halfspaces."""
    lo, hi, sum_lo, sum_hi = _reduced_bounds(reduced, x)
    if lo.shape[0] != 2:
        raise ValueError("bounding box helper expects a 2-D set")
    box_lo = np.maximum(lo, sum_lo - hi[::-1])
    box_hi = np.minimum(hi, sum_hi - lo[::-1])
    return box_lo, box_hi


def binned_density_ratio(
    reduced: ReducedSet,
    x,
    points,
    bins: int = 10,
    area_subgrid: int = 20,
) -> float:
    """Unevenness score for a 2-D point cloud over the set: max/min of the
    per-cell point counts across a bins-by-bins grid over the set's
    bounding box.

    Cells are equal-sized, so the count doubles as a density. Only cells
    that overlap the set participate (membership of a regular sub-grid
    decides overlap); an overlapping cell with no points gives an infinite
    ratio, the honest signal that the map left part of the set uncovered.
    """
    box_lo, box_hi = set_bounding_box(reduced, x)
    edges0 = np.linspace(box_lo[0], box_hi[0], bins + 1)
    edges1 = np.linspace(box_lo[1], box_hi[1], bins + 1)
    pts = np.asarray([np.asarray(p, dtype=float) for p in points])
    counts, _, _ = np.histogram2d(pts[:, 0], pts[:, 1], bins=[edges0, edges1])

    # Overlap by membership of a regular sub-grid per cell.
    offsets = (np.arange(area_subgrid) + 0.5) / area_subgrid
    cell_w = (box_hi - box_lo) / bins
    densities = []
    for i in range(bins):
        for j in range(bins):
            corner = box_lo + np.array([i, j]) * cell_w
            overlaps = any(
                contains(reduced.set, x, corner + np.array([a, b]) * cell_w, 1e-12)
                for a in offsets
                for b in offsets
            )
            if overlaps:
                densities.append(counts[i, j])
    if not densities:
        raise ValueError("no grid cell overlaps the set")
    dmin = min(densities)
    dmax = max(densities)
    return float("inf") if dmin == 0.0 else float(dmax / dmin)

"""Learned economic dispatch with hard-feasibility gauge layers.

The package trains a small network to predict generator dispatch and
guarantees constraint satisfaction architecturally: the balance equation
is eliminated by completion, and the remaining inequality set is enforced
by a differentiable gauge map around a strictly interior point. Exact
solvers (marginal-price bisection, Dykstra projection, grid search) serve
as labels and baselines.
"""

from .dispatch import (
    DegenerateCapacityError,
    DispatchCase,
    InfeasibleDemandError,
    Partition,
    ReducedSet,
    build_reduced_set,
    completion_cotangent,
    dispatch_cost,
    equality_completion,
    feasibility_gap,
    intuitive_solution,
    optimality_gap,
    reduced_interior_point,
)
from .layers import (
    GAUGE_KINDS,
    GaugeLayerConfig,
    GeometryError,
    LayerTape,
    TapeError,
    gauge_backward,
    gauge_forward,
    generalized_gauge_forward,
    sample_map_distribution,
    traditional_gauge_forward,
    traditional_gauge_inverse,
    variant_gauge_forward,
)
from .neural import (
    MlpModel,
    Pipeline,
    TrainConfig,
    TrainingDivergedError,
    init_mlp,
    loss_mse,
    loss_penalty,
    mlp_backward,
    mlp_forward,
    train,
)
from .oracle import (
    ProjectionError,
    grid_search_oracle,
    kkt_certificate,
    project_onto_reduced_set,
    solve_dispatch_exact,
)
from .polytope import (
    DENOM_FLOOR,
    InteriorPoint,
    LinearInequalitySet,
    NonInteriorError,
    ShiftedSet,
    UnboundedRayError,
    contains,
    gauge_boundary_oracle,
    shifted_set_gauge,
    unit_ball_gauge,
)

__version__ = "0.1.0"

__all__ = [
    "DENOM_FLOOR",
    "DegenerateCapacityError",
    "DispatchCase",
    "GAUGE_KINDS",
    "GaugeLayerConfig",
    "GeometryError",
    "InfeasibleDemandError",
    "InteriorPoint",
    "LayerTape",
    "LinearInequalitySet",
    "MlpModel",
    "NonInteriorError",
    "Partition",
    "Pipeline",
    "ProjectionError",
    "ReducedSet",
    "ShiftedSet",
    "TapeError",
    "TrainConfig",
    "TrainingDivergedError",
    "UnboundedRayError",
    "build_reduced_set",
    "completion_cotangent",
    "contains",
    "dispatch_cost",
    "equality_completion",
    "feasibility_gap",
    "gauge_backward",
    "gauge_boundary_oracle",
    "gauge_forward",
    "generalized_gauge_forward",
    "grid_search_oracle",
    "init_mlp",
    "intuitive_solution",
    "kkt_certificate",
    "loss_mse",
    "loss_penalty",
    "mlp_backward",
    "mlp_forward",
    "optimality_gap",
    "project_onto_reduced_set",
    "reduced_interior_point",
    "sample_map_distribution",
    "shifted_set_gauge",
    "solve_dispatch_exact",
    "traditional_gauge_forward",
    "traditional_gauge_inverse",
    "train",
    "unit_ball_gauge",
    "variant_gauge_forward",
]

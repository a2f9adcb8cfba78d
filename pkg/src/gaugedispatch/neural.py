"""One-hidden-layer approximator, losses, and the deterministic trainer.

The network maps the concatenated load vector and proportional interior
dispatch to the independent generator outputs. Depending on the pipeline,
its raw output feeds a gauge layer (hard feasibility) or goes straight to
equality completion with the constraint violations penalized in the loss.

Everything is plain numpy with hand-written backward passes so gradients
are exact, seeded, and bit-reproducible: no threading, no shuffling, and
fixed-order accumulation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dispatch import (
    DispatchCase,
    Partition,
    build_reduced_set,
    completion_cotangent,
    equality_completion,
    intuitive_solution,
)
from .layers import GaugeLayerConfig, gauge_backward, gauge_forward
from .polytope import InteriorPoint, ShiftedSet, _vector

HIDDEN_SIZE = 64

OUTPUT_ACTIVATIONS = ("none", "tanh")

OPTIMIZERS = ("sgd", "adam")

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

# Penalty weight tuning range; 0 switches the term off entirely.
RHO_MAX = 100.0
RHO_MIN_POSITIVE = 1e-7


class TrainingDivergedError(RuntimeError):
    """Training loss became non-finite."""


@dataclass
class MlpModel:
    """Fully connected net with one hidden layer and a ReLU.

    ``output_activation`` is ``tanh`` exactly when the downstream layer
    needs unit-ball outputs (the bounded gauge maps); ``none`` otherwise.
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    output_activation: str = "none"

    def __post_init__(self):
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(
                f"output_activation must be one of {OUTPUT_ACTIVATIONS}, "
                f"got {self.output_activation!r}"
            )
        w1 = np.array(self.w1, dtype=float)
        b1 = np.array(self.b1, dtype=float)
        w2 = np.array(self.w2, dtype=float)
        b2 = np.array(self.b2, dtype=float)
        if w1.ndim != 2 or w2.ndim != 2 or b1.ndim != 1 or b2.ndim != 1:
            raise ValueError("w1/w2 must be matrices and b1/b2 vectors")
        if b1.shape[0] != w1.shape[0]:
            raise ValueError("b1 length does not match w1 rows")
        if w2.shape[1] != w1.shape[0]:
            raise ValueError("w2 columns do not match the hidden width")
        if b2.shape[0] != w2.shape[0]:
            raise ValueError("b2 length does not match w2 rows")
        self.w1, self.b1, self.w2, self.b2 = w1, b1, w2, b2

    @property
    def input_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def out_dim(self) -> int:
        return self.w2.shape[0]

    def copy(self) -> "MlpModel":
        return MlpModel(
            w1=self.w1.copy(),
            b1=self.b1.copy(),
            w2=self.w2.copy(),
            b2=self.b2.copy(),
            output_activation=self.output_activation,
        )


def init_mlp(
    input_dim: int,
    out_dim: int,
    output_activation: str = "none",
    hidden: int = HIDDEN_SIZE,
    seed: int = 0,
) -> MlpModel:
    """Seeded uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) initialization for
    each layer, biases included."""
    if input_dim < 1 or out_dim < 1 or hidden < 1:
        raise ValueError("dimensions must be positive")
    rng = np.random.default_rng(seed)
    bound1 = (1.0 / input_dim) ** 0.5
    bound2 = (1.0 / hidden) ** 0.5
    return MlpModel(
        w1=rng.uniform(-bound1, bound1, size=(hidden, input_dim)),
        b1=rng.uniform(-bound1, bound1, size=hidden),
        w2=rng.uniform(-bound2, bound2, size=(out_dim, hidden)),
        b2=rng.uniform(-bound2, bound2, size=out_dim),
        output_activation=output_activation,
    )


@dataclass
class MlpTape:
    """Forward intermediates for one network evaluation."""

    z: np.ndarray
    h: np.ndarray
    relu_mask: np.ndarray
    v_hat: np.ndarray


def mlp_forward(model: MlpModel, x, u_o):
    """Evaluate the network on the concatenated input ``[x; u_o]``.

    With tanh output every component lies strictly inside (-1, 1), which
    is what the bounded gauge maps require.
    """
    x = _vector(x, "x")
    u_o = _vector(u_o, "u_o")
    z = np.concatenate([x, u_o])
    if z.shape[0] != model.input_dim:
        raise ValueError(
            f"input [x; u_o] has length {z.shape[0]}, model expects {model.input_dim}"
        )
    pre = model.w1 @ z + model.b1
    mask = pre > 0.0
    h = np.where(mask, pre, 0.0)
    v = model.w2 @ h + model.b2
    if model.output_activation == "tanh":
        v = np.tanh(v)
    return v, MlpTape(z=z, h=h, relu_mask=mask, v_hat=v)


@dataclass
class MlpGrads:
    """Per-parameter gradients, same shapes as the model."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @classmethod
    def zeros_like(cls, model: MlpModel) -> "MlpGrads":
        return cls(
            w1=np.zeros_like(model.w1),
            b1=np.zeros_like(model.b1),
            w2=np.zeros_like(model.w2),
            b2=np.zeros_like(model.b2),
        )

    def add_(self, other: "MlpGrads") -> None:
        self.w1 += other.w1
        self.b1 += other.b1
        self.w2 += other.w2
        self.b2 += other.b2


def mlp_backward(model: MlpModel, tape: MlpTape, upstream) -> MlpGrads:
    """Exact parameter gradients for one sample. ReLU uses subgradient 0
    at 0, so gradients are deterministic."""
    w = _vector(upstream, "upstream")
    if w.shape[0] != model.out_dim:
        raise ValueError(f"upstream has length {w.shape[0]}, model emits {model.out_dim}")
    if model.output_activation == "tanh":
        w = w * (1.0 - tape.v_hat**2)
    gw2 = np.outer(w, tape.h)
    gb2 = w.copy()
    dh = model.w2.T @ w
    dh = np.where(tape.relu_mask, dh, 0.0)
    gw1 = np.outer(dh, tape.z)
    gb1 = dh
    return MlpGrads(w1=gw1, b1=gb1, w2=gw2, b2=gb2)


def loss_mse(batch_predictions, batch_labels):
    """Mean squared error over the batch, on full-size generation vectors:
    L = (1/N) sum ||u_pred - u_label||^2. Returns the scalar and one
    cotangent (2/N)(u_pred - u_label) per sample."""
    n = len(batch_predictions)
    if n == 0:
        raise ValueError("empty batch")
    if len(batch_labels) != n:
        raise ValueError("batch sizes disagree")
    total = 0.0
    cotangents = []
    for pred, lab in zip(batch_predictions, batch_labels):
        diff = _vector(pred, "prediction") - _vector(lab, "label")
        total += float(diff @ diff)
        cotangents.append((2.0 / n) * diff)
    return total / n, cotangents


def loss_penalty(batch_predictions, batch_labels, case: DispatchCase, batch_x, rho: float):
    """MSE plus a weighted squared-violation term:

        L = mse + rho (1/N) sum_i (||positive bound violations_i||^2
                                   + (1'u_i - 1'x_i)^2)

    The predictions here are raw completions with no gauge layer, so the
    penalty is what discourages infeasibility. ``rho = 0`` reduces to the
    MSE exactly.
    """
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    n = len(batch_predictions)
    base, cotangents = loss_mse(batch_predictions, batch_labels)
    if rho == 0.0:
        return base, cotangents
    extra = 0.0
    for i, (pred, x) in enumerate(zip(batch_predictions, batch_x)):
        u = _vector(pred, "prediction")
        over = np.maximum(u - case.u_max, 0.0)
        under = np.maximum(case.u_min - u, 0.0)
        balance = float(np.sum(u)) - float(np.sum(_vector(x, "x")))
        extra += float(over @ over) + float(under @ under) + balance * balance
        cotangents[i] = cotangents[i] + (2.0 * rho / n) * (over - under + balance)
    return base + rho * extra / n, cotangents


@dataclass(frozen=True)
class TrainConfig:
    """Knobs for one training run. ``penalty_rho`` only matters when the
    pipeline has no gauge layer; accepted values are 0 (term off) or the
    tuning range [1e-7, 100]."""

    seed: int = 0
    epochs: int = 200
    learning_rate: float = 1e-3
    batch_size: int = 32
    penalty_rho: float = 0.0
    optimizer: str = "adam"

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be nonnegative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        rho = self.penalty_rho
        if rho != 0.0 and not RHO_MIN_POSITIVE <= rho <= RHO_MAX:
            raise ValueError(
                f"penalty_rho must be 0 or in [{RHO_MIN_POSITIVE}, {RHO_MAX}], got {rho}"
            )


@dataclass
class Pipeline:
    """A model plus the feasibility treatment of its output.

    ``gauge`` set: raw output -> gauge layer -> completion, trained with
    plain MSE. ``gauge`` None: raw output -> completion, trained with the
    penalty loss (rho from the train config).
    """

    model: MlpModel
    gauge: GaugeLayerConfig | None = None

    def __post_init__(self):
        needs_tanh = self.gauge is not None and self.gauge.kind != "generalized"
        has_tanh = self.model.output_activation == "tanh"
        if needs_tanh != has_tanh:
            raise ValueError(
                "bounded gauge layers need a tanh output and nothing else does: "
                f"gauge={None if self.gauge is None else self.gauge.kind}, "
                f"output_activation={self.model.output_activation}"
            )


@dataclass
class _SampleContext:
    """Per-sample geometry reused across epochs."""

    x: np.ndarray
    u_o: np.ndarray
    shifted: ShiftedSet
    label: np.ndarray


class _Adam:
    def __init__(self, params, lr: float):
        self.lr = lr
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads) -> None:
        self.t += 1
        bc1 = 1.0 - ADAM_BETA1**self.t
        bc2 = 1.0 - ADAM_BETA2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * g * g
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)


class _Sgd:
    def __init__(self, params, lr: float):
        self.lr = lr

    def step(self, params, grads) -> None:
        for p, g in zip(params, grads):
            p -= self.lr * g


def forward_sample(
    pipeline: Pipeline, partition: Partition, ctx: _SampleContext, with_tapes: bool
):
    """One end-to-end prediction: network, optional gauge layer, completion.
    Returns (full u, mlp tape, gauge tape); tapes are None when not kept."""
    v_hat, mlp_tape = mlp_forward(pipeline.model, ctx.x, ctx.u_o)
    gauge_tape = None
    if pipeline.gauge is not None:
        u_ind, gauge_tape = gauge_forward(pipeline.gauge, ctx.shifted, ctx.x, v_hat)
    else:
        u_ind = v_hat
    u_full = equality_completion(partition, ctx.x, u_ind)
    if not with_tapes:
        return u_full, None, None
    return u_full, mlp_tape, gauge_tape


def _backward_sample(pipeline, partition, ctx, mlp_tape, gauge_tape, cot_full):
    w_ind = completion_cotangent(partition, cot_full)
    if gauge_tape is not None:
        w_ind = gauge_backward(gauge_tape, w_ind)
    return mlp_backward(pipeline.model, mlp_tape, w_ind)


def build_sample_contexts(case: DispatchCase, partition: Partition, samples):
    """Precompute interior points and shifted sets for (x, label) pairs."""
    reduced = build_reduced_set(case, partition)
    ind = list(partition.ind_indices)
    contexts = []
    for x, label in samples:
        x = np.asarray(x, dtype=float)
        u_o = intuitive_solution(case, x)
        center = InteriorPoint.for_set(reduced.set, x, u_o[ind])
        contexts.append(
            _SampleContext(
                x=x,
                u_o=u_o,
                shifted=ShiftedSet(base=reduced.set, center=center),
                label=None if label is None else np.asarray(label, dtype=float),
            )
        )
    return contexts


def train(
    pipeline: Pipeline,
    dataset,
    config: TrainConfig,
    partition: Partition | None = None,
    epoch_callback=None,
):
    """Mini-batch gradient descent on the training split.

    Batches are consecutive index chunks in a fixed order (no shuffling),
    so runs with identical seeds and flags are bit-identical. The trace
    holds one entry per epoch: the size-weighted mean of that epoch's
    batch losses, which equals the full-split loss when nothing moves.

    ``epoch_callback(epoch, model, loss)``, when given, runs after each
    epoch's updates; ``epoch`` counts from 1.

    Returns a trained copy of the pipeline's model and the loss trace;
    the input model is left untouched.
    """
    case = dataset.case
    if partition is None:
        partition = Partition.for_case(case.n_gens)
    train_samples = [dataset.samples[i] for i in dataset.train_indices]
    if not train_samples:
        raise ValueError("training split is empty")
    for _, label in train_samples:
        if label is None:
            raise ValueError("training samples must carry oracle labels")

    work = Pipeline(model=pipeline.model.copy(), gauge=pipeline.gauge)
    contexts = build_sample_contexts(case, partition, train_samples)
    params = [work.model.w1, work.model.b1, work.model.w2, work.model.b2]
    opt_cls = _Adam if config.optimizer == "adam" else _Sgd
    opt = opt_cls(params, config.learning_rate)

    n = len(contexts)
    trace = []
    for epoch in range(1, config.epochs + 1):
        weighted = 0.0
        for start in range(0, n, config.batch_size):
            batch = contexts[start : start + config.batch_size]
            preds, mlp_tapes, gauge_tapes = [], [], []
            for ctx in batch:
                u_full, mt, gt = forward_sample(work, partition, ctx, with_tapes=True)
                preds.append(u_full)
                mlp_tapes.append(mt)
                gauge_tapes.append(gt)
            labels = [ctx.label for ctx in batch]
            if work.gauge is not None:
                loss, cots = loss_mse(preds, labels)
            else:
                xs = [ctx.x for ctx in batch]
                loss, cots = loss_penalty(preds, labels, case, xs, config.penalty_rho)
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch starting at {start}"
                )
            grads = MlpGrads.zeros_like(work.model)
            for ctx, mt, gt, cot in zip(batch, mlp_tapes, gauge_tapes, cots):
                grads.add_(_backward_sample(work, partition, ctx, mt, gt, cot))
            opt.step(params, [grads.w1, grads.b1, grads.w2, grads.b2])
            weighted += loss * len(batch)
        epoch_loss = weighted / n
        trace.append(epoch_loss)
        if epoch_callback is not None:
            epoch_callback(epoch, work.model, epoch_loss)
    return work.model, trace

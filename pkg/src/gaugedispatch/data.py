"""Case-file ingestion, dataset generation, and artifact persistence.

The parser reads the MATPOWER text subset the dispatch model needs: bus
active loads, generator limits, and polynomial costs, converted to
per-unit by the case's MVA base. Dataset, checkpoint, and report files
are JSON with versioned schemas (validated on both save and load); all
writers are deterministic, so identical inputs give identical bytes.
"""

from __future__ import annotations

import hashlib
import importlib.resources
import json
import re
from dataclasses import dataclass

import jsonschema
import numpy as np

from .dispatch import (
    DispatchCase,
    InfeasibleDemandError,
    feasibility_gap,
)
from .layers import GaugeLayerConfig
from .neural import MlpModel
from .oracle import DEFAULT_TOL, kkt_certificate, solve_dispatch_exact

SAMPLE_REJECTION_FACTOR = 100

# Persisted labels must stay feasible at least this tightly on reload.
LABEL_GAP_LIMIT = 1e-7

DATASET_SCHEMA_ID = "gaugedispatch-dataset-1"
CHECKPOINT_SCHEMA_ID = "gaugedispatch-checkpoint-1"
REPORT_SCHEMA_ID = "gaugedispatch-report-1"


class CaseParseError(ValueError):
    """The case text does not match the supported MATPOWER subset."""


class CaseTooTightError(RuntimeError):
    """Load sampling could not find enough feasible draws."""


def _schema(name: str) -> dict:
    ref = importlib.resources.files("gaugedispatch.schemas").joinpath(name)
    return json.loads(ref.read_text())


@dataclass(frozen=True)
class CaseFile:
    """Raw case quantities in MW, straight from the file."""

    name: str
    base_mva: float
    bus_ids: np.ndarray
    loads_mw: np.ndarray
    gen_bus: np.ndarray
    pmin_mw: np.ndarray
    pmax_mw: np.ndarray
    cost_quad_mw: np.ndarray
    cost_lin_mw: np.ndarray
    cost_const: np.ndarray

    @property
    def n_gens(self) -> int:
        return self.gen_bus.shape[0]

    @property
    def n_buses(self) -> int:
        return self.bus_ids.shape[0]


def _parse_rows(text: str):
    """Split the file into named bracketed blocks of numeric rows.

    Returns (name, base_mva_with_line, blocks) where blocks maps a field
    name to a list of (line_number, list_of_floats). Rows end at ';' and
    may share a line; '%' starts a comment anywhere.
    """
    name = None
    base = None
    blocks: dict[str, list] = {}
    current = None
    pending = ""
    pending_line = 0

    def finish_row(chunk: str, lineno: int):
        parts = [p for p in re.split(r"[,\s]+", chunk.strip()) if p]
        if not parts:
            return
        try:
            values = [float(p) for p in parts]
        except ValueError:
            raise CaseParseError(
                f"line {lineno}: malformed row {chunk.strip()!r} in mpc.{current}"
            ) from None
        blocks[current].append((lineno, values))

    def feed(content: str, lineno: int):
        nonlocal pending, pending_line, current
        pending_start = pending_line if pending else lineno
        closed = False
        if "]" in content:
            content, _, _ = content.partition("]")
            closed = True
        chunks = content.split(";")
        for chunk in chunks[:-1]:
            finish_row(pending + chunk, pending_start)
            pending = ""
            pending_start = lineno
        tail = chunks[-1]
        if closed:
            finish_row(pending + tail, pending_start)
            pending = ""
            current = None
        else:
            pending += tail + " "
            pending_line = pending_start

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("%", 1)[0].strip()
        if not line:
            continue
        if current is not None:
            feed(line, lineno)
            continue
        m = re.match(r"function\s+mpc\s*=\s*(\w+)", line)
        if m:
            name = m.group(1)
            continue
        m = re.match(r"mpc\.baseMVA\s*=\s*([^;]+);", line)
        if m:
            try:
                base = (float(m.group(1)), lineno)
            except ValueError:
                raise CaseParseError(f"line {lineno}: malformed baseMVA") from None
            continue
        m = re.match(r"mpc\.(\w+)\s*=\s*\[(.*)$", line)
        if m:
            current = m.group(1)
            blocks.setdefault(current, [])
            feed(m.group(2), lineno)
            continue
        # Unrelated assignments (version strings etc.) are ignored.
    if current is not None:
        raise CaseParseError(f"block mpc.{current} never closed with ']'")
    return name, base, blocks


def parse_case(text: str) -> CaseFile:
    """Parse the MATPOWER subset: bus loads, generator limits, polynomial
    costs of degree at most 2, and the MVA base.

    Raises :class:`CaseParseError` citing the offending line for malformed
    rows, unsupported cost models, or missing blocks.
    """
    name, base, blocks = _parse_rows(text)
    if base is None:
        raise CaseParseError("missing mpc.baseMVA assignment")
    base_mva = base[0]
    if base_mva <= 0:
        raise CaseParseError(f"line {base[1]}: baseMVA must be positive")
    for required in ("bus", "gen", "gencost"):
        if required not in blocks or not blocks[required]:
            raise CaseParseError(f"missing or empty mpc.{required} block")

    bus_ids, loads = [], []
    for lineno, row in blocks["bus"]:
        if len(row) < 3:
            raise CaseParseError(f"line {lineno}: bus row needs at least 3 columns")
        bus_ids.append(int(row[0]))
        loads.append(row[2])
    if len(set(bus_ids)) != len(bus_ids):
        raise CaseParseError("duplicate bus ids in mpc.bus")

    gen_bus, pmax, pmin = [], [], []
    for lineno, row in blocks["gen"]:
        if len(row) < 10:
            raise CaseParseError(f"line {lineno}: gen row needs at least 10 columns")
        gen_bus.append(int(row[0]))
        pmax.append(row[8])
        pmin.append(row[9])
    known = set(bus_ids)
    for lineno, row in blocks["gen"]:
        if int(row[0]) not in known:
            raise CaseParseError(f"line {lineno}: gen references unknown bus {int(row[0])}")

    ng = len(gen_bus)
    cost_rows = blocks["gencost"]
    if len(cost_rows) not in (ng, 2 * ng):
        raise CaseParseError(
            f"mpc.gencost has {len(cost_rows)} rows, expected {ng} or {2 * ng}"
        )
    c2, c1, c0 = [], [], []
    for lineno, row in cost_rows[:ng]:
        if len(row) < 4:
            raise CaseParseError(f"line {lineno}: gencost row needs at least 4 columns")
        model = int(row[0])
        if model != 2:
            raise CaseParseError(
                f"line {lineno}: unsupported cost model {model} (only polynomial, model 2)"
            )
        ncost = int(row[3])
        if ncost < 1:
            raise CaseParseError(f"line {lineno}: gencost NCOST must be at least 1")
        if ncost > 3:
            raise CaseParseError(
                f"line {lineno}: unsupported cost degree {ncost - 1} (at most quadratic)"
            )
        if len(row) < 4 + ncost:
            raise CaseParseError(
                f"line {lineno}: gencost row promises {ncost} coefficients "
                f"but has {len(row) - 4}"
            )
        coeffs = row[4 : 4 + ncost]
        padded = [0.0] * (3 - ncost) + list(coeffs)
        c2.append(padded[0])
        c1.append(padded[1])
        c0.append(padded[2])

    return CaseFile(
        name=name or "unnamed",
        base_mva=base_mva,
        bus_ids=np.array(bus_ids, dtype=int),
        loads_mw=np.array(loads, dtype=float),
        gen_bus=np.array(gen_bus, dtype=int),
        pmin_mw=np.array(pmin, dtype=float),
        pmax_mw=np.array(pmax, dtype=float),
        cost_quad_mw=np.array(c2, dtype=float),
        cost_lin_mw=np.array(c1, dtype=float),
        cost_const=np.array(c0, dtype=float),
    )


def to_dispatch_case(cf: CaseFile) -> DispatchCase:
    """Per-unit conversion: power by the MVA base, quadratic costs by its
    square, linear costs by the base itself. The constant cost terms do
    not influence the minimizer and are dropped."""
    base = cf.base_mva
    return DispatchCase(
        u_min=cf.pmin_mw / base,
        u_max=cf.pmax_mw / base,
        cost_quadratic=cf.cost_quad_mw * base * base,
        cost_linear=cf.cost_lin_mw * base,
        loads_nominal=cf.loads_mw / base,
    )


def load_case(path) -> CaseFile:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_case(fh.read())


def sample_loads(case: DispatchCase, count: int, fluctuation: float, seed: int):
    """Draw ``count`` load vectors, each node scaled independently and
    uniformly within ±``fluctuation`` of its nominal value (zero-load
    nodes stay zero). Draws whose total demand is not strictly feasible
    are rejected and redrawn, up to 100x the requested count."""
    if count < 1:
        raise ValueError("count must be at least 1")
    if not 0.0 <= fluctuation < 1.0:
        raise ValueError("fluctuation must be in [0, 1)")
    lo_total = float(np.sum(case.u_min))
    hi_total = float(np.sum(case.u_max))
    nominal_total = float(np.sum(case.loads_nominal))
    if not lo_total < nominal_total < hi_total:
        raise InfeasibleDemandError(
            f"nominal demand {nominal_total} outside open interval "
            f"({lo_total}, {hi_total})"
        )
    rng = np.random.default_rng(seed)
    out = []
    draws = 0
    cap = SAMPLE_REJECTION_FACTOR * count
    while len(out) < count:
        if draws >= cap:
            raise CaseTooTightError(
                f"only {len(out)} of {count} draws feasible after {cap} attempts; "
                "capacity interval too tight for this fluctuation"
            )
        factors = rng.uniform(1.0 - fluctuation, 1.0 + fluctuation, size=case.n_loads)
        x = case.loads_nominal * factors
        draws += 1
        if lo_total < float(np.sum(x)) < hi_total:
            out.append(x)
    return out


@dataclass(frozen=True)
class Dataset:
    """Labeled samples plus their train/test split.

    ``samples`` holds (load vector, oracle label) pairs; indices in
    ``train_indices``/``test_indices`` are disjoint and cover them all.
    ``meta`` records provenance (seed, fluctuation, case name, label tol).
    """

    case: DispatchCase
    samples: tuple
    train_indices: tuple
    test_indices: tuple
    meta: dict

    def __post_init__(self):
        n = len(self.samples)
        combined = sorted(self.train_indices + self.test_indices)
        if combined != list(range(n)):
            raise ValueError("split must cover every sample exactly once")


def build_dataset(
    case: DispatchCase,
    samples,
    split_ratio: float = 0.5,
    tol: float = DEFAULT_TOL,
    seed: int = 0,
    meta: dict | None = None,
) -> Dataset:
    """Label every sample with the exact solver and split deterministically:
    indices are shuffled with the given seed, the first ``split_ratio``
    share becomes the training set. Every label must pass the optimality
    certificate at ``tol``."""
    if not 0.0 < split_ratio < 1.0:
        raise ValueError("split_ratio must be strictly between 0 and 1")
    labeled = []
    for x in samples:
        u_star = solve_dispatch_exact(case, x, tol)
        ok, _, worst = kkt_certificate(case, x, u_star, tol)
        if not ok:
            raise RuntimeError(
                f"oracle label failed its optimality certificate (margin {worst:.3e})"
            )
        labeled.append((np.asarray(x, dtype=float), u_star))
    n = len(labeled)
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(n * split_ratio))
    if n_train == 0 or n_train == n:
        raise ValueError("split leaves one side empty")
    train = tuple(sorted(int(i) for i in perm[:n_train]))
    test = tuple(sorted(int(i) for i in perm[n_train:]))
    full_meta = {"split_seed": seed, "split_ratio": split_ratio, "label_tol": tol}
    if meta:
        full_meta.update(meta)
    return Dataset(
        case=case,
        samples=tuple(labeled),
        train_indices=train,
        test_indices=test,
        meta=full_meta,
    )


def _floats(arr) -> list:
    return [float(v) for v in np.asarray(arr, dtype=float)]


def dataset_to_dict(ds: Dataset) -> dict:
    return {
        "schema": DATASET_SCHEMA_ID,
        "meta": ds.meta,
        "case": {
            "u_min": _floats(ds.case.u_min),
            "u_max": _floats(ds.case.u_max),
            "cost_quadratic": _floats(ds.case.cost_quadratic),
            "cost_linear": _floats(ds.case.cost_linear),
            "loads_nominal": _floats(ds.case.loads_nominal),
        },
        "samples": [
            {"x": _floats(x), "label": _floats(label)} for x, label in ds.samples
        ],
        "split": {
            "train": list(ds.train_indices),
            "test": list(ds.test_indices),
        },
    }


def canonical_json_bytes(doc: dict) -> bytes:
    """Deterministic JSON encoding: sorted keys, fixed separators, floats
    via their shortest round-trip repr."""
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def dataset_fingerprint(ds: Dataset) -> str:
    return hashlib.sha256(canonical_json_bytes(dataset_to_dict(ds))).hexdigest()


def save_dataset(ds: Dataset, path) -> str:
    """Write the dataset JSON and return its content hash."""
    doc = dataset_to_dict(ds)
    jsonschema.validate(doc, _schema("dataset.schema.json"))
    payload = canonical_json_bytes(doc)
    with open(path, "wb") as fh:
        fh.write(payload)
    return hashlib.sha256(payload).hexdigest()


def load_dataset(path) -> Dataset:
    """Read and validate a dataset file; every stored label must still be
    feasible within the persistence limit."""
    with open(path, "rb") as fh:
        doc = json.loads(fh.read().decode("utf-8"))
    jsonschema.validate(doc, _schema("dataset.schema.json"))
    case = DispatchCase(
        u_min=doc["case"]["u_min"],
        u_max=doc["case"]["u_max"],
        cost_quadratic=doc["case"]["cost_quadratic"],
        cost_linear=doc["case"]["cost_linear"],
        loads_nominal=doc["case"]["loads_nominal"],
    )
    samples = []
    for i, rec in enumerate(doc["samples"]):
        x = np.array(rec["x"], dtype=float)
        label = np.array(rec["label"], dtype=float)
        gap = feasibility_gap(case, x, label)
        if gap > LABEL_GAP_LIMIT:
            raise ValueError(
                f"sample {i}: stored label violates feasibility by {gap:.3e}"
            )
        samples.append((x, label))
    return Dataset(
        case=case,
        samples=tuple(samples),
        train_indices=tuple(doc["split"]["train"]),
        test_indices=tuple(doc["split"]["test"]),
        meta=doc["meta"],
    )


def _tensor_to_dict(arr: np.ndarray) -> dict:
    return {"shape": list(arr.shape), "data": _floats(arr.ravel(order="C"))}


def _tensor_from_dict(doc: dict) -> np.ndarray:
    arr = np.array(doc["data"], dtype=float)
    return arr.reshape(doc["shape"], order="C")


@dataclass(frozen=True)
class Checkpoint:
    """A trained model with enough context to rebuild its pipeline."""

    method: str
    model: MlpModel
    gauge: GaugeLayerConfig | None
    train_meta: dict
    dataset_hash: str
    final_loss: float


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    doc = {
        "schema": CHECKPOINT_SCHEMA_ID,
        "method": ckpt.method,
        "gauge": None
        if ckpt.gauge is None
        else {"kind": ckpt.gauge.kind, "power_p": float(ckpt.gauge.power_p)},
        "output_activation": ckpt.model.output_activation,
        "weights": {
            "w1": _tensor_to_dict(ckpt.model.w1),
            "b1": _tensor_to_dict(ckpt.model.b1),
            "w2": _tensor_to_dict(ckpt.model.w2),
            "b2": _tensor_to_dict(ckpt.model.b2),
        },
        "train": ckpt.train_meta,
        "dataset_hash": ckpt.dataset_hash,
        "final_loss": float(ckpt.final_loss),
    }
    jsonschema.validate(doc, _schema("checkpoint.schema.json"))
    with open(path, "wb") as fh:
        fh.write(canonical_json_bytes(doc))


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        doc = json.loads(fh.read().decode("utf-8"))
    jsonschema.validate(doc, _schema("checkpoint.schema.json"))
    model = MlpModel(
        w1=_tensor_from_dict(doc["weights"]["w1"]),
        b1=_tensor_from_dict(doc["weights"]["b1"]),
        w2=_tensor_from_dict(doc["weights"]["w2"]),
        b2=_tensor_from_dict(doc["weights"]["b2"]),
        output_activation=doc["output_activation"],
    )
    gauge = None
    if doc["gauge"] is not None:
        gauge = GaugeLayerConfig(
            kind=doc["gauge"]["kind"], power_p=doc["gauge"]["power_p"]
        )
    return Checkpoint(
        method=doc["method"],
        model=model,
        gauge=gauge,
        train_meta=doc["train"],
        dataset_hash=doc["dataset_hash"],
        final_loss=doc["final_loss"],
    )


def save_report(report_doc: dict, path) -> None:
    jsonschema.validate(report_doc, _schema("report.schema.json"))
    with open(path, "wb") as fh:
        fh.write(canonical_json_bytes(report_doc))


def load_report(path) -> dict:
    with open(path, "rb") as fh:
        doc = json.loads(fh.read().decode("utf-8"))
    jsonschema.validate(doc, _schema("report.schema.json"))
    return doc


def write_trace_csv(trace, path) -> None:
    lines = ["epoch,loss"]
    for i, loss in enumerate(trace, start=1):
        lines.append(f"{i},{float(loss)!r}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_trace_csv(path):
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != "epoch,loss":
        raise ValueError("not a loss trace file (expected 'epoch,loss' header)")
    out = []
    for ln in lines[1:]:
        _, loss = ln.split(",")
        out.append(float(loss))
    return out


def write_points_csv(pairs, path) -> None:
    """Persist 2-D (input, output) pairs as CSV with header v1,v2,u1,u2."""
    lines = ["v1,v2,u1,u2"]
    for v, u in pairs:
        if len(v) != 2 or len(u) != 2:
            raise ValueError("point export needs 2-D inputs and outputs")
        lines.append(f"{float(v[0])!r},{float(v[1])!r},{float(u[0])!r},{float(u[1])!r}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_points_csv(path):
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != "v1,v2,u1,u2":
        raise ValueError("not a point-cloud file (expected 'v1,v2,u1,u2' header)")
    pairs = []
    for ln in lines[1:]:
        a, b, c, d = (float(p) for p in ln.split(","))
        pairs.append((np.array([a, b]), np.array([c, d])))
    return pairs

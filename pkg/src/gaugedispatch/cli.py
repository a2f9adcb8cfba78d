"""Command-line interface: dataset generation, training, evaluation, and
map-distribution export.

Exit codes: 0 on success, 2 for validation problems (bad flags, malformed
or mismatched inputs), 3 for runtime failures (divergence, projection or
sampling non-convergence). Every command is deterministic given its flags
except for the measured timings in evaluation reports.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import data as dio
from .dispatch import Partition, build_reduced_set, intuitive_solution
from .evaluate import (
    TIMING_REPEATS,
    TIMING_STATISTIC,
    TIMING_WARMUP,
    binned_density_ratio,
    build_report_rows,
)
from .figures import render_points, render_report, render_trace
from .layers import GaugeLayerConfig, sample_map_distribution
from .neural import Pipeline, TrainConfig, init_mlp, train
from .polytope import InteriorPoint, ShiftedSet

METHODS = ("penalty", "traditional-gauge", "variant:power", "variant:exp", "variant:log", "generalized-gauge")

_VARIANTS = {"power": "variant_power", "exp": "variant_exp", "log": "variant_log"}


def method_to_gauge(method: str, power_p: float = 2.0):
    """Map a CLI method name to (gauge config, output activation)."""
    if method == "penalty":
        return None, "none"
    if method == "traditional-gauge":
        return GaugeLayerConfig(kind="traditional"), "tanh"
    if method == "generalized-gauge":
        return GaugeLayerConfig(kind="generalized"), "none"
    if method.startswith("variant:"):
        name = method.split(":", 1)[1]
        if name in _VARIANTS:
            return GaugeLayerConfig(kind=_VARIANTS[name], power_p=power_p), "tanh"
    raise ValueError(f"unknown method {method!r}, expected one of {METHODS}")


def _markdown_table(rows) -> str:
    lines = [
        "| Method | Optimality gap | Feasibility gap | Search time (ms) |",
        "| --- | --- | --- | --- |",
    ]
    for r in rows:
        lines.append(
            f"| {r.method} | {r.optimality_gap:.6g} | {r.feasibility_gap:.6g} "
            f"| {r.time_ms:.3f} |"
        )
    return "\n".join(lines) + "\n"


def cmd_gen_data(args) -> int:
    if args.count < 1:
        raise ValueError("--count must be at least 1")
    if not 0.0 <= args.fluct < 1.0:
        raise ValueError("--fluct must be in [0, 1)")
    if not 0.0 < args.split < 1.0:
        raise ValueError("--split must be strictly between 0 and 1")
    case_path = Path(args.case)
    if not case_path.exists():
        raise FileNotFoundError(f"case file not found: {case_path}")
    cf = dio.load_case(case_path)
    case = dio.to_dispatch_case(cf)
    samples = dio.sample_loads(case, args.count, args.fluct, args.seed)
    ds = dio.build_dataset(
        case,
        samples,
        split_ratio=args.split,
        tol=args.tol,
        seed=args.seed,
        meta={
            "case_name": cf.name,
            "count": args.count,
            "fluctuation": args.fluct,
            "sample_seed": args.seed,
        },
    )
    digest = dio.save_dataset(ds, args.out)
    print(
        f"wrote {len(ds.samples)} samples ({len(ds.train_indices)} train / "
        f"{len(ds.test_indices)} test) to {args.out}"
    )
    print(f"dataset hash {digest}")
    return 0


def cmd_train(args) -> int:
    ds = dio.load_dataset(args.dataset)
    gauge, activation = method_to_gauge(args.method, args.power_p)
    config = TrainConfig(
        seed=args.seed,
        epochs=args.epochs,
        learning_rate=args.lr,
        batch_size=args.batch,
        penalty_rho=args.rho,
        optimizer=args.optimizer,
    )
    case = ds.case
    model = init_mlp(
        input_dim=case.n_loads + case.n_gens,
        out_dim=case.n_gens - 1,
        output_activation=activation,
        seed=args.seed,
    )
    pipeline = Pipeline(model=model, gauge=gauge)
    trained, trace = train(pipeline, ds, config)
    ckpt = dio.Checkpoint(
        method=args.method,
        model=trained,
        gauge=gauge,
        train_meta={
            "seed": args.seed,
            "epochs": args.epochs,
            "learning_rate": args.lr,
            "batch_size": args.batch,
            "penalty_rho": args.rho,
            "optimizer": args.optimizer,
        },
        dataset_hash=dio.dataset_fingerprint(ds),
        final_loss=trace[-1],
    )
    dio.save_checkpoint(ckpt, args.out)
    trace_path = args.trace or str(Path(args.out).with_suffix("")) + "_trace.csv"
    dio.write_trace_csv(trace, trace_path)
    fig_path = str(Path(trace_path).with_suffix(".png"))
    render_trace({args.method: trace}, fig_path)
    print(
        f"trained {args.method} for {args.epochs} epochs, final loss {trace[-1]:.6g}"
    )
    print(f"wrote {args.out}, {trace_path}, {fig_path}")
    return 0


def cmd_eval(args) -> int:
    ds = dio.load_dataset(args.dataset)
    digest = dio.dataset_fingerprint(ds)
    checkpoints = []
    for path in args.models:
        ckpt = dio.load_checkpoint(path)
        if ckpt.dataset_hash != digest:
            raise ValueError(
                f"model {path} was trained on a different dataset "
                f"(hash {ckpt.dataset_hash[:12]}, expected {digest[:12]})"
            )
        checkpoints.append(ckpt)
    rows = build_report_rows(ds, checkpoints, repeats=args.repeats, warmup=args.warmup)
    doc = {
        "schema": dio.REPORT_SCHEMA_ID,
        "meta": {
            "case_name": str(ds.meta.get("case_name", "unknown")),
            "dataset_hash": digest,
            "seed": ds.meta.get("sample_seed"),
            "timing": {
                "repeats": args.repeats,
                "warmup": args.warmup,
                "statistic": TIMING_STATISTIC,
            },
        },
        "rows": [
            {
                "method": r.method,
                "optimality_gap": r.optimality_gap,
                "feasibility_gap": r.feasibility_gap,
                "time_ms": r.time_ms,
            }
            for r in rows
        ],
    }
    dio.save_report(doc, args.out)
    table = _markdown_table(rows)
    md_path = str(Path(args.out).with_suffix(".md"))
    with open(md_path, "w", encoding="utf-8") as fh:
        fh.write(table)
    fig_path = str(Path(args.out).with_suffix(".png"))
    render_report(rows, fig_path)
    print(table, end="")
    print(f"wrote {args.out}, {md_path}, {fig_path}")
    return 0


def cmd_mapviz(args) -> int:
    if args.grid < 2:
        raise ValueError("--grid must be at least 2")
    case_path = Path(args.case)
    if not case_path.exists():
        raise FileNotFoundError(f"case file not found: {case_path}")
    cf = dio.load_case(case_path)
    case = dio.to_dispatch_case(cf)
    if case.n_gens != 3:
        raise ValueError(
            f"map export needs a 2-D reduced set (3 generators), case has {case.n_gens}"
        )
    gauge, _ = method_to_gauge(args.layer, args.power_p)
    if gauge is None:
        raise ValueError("the penalty method has no map to export")
    partition = Partition.for_case(case.n_gens)
    reduced = build_reduced_set(case, partition)
    x = case.loads_nominal
    u_o = intuitive_solution(case, x)
    center = InteriorPoint.for_set(reduced.set, x, u_o[list(partition.ind_indices)])
    shifted = ShiftedSet(base=reduced.set, center=center)
    axis = np.linspace(-1.0, 1.0, args.grid)
    grid = [np.array([a, b]) for a in axis for b in axis]
    pairs = sample_map_distribution(gauge, shifted, x, grid)
    dio.write_points_csv(pairs, args.out)
    fig_path = str(Path(args.out).with_suffix(".png"))
    render_points(pairs, fig_path, title=args.layer)
    ratio = binned_density_ratio(reduced, x, [u for _, u in pairs])
    print(f"mapped {len(pairs)} grid points through {args.layer}")
    print(f"binned density ratio {ratio:.3f}")
    print(f"wrote {args.out}, {fig_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gaugedispatch",
        description=(
            "Learned economic dispatch with hard-feasibility gauge layers: "
            "generate labeled datasets, train the methods, evaluate them, "
            "and export map distributions."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="sample perturbed loads and label them exactly")
    p.add_argument("--case", required=True, help="MATPOWER-format case file")
    p.add_argument("--count", type=int, required=True, help="number of samples")
    p.add_argument("--fluct", type=float, default=0.10, help="per-node load fluctuation fraction")
    p.add_argument("--seed", type=int, default=0, help="sampling and split seed")
    p.add_argument("--split", type=float, default=0.5, help="train fraction of the split")
    p.add_argument("--tol", type=float, default=1e-8, help="label solver tolerance")
    p.add_argument("--out", required=True, help="output dataset JSON path")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train one method on a dataset")
    p.add_argument("--dataset", required=True, help="dataset JSON from gen-data")
    p.add_argument("--method", required=True, help=f"one of {', '.join(METHODS)}")
    p.add_argument("--rho", type=float, default=0.0, help="penalty weight (penalty method)")
    p.add_argument("--power-p", type=float, default=2.0, help="exponent for variant:power")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")
    p.add_argument("--out", required=True, help="output checkpoint JSON path")
    p.add_argument("--trace", default=None, help="loss trace CSV path (default: <out>_trace.csv)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate trained models on the test split")
    p.add_argument("--dataset", required=True)
    p.add_argument("--models", nargs="+", required=True, help="checkpoint JSON paths")
    p.add_argument("--repeats", type=int, default=TIMING_REPEATS, help="timed passes per instance")
    p.add_argument("--warmup", type=int, default=TIMING_WARMUP, help="discarded passes per instance")
    p.add_argument("--out", required=True, help="output report JSON path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("mapviz", help="export a gauge map's point distribution")
    p.add_argument("--case", required=True, help="3-generator case file (2-D reduced set)")
    p.add_argument("--layer", required=True, help="gauge layer kind (any non-penalty method)")
    p.add_argument("--grid", type=int, default=51, help="grid resolution per axis")
    p.add_argument("--power-p", type=float, default=2.0, help="exponent for variant:power")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_mapviz)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

"""End-to-end CLI flows on the bundled three-generator demo case."""

import json
from pathlib import Path

import numpy as np
import pytest

from gaugedispatch import cli
from gaugedispatch.data import (
    load_checkpoint,
    load_dataset,
    load_report,
    read_points_csv,
    read_trace_csv,
)

CASE = str(Path(__file__).resolve().parent.parent / "cases" / "case3_demo.m")


def run(argv):
    return cli.main(argv)


@pytest.fixture(scope="module")
def dataset_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "demo_ds.json"
    code = run(
        ["gen-data", "--case", CASE, "--count", "14", "--seed", "3", "--out", str(path)]
    )
    assert code == 0
    return path


def test_gen_data_output(dataset_path):
    ds = load_dataset(dataset_path)
    assert len(ds.samples) == 14
    assert len(ds.train_indices) == 7
    assert ds.meta["case_name"] == "case3_demo"
    for x, label in ds.samples:
        assert abs(float(np.sum(label)) - float(np.sum(x))) < 1e-8


def test_gen_data_rejects_bad_flags(tmp_path):
    assert run(["gen-data", "--case", "missing.m", "--count", "3", "--out", str(tmp_path / "x.json")]) == 2
    assert run(["gen-data", "--case", CASE, "--count", "0", "--out", str(tmp_path / "x.json")]) == 2
    assert run(["gen-data", "--case", CASE, "--count", "3", "--fluct", "1.5", "--out", str(tmp_path / "x.json")]) == 2


def _train(dataset_path, tmp_path, method, extra=()):
    out = tmp_path / f"{method.replace(':', '_')}.json"
    code = run(
        [
            "train",
            "--dataset",
            str(dataset_path),
            "--method",
            method,
            "--epochs",
            "8",
            "--seed",
            "2",
            *extra,
            "--out",
            str(out),
        ]
    )
    assert code == 0
    return out


def test_train_eval_mapviz_pipeline(dataset_path, tmp_path):
    pen = _train(dataset_path, tmp_path, "penalty", ("--rho", "1e-6"))
    gen = _train(dataset_path, tmp_path, "generalized-gauge")

    # Every train writes checkpoint + trace CSV + trace figure.
    assert load_checkpoint(pen).method == "penalty"
    trace = read_trace_csv(tmp_path / "penalty_trace.csv")
    assert len(trace) == 8
    assert (tmp_path / "penalty_trace.png").read_bytes()[:4] == b"\x89PNG"

    report = tmp_path / "report.json"
    code = run(
        [
            "eval",
            "--dataset",
            str(dataset_path),
            "--models",
            str(pen),
            str(gen),
            "--repeats",
            "3",
            "--warmup",
            "1",
            "--out",
            str(report),
        ]
    )
    assert code == 0
    doc = load_report(report)
    methods = [row["method"] for row in doc["rows"]]
    assert methods[0] == "exact-solver"
    assert methods[-1] == "projection"
    assert any(m.startswith("penalty") for m in methods)
    table = (tmp_path / "report.md").read_text(encoding="utf-8")
    assert table.splitlines()[0] == "| Method | Optimality gap | Feasibility gap | Search time (ms) |"
    assert len(table.splitlines()) == 2 + len(methods)
    assert (tmp_path / "report.png").read_bytes()[:4] == b"\x89PNG"

    viz = tmp_path / "gen_map.csv"
    assert run(["mapviz", "--case", CASE, "--layer", "generalized-gauge", "--grid", "15", "--out", str(viz)]) == 0
    pairs = read_points_csv(viz)
    assert len(pairs) == 225
    assert (tmp_path / "gen_map.png").read_bytes()[:4] == b"\x89PNG"


def test_train_rejects_unknown_method(dataset_path, tmp_path):
    assert (
        run(
            [
                "train",
                "--dataset",
                str(dataset_path),
                "--method",
                "oracle",
                "--out",
                str(tmp_path / "x.json"),
            ]
        )
        == 2
    )


def test_eval_rejects_foreign_checkpoint(dataset_path, tmp_path):
    other = tmp_path / "other_ds.json"
    assert run(["gen-data", "--case", CASE, "--count", "6", "--seed", "9", "--out", str(other)]) == 0
    ckpt = _train(other, tmp_path, "penalty", ("--rho", "1e-6"))
    assert (
        run(
            [
                "eval",
                "--dataset",
                str(dataset_path),
                "--models",
                str(ckpt),
                "--out",
                str(tmp_path / "r.json"),
            ]
        )
        == 2
    )


def test_mapviz_rejects_penalty_and_bad_grid(tmp_path):
    assert run(["mapviz", "--case", CASE, "--layer", "penalty", "--out", str(tmp_path / "v.csv")]) == 2
    assert run(["mapviz", "--case", CASE, "--layer", "generalized-gauge", "--grid", "1", "--out", str(tmp_path / "v.csv")]) == 2


def test_report_json_is_schema_valid(dataset_path, tmp_path):
    # load_report re-validates against the bundled schema; also spot-check
    # the metric fields are plain floats.
    pen = _train(dataset_path, tmp_path, "penalty", ("--rho", "1e-6"))
    report = tmp_path / "r.json"
    assert run(
        ["eval", "--dataset", str(dataset_path), "--models", str(pen),
         "--repeats", "2", "--warmup", "1", "--out", str(report)]
    ) == 0
    doc = json.loads(report.read_text(encoding="utf-8"))
    for row in doc["rows"]:
        assert isinstance(row["optimality_gap"], float)
        assert isinstance(row["feasibility_gap"], float)
        assert isinstance(row["time_ms"], float)

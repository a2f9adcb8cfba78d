"""Case parsing, load sampling, and the JSON/CSV persistence layer."""

import numpy as np
import pytest

from gaugedispatch.data import (
    CaseParseError,
    CaseTooTightError,
    Checkpoint,
    build_dataset,
    canonical_json_bytes,
    dataset_fingerprint,
    load_case,
    load_checkpoint,
    load_dataset,
    parse_case,
    read_points_csv,
    read_trace_csv,
    sample_loads,
    save_checkpoint,
    save_dataset,
    to_dispatch_case,
    write_points_csv,
    write_trace_csv,
)
from gaugedispatch.dispatch import DispatchCase
from gaugedispatch.layers import GaugeLayerConfig
from gaugedispatch.neural import init_mlp

MINI_CASE = """
function mpc = mini3
% three buses, three generators, quadratic costs
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
    1  3  30   10  0 0 1 1.0 0 230 1 1.1 0.9;
    2  1  40   12  0 0 1 1.0 0 230 1 1.1 0.9;
    3  1  50   15  0 0 1 1.0 0 230 1 1.1 0.9;
];
mpc.gen = [
    1  60 0 30 -30 1.0 100 1 120 10;
    2  40 0 30 -30 1.0 100 1 150  0;
    3  20 0 30 -30 1.0 100 1 150  0;
];
mpc.gencost = [
    2 0 0 3 0.00050 10.0 0;
    2 0 0 3 0.00025 20.0 0;
    2 0 0 2         15.0 0;
];
"""


def test_parse_case_fields():
    cf = parse_case(MINI_CASE)
    assert cf.name == "mini3"
    assert cf.base_mva == 100.0
    assert np.allclose(cf.loads_mw, [30.0, 40.0, 50.0])
    assert np.allclose(cf.pmax_mw, [120.0, 150.0, 150.0])
    assert np.allclose(cf.pmin_mw, [10.0, 0.0, 0.0])
    assert np.allclose(cf.cost_quad_mw, [0.0005, 0.00025, 0.0])
    # NCOST 2 rows are linear: coefficients right-align into (c1, c0).
    assert np.allclose(cf.cost_lin_mw, [10.0, 20.0, 15.0])
    assert np.allclose(cf.cost_const, [0.0, 0.0, 0.0])


def test_per_unit_conversion():
    case = to_dispatch_case(parse_case(MINI_CASE))
    assert np.allclose(case.u_max, [1.2, 1.5, 1.5])
    assert np.allclose(case.u_min, [0.1, 0.0, 0.0])
    assert np.allclose(case.loads_nominal, [0.3, 0.4, 0.5])
    # c2 MW^-2 scales by base^2, c1 by base: cost in dollars is unchanged.
    assert np.allclose(case.cost_quadratic, [5.0, 2.5, 0.0])
    assert np.allclose(case.cost_linear, [1000.0, 2000.0, 1500.0])


def test_parse_case_error_lines():
    with pytest.raises(CaseParseError):
        parse_case("mpc.baseMVA = 100;")  # no blocks at all
    with pytest.raises(CaseParseError):
        parse_case(MINI_CASE.replace("mpc.baseMVA = 100;", ""))
    with pytest.raises(CaseParseError):
        parse_case(MINI_CASE.replace("2 0 0 3 0.00050 10.0 0;", "1 0 0 3 1 1 1;"))
    with pytest.raises(CaseParseError):
        parse_case(MINI_CASE.replace("2 0 0 3 0.00050 10.0 0;", "2 0 0 5 1 1 1 1 1;"))
    with pytest.raises(CaseParseError):
        parse_case(MINI_CASE.replace("    2  40", "    9  40"))  # unknown bus
    bad_row = MINI_CASE.replace("1  3  30   10", "1  3  oops 10")
    with pytest.raises(CaseParseError):
        parse_case(bad_row)
    with pytest.raises(CaseParseError):
        parse_case(MINI_CASE.replace("];", "", 1))  # bus block never closes


def test_load_case_roundtrip(tmp_path):
    path = tmp_path / "mini3.m"
    path.write_text(MINI_CASE, encoding="utf-8")
    cf = load_case(path)
    assert cf.n_gens == 3 and cf.n_buses == 3


def test_sample_loads_deterministic_and_feasible(two_gen_case):
    a = sample_loads(two_gen_case, 20, 0.3, seed=2)
    b = sample_loads(two_gen_case, 20, 0.3, seed=2)
    assert len(a) == 20
    for xa, xb in zip(a, b):
        assert np.array_equal(xa, xb)
        total = float(np.sum(xa))
        assert 0.0 < total < 3.0
    c = sample_loads(two_gen_case, 5, 0.3, seed=3)
    assert not np.array_equal(a[0], c[0])
    with pytest.raises(ValueError):
        sample_loads(two_gen_case, 0, 0.3, seed=1)
    with pytest.raises(ValueError):
        sample_loads(two_gen_case, 5, 1.0, seed=1)


def test_sample_loads_rejects_impossible_geometry():
    # Feasible totals live in (0.9899, 0.9901), a 2e-4 window that catches
    # only ~0.03% of +/-30% draws around 0.99.
    tight = DispatchCase(
        [0.49495, 0.49495], [0.49505, 0.49505], [1.0, 1.0], [0.0, 0.0], [0.99]
    )
    with pytest.raises(CaseTooTightError):
        sample_loads(tight, 50, 0.3, seed=1)


def test_build_dataset_split_and_labels(two_gen_case):
    xs = sample_loads(two_gen_case, 10, 0.2, seed=4)
    ds = build_dataset(two_gen_case, xs, split_ratio=0.7, seed=4)
    assert len(ds.train_indices) == 7 and len(ds.test_indices) == 3
    assert sorted(ds.train_indices + ds.test_indices) == list(range(10))
    for x, label in ds.samples:
        assert abs(float(np.sum(label)) - float(np.sum(x))) < 1e-8
    with pytest.raises(ValueError):
        build_dataset(two_gen_case, xs, split_ratio=1.0)


def test_dataset_roundtrip_and_fingerprint(two_gen_case, tmp_path):
    xs = sample_loads(two_gen_case, 8, 0.2, seed=5)
    ds = build_dataset(two_gen_case, xs, split_ratio=0.5, seed=5, meta={"case_name": "t"})
    path = tmp_path / "ds.json"
    digest = save_dataset(ds, path)
    again = load_dataset(path)
    assert dataset_fingerprint(again) == dataset_fingerprint(ds)
    assert save_dataset(again, tmp_path / "ds2.json") == digest
    assert (tmp_path / "ds.json").read_bytes() == (tmp_path / "ds2.json").read_bytes()
    assert again.train_indices == ds.train_indices


def test_load_dataset_rejects_infeasible_labels(two_gen_case, tmp_path):
    xs = sample_loads(two_gen_case, 4, 0.2, seed=6)
    ds = build_dataset(two_gen_case, xs, split_ratio=0.5, seed=6, meta={})
    path = tmp_path / "ds.json"
    save_dataset(ds, path)
    text = path.read_text(encoding="utf-8")
    broken = text.replace('"label":[', '"label":[9.0,', 1)
    # Same length again: drop the now-surplus last component of that label.
    head, _, tail = broken.partition('"label":[9.0,')
    close = tail.index("]")
    first = tail[:close].rsplit(",", 1)[0]
    path.write_text(head + '"label":[9.0,' + first + tail[close:], encoding="utf-8")
    with pytest.raises(ValueError):
        load_dataset(path)


def test_canonical_json_is_order_insensitive():
    a = canonical_json_bytes({"b": 1.5, "a": [1.0, 2.0]})
    b = canonical_json_bytes({"a": [1.0, 2.0], "b": 1.5})
    assert a == b == b'{"a":[1.0,2.0],"b":1.5}'


def test_checkpoint_roundtrip(tmp_path):
    model = init_mlp(input_dim=4, out_dim=2, hidden=5, seed=11)
    ckpt = Checkpoint(
        method="generalized-gauge",
        model=model,
        gauge=GaugeLayerConfig(kind="generalized"),
        train_meta={"seed": 11, "epochs": 3},
        dataset_hash="ab" * 32,
        final_loss=0.125,
    )
    path = tmp_path / "ckpt.json"
    save_checkpoint(ckpt, path)
    back = load_checkpoint(path)
    assert back.method == ckpt.method
    assert back.gauge == ckpt.gauge
    assert back.final_loss == 0.125
    for name in ("w1", "b1", "w2", "b2"):
        assert np.array_equal(getattr(back.model, name), getattr(model, name))
    # Penalty checkpoints carry no gauge block.
    plain = Checkpoint(
        method="penalty",
        model=init_mlp(input_dim=4, out_dim=2, seed=0),
        gauge=None,
        train_meta={},
        dataset_hash="cd" * 32,
        final_loss=1.0,
    )
    save_checkpoint(plain, tmp_path / "p.json")
    assert load_checkpoint(tmp_path / "p.json").gauge is None


def test_trace_csv_roundtrip(tmp_path):
    trace = [1.5, 0.25, 0.0625]
    path = tmp_path / "trace.csv"
    write_trace_csv(trace, path)
    assert read_trace_csv(path) == trace
    bad = tmp_path / "bad.csv"
    bad.write_text("loss\n1.0\n", encoding="utf-8")
    with pytest.raises(ValueError):
        read_trace_csv(bad)


def test_points_csv_roundtrip(tmp_path):
    pairs = [
        (np.array([0.1, -0.2]), np.array([1.0, 2.0])),
        (np.array([0.5, 0.5]), np.array([0.25, 0.75])),
    ]
    path = tmp_path / "pts.csv"
    write_points_csv(pairs, path)
    back = read_points_csv(path)
    assert len(back) == 2
    for (v0, u0), (v1, u1) in zip(pairs, back):
        assert np.array_equal(v0, v1) and np.array_equal(u0, u1)
    with pytest.raises(ValueError):
        write_points_csv([(np.zeros(3), np.zeros(3))], tmp_path / "bad.csv")

#!/usr/bin/env python3
"""Generate the synthetic 200-bus benchmark case file.

The repository cannot ship the published 200-bus test system, so this
script fabricates a stand-in with the same shape: 200 buses, 49
generators, MVA base 100, about 2600 MW of nominal load spread over 120
buses, 800 MW of minimum and 4000 MW of maximum capacity, and convex
quadratic costs. Everything is drawn from a fixed seed, so the committed
case file is reproducible byte for byte:

    python tools/gen_benchmark_case.py --out cases/case200_synthetic.m
"""

from __future__ import annotations

import argparse

import numpy as np

SEED = 20240817
N_BUS = 200
N_GEN = 49
N_LOAD = 120
BASE_MVA = 100.0
TOTAL_LOAD_MW = 2600.0
TOTAL_PMAX_MW = 4000.0


def build_case_text() -> str:
    rng = np.random.default_rng(SEED)

    bus_ids = np.arange(1, N_BUS + 1)
    gen_buses = np.unique(np.linspace(1, N_BUS, N_GEN).round().astype(int))
    assert gen_buses.shape[0] == N_GEN

    non_gen = np.setdiff1d(bus_ids, gen_buses)
    load_buses = np.sort(rng.choice(non_gen, size=N_LOAD, replace=False))
    pd = rng.uniform(10.0, 35.0, size=N_LOAD)
    pd *= TOTAL_LOAD_MW / pd.sum()
    pd = pd.round(2)
    pd_by_bus = dict(zip(load_buses.tolist(), pd.tolist()))

    pmax = rng.uniform(40.0, 120.0, size=N_GEN)
    pmax *= TOTAL_PMAX_MW / pmax.sum()
    pmax = pmax.round(1)
    pmin = (rng.uniform(0.10, 0.30, size=N_GEN) * pmax).round(1)

    c2 = rng.uniform(0.003, 0.03, size=N_GEN).round(5)
    c1 = rng.uniform(15.0, 45.0, size=N_GEN).round(2)
    c0 = rng.uniform(0.0, 500.0, size=N_GEN).round(2)

    lines = []
    out = lines.append
    out("function mpc = case200_synthetic")
    out("% Synthetic 200-bus dispatch benchmark.")
    out("% Generated by tools/gen_benchmark_case.py (fixed seed); not a")
    out("% published test system. Shaped like one: 200 buses, 49 generators,")
    out(f"% {TOTAL_LOAD_MW:.0f} MW nominal load, quadratic generation costs.")
    out("")
    out("%% MATPOWER Case Format : Version 2")
    out("mpc.version = '2';")
    out("")
    out("%%-----  Power Flow Data  -----%%")
    out("%% system MVA base")
    out(f"mpc.baseMVA = {BASE_MVA:g};")
    out("")
    out("%% bus data")
    out("%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin")
    out("mpc.bus = [")
    slack = int(gen_buses[0])
    for b in bus_ids:
        b = int(b)
        btype = 3 if b == slack else (2 if b in set(gen_buses.tolist()) else 1)
        p = pd_by_bus.get(b, 0.0)
        q = round(0.3 * p, 2)
        out(f"\t{b}\t{btype}\t{p:g}\t{q:g}\t0\t0\t1\t1\t0\t230\t1\t1.05\t0.95;")
    out("];")
    out("")
    out("%% generator data")
    out(
        "%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin\tPc1\tPc2"
        "\tQc1min\tQc1max\tQc2min\tQc2max\tramp_agc\tramp_10\tramp_30\tramp_q\tapf"
    )
    out("mpc.gen = [")
    for i, b in enumerate(gen_buses):
        pg = round(0.5 * (pmin[i] + pmax[i]), 1)
        out(
            f"\t{int(b)}\t{pg:g}\t0\t50\t-50\t1\t{BASE_MVA:g}\t1\t{pmax[i]:g}"
            f"\t{pmin[i]:g}\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0;"
        )
    out("];")
    out("")
    out("%% branch data (synthetic chain, unused by the dispatch model)")
    out("%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax")
    out("mpc.branch = [")
    for b in range(1, N_BUS):
        out(f"\t{b}\t{b + 1}\t0.01\t0.05\t0.02\t250\t250\t250\t0\t0\t1\t-360\t360;")
    out("];")
    out("")
    out("%%-----  OPF Data  -----%%")
    out("%% generator cost data")
    out("%\t2\tstartup\tshutdown\tn\tc(n-1)\t...\tc0")
    out("mpc.gencost = [")
    for i in range(N_GEN):
        out(f"\t2\t0\t0\t3\t{c2[i]:g}\t{c1[i]:g}\t{c0[i]:g};")
    out("];")
    out("")
    return "\n".join(lines)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="cases/case200_synthetic.m")
    args = parser.parse_args()
    text = build_case_text()
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

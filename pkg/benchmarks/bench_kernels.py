#!/usr/bin/env python3
"""Benchmark the surrogate's kernel backends against each other and
against the eigensolver they replace.

Times the full 4-level forward pass per 32x32 coarse element with the
compiled kernels and the numpy fallback, plus the per-element local
spectral solve (the labeling cost the network displaces).  Writes one
CSV row per configuration.

Usage: python3 benchmarks/bench_kernels.py [--repeats N] [--out bench.csv]
"""

import argparse
import time

import numpy as np

from msgrid import pencil_from_tile, solve_lsp
from msgrid.nn import HAVE_COMPILED, UNetArch, UNetWeights, ops_py, unet_forward
from msgrid.surrogate import standardize_tile

if HAVE_COMPILED:
    from msgrid.nn import _kernels as ops_c


def _time_per_call(fn, repeats):
    fn()  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=50)
    parser.add_argument("--out", default=None)
    parser.add_argument("--levels", type=int, default=4, choices=[2, 3, 4])
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    tile = np.exp(np.sqrt(2.0) * rng.standard_normal((32, 32)))
    x = standardize_tile(tile)
    arch = UNetArch(levels=args.levels, base_channels=16, out_channels=4,
                    input_side=32)
    weights = UNetWeights.random(arch, seed=0)
    pencil = pencil_from_tile(tile, 1 / 32, 1 / 32)

    rows = []
    if HAVE_COMPILED:
        t = _time_per_call(lambda: unet_forward(weights, x, ops=ops_c),
                           args.repeats)
        rows.append(("unet_forward", "compiled", t))
    t = _time_per_call(lambda: unet_forward(weights, x, ops=ops_py),
                       args.repeats)
    rows.append(("unet_forward", "python", t))
    t = _time_per_call(lambda: solve_lsp(pencil, 5), max(args.repeats // 5, 1))
    rows.append(("solve_lsp", "lapack", t))

    print(f"{args.levels}-level U-Net, 32x32 element, {args.repeats} repeats")
    print(f"{'operation':<14} {'backend':<9} {'ms/element':>11}")
    for op, backend, sec in rows:
        print(f"{op:<14} {backend:<9} {sec * 1e3:>11.3f}")
    if HAVE_COMPILED:
        speedup = rows[1][2] / rows[0][2]
        print(f"compiled vs python speedup: {speedup:.2f}x")
        print(f"LSP vs compiled forward: {rows[2][2] / rows[0][2]:.2f}x")

    if args.out:
        import csv
        import os

        write_header = not os.path.exists(args.out)
        with open(args.out, "a", newline="") as fh:
            wr = csv.writer(fh)
            if write_header:
                wr.writerow(["operation", "backend", "levels", "ms_per_element"])
            for op, backend, sec in rows:
                wr.writerow([op, backend, args.levels, f"{sec * 1e3:.4f}"])
        print(f"appended {len(rows)} rows to {args.out}")


if __name__ == "__main__":
    main()

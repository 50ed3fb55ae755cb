#!/usr/bin/env python3
"""Throughput comparison of the compiled and pure-Python IoU kernels.

Times single-pair calls and batched iou_matrix on random rotated boxes,
then cross-checks that both backends agree. Run from the repo root:

    python3 benchmarks/bench_iou.py [--pairs 20000] [--matrix 200]
"""

import argparse
import math
import time

import numpy as np

from bevtrack import _iou_py

try:
    from bevtrack import _iou_core
except ImportError:
    _iou_core = None


def random_boxes(rng, n):
    return np.column_stack([
        rng.uniform(-10, 10, n), rng.uniform(-10, 10, n),
        rng.uniform(0.4, 8.0, n), rng.uniform(0.4, 3.0, n),
        rng.uniform(-math.pi, math.pi, n),
    ])


def bench_pairs(impl, boxes_a, boxes_b):
    fn = impl.rect_iou
    start = time.perf_counter()
    acc = 0.0
    for a, b in zip(boxes_a, boxes_b):
        acc += fn(a[0], a[1], a[2], a[3], a[4], b[0], b[1], b[2], b[3], b[4])
    elapsed = time.perf_counter() - start
    return elapsed, acc


def bench_matrix(impl, boxes_a, boxes_b, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        impl.iou_matrix(boxes_a, boxes_b)
        best = min(best, time.perf_counter() - start)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--pairs", type=int, default=20000)
    parser.add_argument("--matrix", type=int, default=200)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    boxes_a = random_boxes(rng, args.pairs)
    boxes_b = random_boxes(rng, args.pairs)
    mat_a = random_boxes(rng, args.matrix)
    mat_b = random_boxes(rng, args.matrix)

    impls = [("python", _iou_py)]
    if _iou_core is not None:
        impls.append(("compiled", _iou_core))
    else:
        print("compiled extension not available; timing the fallback only")

    results = {}
    for name, impl in impls:
        t_pairs, acc = bench_pairs(impl, boxes_a, boxes_b)
        t_matrix = bench_matrix(impl, mat_a, mat_b)
        results[name] = (t_pairs, t_matrix)
        print(f"{name:>9}: {args.pairs} single calls in {t_pairs:.3f}s "
              f"({args.pairs / t_pairs:,.0f}/s); "
              f"{args.matrix}x{args.matrix} matrix in {t_matrix * 1e3:.1f} ms"
              f"   [checksum {acc:.6f}]")

    if _iou_core is not None:
        sample = rng.integers(0, args.pairs, size=500)
        worst = max(
            abs(_iou_core.rect_iou(*boxes_a[i], *boxes_b[i])
                - _iou_py.rect_iou(*boxes_a[i], *boxes_b[i]))
            for i in sample)
        speedup = results["python"][0] / results["compiled"][0]
        mat_speedup = results["python"][1] / results["compiled"][1]
        print(f"agreement on 500 sampled pairs: max |diff| = {worst:.2e}")
        print(f"speedup: {speedup:.1f}x single calls, "
              f"{mat_speedup:.1f}x batched matrix")


if __name__ == "__main__":
    main()

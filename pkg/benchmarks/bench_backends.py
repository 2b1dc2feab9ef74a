#!/usr/bin/env python3
"""Times the pure-numpy and compiled offset-contraction kernels on the
synthetic-view convolution at full working scale.

Usage: python3 benchmarks/bench_backends.py [--quick]
"""

import argparse
import time

import numpy as np

from cvsynth import SplitMix64
from cvsynth._accel import compiled_or_none, pure
from cvsynth.geometry import rotated_kernels
from cvsynth.synthesis import build_plan


def build_case(shape, channels, angles=(45.0, 30.0, 0.0), seed=0):
    rng = SplitMix64(seed)
    kernel = rotated_kernels(3, [angles])[0]
    plan = build_plan(kernel)
    vol = rng.normal(size=shape + (channels,))
    weights = rng.normal(size=(27, channels, channels), scale=0.1)
    effective = np.einsum("ok,kij->oij", plan.basis, weights)
    dout = rng.normal(size=shape + (channels,))
    return vol, plan.offsets, effective, dout


def time_fn(fn, *args, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - start)
    return best, out


def bench(module, name, vol, offsets, weights, dout, repeats):
    t_fwd, out = time_fn(module.offset_matmul_forward, vol, offsets, weights,
                         repeats=repeats)
    t_bwd_d, _ = time_fn(module.offset_matmul_backward_data, dout, offsets,
                         weights, repeats=repeats)
    t_bwd_w, _ = time_fn(module.offset_matmul_backward_weights, vol, dout,
                         offsets, repeats=repeats)
    print(f"{name:>10}  forward {t_fwd * 1e3:8.2f} ms   "
          f"backward(data) {t_bwd_d * 1e3:8.2f} ms   "
          f"backward(weights) {t_bwd_w * 1e3:8.2f} ms")
    return out


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--quick", action="store_true", help="smaller problem")
    args = parser.parse_args()

    shape = (8, 4, 8) if args.quick else (15, 9, 15)
    channels = 8 if args.quick else 16
    repeats = 3 if args.quick else 5
    vol, offsets, weights, dout = build_case(shape, channels)
    print(f"volume {shape} x {channels} channels, {offsets.shape[0]} offsets")

    out_pure = bench(pure, "pure", vol, offsets, weights, dout, repeats)
    compiled = compiled_or_none()
    if compiled is None:
        print("  compiled  (extension not built)")
        return
    out_comp = bench(compiled, "compiled", vol, offsets, weights, dout, repeats)
    print(f"max |pure - compiled| = {np.max(np.abs(out_pure - out_comp)):.2e}")


if __name__ == "__main__":
    main()

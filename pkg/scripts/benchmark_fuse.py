#!/usr/bin/env python3
"""Fusion throughput on a model-tile-sized bundle.

Builds one 1008x1008 bundle with dense per-instance maps and times the
full pipeline per thread count. The single-thread run is the number that
matters for the <1s-per-tile target.
"""

import argparse
import time

import numpy as np

from ovfuse import (
    CategoryRecord,
    ClassTable,
    FusionConfig,
    HeadBundle,
    InstanceRecord,
    PromptRecord,
    run_pipeline,
)
from ovfuse.rng import CounterRng


def build_bundle(size, n_categories, n_instances, rng):
    block = rng.fill_f32(144 * 144).reshape(144, 144)
    reps = (size + 143) // 144

    def dense_map(shift):
        return np.ascontiguousarray(
            np.roll(np.tile(block, (reps, reps))[:size, :size], shift, axis=1)
        )

    categories = []
    for ci in range(n_categories):
        instances = [
            InstanceRecord(float(0.5 + 0.4 * k / max(1, n_instances)), dense_map(ci * 13 + k), None)
            for k in range(n_instances)
        ]
        categories.append(
            CategoryRecord(
                f"cat{ci:02d}",
                [PromptRecord(f"cat{ci:02d}", 0.9, dense_map(ci * 31), instances)],
            )
        )
    return HeadBundle("bench", size, size, categories)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--size", type=int, default=1008)
    ap.add_argument("--categories", type=int, default=12)
    ap.add_argument("--instances", type=int, default=10)
    ap.add_argument("--threads", type=int, nargs="+", default=[1, 2, 4])
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()

    rng = CounterRng(0xBE7C)
    bundle = build_bundle(args.size, args.categories, args.instances, rng)
    classes = ClassTable(
        tuple(f"cat{ci:02d}" for ci in range(args.categories)) + ("background",),
        background_index=args.categories,
    )
    config = FusionConfig(tau=0.4, instance_conf_threshold=0.55)

    px = args.size * args.size
    print(
        f"bundle: {args.size}x{args.size}, {args.categories} categories x "
        f"(1 semantic + {args.instances} instances)"
    )
    for threads in args.threads:
        run_pipeline(bundle, classes, config, threads=threads)  # warm-up
        best = min(
            _timed(bundle, classes, config, threads) for _ in range(args.repeats)
        )
        print(f"threads={threads}: {best * 1000:7.1f} ms  ({px / best / 1e6:7.1f} Mpx/s)")


def _timed(bundle, classes, config, threads):
    t0 = time.perf_counter()
    run_pipeline(bundle, classes, config, threads=threads)
    return time.perf_counter() - t0


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Time ski_mvm and a full completion as N and the inducing grid grow.

    python scripts/scaling_benchmark.py --repeats 15
"""

import argparse
import time

import numpy as np

from gpdepth.depthmap import TrainingSet
from gpdepth.kernels import GpHyperparams, KernelSpec
from gpdepth.ski import build_ski_model, complete_depth, ski_mvm
from gpdepth.synth import SceneParams, make_scene


def median_seconds(fn, repeats):
    fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def mvm_scaling(repeats, rng):
    spec = KernelSpec()
    shape = (160, 120)
    print(f"ski_mvm, fixed grid {shape[0]}x{shape[1]}")
    print(f"{'N':>8} {'ms':>8} {'ratio':>6}")
    prev = None
    for n in (10_000, 20_000, 40_000, 80_000, 160_000):
        pts = np.column_stack([rng.uniform(0, shape[0] - 1, n), rng.uniform(0, shape[1] - 1, n)])
        train = TrainingSet(pts, rng.uniform(3, 8, n), np.full(n, 0.05))
        model = build_ski_model(train, np.array([[0.0, 0.0], [shape[0] - 1.0, shape[1] - 1.0]]), spec,
                                shape=shape)
        x = rng.normal(size=n)
        t = median_seconds(lambda: ski_mvm(model, x), repeats)
        print(f"{n:>8} {t * 1e3:>8.2f} {'' if prev is None else f'{t / prev:.2f}':>6}")
        prev = t


def completion_scaling(repeats):
    print("\ncomplete_depth on synthetic scenes")
    print(f"{'size':>9} {'pixels':>8} {'s':>7} {'cg it':>6}")
    for w, h in ((100, 75), (200, 150), (400, 300)):
        _, dense, sparse = make_scene(SceneParams(width=w, height=h))
        info = {}

        def go():
            _, info["cg"] = complete_depth(dense, sparse, GpHyperparams(), return_info=True)
        t = median_seconds(go, max(1, repeats // 5))
        print(f"{w:>4}x{h:<4} {w * h:>8} {t:>7.2f} {info['cg'].iterations:>6}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=15)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    mvm_scaling(args.repeats, np.random.default_rng(args.seed))
    completion_scaling(args.repeats)

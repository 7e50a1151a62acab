"""Time the compiled kernels against the pure-Python twins.

Runs each hot kernel on identical inputs under both backends, checks the
outputs agree bit for bit, and prints median wall times plus speedups.
Usage:

    python3 benchmarks/bench_backends.py [--repeats 5] [--batch 512]
"""
import argparse
import math
import statistics
import time

import numpy as np

from redi import (AlphaSchedule, RectifyConfig, RngSpec, StateSpace,
                  TimeGrid, alpha_at, backend, build_random,
                  rectify_sampled, sample_path_states)
from redi.rng import uniform_block


def build_workload(batch):
    space = StateSpace(n=4, d=3)
    rng = RngSpec(90210, "bench")
    c = build_random(space, 300, rng.derived("pairs"))
    sched = AlphaSchedule.linear()
    a_t, a_s = alpha_at(sched, 0.4), alpha_at(sched, 0.6)
    states = sample_path_states(c, 0.4, batch, sched, rng=rng,
                                label="bench_states")
    u_step = uniform_block(rng.derived("step"), (batch, space.n))
    u_pair = uniform_block(rng.derived("pair"), (batch,))
    u_coord = uniform_block(rng.derived("coord"), (batch, space.n))
    return space, c, a_t, a_s, states, u_step, u_pair, u_coord


def timed(fn, repeats):
    best = []
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best.append(time.perf_counter() - t0)
    return statistics.median(best), out


def as_tuple(result):
    if isinstance(result, tuple):
        return result
    return (result,)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--batch", type=int, default=128)
    parser.add_argument("--pairs", type=int, default=2000,
                        help="sampled-rectifier budget for the pipeline row")
    args = parser.parse_args()

    if "compiled" not in backend.available():
        print("compiled backend not built; nothing to compare")
        return

    space, c, a_t, a_s, states, u_step, u_pair, u_coord = \
        build_workload(args.batch)
    d = space.d

    kernels = {
        "posterior_tables": lambda m: m.posterior_tables(
            states, c.x0, c.x1, c.w, a_t, a_s, d, False, False),
        "step_states": lambda m: m.step_states(
            states, c.x0, c.x1, c.w, a_t, a_s, d, 1.0, u_step, True),
        "sample_exact": lambda m: m.sample_exact(
            states[0], c.x0, c.x1, c.w, a_t, a_s, d, False, u_pair,
            u_coord),
    }

    original = backend.name()
    rows = []
    try:
        for label, call in kernels.items():
            times = {}
            outs = {}
            for which in ("pure", "compiled"):
                backend.use(which)
                mod = backend.active()
                times[which], outs[which] = timed(lambda: call(mod),
                                                  args.repeats)
            equal = all(
                np.array_equal(p, q) for p, q in
                zip(as_tuple(outs["pure"]), as_tuple(outs["compiled"])))
            rows.append((label, times["pure"], times["compiled"], equal))

        cfg = RectifyConfig(grid=TimeGrid.uniform(8), method="sampled",
                            pairs=args.pairs, rng=RngSpec(4))
        times = {}
        outs = {}
        pipeline_repeats = max(1, args.repeats // 3)
        for which in ("pure", "compiled"):
            backend.use(which)
            times[which], outs[which] = timed(
                lambda: rectify_sampled(c, cfg), pipeline_repeats)
        equal = (np.array_equal(outs["pure"].w, outs["compiled"].w)
                 and np.array_equal(outs["pure"].x0, outs["compiled"].x0))
        rows.append((f"rectify_sampled[P={args.pairs}]", times["pure"],
                     times["compiled"], equal))
    finally:
        backend.use(original)

    width = max(len(r[0]) for r in rows)
    print(f"{'kernel':<{width}}  {'pure':>10}  {'compiled':>10}  "
          f"{'speedup':>7}  bitwise")
    for label, tp, tc, equal in rows:
        ratio = tp / tc if tc > 0 else math.inf
        print(f"{label:<{width}}  {tp * 1e3:>8.2f}ms  {tc * 1e3:>8.2f}ms  "
              f"{ratio:>6.1f}x  {'yes' if equal else 'NO'}")
    if not all(r[3] for r in rows):
        raise SystemExit("backend outputs diverged")


if __name__ == "__main__":
    main()

"""Benchmark: compiled kernels vs the pure-numpy fallback.

Micro-benchmarks each hot kernel on training-shaped inputs, then times a
full contrastive training stage under each backend.

Usage: python benchmarks/bench_kernels.py [--repeats N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from alignlab import kernels
from alignlab.datastore import synth_planted_dataset
from alignlab.losses import LossConfig
from alignlab.projector import ProjectorParams
from alignlab.trainer import ScheduleConfig, TrainingData, train_separate


def best_of(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def micro_cases():
    rng = np.random.default_rng(0)
    n, m = 64, 64
    sims = np.ascontiguousarray(rng.uniform(-1, 1, size=(n, m)))
    counts = np.full(n, m, dtype=np.int64)
    syn = np.ascontiguousarray(rng.uniform(-1, 1, size=(n, 3)))
    syn_counts = np.full(n, 3, dtype=np.int64)
    logits = np.ascontiguousarray(rng.standard_normal((2048, 4)))
    labels = rng.integers(0, 4, size=2048).astype(np.int64)
    acts = np.ascontiguousarray(rng.standard_normal((64, 128)))
    return {
        f"softmax_ce_rows {n}x{m}": lambda: kernels.softmax_ce_rows(sims, counts, 1 / 0.07),
        f"hinge_positive_rows {n}x{m}": lambda: kernels.hinge_positive_rows(sims, counts, 0.2),
        f"hinge_pair_rows {n}x3x{m}": lambda: kernels.hinge_pair_rows(
            syn, syn_counts, sims, counts, 0.2),
        "softmax_xent_rows 2048x4": lambda: kernels.softmax_xent_rows(logits, labels),
        "gelu 64x128": lambda: kernels.gelu(acts),
        "gelu_grad 64x128": lambda: kernels.gelu_grad(acts),
    }


def train_stage():
    ds = synth_planted_dataset(seed=7, n_pairs=256, dim=32, noise_sigma=0.1)
    data = TrainingData.from_planted(ds)
    proj = ProjectorParams.init(32, 32, seed=1)
    sched = ScheduleConfig(schedule="separate", seed=3, contrastive_epochs=5,
                           epochs=0)
    train_separate(data, proj, LossConfig(), sched)


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=200)
    args = parser.parse_args()

    backends = kernels.available_backends()
    if "compiled" not in backends:
        print("compiled backend unavailable; nothing to compare")
        return

    print(f"{'kernel':<28} {'python':>10} {'compiled':>10} {'speedup':>8}")
    for name, fn in micro_cases().items():
        row = {}
        for backend in ("python", "compiled"):
            kernels.set_backend(backend)
            fn()  # warm up
            row[backend] = best_of(fn, args.repeats)
        print(f"{name:<28} {row['python'] * 1e6:>8.1f}us "
              f"{row['compiled'] * 1e6:>8.1f}us "
              f"{row['python'] / row['compiled']:>7.1f}x")

    print()
    for backend in ("python", "compiled"):
        kernels.set_backend(backend)
        t = best_of(train_stage, max(1, args.repeats // 100))
        print(f"train_separate (256 pairs, 5 epochs) [{backend}]: {t:.3f}s")
    kernels.set_backend("compiled")


if __name__ == "__main__":
    main()

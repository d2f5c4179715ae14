#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Times each hot kernel and a full fuzzy forward+backward step on
training-shaped inputs. The numba path is warmed up before timing so JIT
compilation is excluded.

Usage: python scripts/bench_backends.py [--rows 256] [--repeats 5]
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

import medic._kernels_numpy as k_numpy

try:
    import medic._kernels_numba as k_numba
except ImportError:
    k_numba = None


def make_inputs(rows: int, f: int = 10, k: int = 3, p: int = 8, h: int = 8, n: int = 32):
    rng = np.random.default_rng(0)
    d = f * k + 8
    return {
        "xs": rng.normal(size=(rows, f)),
        "centers": np.sort(rng.normal(size=(f, k)), axis=1),
        "sigmas": np.abs(rng.normal(size=f)) + 0.3,
        "gw": rng.normal(size=(rows, f, k)),
        "enc": rng.normal(size=(rows, d)),
        "masks": rng.uniform(size=(p, d)),
        "gparts": rng.normal(size=(rows, p, d)),
        "emb": rng.normal(size=(rows, p, h)),
        "protos": rng.normal(size=(n, h)),
        "gpooled": rng.normal(size=(rows, n)),
    }


def kernel_calls(mod, x):
    best = mod.min_pool_distances(x["emb"], x["protos"])[1]
    return {
        "fuzzy_weights": lambda: mod.fuzzy_weights(x["xs"], x["centers"], x["sigmas"], 1e-8),
        "fuzzy_weights_grad": lambda: mod.fuzzy_weights_grad(
            x["xs"], x["centers"], x["sigmas"], 1e-8, x["gw"]
        ),
        "hard_assign": lambda: mod.hard_assign(x["xs"], x["centers"]),
        "masked_parts": lambda: mod.masked_parts(x["enc"], x["masks"]),
        "masked_parts_grad": lambda: mod.masked_parts_grad(x["enc"], x["masks"], x["gparts"]),
        "pairwise_sqdist": lambda: mod.pairwise_sqdist(
            x["emb"].reshape(-1, x["emb"].shape[2]), x["protos"]
        ),
        "min_pool_distances": lambda: mod.min_pool_distances(x["emb"], x["protos"]),
        "min_pool_distances_grad": lambda: mod.min_pool_distances_grad(
            x["emb"], x["protos"], best, x["gpooled"]
        ),
    }


def bench_training_step(rows: int, backend: str, repeats: int) -> float:
    import os
    import subprocess
    import sys

    code = (
        "import time, numpy as np\n"
        "from medic.synthetic import make_synthetic\n"
        "from medic.training import TrainConfig, loss_and_grads, class_weights_for, STAGE1_TRAINABLE\n"
        "from medic.binning import init_binning\n"
        "from medic.network import init_model\n"
        f"ds = make_synthetic(rows={rows}, n_classes=3, n_continuous=10, n_categorical=2, seed=0)\n"
        "cfg = TrainConfig()\n"
        "model = init_model(ds.schema, init_binning(ds, cfg.n_bins), cfg.n_parts,"
        " cfg.embed_dim, cfg.n_prototypes, 0)\n"
        "w = class_weights_for(ds, cfg)\n"
        "loss_and_grads(model, ds.values, ds.labels, cfg, w, STAGE1_TRAINABLE)\n"
        f"best = float('inf')\n"
        f"for _ in range({repeats}):\n"
        "    t0 = time.perf_counter()\n"
        "    for _ in range(10):\n"
        "        loss_and_grads(model, ds.values, ds.labels, cfg, w, STAGE1_TRAINABLE)\n"
        "    best = min(best, (time.perf_counter() - t0) / 10)\n"
        "print(best)\n"
    )
    env = dict(os.environ, MEDIC_BACKEND=backend)
    out = subprocess.run(
        [sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True
    )
    return float(out.stdout.strip().splitlines()[-1])


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rows", type=int, default=256)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    x = make_inputs(args.rows)
    numpy_calls = kernel_calls(k_numpy, x)

    print(f"rows={args.rows}, best of {args.repeats} x 10 calls, times in ms")
    header = f"{'kernel':26s} {'numpy':>10s} {'numba':>10s} {'speedup':>8s}"
    print(header)
    print("-" * len(header))

    numba_calls = None
    if k_numba is not None:
        numba_calls = kernel_calls(k_numba, x)
        for fn in numba_calls.values():
            fn()  # warm the JIT cache

    for name, np_fn in numpy_calls.items():
        t_np = min(timeit.repeat(np_fn, number=10, repeat=args.repeats)) / 10 * 1e3
        if numba_calls is None:
            print(f"{name:26s} {t_np:10.3f} {'n/a':>10s} {'':>8s}")
            continue
        t_nb = min(timeit.repeat(numba_calls[name], number=10, repeat=args.repeats)) / 10 * 1e3
        print(f"{name:26s} {t_np:10.3f} {t_nb:10.3f} {t_np / t_nb:7.2f}x")

    print()
    t_np = bench_training_step(args.rows, "numpy", args.repeats) * 1e3
    line = f"{'full fuzzy fwd+bwd step':26s} {t_np:10.3f}"
    if k_numba is not None:
        t_nb = bench_training_step(args.rows, "numba", args.repeats) * 1e3
        line += f" {t_nb:10.3f} {t_np / t_nb:7.2f}x"
    else:
        line += f" {'n/a':>10s}"
    print(line)
    if k_numba is None:
        print("numba not importable; only the numpy path was timed")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

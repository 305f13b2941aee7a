"""Time each hot kernel under the numpy and numba implementations.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json]

Both implementations are called on the same inputs; the first numba call
(compilation or cache load) is excluded from the timings.
"""

import argparse
import json
import time

import numpy as np

from fluorosim import kernels
from fluorosim._accel import USE_NUMBA


def _inputs(rng):
    n = 20_000
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    P = np.ascontiguousarray(rng.normal(size=(3, 4)))
    P[2, 3] += 50.0
    T, S = 1000, 8
    log_trans = np.log(rng.dirichlet(np.ones(S), size=S))
    return {
        "rotate_vectors": (rng.normal(size=(n, 3)), axis, rng.uniform(-np.pi, np.pi, n)),
        "project_points": (P, rng.normal(size=(n, 3))),
        "cap_directions": (axis, 0.7, rng.random(n), rng.random(n)),
        "segment_distance_2d": (rng.normal(size=(n, 2)), np.array([0.0, 0.0]), np.array([3.0, 1.0])),
        "causal_max_product": (np.log(np.full(S, 1.0 / S)), log_trans, rng.normal(size=(T, S))),
        "forward_log_likelihood": (np.log(np.full(S, 1.0 / S)), log_trans, rng.normal(size=(T, S))),
    }


def _best_of(fn, args, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--json", action="store_true")
    args = parser.parse_args(argv)

    rng = np.random.default_rng(0)
    rows = []
    for name, inputs in _inputs(rng).items():
        fn_np, fn_nb = kernels.KERNELS[name]
        fn_nb(*inputs)  # warm-up / compile
        t_np = _best_of(fn_np, inputs, args.repeat)
        t_nb = _best_of(fn_nb, inputs, args.repeat)
        rows.append({"kernel": name, "numpy_ms": 1e3 * t_np, "numba_ms": 1e3 * t_nb, "speedup": t_np / t_nb})

    if args.json:
        print(json.dumps({"numba_enabled": USE_NUMBA, "results": rows}, indent=2))
        return
    if not USE_NUMBA:
        print("note: numba disabled, the second column times the uncompiled loops")
    print(f"{'kernel':<24}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}")
    for r in rows:
        print(f"{r['kernel']:<24}{r['numpy_ms']:>10.3f}{r['numba_ms']:>10.3f}{r['speedup']:>8.1f}x")


if __name__ == "__main__":
    main()

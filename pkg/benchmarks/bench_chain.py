"""Timing comparison for the sequential chain kernel.

Runs the compiled extension against the pure-numpy twin on the workload
the dynamics layer actually produces: long chains of small dense complex
matrices (vectorized density operators, d^2 or 2*d^2 components).

Usage: python3 benchmarks/bench_chain.py [--steps N] [--repeat R]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from qmetro._fastpath import _chain_py

try:
    from qmetro._fastpath import _chain
except ImportError:
    _chain = None


def bench(fn, qs: np.ndarray, v0: np.ndarray, repeat: int) -> float:
    fn(qs, v0)  # warm up
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(qs, v0)
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    print(f"{'m':>5s} {'python':>12s} {'cython':>12s} {'speedup':>8s}")
    for d in (2, 4, 6, 8):
        m = 2 * d * d  # augmented generator block size
        g = rng.normal(size=(args.steps, m, m)) + 1j * rng.normal(
            size=(args.steps, m, m)
        )
        qs, _ = np.linalg.qr(g)  # unitary steps keep the chain norm flat
        v0 = rng.normal(size=m) + 1j * rng.normal(size=m)

        t_py = bench(_chain_py.chain_apply, qs, v0, args.repeat)
        if _chain is None:
            print(f"{m:5d} {t_py * 1e3:10.3f}ms {'n/a':>12s}")
            continue
        t_cy = bench(_chain.chain_apply, qs, v0, args.repeat)
        ref = _chain_py.chain_apply(qs, v0)
        got = _chain.chain_apply(qs, v0)
        if not np.allclose(ref, got, rtol=1e-12, atol=1e-12):
            raise SystemExit(f"backend mismatch at m={m}")
        print(
            f"{m:5d} {t_py * 1e3:10.3f}ms {t_cy * 1e3:10.3f}ms "
            f"{t_py / t_cy:7.2f}x"
        )


if __name__ == "__main__":
    main()

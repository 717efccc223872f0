"""Timing comparison for the hot kernels: numba JIT vs pure numpy.

Run from the repository root:

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --repeats 9 --batch 32

Shapes mirror the default pipeline: a 32-image twin batch through the
first (most expensive) conv layer, and the full 84-bin CQT of a 30 s
clip. Both backends always run here regardless of COVERDET_NO_NUMBA;
that flag only controls which one the package dispatches to.
"""

import argparse
import math
import time

import numpy as np

from coverdet import _kernels as K
from coverdet.cqt import BINS_PER_OCTAVE, FMIN_HZ, HOP_SAMPLES, N_BINS


def median_time(fn, repeats: int) -> float:
    fn()  # warm-up: triggers JIT compilation on the numba path
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def conv_cases(batch: int):
    rng = np.random.default_rng(0)
    inp = rng.standard_normal((batch, 1, 84, 130)).astype(np.float32)
    ker = rng.standard_normal((64, 1, 5, 5)).astype(np.float32)
    bias = np.zeros(64, dtype=np.float32)
    gout = rng.standard_normal((batch, 64, 80, 126)).astype(np.float32)
    return [
        ("conv2d forward 64@5x5", lambda f: (lambda: f(inp, ker, bias))),
        ("conv2d backward input", lambda f: (lambda: f(gout, ker))),
        ("conv2d backward kernels", lambda f: (lambda: f(gout, inp, 5, 5))),
    ]


def cqt_case(seconds: float = 30.0, sr: int = 22050):
    rng = np.random.default_rng(1)
    q = 1.0 / (2.0 ** (1.0 / BINS_PER_OCTAVE) - 1.0)
    freqs = FMIN_HZ * 2.0 ** (np.arange(N_BINS) / BINS_PER_OCTAVE)
    n = int(seconds * sr)
    n_frames = math.ceil(n / HOP_SAMPLES)
    longest = int(math.ceil(q * sr / freqs[0]))
    xpad = rng.standard_normal((n_frames - 1) * HOP_SAMPLES + longest)
    bank = []
    for f in freqs:
        nk = int(math.ceil(q * sr / f))
        t = np.arange(nk) / sr
        win = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(nk) / max(nk - 1, 1))
        bank.append((win * np.cos(2 * np.pi * f * t) / nk,
                     -(win * np.sin(2 * np.pi * f * t)) / nk))

    def run(fn):
        def call():
            for kr, ki in bank:
                fn(xpad, kr, ki, HOP_SAMPLES, n_frames)
        return call

    return "cqt 84 bins x 30s clip", run


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--batch", type=int, default=32)
    args = ap.parse_args()

    numpy_impls = {
        "conv2d forward 64@5x5": K._conv2d_forward_np,
        "conv2d backward input": K._conv2d_backward_input_np,
        "conv2d backward kernels": K._conv2d_backward_kernels_np,
        "cqt 84 bins x 30s clip": K._cqt_bin_response_np,
    }
    numba_impls = None
    if K._NUMBA_OK:
        numba_impls = {
            "conv2d forward 64@5x5": K._conv2d_forward_nb,
            "conv2d backward input": K._conv2d_backward_input_nb,
            "conv2d backward kernels": K._conv2d_backward_kernels_nb,
            "cqt 84 bins x 30s clip": K._cqt_bin_response_nb,
        }
    else:
        print("numba unavailable; timing the numpy path only")

    cases = conv_cases(args.batch)
    name, run = cqt_case()
    cases.append((name, run))

    print(f"{'kernel':<26} {'numpy':>10} {'numba':>10} {'speedup':>9}")
    for name, make in cases:
        t_np = median_time(make(numpy_impls[name]), args.repeats)
        if numba_impls is None:
            print(f"{name:<26} {t_np * 1e3:>8.1f}ms {'-':>10} {'-':>9}")
            continue
        t_nb = median_time(make(numba_impls[name]), args.repeats)
        print(f"{name:<26} {t_np * 1e3:>8.1f}ms {t_nb * 1e3:>8.1f}ms "
              f"{t_np / t_nb:>8.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

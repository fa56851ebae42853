"""Compare the compiled and pure-numpy LSTM kernels.

Usage: python benchmarks/bench_kernels.py [--steps 200] [--repeats 20]
"""

import argparse
import time

import numpy as np

from evcatch import _kernels_py, kernels
from evcatch.model import init_params


def bench(fn_fwd, fn_bwd, params, X, dY, repeats):
    h0 = np.zeros(params.hidden)
    c0 = np.zeros(params.hidden)
    # warm-up
    _, cache = fn_fwd(params.Wx, params.Wh, params.b, params.Wo, params.bo,
                      X, h0, c0)
    fn_bwd(params.Wx, params.Wh, params.Wo, X, cache, dY)
    t0 = time.perf_counter()
    for _ in range(repeats):
        _, cache = fn_fwd(params.Wx, params.Wh, params.b, params.Wo,
                          params.bo, X, h0, c0)
    t_fwd = (time.perf_counter() - t0) / repeats
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn_bwd(params.Wx, params.Wh, params.Wo, X, cache, dY)
    t_bwd = (time.perf_counter() - t0) / repeats
    return t_fwd, t_bwd


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=200)
    ap.add_argument("--repeats", type=int, default=20)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    X = np.ascontiguousarray(rng.uniform(0, 1, (args.steps, 3)))
    dY = np.ascontiguousarray(rng.standard_normal((args.steps, 2)))

    backends = [("python", _kernels_py.lstm_forward, _kernels_py.lstm_backward)]
    if kernels.BACKEND == "cython":
        backends.append(("cython", kernels.lstm_forward, kernels.lstm_backward))
    else:
        print("compiled backend unavailable; benchmarking python only")

    print(f"sequence length {args.steps}, {args.repeats} repeats")
    print(f"{'hidden':>7} {'backend':>8} {'forward':>12} {'backward':>12}")
    for hidden in (16, 64, 350):
        params = init_params(hidden, 0)
        ref = None
        for name, fwd, bwd in backends:
            t_fwd, t_bwd = bench(fwd, bwd, params, X, dY, args.repeats)
            total = t_fwd + t_bwd
            note = ""
            if ref is None:
                ref = total
            else:
                note = f"  ({ref / total:.1f}x vs python)"
            print(f"{hidden:>7} {name:>8} {t_fwd * 1e3:>10.2f}ms "
                  f"{t_bwd * 1e3:>10.2f}ms{note}")


if __name__ == "__main__":
    main()

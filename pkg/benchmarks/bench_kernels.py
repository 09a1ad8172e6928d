"""Compare the compiled dense-layer kernels against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeats 200]

Times forward and forward+backward passes over layer shapes that match
the training hot path (policy/critic MLPs at rollout and batch sizes),
checks that both backends agree to machine precision, and prints a table
with the speedup factor.
"""

import argparse
import time

import numpy as np

from advrl._kernels import RELU, TANH, get_backend

SHAPES = [
    # (rows, d_in, d_out, act) mirroring the agent nets in play:
    (1, 3, 64, RELU),       # single-state rollout, first hidden layer
    (32, 4, 64, RELU),      # critic batch, acceptance scale
    (128, 64, 64, RELU),    # desk batch, hidden-to-hidden
    (512, 64, 64, RELU),    # batch x n_prior candidate scoring
    (512, 64, 1, 0),        # critic head over candidates
    (2048, 32, 32, TANH),   # attack chunks on small nets
]


def _bench(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=200)
    args = parser.parse_args()

    backends = {}
    for name in ("numpy", "cython"):
        try:
            backends[name] = get_backend(name)
        except (ImportError, ValueError) as e:
            print(f"backend {name} unavailable: {e}")
    if len(backends) < 2:
        print("need both backends for a comparison; timing what exists")

    rng = np.random.default_rng(0)
    header = f"{'shape':>24} {'pass':>9}" + "".join(
        f" {name:>12}" for name in backends) + ("  speedup" if len(backends) == 2 else "")
    print(header)
    print("-" * len(header))
    for rows, d_in, d_out, act in SHAPES:
        x = rng.normal(size=(rows, d_in))
        w = rng.normal(size=(d_out, d_in)) / np.sqrt(d_in)
        b = rng.normal(size=d_out)
        dy = rng.normal(size=(rows, d_out))

        outs = {}
        grads = {}
        times_f = {}
        times_b = {}
        for name, (fwd, bwd) in backends.items():
            out = fwd(x, w, b, act)
            dw = np.zeros_like(w)
            db = np.zeros_like(b)
            dx = bwd(dy, x, w, out, act, dw, db, True)
            outs[name] = out
            grads[name] = (dw, db, dx)
            times_f[name] = _bench(lambda: fwd(x, w, b, act), args.repeats)

            def full():
                o = fwd(x, w, b, act)
                dwl = np.zeros_like(w)
                dbl = np.zeros_like(b)
                bwd(dy, x, w, o, act, dwl, dbl, True)

            times_b[name] = _bench(full, args.repeats)

        if len(backends) == 2:
            gap = max(
                np.max(np.abs(outs["numpy"] - outs["cython"])),
                max(np.max(np.abs(a - b_)) for a, b_ in
                    zip(grads["numpy"], grads["cython"])))
            assert gap < 1e-12, f"backends disagree by {gap}"

        shape = f"({rows}x{d_in}->{d_out}, act={act})"
        for label, times in (("fwd", times_f), ("fwd+bwd", times_b)):
            cells = "".join(f" {times[n]*1e6:>10.1f}us" for n in backends)
            line = f"{shape:>24} {label:>9}" + cells
            if len(backends) == 2:
                line += f"  {times['numpy'] / times['cython']:>6.2f}x"
            print(line)
            shape = ""
    if len(backends) == 2:
        print("\nbackends agree to <1e-12 on every shape")


if __name__ == "__main__":
    main()

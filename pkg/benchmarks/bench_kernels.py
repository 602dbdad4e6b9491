"""Time the compiled kernels against the NumPy fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat N]

Prints one line per kernel with the best-of-N wall time for each available
backend and the speedup of the compiled one.
"""
import argparse
import timeit

import numpy as np

from tatumscribe.kernels import backends


def cases(rng):
    hidden, steps = 98, 400
    xp = rng.normal(size=(steps, 3 * hidden))
    w_hh = rng.normal(scale=0.1, size=(3 * hidden, hidden))
    h0 = np.zeros(hidden)
    dhs = rng.normal(size=(steps, hidden))
    feats = rng.normal(size=(256, 800))
    edges = np.linspace(0, 800, 129).astype(np.int64)
    act = rng.random(2000)

    def gru_fwd(mod):
        return lambda: mod.gru_forward(xp, w_hh, h0)

    def gru_bwd(mod):
        hs, gates, _ = mod.gru_forward(xp, w_hh, h0)
        return lambda: mod.gru_backward(dhs, w_hh, h0, hs, gates)

    def pool_fwd(mod):
        return lambda: mod.tatum_pool_forward(feats, edges[:-1], edges[1:])

    def pool_bwd(mod):
        pooled, index = mod.tatum_pool_forward(feats, edges[:-1], edges[1:])
        return lambda: mod.tatum_pool_backward(pooled, index, feats.shape[1])

    def peaks(mod):
        return lambda: mod.peak_pick(act, 0.2, 2, 0, 2, 0, 2)

    return {"gru_forward (T=400, H=98)": gru_fwd, "gru_backward (T=400, H=98)": gru_bwd,
            "tatum_pool_forward (256x800 -> 128)": pool_fwd,
            "tatum_pool_backward": pool_bwd, "peak_pick (T=2000)": peaks}


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    found = backends()
    rng = np.random.default_rng(0)
    print(f"{'kernel':38s}" + "".join(f"{name:>12s}" for name in found) + "   speedup")
    for label, make in cases(rng).items():
        times = {}
        for name, mod in found.items():
            fn = make(mod)
            times[name] = min(timeit.repeat(fn, number=1, repeat=args.repeat))
        row = f"{label:38s}" + "".join(f"{times[n] * 1e3:10.2f}ms" for n in found)
        if "cython" in times:
            row += f"   {times['python'] / times['cython']:6.1f}x"
        print(row)


if __name__ == "__main__":
    main()

"""Compare the compiled and numpy jet kernels.

    python benchmarks/bench_backends.py [--repeat 5]

Times raw jet products and quotients at the pipeline order, and a small
classification sweep, once per backend.
"""

import argparse
import time

from orbinv import _kernels_py, bozis, config, jets

try:
    from orbinv import _kernels
except ImportError:  # extension not built
    _kernels = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def arithmetic(order, n=2000):
    x, y, b = jets.seed_point(0.7, 1.1, 1.5, order)
    a = jets.sin(x * y) + b
    c = jets.exp(y) + x * b

    def run():
        for _ in range(n):
            (a * c) / c

    return run


def sweep():
    cfg = config.load(preset="precessing")
    cfg["grid"].update(n_r=4, n_theta=8)
    spec = config.family_from(cfg)
    grid = config.grid_from(cfg, spec)
    return lambda: bozis.classify(spec, grid, cfg["b_samples"])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--order", type=int, default=bozis.PIPELINE_ORDER)
    args = ap.parse_args()

    backends = {"python": _kernels_py}
    if _kernels is not None:
        backends["cython"] = _kernels
    cases = {f"mul+div x2000, order {args.order}": arithmetic(args.order), "classify 32 pts x 4 b": sweep()}
    results = {}
    for name, mod in backends.items():
        jets.kernels = mod
        for case, fn in cases.items():
            fn()  # warm caches
            results[case, name] = best_of(fn, args.repeat)

    print(f"{'case':36s}" + "".join(f"{n:>12s}" for n in backends) + ("     speedup" if len(backends) > 1 else ""))
    for case in cases:
        row = f"{case:36s}" + "".join(f"{results[case, n]:11.4f}s" for n in backends)
        if len(backends) > 1:
            row += f"{results[case, 'python'] / results[case, 'cython']:11.1f}x"
        print(row)


if __name__ == "__main__":
    main()

"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints one row per kernel and size with the best-of-N time of each backend.
"""
import argparse
import timeit

import numpy as np

from toolgate import kernels


def _unit_rows(rng, n, dim):
    m = rng.standard_normal((n, dim))
    return m / np.linalg.norm(m, axis=1, keepdims=True)


def _cases(rng):
    for n, dim in [(50, 768), (500, 768), (5000, 384)]:
        m, q, rank = _unit_rows(rng, n, dim), _unit_rows(rng, 1, dim)[0], np.arange(n)
        yield f"topk n={n} dim={dim}", lambda impl, m=m, q=q, rank=rank: kernels.topk_cosine(m, q, 5, rank, impl=impl)
    for n in (50, 200, 400):
        x = _unit_rows(rng, n, 32)
        d = np.clip(1 - x @ x.T, 0, 2)
        d = (d + d.T) / 2
        np.fill_diagonal(d, 0)
        yield f"linkage n={n}", lambda impl, d=d: kernels.average_linkage(d, 0.9, impl=impl)
    for n in (20, 200):
        a, b = rng.integers(0, 30, n), rng.integers(0, 30, n)
        yield f"lcs len={n}", lambda impl, a=a, b=b: kernels.lcs_length(a, b, impl=impl)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    if kernels.compiled_impl is None:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")
    print(f"{'case':<26}{'cython ms':>12}{'python ms':>12}{'speedup':>10}")
    for name, fn in _cases(np.random.default_rng(0)):
        times = {}
        for label, impl in (("cython", kernels.compiled_impl), ("python", kernels.python_impl)):
            timer = timeit.Timer(lambda: fn(impl))
            number, _ = timer.autorange()
            times[label] = min(timer.repeat(args.repeat, number)) / number * 1e3
        print(f"{name:<26}{times['cython']:>12.3f}{times['python']:>12.3f}{times['python'] / times['cython']:>9.1f}x")


if __name__ == "__main__":
    main()

"""Time the compiled core against the pure-Python fallback.

Usage: python3 benchmarks/bench_core.py [--repeat R]
"""

import argparse
import timeit

import numpy as np

from gpalign import _fallback

try:
    from gpalign import _core
except ImportError:
    _core = None


def _cases(rng):
    a = rng.standard_normal(200)
    b = rng.standard_normal(200)
    cost = rng.random((200, 200))
    params = np.array([1.3, 0.4, 1.0])
    cases = {}
    for name, fam in (("SE", 0), ("Matern32", 2), ("Periodic", 3)):
        cases[f"kernel terms {name} 200x200"] = lambda m, fam=fam: m.radial_terms_1d(fam, params, a, b)
    cases["dtw accumulate 200x200"] = lambda m: m.dtw_accumulate(cost)
    acc = _fallback.dtw_accumulate(cost)
    cases["dtw backtrack 200x200"] = lambda m: m.dtw_backtrack(acc)
    return cases


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    if _core is None:
        print("compiled core not built; only the fallback is available")
        return 1
    rng = np.random.default_rng(0)
    print(f"{'case':32s} {'python ms':>10s} {'compiled ms':>12s} {'speedup':>8s}")
    for name, fn in _cases(rng).items():
        times = {}
        for label, mod in (("python", _fallback), ("compiled", _core)):
            n = 3 if label == "python" else 50
            times[label] = min(timeit.repeat(lambda: fn(mod), number=n, repeat=args.repeat)) / n * 1e3
        print(f"{name:32s} {times['python']:10.3f} {times['compiled']:12.3f} "
              f"{times['python'] / times['compiled']:8.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

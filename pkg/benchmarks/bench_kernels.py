"""Compare the compiled and pure-Python kernels on typical decoding sizes.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import math
import timeit

import numpy as np

from ctc_ilme.core import log_softmax
from ctc_ilme.kernels import compiled_available, get_backend


def cases(rng):
    s = log_softmax(rng.normal(size=(200, 40)) * 3, axis=1)
    other = log_softmax(rng.normal(size=(200, 40)) * 3, axis=1)
    labels = list(rng.integers(1, 40, size=60))
    ref = [str(w) for w in rng.integers(0, 50, size=300)]
    hyp = [str(w) for w in rng.integers(0, 50, size=300)]
    return {
        "prefix_beam_search T=200 N=40 beam=16": lambda k: k.prefix_beam_search(
            s, 0, 16, math.inf, 0.0, 0.0, None, None, None),
        "ctc_forward T=200 L=60": lambda k: k.ctc_forward(s, labels, 0),
        "max_abs_diff_rows 200x40": lambda k: k.max_abs_diff_rows(s, other),
        "edit_counts 300x300 words": lambda k: k.edit_counts(ref, hyp),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not compiled_available():
        raise SystemExit("compiled kernels not built; run pip install -e . --no-build-isolation")
    py, cy = get_backend("python"), get_backend("cython")
    print(f"{'kernel':<40} {'python ms':>10} {'cython ms':>10} {'speedup':>8}")
    for name, fn in cases(np.random.default_rng(0)).items():
        t_py = min(timeit.repeat(lambda: fn(py), number=1, repeat=args.repeat)) * 1e3
        t_cy = min(timeit.repeat(lambda: fn(cy), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<40} {t_py:10.2f} {t_cy:10.2f} {t_py / t_cy:7.1f}x")


if __name__ == "__main__":
    main()

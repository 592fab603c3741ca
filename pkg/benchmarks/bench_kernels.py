"""Compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Times thinning and the 3x3 blur on upscaled MNIST-sized bitmaps, checks that
both backends give identical output, then encodes 100 bundled MNIST digits
end to end under each backend (the pure one via ``HPS_PURE_PYTHON=1`` in a
child process).
"""
import argparse
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
from scipy import ndimage

from hps import _pykernels

try:
    from hps import _ckernels
except ImportError:
    _ckernels = None

DATA = Path(__file__).resolve().parent.parent / "tests" / "data"


def best_of(fn, arg, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn(arg)
        times.append(time.perf_counter() - t)
    return min(times)


def inputs(seed=0, n=20):
    rng = np.random.default_rng(seed)
    bits, gray = [], []
    for _ in range(n):
        b = ndimage.binary_dilation(rng.random((112, 112)) < 0.01, iterations=4)
        bits.append(b)
        gray.append((b * 255).astype(np.uint8))
    return bits, gray


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    ck = _ckernels
    bits, gray = inputs()
    rows = []
    for name, data in (("thin", bits), ("blur3", gray)):
        py = getattr(_pykernels, name)
        t_py = sum(best_of(py, x, args.repeat) for x in data)
        if ck is None:
            rows.append((name, t_py, None))
            continue
        c = getattr(ck, name)
        for x in data:
            if not np.array_equal(np.asarray(py(x)), np.asarray(c(x))):
                raise SystemExit(f"{name}: backends disagree")
        rows.append((name, t_py, sum(best_of(c, x, args.repeat) for x in data)))

    print(f"{'kernel':8} {'python (s)':>11} {'cython (s)':>11} {'speedup':>8}  ({len(bits)} images 112x112)")
    for name, tp, tc in rows:
        if tc is None:
            print(f"{name:8} {tp:11.4f} {'n/a':>11} {'n/a':>8}")
        else:
            print(f"{name:8} {tp:11.4f} {tc:11.4f} {tp / tc:8.1f}")

    print()
    for label, env in (("python", {"HPS_PURE_PYTHON": "1"}), ("active", {})):
        out = subprocess.run([sys.executable, __file__, "--encode"], capture_output=True,
                             text=True, check=True, env={**os.environ, **env}).stdout
        print(f"encode 100 digits ({label} selection): {out.strip()}")


def encode_only():
    from hps import harness
    from hps._kernels import BACKEND
    items = harness.load_idx(DATA / "mnist5k-images-idx3-ubyte.gz",
                             DATA / "mnist5k-labels-idx1-ubyte.gz")[:100]
    t = time.perf_counter()
    harness.encode_all([x for x, _ in items], harness.EncodeParams())
    print(f"{time.perf_counter() - t:.2f}s backend={BACKEND}")


if __name__ == "__main__":
    if "--encode" in sys.argv:
        encode_only()
        sys.exit()
    main()

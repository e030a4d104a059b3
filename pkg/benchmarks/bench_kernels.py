"""Time the compiled and numpy kernel backends on training-sized inputs.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from cnneq import _kernels_py

try:
    from cnneq import _kernels
except ImportError:  # extension not built
    _kernels = None


def cases():
    rng = np.random.default_rng(0)
    # first layer of the default CNN on a training window, then a hidden layer
    x0 = rng.normal(size=(1, 4608))
    w0 = rng.normal(size=(5, 1, 9))
    x1 = rng.normal(size=(5, 576))
    w1 = rng.normal(size=(5, 5, 9))
    g1 = rng.normal(size=(5, 576))
    arr = np.sort(rng.integers(0, 100_000, 200_000))
    return {
        "conv1d_forward stride 8": lambda m: m.conv1d_forward(x0, w0, 8),
        "conv1d_forward hidden": lambda m: m.conv1d_forward(x1, w1, 1),
        "conv1d_backward hidden": lambda m: m.conv1d_backward(x1, w1, g1, 1),
        "queue_departures 200k": lambda m: m.queue_departures(arr, 2, 1, 1),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = {"python": _kernels_py}
    if _kernels is not None:
        backends["cython"] = _kernels
    print(f"{'kernel':28s}" + "".join(f"{b:>14s}" for b in backends) + "   speedup")
    for name, fn in cases().items():
        times = {}
        for b, mod in backends.items():
            n = 3 if "queue" in name and b == "python" else 50
            t = min(timeit.repeat(lambda: fn(mod), number=n, repeat=args.repeat)) / n
            times[b] = t
        speed = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{name:28s}" + "".join(f"{times[b] * 1e6:12.1f}us" for b in backends) + f"   {speed:7.2f}x")


if __name__ == "__main__":
    main()

"""Compare the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py            # kernel micro-benchmarks
    python benchmarks/bench_kernels.py --e2e      # plus a 10k-bit covert run per backend

The end-to-end comparison re-launches the interpreter with LINKSPY_NO_NUMBA
set, since the backend is fixed at import time.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from linkspy import _kernels

E2E_SNIPPET = """
import time
import numpy as np
from linkspy import BACKEND, _kernels
from linkspy.covert import ChannelConfig, transmit
from linkspy.sim_core import Simulator, build_topology
_kernels.warmup()
payload = np.random.default_rng(0).integers(0, 2, 10_000, dtype=np.uint8)
t0 = time.perf_counter()
transmit(Simulator(build_topology()), ChannelConfig(), payload)
print(f"{BACKEND:6s} covert 10k bits: {time.perf_counter() - t0:7.3f} s")
"""


def bench(label, fn, args, number):
    fn(*args)  # compile / warm caches
    best = min(timeit.repeat(lambda: fn(*args), number=number, repeat=5)) / number
    print(f"  {label:6s} {best * 1e6:10.1f} us/call")
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--e2e", action="store_true")
    args = ap.parse_args()
    rng = np.random.default_rng(0)

    if not _kernels.HAVE_NUMBA:
        print("numba not installed; only the numpy path is available")

    n = 15_000
    starts = np.sort(rng.integers(0, 10**9, n)).astype(np.float64)
    ends = starts + rng.integers(1, 30_000, n)
    sizes = rng.integers(1, 2_000_000, n).astype(np.float64)
    active = np.ones(n, dtype=np.bool_)
    cases = [
        ("overlap_bytes (15k transfers)", "overlap_bytes", (starts, ends, sizes, active, 5e8, 5e8 + 28_356), 200),
        ("autocorr (256 samples)", "autocorr", (rng.normal(size=256), 128), 200),
        ("sq_distances (100 x 7)", "sq_distances", (rng.random((100, 7)), rng.random(7)), 2000),
    ]
    for title, name, call_args, number in cases:
        print(title)
        t_np = bench("numpy", getattr(_kernels, f"{name}_numpy"), call_args, number)
        if _kernels.HAVE_NUMBA:
            t_nb = bench("numba", getattr(_kernels, f"{name}_numba"), call_args, number)
            print(f"  speedup {t_np / t_nb:6.1f}x")

    if args.e2e:
        sys.stdout.flush()
        for flag in ("1", ""):
            env = dict(os.environ, LINKSPY_NO_NUMBA=flag)
            subprocess.run([sys.executable, "-c", E2E_SNIPPET], env=env, check=True)


if __name__ == "__main__":
    main()

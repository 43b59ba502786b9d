"""Hot numeric kernels.

Each kernel exists twice: a numba ``@njit`` loop and a vectorised numpy
version. The public name points at the numba build unless numba is missing
or ``LINKSPY_NO_NUMBA`` is set to a truthy value in the environment, in which
case the numpy path is used. Both builds are importable under
``*_numba`` / ``*_numpy`` names so tests and the benchmark can compare them.
"""

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a soft dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


def _env_disabled():
    return os.environ.get("LINKSPY_NO_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")


USE_NUMBA = HAVE_NUMBA and not _env_disabled()
BACKEND = "numba" if USE_NUMBA else "numpy"


# --- interval overlap -------------------------------------------------------

@njit(cache=True)
def overlap_bytes_numba(starts, ends, sizes, active, w0, w1):
    total = 0.0
    for i in range(starts.shape[0]):
        if not active[i]:
            continue
        s = starts[i]
        e = ends[i]
        lo = s if s > w0 else w0
        hi = e if e < w1 else w1
        if hi > lo:
            total += sizes[i] * (hi - lo) / (e - s)
    return total


def overlap_bytes_numpy(starts, ends, sizes, active, w0, w1):
    lo = np.maximum(starts, w0)
    hi = np.minimum(ends, w1)
    ov = hi - lo
    keep = active & (ov > 0)
    if not keep.any():
        return 0.0
    terms = sizes[keep] * ov[keep] / (ends[keep] - starts[keep])
    # sequential sum keeps bit-parity with the loop kernel
    total = 0.0
    for t in terms.tolist():
        total += t
    return total


# --- autocorrelation --------------------------------------------------------

@njit(cache=True)
def autocorr_numba(x, max_lag):
    n = x.shape[0]
    out = np.zeros(max_lag + 1)
    mean = 0.0
    for i in range(n):
        mean += x[i]
    mean /= n
    var = 0.0
    for i in range(n):
        d = x[i] - mean
        var += d * d
    var /= n
    if var <= 0.0:
        return out
    for k in range(max_lag + 1):
        acc = 0.0
        for i in range(n - k):
            acc += (x[i] - mean) * (x[i + k] - mean)
        out[k] = acc / (n - k) / var
    return out


def autocorr_numpy(x, max_lag):
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    out = np.zeros(max_lag + 1)
    d = x - x.mean()
    var = float(np.dot(d, d)) / n
    if var <= 0.0:
        return out
    for k in range(max_lag + 1):
        out[k] = np.dot(d[: n - k], d[k:]) / (n - k) / var
    return out


# --- nearest-neighbour distances -------------------------------------------

@njit(cache=True)
def sq_distances_numba(exemplars, query):
    m, d = exemplars.shape
    out = np.empty(m)
    for i in range(m):
        acc = 0.0
        for j in range(d):
            t = exemplars[i, j] - query[j]
            acc += t * t
        out[i] = acc
    return out


def sq_distances_numpy(exemplars, query):
    diff = exemplars - query
    # column-by-column accumulation matches the loop kernel's rounding, so
    # distance ties break the same way on both backends
    out = np.zeros(exemplars.shape[0])
    for j in range(exemplars.shape[1]):
        out += diff[:, j] * diff[:, j]
    return out


if USE_NUMBA:
    overlap_bytes = overlap_bytes_numba
    autocorr = autocorr_numba
    sq_distances = sq_distances_numba
else:
    overlap_bytes = overlap_bytes_numpy
    autocorr = autocorr_numpy
    sq_distances = sq_distances_numpy


def warmup():
    """Trigger JIT compilation so first-call latency is not billed to a run."""
    s = np.array([0.0, 5.0])
    e = np.array([4.0, 9.0])
    b = np.array([8.0, 8.0])
    a = np.array([True, True])
    overlap_bytes(s, e, b, a, 1.0, 6.0)
    autocorr(np.arange(8, dtype=np.float64), 3)
    sq_distances(np.zeros((2, 3)), np.zeros(3))

"""Workload fingerprinting from a spy's probe-latency trace.

The victim applications are stand-ins: periodic bursts of GPU1 -> GPU0 copies
with Gaussian jitter on start time and size. Traces are cut into
non-overlapping windows, each summarised by a small feature vector and
classified by k-nearest-neighbours in min-max normalised space.
"""

import csv
from dataclasses import astuple, dataclass, fields, replace

import numpy as np

from . import _kernels
from .errors import ConfigError, DatasetError
from .probe import ProbeAgent
from .sim_core import TAG_WORKLOAD, Simulator, TransferRequest

AUTOCORR_FLOOR = 0.1
MIN_TRACE_SAMPLES = 16


@dataclass(frozen=True)
class WorkloadProfile:
    name: str
    burst_bytes: int
    burst_period: int
    duty: float
    jitter_sigma: float = 0.0
    size_sigma: float = 0.0

    def __post_init__(self):
        if self.burst_bytes < 1:
            raise ConfigError("burst_bytes", "must be >= 1")
        if self.burst_period < 1:
            raise ConfigError("burst_period", "must be >= 1")
        if not 0 < self.duty <= 1:
            raise ConfigError("duty", f"must lie in (0, 1], got {self.duty}")
        if self.jitter_sigma < 0 or self.size_sigma < 0:
            raise ConfigError("jitter_sigma", "jitter must be >= 0")

    @classmethod
    def from_duty(cls, name, burst_period, duty, bytes_per_cycle, jitter=0.0, size_sigma=0.0):
        """Size bursts so each one occupies ``duty`` of its period at ``bytes_per_cycle``."""
        nbytes = max(1, int(round(duty * burst_period * bytes_per_cycle)))
        return cls(name, nbytes, burst_period, duty, jitter * burst_period, size_sigma)


def default_profiles(bytes_per_cycle=64):
    # Synthetic; named after the OpenMM benchmarks they stand in for.
    return {
        p.name: p
        for p in (
            WorkloadProfile.from_duty("rf", 400_000, 0.5, bytes_per_cycle, 0.02, 0.05),
            WorkloadProfile.from_duty("pme", 1_000_000, 0.2, bytes_per_cycle, 0.02, 0.05),
            WorkloadProfile.from_duty("amber20-dhfr", 1_600_000, 0.75, bytes_per_cycle, 0.02, 0.05),
            WorkloadProfile.from_duty("amber20-cellulose", 600_000, 0.9, bytes_per_cycle, 0.02, 0.05),
        )
    }


def generate_workload(profile, seed, duration, src=1, dst=0, t0=0):
    if duration < profile.burst_period:
        raise ConfigError("duration", f"{duration} is shorter than one burst period ({profile.burst_period})")
    rng = np.random.default_rng(seed)
    n = duration // profile.burst_period
    k = np.arange(n)
    starts = t0 + k * profile.burst_period + np.rint(rng.standard_normal(n) * profile.jitter_sigma)
    starts = np.maximum(starts, t0).astype(np.int64)
    sizes = np.rint(profile.burst_bytes * (1 + profile.size_sigma * rng.standard_normal(n)))
    sizes = np.maximum(sizes, 1).astype(np.int64)
    order = np.argsort(starts, kind="stable")
    return [TransferRequest(src, dst, int(sizes[i]), int(starts[i]), TAG_WORKLOAD) for i in order]


# --- features ---------------------------------------------------------------

@dataclass(frozen=True)
class FeatureVector:
    mean: float
    stddev: float
    p10: float
    p50: float
    p90: float
    high_fraction: float
    dominant_period: int

    def as_array(self):
        return np.array(astuple(self), dtype=np.float64)


FEATURE_NAMES = tuple(f.name for f in fields(FeatureVector))


def dominant_period(x):
    n = len(x)
    max_lag = n // 2
    if max_lag < 1:
        return 0
    r = _kernels.autocorr(np.ascontiguousarray(x, dtype=np.float64), max_lag)[1:]
    peak = r.max()
    if peak < AUTOCORR_FLOOR:
        return 0
    # first lag reaching the peak; multiples of a true period tie up to rounding
    return int(np.flatnonzero(r >= peak - 1e-9)[0]) + 1


def extract_features(trace, threshold, min_samples=MIN_TRACE_SAMPLES):
    x = trace.latencies if hasattr(trace, "latencies") else np.asarray(trace, dtype=np.float64)
    if x.size < min_samples:
        raise ConfigError("trace", f"need at least {min_samples} samples, got {x.size}")
    p10, p50, p90 = np.percentile(x, [10, 50, 90])
    return FeatureVector(
        mean=float(x.mean()),
        stddev=float(x.std()),
        p10=float(p10),
        p50=float(p50),
        p90=float(p90),
        high_fraction=float(np.count_nonzero(x > threshold) / x.size),
        dominant_period=dominant_period(x),
    )


def windows(latencies, window_len):
    x = np.asarray(latencies, dtype=np.float64)
    n = x.size // window_len
    return [x[i * window_len:(i + 1) * window_len] for i in range(n)]


# --- classifier -------------------------------------------------------------

@dataclass
class KNNModel:
    lo: np.ndarray
    span: np.ndarray
    exemplars: np.ndarray
    labels: list
    k: int

    @property
    def classes(self):
        return sorted(set(self.labels))

    def normalize(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        safe = np.where(self.span > 0, self.span, 1.0)
        return np.where(self.span > 0, (X - self.lo) / safe, 0.0)


def _as_row(features):
    if isinstance(features, FeatureVector):
        return features.as_array()
    return np.asarray(features, dtype=np.float64)


def train(dataset, k=3):
    """Fit min-max normalisation on ``dataset`` (``(features, label)`` pairs)."""
    if k < 1 or k % 2 == 0:
        raise ConfigError("k", f"must be a positive odd number, got {k}")
    if len(dataset) < k:
        raise ConfigError("k", f"k={k} exceeds the {len(dataset)} training examples")
    labels = [label for _, label in dataset]
    if len(set(labels)) < 2:
        raise DatasetError("training data needs at least 2 classes")
    X = np.vstack([_as_row(f) for f, _ in dataset])
    lo = X.min(axis=0)
    span = X.max(axis=0) - lo
    model = KNNModel(lo, span, None, labels, k)
    model.exemplars = np.ascontiguousarray(model.normalize(X))
    return model


def classify(model, features):
    q = np.ascontiguousarray(model.normalize(_as_row(features))[0])
    d = np.sqrt(_kernels.sq_distances(model.exemplars, q))
    nearest = np.argsort(d, kind="stable")[: model.k]
    votes = {}
    for i in nearest:
        count, dist = votes.get(model.labels[i], (0, 0.0))
        votes[model.labels[i]] = (count + 1, dist + d[i])
    # most votes, then smallest summed distance; dict order keeps nearest-first
    return min(votes, key=lambda lab: (-votes[lab][0], votes[lab][1]))


@dataclass
class Evaluation:
    accuracy: float
    confusion: np.ndarray
    labels: list

    def table(self):
        width = max(len(x) for x in self.labels + ["true\\pred"])
        cw = max(width, max(len(str(v)) for v in self.confusion.ravel()))
        lines = ["true\\pred".ljust(width) + " " + " ".join(lab.rjust(cw) for lab in self.labels)]
        for lab, row in zip(self.labels, self.confusion):
            lines.append(lab.ljust(width) + " " + " ".join(str(v).rjust(cw) for v in row))
        return "\n".join(lines)


def evaluate(model, test):
    if not test:
        raise DatasetError("test set is empty")
    labels = model.classes
    index = {lab: i for i, lab in enumerate(labels)}
    cm = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for feats, truth in test:
        if truth not in index:
            raise DatasetError(f"test label {truth!r} never seen in training")
        cm[index[truth], index[classify(model, feats)]] += 1
    return Evaluation(float(np.trace(cm) / cm.sum()), cm, labels)


# --- dataset generation ----------------------------------------------------

def _derive_seed(seed, class_index, stream):
    return int(np.random.SeedSequence([seed, class_index, stream]).generate_state(1, np.uint64)[0])


def capture_trace(topology, profile, seed, class_index=0, period=200_000, n_samples=1024,
                  spy=(1, 0), victim=(1, 0)):
    """Run one victim workload under one spy and return the spy's trace."""
    model = replace(topology.latency_model, rng_seed=_derive_seed(seed, class_index, 1))
    sim = Simulator(replace(topology, latency_model=model))
    duration = period * n_samples
    for req in generate_workload(profile, _derive_seed(seed, class_index, 0), duration, *victim):
        sim.schedule_transfer(req)
    agent = ProbeAgent(sim, *spy)
    return agent.record_trace(duration, period, label=profile.name)


@dataclass
class Example:
    features: FeatureVector
    label: str
    seed: int
    window: int


def build_dataset(topology, profiles, seeds, threshold, period=200_000, window_len=256,
                  windows_per_trace=4, traces=None):
    """One trace per (profile, seed), cut into ``windows_per_trace`` windows.

    If ``traces`` is a list, every captured trace is appended to it.
    """
    out = []
    for ci, profile in enumerate(profiles):
        for seed in seeds:
            tr = capture_trace(topology, profile, seed, ci, period, window_len * windows_per_trace)
            if traces is not None:
                traces.append((profile.name, seed, tr))
            for w, x in enumerate(windows(tr.latencies, window_len)):
                out.append(Example(extract_features(x, threshold), profile.name, seed, w))
    return out


def split_by_seed_parity(examples):
    train_set = [(e.features, e.label) for e in examples if e.seed % 2 == 0]
    test_set = [(e.features, e.label) for e in examples if e.seed % 2 == 1]
    return train_set, test_set


def write_dataset_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FEATURE_NAMES + ("label",))
        for feats, label in rows:
            w.writerow([repr(v) for v in astuple(feats)] + [label])


def read_dataset_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != FEATURE_NAMES + ("label",):
            raise DatasetError(f"{path}: unexpected header {header}")
        rows = []
        for rec in reader:
            vals = [float(v) for v in rec[:-1]]
            vals[-1] = int(vals[-1])
            rows.append((FeatureVector(*vals), rec[-1]))
    return rows

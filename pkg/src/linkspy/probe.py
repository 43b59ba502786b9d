"""The spy agent: timed probe transfers, fixed-grid traces and calibration."""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CalibrationError, ConfigError, SimulationError
from .sim_core import COVERT_PAYLOAD_BYTES, TAG_COVERT, TAG_PROBE, TransferRequest

# headroom added to latency bounds, in noise standard deviations
NOISE_MARGIN_SIGMAS = 6.0


@dataclass(frozen=True)
class ProbeSample:
    timestamp: int
    latency: int


@dataclass
class Trace:
    samples: list
    probe_bytes: int
    period: int
    seed: int
    label: str = None

    def __post_init__(self):
        if not self.samples:
            raise ConfigError("samples", "trace must not be empty")
        ts = [s.timestamp for s in self.samples]
        if any(b - a != self.period for a, b in zip(ts, ts[1:])):
            raise ConfigError("samples", f"timestamps must be spaced exactly {self.period} cycles apart")

    def __len__(self):
        return len(self.samples)

    @property
    def latencies(self):
        return np.array([s.latency for s in self.samples], dtype=np.float64)

    @property
    def timestamps(self):
        return np.array([s.timestamp for s in self.samples], dtype=np.int64)


@dataclass(frozen=True)
class Calibration:
    mu_idle: float
    mu_busy: float
    sigma_idle: float
    sigma_busy: float
    threshold: float

    def __post_init__(self):
        if not self.mu_busy > self.mu_idle:
            raise CalibrationError(f"busy mean {self.mu_busy} does not exceed idle mean {self.mu_idle}")
        if not self.mu_idle < self.threshold < self.mu_busy:
            raise CalibrationError(
                f"threshold {self.threshold} outside ({self.mu_idle}, {self.mu_busy})")


def max_plausible_latency(sim, probe_bytes=None):
    """Upper bound on a probe latency, up to ``NOISE_MARGIN_SIGMAS`` of noise.

    FIFO service caps the overlap-weighted volume a sublink can carry inside
    the probe window at ``rate * window``; link-level contention counts both
    sublinks.
    """
    m = sim.model
    rate = max(link.bytes_per_cycle for link in sim.topology.links)
    lanes = 2 if m.contention_scope == "link" else 1
    cap = lanes * rate * m.idle_base_cycles + (probe_bytes or sim.probe_bytes)
    return int(math.ceil(m.mean_latency(cap) + NOISE_MARGIN_SIGMAS * m.noise_sigma_cycles))


class ProbeAgent:
    """Issues probes from ``src`` to ``dst`` and timestamps their latency."""

    def __init__(self, sim, src=0, dst=1, probe_bytes=None):
        self.sim = sim
        self.src = src
        self.dst = dst
        self.probe_bytes = probe_bytes or sim.probe_bytes
        sim.topology.link_between(src, dst)

    def issue_probe(self, at=None):
        t = self.sim.now if at is None else at
        req = TransferRequest(self.src, self.dst, self.probe_bytes, t, TAG_PROBE)
        handle, latency = self.sim.issue_probe(req)
        self.sim.run_until(self.sim.transfer(handle).end_cycle)
        return ProbeSample(t, latency)

    def record_trace(self, duration, period, label=None):
        if period < 1:
            raise ConfigError("period", "must be >= 1")
        bound = max_plausible_latency(self.sim, self.probe_bytes)
        if period < bound:
            raise ConfigError("period", f"{period} cycles is shorter than the worst plausible probe latency {bound}")
        if duration < period:
            raise ConfigError("duration", f"{duration} is shorter than one period ({period})")
        t0 = self.sim.now
        samples = []
        for k in range(duration // period):
            t = t0 + k * period
            if self.sim.now > t:
                raise SimulationError(f"probe at {t} overran the grid (now={self.sim.now})")
            samples.append(self.issue_probe(at=t))
        return Trace(samples, self.probe_bytes, period, self.sim.model.rng_seed, label)

    def calibrate(self, n_idle, n_busy, threshold=None, payload_bytes=COVERT_PAYLOAD_BYTES):
        """Measure idle and fully-contended probes and place a threshold.

        Each busy probe is issued together with one ``payload_bytes`` transfer
        in the opposite direction. The threshold defaults to the midpoint of
        the two means.
        """
        if n_idle < 2:
            raise CalibrationError(f"n_idle must be >= 2 to estimate a deviation, got {n_idle}")
        if n_busy < 2:
            raise CalibrationError(f"n_busy must be >= 2 to estimate a deviation, got {n_busy}")
        spacing = max_plausible_latency(self.sim, self.probe_bytes)
        t = self.sim.now
        idle = []
        for _ in range(n_idle):
            idle.append(self.issue_probe(at=t).latency)
            t += spacing
        busy = []
        for _ in range(n_busy):
            self.sim.schedule_transfer(TransferRequest(self.dst, self.src, payload_bytes, t, TAG_COVERT))
            busy.append(self.issue_probe(at=t).latency)
            t = max(t + spacing, self.sim.now)
        self.sim.run_until(max(t, self.sim.now))
        idle = np.array(idle, dtype=np.float64)
        busy = np.array(busy, dtype=np.float64)
        mu_idle, mu_busy = float(idle.mean()), float(busy.mean())
        if threshold is None:
            threshold = (mu_idle + mu_busy) / 2
        return Calibration(mu_idle, mu_busy, float(idle.std(ddof=1)), float(busy.std(ddof=1)), float(threshold))


def write_trace_csv(trace, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = ["timestamp_cycles", "latency_cycles"]
        if trace.label is not None:
            header.append("label")
        w.writerow(header)
        for s in trace.samples:
            row = [s.timestamp, s.latency]
            if trace.label is not None:
                row.append(trace.label)
            w.writerow(row)


def read_trace_csv(path, probe_bytes=256, seed=0):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    samples = [ProbeSample(int(r["timestamp_cycles"]), int(r["latency_cycles"])) for r in rows]
    period = samples[1].timestamp - samples[0].timestamp if len(samples) > 1 else 1
    label = rows[0].get("label") if rows else None
    return Trace(samples, probe_bytes, period, seed, label)

"""Discrete-event model of GPUs joined by bidirectional point-to-point links.

Every link has two directed sublinks. Transfers on one sublink are served
FIFO at the link rate, so a transfer can only be delayed, never sped up.
Probes are observers: their reported latency is

    idle_base + cycles_per_byte * contending_bytes + N(0, sigma^2)

rounded to whole cycles and clamped to at least one cycle, where
``contending_bytes`` is the overlap-weighted volume of other traffic on the
link during ``[issue, issue + idle_base)``. Probes never occupy a sublink.
"""

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .config import get_float, get_int, get_str, parse_pairs
from .errors import ConfigError, RoutingError, SimulationError

TAG_PROBE = "probe"
TAG_COVERT = "covert-sender"
TAG_WORKLOAD = "workload"

# 1.25 MiB, the covert sender's buffer
COVERT_PAYLOAD_BYTES = 1_310_720
PROBE_BYTES = 256
IDLE_LATENCY = 28_356
BUSY_LATENCY = 68_368
# pins the busy endpoint: 28,356 + c * 1,310,720 == 68,368 exactly
DEFAULT_CYCLES_PER_BYTE = (BUSY_LATENCY - IDLE_LATENCY) / COVERT_PAYLOAD_BYTES
DEFAULT_NOISE_SIGMA = 8_800.0
DEFAULT_BYTES_PER_CYCLE = 64
DEFAULT_CLOCK_HZ = 1.38e9

SCOPE_LINK = "link"
SCOPE_SUBLINK = "sublink"


@dataclass(frozen=True)
class LatencyModel:
    idle_base_cycles: float = IDLE_LATENCY
    contention_cycles_per_byte: float = DEFAULT_CYCLES_PER_BYTE
    noise_sigma_cycles: float = DEFAULT_NOISE_SIGMA
    rng_seed: int = 0
    contention_scope: str = SCOPE_LINK

    def __post_init__(self):
        if not self.idle_base_cycles > 0:
            raise ConfigError("idle_base_cycles", "must be > 0")
        if not self.contention_cycles_per_byte >= 0:
            raise ConfigError("contention_cycles_per_byte", "must be >= 0")
        if not self.noise_sigma_cycles >= 0:
            raise ConfigError("noise_sigma_cycles", "must be >= 0")
        if not 0 <= self.rng_seed < 2**64:
            raise ConfigError("rng_seed", "must fit in an unsigned 64-bit integer")
        if self.contention_scope not in (SCOPE_LINK, SCOPE_SUBLINK):
            raise ConfigError("contention_scope", f"expected 'link' or 'sublink', got {self.contention_scope!r}")

    def mean_latency(self, contending_bytes):
        return self.idle_base_cycles + self.contention_cycles_per_byte * contending_bytes


@dataclass(frozen=True)
class Sublink:
    src: int
    dst: int


@dataclass(frozen=True)
class Link:
    endpoint_a: int
    endpoint_b: int
    bytes_per_cycle: float

    @property
    def sublink_ab(self):
        return Sublink(self.endpoint_a, self.endpoint_b)

    @property
    def sublink_ba(self):
        return Sublink(self.endpoint_b, self.endpoint_a)

    @property
    def key(self):
        return _pair_key(self.endpoint_a, self.endpoint_b)


def _pair_key(a, b):
    return (a, b) if a < b else (b, a)


@dataclass(frozen=True)
class Topology:
    gpus: tuple
    links: tuple
    clock_hz: float = DEFAULT_CLOCK_HZ
    latency_model: LatencyModel = field(default_factory=LatencyModel)

    def link_between(self, a, b):
        key = _pair_key(a, b)
        for link in self.links:
            if link.key == key:
                return link
        raise RoutingError(f"no link between GPU{a} and GPU{b}")


def build_topology(gpu_count=2, link_pairs=((0, 1),), bytes_per_cycle=DEFAULT_BYTES_PER_CYCLE,
                   clock_hz=DEFAULT_CLOCK_HZ, latency_model=None):
    if gpu_count < 2:
        raise ConfigError("gpu_count", f"need at least 2 GPUs, got {gpu_count}")
    if not bytes_per_cycle > 0:
        raise ConfigError("bytes_per_cycle", "must be > 0")
    if not clock_hz > 0:
        raise ConfigError("clock_hz", "must be > 0")
    gpus = tuple(range(gpu_count))
    seen = set()
    links = []
    for a, b in link_pairs:
        if a == b:
            raise ConfigError("link_pairs", f"self-link on GPU{a}")
        for g in (a, b):
            if g not in gpus:
                raise ConfigError("link_pairs", f"unknown GPU id {g}")
        key = _pair_key(a, b)
        if key in seen:
            raise ConfigError("link_pairs", f"duplicate link {key[0]}-{key[1]}")
        seen.add(key)
        links.append(Link(a, b, bytes_per_cycle))
    return Topology(gpus, tuple(links), float(clock_hz), latency_model or LatencyModel())


def topology_from_config(values, seed=None):
    """Build a topology from parsed ``key = value`` pairs."""
    model = LatencyModel(
        idle_base_cycles=get_float(values, "idle_base_cycles", IDLE_LATENCY),
        contention_cycles_per_byte=get_float(values, "contention_cycles_per_byte", DEFAULT_CYCLES_PER_BYTE),
        noise_sigma_cycles=get_float(values, "noise_sigma_cycles", DEFAULT_NOISE_SIGMA),
        rng_seed=seed if seed is not None else get_int(values, "seed", 0),
        contention_scope=get_str(values, "contention_scope", SCOPE_LINK),
    )
    rate = float(get_float(values, "bytes_per_cycle", DEFAULT_BYTES_PER_CYCLE))
    if rate.is_integer():
        rate = int(rate)
    return build_topology(
        gpu_count=get_int(values, "gpu_count", 2),
        link_pairs=parse_pairs(values.get("link_pairs", "0-1")),
        bytes_per_cycle=rate,
        clock_hz=get_float(values, "clock_hz", DEFAULT_CLOCK_HZ),
        latency_model=model,
    )


@dataclass(frozen=True)
class TransferRequest:
    src_gpu: int
    dst_gpu: int
    bytes: int
    issue_time: int
    tag: str = TAG_WORKLOAD


@dataclass(frozen=True)
class TransferHandle:
    index: int


@dataclass(frozen=True)
class ActiveTransfer:
    request: TransferRequest
    start_cycle: int
    end_cycle: int


@dataclass(frozen=True)
class CompletionEvent:
    handle: TransferHandle
    end_cycle: int
    tag: str


def nominal_duration(nbytes, bytes_per_cycle):
    if isinstance(bytes_per_cycle, int):
        return -(-nbytes // bytes_per_cycle)
    return math.ceil(nbytes / bytes_per_cycle)


class _LinkLedger:
    """Growable column store of the transfers carried by one link."""

    def __init__(self, capacity=64):
        self.n = 0
        self.starts = np.empty(capacity)
        self.ends = np.empty(capacity)
        self.sizes = np.empty(capacity)
        self.srcs = np.empty(capacity, dtype=np.int64)
        self.handles = np.empty(capacity, dtype=np.int64)

    def append(self, start, end, size, src, handle):
        if self.n == self.starts.shape[0]:
            cap = 2 * self.n
            for name in ("starts", "ends", "sizes", "srcs", "handles"):
                old = getattr(self, name)
                new = np.empty(cap, dtype=old.dtype)
                new[: self.n] = old[: self.n]
                setattr(self, name, new)
        i = self.n
        self.starts[i] = start
        self.ends[i] = end
        self.sizes[i] = size
        self.srcs[i] = src
        self.handles[i] = handle
        self.n += 1


class Simulator:
    """Single-timeline event loop over one :class:`Topology`.

    All randomness comes from one PCG64 stream seeded from the latency model;
    one normal variate is drawn per probe, in probe order.
    """

    def __init__(self, topology, probe_bytes=PROBE_BYTES):
        self.topology = topology
        self.model = topology.latency_model
        self.probe_bytes = probe_bytes
        self.now = 0
        self.rng = np.random.default_rng(self.model.rng_seed)
        self._transfers = []
        self._ledgers = {link.key: _LinkLedger() for link in topology.links}
        self._sublink_free = {}
        self._queue = []
        self._completed = {}

    # -- bookkeeping ----------------------------------------------------
    @property
    def transfers(self):
        return list(self._transfers)

    def transfer(self, handle):
        return self._transfers[handle.index]

    def resolve(self, handle):
        """End cycle of a completed transfer, ``None`` while still in flight."""
        return self._completed.get(handle.index)

    @property
    def scheduled_count(self):
        return len(self._transfers)

    @property
    def completed_count(self):
        return len(self._completed)

    def _check_request(self, req):
        if req.src_gpu == req.dst_gpu:
            raise ConfigError("dst_gpu", "source and destination must differ")
        if req.bytes < 1:
            raise ConfigError("bytes", f"transfer must carry at least 1 byte, got {req.bytes}")
        if req.issue_time < self.now:
            raise SimulationError(f"issue_time {req.issue_time} is before current time {self.now}")
        return self.topology.link_between(req.src_gpu, req.dst_gpu)

    def _enqueue(self, req, link, start, end):
        handle = TransferHandle(len(self._transfers))
        self._transfers.append(ActiveTransfer(req, start, end))
        self._ledgers[link.key].append(start, end, req.bytes, req.src_gpu, handle.index)
        heapq.heappush(self._queue, (end, handle.index))
        return handle

    # -- operations -----------------------------------------------------
    def schedule_transfer(self, req):
        link = self._check_request(req)
        dur = nominal_duration(req.bytes, link.bytes_per_cycle)
        sub = (req.src_gpu, req.dst_gpu)
        start = max(req.issue_time, self._sublink_free.get(sub, 0))
        end = start + dur
        self._sublink_free[sub] = end
        return self._enqueue(req, link, start, end)

    def run_until(self, t):
        if t < self.now:
            raise SimulationError(f"cannot run backwards from {self.now} to {t}")
        events = []
        while self._queue and self._queue[0][0] <= t:
            end, idx = heapq.heappop(self._queue)
            self._completed[idx] = end
            events.append(CompletionEvent(TransferHandle(idx), end, self._transfers[idx].request.tag))
        self.now = t
        return events

    def run_all(self):
        horizon = max((e for e, _ in self._queue), default=self.now)
        return self.run_until(max(horizon, self.now))

    def contending_bytes(self, link, window, exclude=None, direction=None):
        """Overlap-weighted bytes of traffic on ``link`` inside ``window``.

        ``direction`` is a ``(src, dst)`` pair; it only matters when the model
        counts contention per sublink.
        """
        w0, w1 = window
        if not w0 < w1:
            raise ConfigError("window", f"start {w0} must be before end {w1}")
        if not isinstance(link, Link):
            link = self.topology.link_between(*link)
        led = self._ledgers[link.key]
        n = led.n
        if n == 0:
            return 0.0
        active = np.ones(n, dtype=np.bool_)
        if exclude is not None:
            active &= led.handles[:n] != exclude.index
        if self.model.contention_scope == SCOPE_SUBLINK and direction is not None:
            active &= led.srcs[:n] == direction[0]
        return _kernels.overlap_bytes(led.starts[:n], led.ends[:n], led.sizes[:n], active,
                                      float(w0), float(w1))

    def issue_probe(self, probe):
        """Schedule a probe and return ``(handle, latency_cycles)``."""
        if probe.bytes != self.probe_bytes:
            raise ConfigError("probe_bytes", f"probe must be {self.probe_bytes} bytes, got {probe.bytes}")
        link = self._check_request(probe)
        start = probe.issue_time
        window = (start, start + self.model.idle_base_cycles)
        contending = self.contending_bytes(link, window, direction=(probe.src_gpu, probe.dst_gpu))
        noise = self.rng.standard_normal() * self.model.noise_sigma_cycles
        latency = max(1, int(round(self.model.mean_latency(contending) + noise)))
        handle = self._enqueue(probe, link, start, start + latency)
        return handle, latency

    def probe_latency(self, probe):
        return self.issue_probe(probe)[1]

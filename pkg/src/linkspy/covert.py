"""Latency-threshold covert channel between two GPUs sharing one link.

The sender owns GPU0 and pulls a large buffer from GPU1 during a slot to
send a 1; it stays quiet for a 0. The receiver on GPU1 times small probes
from GPU0 in every slot and thresholds them. A frame is a run of ones
(preamble), an optional fixed-width big-endian length header, then the
payload. Both sides share ``slot_cycles``; slot ``k`` starts at cycle
``k * slot_cycles``.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, EncodingError, FramingError, SyncTimeout, TruncationError
from .probe import NOISE_MARGIN_SIGMAS
from .sim_core import COVERT_PAYLOAD_BYTES, PROBE_BYTES, TAG_COVERT, TAG_PROBE, TransferRequest, nominal_duration

DEFAULT_THRESHOLD = 55_000
PREAMBLE_LEN = 4
LENGTH_FIELD_BITS = 16


@dataclass(frozen=True)
class ChannelConfig:
    slot_cycles: int = None  # None: smallest slot fitting a worst-case busy probe
    payload_bytes: int = COVERT_PAYLOAD_BYTES
    probe_bytes: int = PROBE_BYTES
    threshold: float = DEFAULT_THRESHOLD
    preamble_len: int = PREAMBLE_LEN
    probes_per_slot: int = 1
    length_field_bits: int = LENGTH_FIELD_BITS

    def __post_init__(self):
        if self.preamble_len < 1:
            raise ConfigError("preamble_len", "must be >= 1")
        if self.probes_per_slot < 1 or (self.probes_per_slot > 1 and self.probes_per_slot % 2 == 0):
            raise ConfigError("probes_per_slot", f"must be 1 or odd, got {self.probes_per_slot}")
        if self.length_field_bits < 0:
            raise ConfigError("length_field_bits", "must be >= 0")
        if self.payload_bytes < 1:
            raise ConfigError("payload_bytes", "must be >= 1")
        if self.slot_cycles is not None and self.slot_cycles < 1:
            raise ConfigError("slot_cycles", "must be >= 1")

    def resolved(self, sim):
        """Return a copy with ``slot_cycles`` filled in and checked against ``sim``."""
        worst = worst_case_busy_latency(sim, self)
        need = worst * self.probes_per_slot
        if self.slot_cycles is None:
            return replace(self, slot_cycles=need)
        if self.slot_cycles < need:
            raise ConfigError(
                "slot_cycles",
                f"{self.slot_cycles} cannot hold {self.probes_per_slot} probe(s) of up to {worst} cycles")
        return self

    @property
    def header_len(self):
        return self.preamble_len + self.length_field_bits


def worst_case_busy_latency(sim, cfg):
    m = sim.model
    return int(math.ceil(m.mean_latency(cfg.payload_bytes) + NOISE_MARGIN_SIGMAS * m.noise_sigma_cycles))


@dataclass(frozen=True)
class ChannelMetrics:
    bits_sent: int
    bit_errors: int
    ber: float
    bandwidth_kbps: float
    zeros_sent: int = 0
    zero_errors: int = 0
    ones_sent: int = 0
    one_errors: int = 0


# --- codec ------------------------------------------------------------------

def _bits(seq):
    return np.asarray(seq, dtype=np.uint8).ravel()


def encode_text(text):
    out = np.empty(8 * len(text), dtype=np.uint8)
    for i, ch in enumerate(text):
        code = ord(ch)
        if code > 0x7F:
            raise EncodingError(f"character {ch!r} (U+{code:04X}) is not 7-bit ASCII")
        for j in range(8):
            out[8 * i + j] = (code >> (7 - j)) & 1
    return out


def decode_bits(bits):
    bits = _bits(bits)
    if bits.size % 8:
        raise FramingError(f"bit count {bits.size} is not a multiple of 8")
    weights = 1 << np.arange(7, -1, -1)
    codes = bits.reshape(-1, 8).astype(np.int64) @ weights
    return "".join(chr(c) for c in codes)


def int_to_bits(value, width):
    return np.array([(value >> (width - 1 - i)) & 1 for i in range(width)], dtype=np.uint8)


def bits_to_int(bits):
    value = 0
    for b in bits:
        value = (value << 1) | int(b)
    return value


def build_frame(payload, cfg):
    payload = _bits(payload)
    parts = [np.ones(cfg.preamble_len, dtype=np.uint8)]
    if cfg.length_field_bits:
        if payload.size >= 1 << cfg.length_field_bits:
            raise FramingError(
                f"payload of {payload.size} bits does not fit a {cfg.length_field_bits}-bit length field")
        parts.append(int_to_bits(payload.size, cfg.length_field_bits))
    parts.append(payload)
    return np.concatenate(parts)


# --- sender / receiver ------------------------------------------------------

def sender_run(sim, cfg, frame, start_slot=0, src=0, remote=1):
    """Schedule the sender's copies for ``frame`` starting at ``start_slot``.

    The sender sits on ``src`` and copies from the ``remote`` GPU, so the
    traffic flows remote -> src. Each probe sub-slot of a 1-slot gets its own
    copy so every probe the receiver takes in that slot is contended.
    """
    cfg = cfg.resolved(sim)
    frame = _bits(frame)
    sub = cfg.slot_cycles // cfg.probes_per_slot
    rate = sim.topology.link_between(remote, src).bytes_per_cycle
    if nominal_duration(cfg.payload_bytes, rate) > sub:
        raise ConfigError("payload_bytes", f"copy of {cfg.payload_bytes} bytes does not fit a {sub}-cycle slot")
    handles = []
    for k, bit in enumerate(frame):
        if not bit:
            continue
        t0 = (start_slot + k) * cfg.slot_cycles
        for j in range(cfg.probes_per_slot):
            req = TransferRequest(remote, src, cfg.payload_bytes, t0 + j * sub, TAG_COVERT)
            handles.append(sim.schedule_transfer(req))
    return handles


def classify_sample(latency, threshold):
    return 1 if latency > threshold else 0


class FrameDecoder:
    """Bit-at-a-time preamble scanner and frame parser."""

    def __init__(self, cfg, expected_bits=None):
        if cfg.length_field_bits == 0 and expected_bits is None:
            raise ConfigError("expected_bits", "required when the length header is disabled")
        self.cfg = cfg
        self.expected_bits = expected_bits
        self.run = 0
        self.pos = 0
        self.frame_start = None
        self.length = None if cfg.length_field_bits else expected_bits
        self._header = []
        self.payload = []

    @property
    def done(self):
        return self.length is not None and self.frame_start is not None and len(self.payload) == self.length

    def push(self, bit):
        i = self.pos
        self.pos += 1
        if self.frame_start is None:
            self.run = self.run + 1 if bit else 0
            if self.run == self.cfg.preamble_len:
                self.frame_start = i - self.cfg.preamble_len + 1
            return
        if self.length is None:
            self._header.append(bit)
            if len(self._header) == self.cfg.length_field_bits:
                self.length = bits_to_int(self._header)
            return
        if len(self.payload) < self.length:
            self.payload.append(bit)

    def slots_needed(self):
        """Slots still required to finish the frame, once the length is known."""
        return self.length - len(self.payload)


@dataclass
class Reception:
    payload: np.ndarray
    frame_start: int  # slot index of the first preamble bit
    length: int
    first_slot: int
    slot_latencies: list = field(default_factory=list)
    slot_bits: list = field(default_factory=list)

    def text(self):
        return decode_bits(self.payload)


def _observe_slot(sim, cfg, slot_index, src, dst):
    sub = cfg.slot_cycles // cfg.probes_per_slot
    t0 = slot_index * cfg.slot_cycles
    lats = []
    for j in range(cfg.probes_per_slot):
        req = TransferRequest(src, dst, cfg.probe_bytes, t0 + j * sub, TAG_PROBE)
        handle, lat = sim.issue_probe(req)
        sim.run_until(sim.transfer(handle).end_cycle)
        lats.append(lat)
    votes = sum(classify_sample(v, cfg.threshold) for v in lats)
    return lats, 1 if 2 * votes > len(lats) else 0


def receiver_run(sim, cfg, max_slots, src=0, dst=1, expected_bits=None):
    """Probe slot by slot until a full frame has been decoded.

    The receiver sits on ``dst`` and times copies ``src -> dst``.
    """
    cfg = cfg.resolved(sim)
    first = -(-sim.now // cfg.slot_cycles)
    dec = FrameDecoder(cfg, expected_bits)
    lat_log, bit_log = [], []
    for n in range(max_slots):
        lats, bit = _observe_slot(sim, cfg, first + n, src, dst)
        lat_log.append(lats)
        bit_log.append(bit)
        dec.push(bit)
        if dec.frame_start is not None and dec.length is not None:
            if dec.done:
                break
            if dec.slots_needed() > max_slots - n - 1:
                raise TruncationError(
                    f"length header says {dec.length} bits but only {max_slots - n - 1} slots remain")
    else:
        if dec.frame_start is None:
            raise SyncTimeout(f"no {cfg.preamble_len}-bit preamble within {max_slots} slots")
        if not dec.done:
            raise TruncationError("slot budget exhausted inside the frame")
    return Reception(np.array(dec.payload, dtype=np.uint8), first + dec.frame_start, dec.length, first,
                     lat_log, bit_log)


# --- metrology --------------------------------------------------------------

def q_function(x):
    """Standard normal upper tail probability."""
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def expected_error_rates(mu_idle, mu_busy, sigma, threshold):
    """Per-symbol error rates ``(P[0 read as 1], P[1 read as 0])`` under Gaussian noise."""
    if sigma == 0:
        return float(mu_idle > threshold), float(mu_busy <= threshold)
    return q_function((threshold - mu_idle) / sigma), q_function((mu_busy - threshold) / sigma)


def compute_metrics(sent, received, elapsed_cycles, clock_hz):
    sent = _bits(sent)
    received = _bits(received)
    n = min(sent.size, received.size)
    wrong = sent[:n] != received[:n]
    missing = sent.size - n
    errors = int(wrong.sum()) + missing
    zeros = sent == 0
    ones = ~zeros
    zero_err = int(wrong[zeros[:n]].sum()) + int(zeros[n:].sum())
    one_err = int(wrong[ones[:n]].sum()) + int(ones[n:].sum())
    ber = errors / sent.size if sent.size else 0.0
    kbps = sent.size * clock_hz / elapsed_cycles / 1000 if sent.size and elapsed_cycles > 0 else 0.0
    return ChannelMetrics(int(sent.size), errors, ber, kbps, int(zeros.sum()), zero_err, int(ones.sum()), one_err)


@dataclass
class Transmission:
    sent: np.ndarray
    frame: np.ndarray
    start_slot: int
    slot_latencies: list
    slot_bits: np.ndarray
    aligned: np.ndarray  # per-slot decisions at the true payload positions
    reception: Reception = None
    sync_error: str = None


def transmit(sim, cfg, payload, start_slot=0, sender=(0, 1), receiver=(0, 1)):
    """Run sender and receiver over one frame and keep every slot decision.

    ``aligned`` holds the receiver's decisions at the slots the sender used
    for the payload, which is what BER is measured against. ``reception`` is
    the receiver's own frame parse, ``None`` if it failed (``sync_error``).
    """
    cfg = cfg.resolved(sim)
    payload = _bits(payload)
    frame = build_frame(payload, cfg)
    sender_run(sim, cfg, frame, start_slot=start_slot, src=sender[0], remote=sender[1])
    first = -(-sim.now // cfg.slot_cycles)
    n_slots = start_slot + frame.size - first
    lat_log, bit_log = [], []
    for n in range(n_slots):
        lats, bit = _observe_slot(sim, cfg, first + n, receiver[0], receiver[1])
        lat_log.append(lats)
        bit_log.append(bit)
    bits = np.array(bit_log, dtype=np.uint8)
    off = start_slot - first + cfg.header_len
    aligned = bits[off: off + payload.size]
    expected = payload.size if cfg.length_field_bits == 0 else None
    rec, err = None, None
    try:
        dec = FrameDecoder(cfg, expected)
        for b in bits:
            dec.push(int(b))
            if dec.done:
                break
        if dec.frame_start is None:
            raise SyncTimeout(f"no {cfg.preamble_len}-bit preamble within {bits.size} slots")
        if not dec.done:
            raise TruncationError("frame runs past the observed slots")
        rec = Reception(np.array(dec.payload, dtype=np.uint8), first + dec.frame_start, dec.length, first,
                        lat_log, bit_log)
    except (SyncTimeout, TruncationError) as exc:
        err = str(exc)
    return Transmission(payload, frame, start_slot, lat_log, bits, aligned, rec, err)

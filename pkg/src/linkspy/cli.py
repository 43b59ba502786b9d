"""Experiment harness.

    linkspy <mode> [--config PATH] [--seed N] --out DIR [--runs N]
                   [--message S | --bits N] [--profiles a,b,c] [--threshold N]

Modes: calibrate, covert-send-receive, fingerprint-generate, fingerprint-eval.
Command-line values beat config-file values, which beat built-in defaults.
"""

import argparse
import csv
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import covert, fingerprint
from .config import get_float, get_int, get_str, load_config
from .errors import ConfigError, DatasetError, FramingError, LinkSpyError
from .probe import ProbeAgent, write_trace_csv
from .sim_core import Simulator, topology_from_config

MODES = ("calibrate", "covert-send-receive", "fingerprint-generate", "fingerprint-eval")


@dataclass
class ExperimentSpec:
    mode: str
    output_dir: Path
    config_path: Path = None
    seed: int = 0
    runs: int = None
    message: str = None
    payload_bits: int = None
    profiles: list = None
    threshold: float = None
    values: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError("mode", f"unknown mode {self.mode!r}")
        self.output_dir = Path(self.output_dir)
        if self.config_path is not None:
            self.values = load_config(self.config_path)
        if self.seed < 0:
            raise ConfigError("seed", "must be >= 0")

    def topology(self, seed=None):
        return topology_from_config(self.values, self.seed if seed is None else seed)

    def get_threshold(self, default):
        if self.threshold is not None:
            return self.threshold
        return get_float(self.values, "threshold", default)


def _write_kv(path, pairs):
    with open(path, "w") as fh:
        for k, v in pairs:
            fh.write(f"{k} = {v}\n")


def _out(spec):
    spec.output_dir.mkdir(parents=True, exist_ok=True)
    return spec.output_dir


def _fmt(x):
    return repr(float(x))


# --- calibrate --------------------------------------------------------------

def run_calibrate(spec):
    out = _out(spec)
    sim = Simulator(spec.topology(), probe_bytes=get_int(spec.values, "probe_bytes", 256))
    agent = ProbeAgent(sim, get_int(spec.values, "probe_src", 0), get_int(spec.values, "probe_dst", 1))
    cal = agent.calibrate(
        get_int(spec.values, "calib_idle", 50),
        get_int(spec.values, "calib_busy", 50),
        threshold=spec.get_threshold(None),
        payload_bytes=get_int(spec.values, "payload_bytes", covert.COVERT_PAYLOAD_BYTES),
    )
    pairs = [("mu_idle", _fmt(cal.mu_idle)), ("mu_busy", _fmt(cal.mu_busy)),
             ("sigma_idle", _fmt(cal.sigma_idle)), ("sigma_busy", _fmt(cal.sigma_busy)),
             ("threshold", _fmt(cal.threshold))]
    _write_kv(out / "calibration.txt", pairs)
    _write_kv(out / "report.txt", [("mode", spec.mode), ("seed", spec.seed)] + pairs)
    return cal


# --- covert -----------------------------------------------------------------

def channel_config(spec):
    v = spec.values
    slot = get_int(v, "slot_cycles", 0)
    return covert.ChannelConfig(
        slot_cycles=slot or None,
        payload_bytes=get_int(v, "payload_bytes", covert.COVERT_PAYLOAD_BYTES),
        probe_bytes=get_int(v, "probe_bytes", 256),
        threshold=spec.get_threshold(covert.DEFAULT_THRESHOLD),
        preamble_len=get_int(v, "preamble_len", covert.PREAMBLE_LEN),
        probes_per_slot=get_int(v, "probes_per_slot", 1),
        length_field_bits=get_int(v, "length_field_bits", covert.LENGTH_FIELD_BITS),
    )


def run_covert(spec):
    out = _out(spec)
    v = spec.values
    runs = spec.runs if spec.runs is not None else get_int(v, "runs", 5)
    if runs < 1:
        raise ConfigError("runs", f"must be >= 1, got {runs}")
    message = spec.message if spec.message is not None else v.get("message")
    nbits = spec.payload_bits if spec.payload_bits is not None else get_int(v, "payload_bits", 0) or None
    if spec.message is not None and spec.payload_bits is not None:
        raise ConfigError("message", "give either a message or a bit count, not both")
    if message is None and nbits is None:
        raise ConfigError("message", "a text message or a payload bit count is required")
    if message is None and nbits < 1:
        raise ConfigError("bits", "must be >= 1")
    start_slot = get_int(v, "start_slot", 0)
    payload_rng = np.random.default_rng(spec.seed)

    results = []
    for r in range(runs):
        topo = spec.topology(seed=spec.seed + r)
        sim = Simulator(topo, probe_bytes=get_int(v, "probe_bytes", 256))
        cfg = channel_config(spec).resolved(sim)
        if message is not None:
            payload = covert.encode_text(message)
        else:
            payload = payload_rng.integers(0, 2, nbits, dtype=np.uint8)
        tx = covert.transmit(sim, cfg, payload, start_slot=start_slot)
        elapsed = payload.size * cfg.slot_cycles
        metrics = covert.compute_metrics(payload, tx.aligned, elapsed, topo.clock_hz)
        results.append((metrics, tx, cfg))
        with open(out / f"slots_run{r}.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["slot", "latency_cycles", "decoded_bit"])
            for i, (lats, bit) in enumerate(zip(tx.slot_latencies, tx.slot_bits)):
                for lat in lats:
                    w.writerow([i, lat, int(bit)])
        if message is not None:
            if tx.reception is not None:
                try:
                    print(f"run {r}: {tx.reception.text()}")
                except FramingError as exc:
                    print(f"run {r}: <undecodable: {exc}>")
            else:
                print(f"run {r}: <no frame: {tx.sync_error}>")

    mean_ber = float(np.mean([m.ber for m, _, _ in results]))
    mean_kbps = float(np.mean([m.bandwidth_kbps for m, _, _ in results]))
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run", "bits", "errors", "ber", "bandwidth_kbps"])
        for r, (m, _, _) in enumerate(results):
            w.writerow([r, m.bits_sent, m.bit_errors, _fmt(m.ber), _fmt(m.bandwidth_kbps)])
        w.writerow(["mean", sum(m.bits_sent for m, _, _ in results), sum(m.bit_errors for m, _, _ in results),
                    _fmt(mean_ber), _fmt(mean_kbps)])

    topo = spec.topology()
    model = topo.latency_model
    cfg = results[0][2]
    p01, p10 = covert.expected_error_rates(model.mean_latency(0), model.mean_latency(cfg.payload_bytes),
                                           model.noise_sigma_cycles, cfg.threshold)
    lines = [("mode", spec.mode), ("seed", spec.seed), ("runs", runs), ("slot_cycles", cfg.slot_cycles),
             ("threshold", _fmt(cfg.threshold)), ("noise_sigma_cycles", _fmt(model.noise_sigma_cycles)),
             ("clock_hz", _fmt(topo.clock_hz)), ("mean_ber", _fmt(mean_ber)), ("mean_bandwidth_kbps", _fmt(mean_kbps)),
             ("expected_p_false_one", _fmt(p01)), ("expected_p_missed_one", _fmt(p10))]
    for r, (m, tx, _) in enumerate(results):
        status = "ok" if tx.reception is not None else tx.sync_error
        lines.append((f"run{r}", f"bits={m.bits_sent} errors={m.bit_errors} ber={_fmt(m.ber)} "
                                 f"zero_errors={m.zero_errors}/{m.zeros_sent} one_errors={m.one_errors}/{m.ones_sent} "
                                 f"sync={status}"))
        if message is not None and tx.reception is not None:
            lines.append((f"run{r}_frame_start", tx.reception.frame_start))
    _write_kv(out / "report.txt", lines)
    return [m for m, _, _ in results]


# --- fingerprint ------------------------------------------------------------

def _fingerprint_setup(spec):
    v = spec.values
    topo = spec.topology()
    known = fingerprint.default_profiles(topo.links[0].bytes_per_cycle)
    names = spec.profiles
    if names is None:
        raw = get_str(v, "profiles", ",".join(known))
        names = [n.strip() for n in raw.split(",") if n.strip()]
    for n in names:
        if n not in known:
            raise ConfigError("profiles", f"unknown profile {n!r}; known: {', '.join(known)}")
    if len(set(names)) < 2:
        raise DatasetError("profiles: need at least 2 distinct workload classes")
    n_seeds = get_int(v, "seeds_per_profile", 12)
    if n_seeds < 2:
        raise ConfigError("seeds_per_profile", "need >= 2 so both parity halves are populated")
    params = dict(
        threshold=spec.get_threshold(covert.DEFAULT_THRESHOLD),
        period=get_int(v, "trace_period", 200_000),
        window_len=get_int(v, "window_len", 256),
        windows_per_trace=get_int(v, "windows_per_trace", 4),
    )
    return topo, [known[n] for n in names], range(spec.seed, spec.seed + n_seeds), params


def run_fingerprint_generate(spec, write_traces=True):
    out = _out(spec)
    topo, profiles, seeds, params = _fingerprint_setup(spec)
    traces = []
    examples = fingerprint.build_dataset(topo, profiles, seeds, traces=traces, **params)
    train_set, test_set = fingerprint.split_by_seed_parity(examples)
    fingerprint.write_dataset_csv([(e.features, e.label) for e in examples], out / "dataset.csv")
    fingerprint.write_dataset_csv(train_set, out / "train.csv")
    fingerprint.write_dataset_csv(test_set, out / "test.csv")
    if write_traces:
        tdir = out / "traces"
        tdir.mkdir(exist_ok=True)
        for name, seed, tr in traces:
            write_trace_csv(tr, tdir / f"{name}_seed{seed}.csv")
    return train_set, test_set


def run_fingerprint(spec):
    out = _out(spec)
    train_set, test_set = run_fingerprint_generate(spec)
    k = get_int(spec.values, "k", 3)
    model = fingerprint.train(train_set, k)
    ev = fingerprint.evaluate(model, test_set)
    with open(out / "confusion.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["true\\pred"] + ev.labels)
        for lab, row in zip(ev.labels, ev.confusion):
            w.writerow([lab] + [int(x) for x in row])
    (out / "confusion.txt").write_text(ev.table() + "\n")
    with open(out / "report.txt", "w") as fh:
        fh.write(f"mode = {spec.mode}\nseed = {spec.seed}\nk = {k}\n")
        fh.write(f"train_windows = {len(train_set)}\ntest_windows = {len(test_set)}\n")
        fh.write(f"accuracy = {_fmt(ev.accuracy)}\n\n{ev.table()}\n")
    print(f"accuracy = {ev.accuracy:.4f}")
    print(ev.table())
    return ev


RUNNERS = {
    "calibrate": run_calibrate,
    "covert-send-receive": run_covert,
    "fingerprint-generate": run_fingerprint_generate,
    "fingerprint-eval": run_fingerprint,
}


def build_parser():
    p = argparse.ArgumentParser(prog="linkspy", description="Interconnect congestion covert/side channel simulator")
    p.add_argument("mode", choices=MODES)
    p.add_argument("--config", type=Path, help="flat key = value configuration file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--runs", type=int)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--message", help="text to send over the covert channel")
    g.add_argument("--bits", type=int, help="send this many random payload bits")
    p.add_argument("--profiles", help="comma-separated workload profile names")
    p.add_argument("--threshold", type=float, help="decision threshold in cycles")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        spec = ExperimentSpec(
            mode=args.mode, output_dir=args.out, config_path=args.config, seed=args.seed, runs=args.runs,
            message=args.message, payload_bits=args.bits,
            profiles=[s.strip() for s in args.profiles.split(",") if s.strip()] if args.profiles else None,
            threshold=args.threshold,
        )
        RUNNERS[spec.mode](spec)
    except LinkSpyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

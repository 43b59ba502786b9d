import random
import string

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from linkspy.covert import (
    ChannelConfig,
    FrameDecoder,
    bits_to_int,
    build_frame,
    classify_sample,
    compute_metrics,
    decode_bits,
    encode_text,
    expected_error_rates,
    int_to_bits,
    q_function,
    receiver_run,
    sender_run,
    transmit,
)
from linkspy.errors import ConfigError, EncodingError, FramingError, SyncTimeout, TruncationError
from linkspy.probe import ProbeAgent
from linkspy.sim_core import LatencyModel, Simulator, build_topology
from oracles import normal_tail

QUIET = ChannelConfig()


def quiet_sim(seed=0, **model):
    model.setdefault("noise_sigma_cycles", 0.0)
    return Simulator(build_topology(latency_model=LatencyModel(rng_seed=seed, **model)))


# --- codec ----------------------------------------------------------------

def test_encode_single_char():
    assert "".join(map(str, encode_text("H"))) == "01001000"


def test_encode_empty():
    assert encode_text("").size == 0
    assert decode_bits([]) == ""


def test_hello_message_roundtrip():
    bits = encode_text("Hello,NVLink!")
    assert bits.size == 104
    assert decode_bits(bits) == "Hello,NVLink!"


def test_decode_single_byte():
    assert decode_bits([0, 1, 0, 0, 1, 0, 0, 0]) == "H"


def test_decode_rejects_partial_byte():
    with pytest.raises(FramingError):
        decode_bits([0, 1, 0, 0, 1, 0, 0])


def test_encode_names_bad_character():
    with pytest.raises(EncodingError, match="é"):
        encode_text("café")


def test_random_printable_roundtrip():
    rng = random.Random(2024)
    for _ in range(1000):
        s = "".join(rng.choice(string.printable) for _ in range(rng.randint(0, 40)))
        assert decode_bits(encode_text(s)) == s


@given(st.text(alphabet=st.characters(max_codepoint=127)))
def test_roundtrip_any_ascii(s):
    assert decode_bits(encode_text(s)) == s


@given(st.integers(0, 2**16 - 1))
def test_length_field_roundtrip(n):
    assert bits_to_int(int_to_bits(n, 16)) == n


# --- framing --------------------------------------------------------------

def test_frame_layout():
    payload = encode_text("H")
    frame = build_frame(payload, QUIET)
    assert frame.size == 4 + 16 + 8
    assert list(frame[:4]) == [1, 1, 1, 1]
    assert bits_to_int(frame[4:20]) == 8
    assert list(frame[20:]) == list(payload)


def test_empty_payload_frame():
    assert list(build_frame([], QUIET)) == [1, 1, 1, 1] + [0] * 16


def test_payload_too_long_for_header():
    with pytest.raises(FramingError):
        build_frame(np.zeros(2**16, dtype=np.uint8), QUIET)


def test_headerless_frame():
    cfg = ChannelConfig(length_field_bits=0)
    assert list(build_frame([0, 1], cfg)) == [1, 1, 1, 1, 0, 1]


@pytest.mark.parametrize("kwargs", [dict(preamble_len=0), dict(probes_per_slot=2), dict(probes_per_slot=0),
                                    dict(slot_cycles=0), dict(length_field_bits=-1)])
def test_bad_channel_config(kwargs):
    with pytest.raises(ConfigError):
        ChannelConfig(**kwargs)


def test_decoder_handles_preamble_inside_payload():
    payload = [1, 1, 1, 1, 1, 0, 1, 1, 1, 1]
    dec = FrameDecoder(QUIET)
    for b in [0, 0, 1, 0] + list(build_frame(payload, QUIET)):
        dec.push(b)
    assert dec.done and dec.frame_start == 4 and dec.payload == payload


# --- decision rule --------------------------------------------------------

@pytest.mark.parametrize("latency,bit", [(68_368, 1), (28_356, 0), (55_000, 0), (55_001, 1)])
def test_classify_sample(latency, bit):
    assert classify_sample(latency, 55_000) == bit


@given(st.lists(st.integers(1, 200_000), min_size=1, max_size=50), st.integers(0, 200_000), st.integers(0, 50_000))
def test_raising_threshold_never_creates_ones(lats, t, bump):
    lo = [classify_sample(v, t) for v in lats]
    hi = [classify_sample(v, t + bump) for v in lats]
    assert all(h <= l for l, h in zip(lo, hi))


# --- sender / receiver ----------------------------------------------------

def test_sender_101_gives_busy_idle_busy():
    sim = quiet_sim()
    cfg = QUIET.resolved(sim)
    sender_run(sim, cfg, [1, 0, 1])
    agent = ProbeAgent(sim)
    lats = [agent.issue_probe(at=k * cfg.slot_cycles).latency for k in range(3)]
    assert lats == [68_368, 28_356, 68_368]


def test_all_zero_frame_keeps_link_idle():
    sim = quiet_sim()
    assert sender_run(sim, QUIET, [0] * 12) == []
    cfg = QUIET.resolved(sim)
    agent = ProbeAgent(sim)
    assert {agent.issue_probe(at=k * cfg.slot_cycles).latency for k in range(12)} == {28_356}


def test_all_one_frame_schedules_n_transfers():
    sim = quiet_sim()
    assert len(sender_run(sim, QUIET, [1] * 9)) == 9
    assert len(sender_run(quiet_sim(), ChannelConfig(probes_per_slot=3), [1] * 9)) == 27


def test_sender_rejects_copy_longer_than_slot():
    with pytest.raises(ConfigError) as exc:
        # no contention cost, so a 30k-cycle slot passes the probe check but the copy needs 156k cycles
        sender_run(quiet_sim(contention_cycles_per_byte=0), ChannelConfig(payload_bytes=10_000_000, slot_cycles=30_000),
                   [1])
    assert exc.value.field == "payload_bytes"


def test_slot_too_short_rejected():
    with pytest.raises(ConfigError) as exc:
        ChannelConfig(slot_cycles=50_000).resolved(quiet_sim())
    assert exc.value.field == "slot_cycles"


def test_default_slot_fits_one_worst_case_busy_probe():
    assert QUIET.resolved(quiet_sim()).slot_cycles == 68_368
    assert QUIET.resolved(quiet_sim(noise_sigma_cycles=8_800)).slot_cycles == 68_368 + 6 * 8_800
    assert ChannelConfig(probes_per_slot=3).resolved(quiet_sim()).slot_cycles == 3 * 68_368


def test_receiver_decodes_hello_message():
    sim = quiet_sim()
    sender_run(sim, QUIET, build_frame(encode_text("Hello,NVLink!"), QUIET), start_slot=3)
    rec = receiver_run(sim, QUIET, max_slots=200)
    assert rec.frame_start == 3
    assert rec.text() == "Hello,NVLink!"
    assert rec.length == 104


def test_receiver_times_out_on_idle_channel():
    with pytest.raises(SyncTimeout):
        receiver_run(quiet_sim(), QUIET, max_slots=40)


def test_receiver_reports_truncation():
    sim = quiet_sim()
    sender_run(sim, QUIET, build_frame(np.zeros(500, dtype=np.uint8), QUIET))
    with pytest.raises(TruncationError):
        receiver_run(sim, QUIET, max_slots=100)


def test_headerless_receiver_needs_expected_length():
    cfg = ChannelConfig(length_field_bits=0)
    with pytest.raises(ConfigError):
        receiver_run(quiet_sim(), cfg, max_slots=10)
    sim = quiet_sim()
    sender_run(sim, cfg, build_frame([0, 1, 1, 0], cfg))
    assert list(receiver_run(sim, cfg, max_slots=10, expected_bits=4).payload) == [0, 1, 1, 0]


@settings(max_examples=15, deadline=None)
@given(st.lists(st.integers(0, 1), max_size=400), st.integers(0, 5))
def test_zero_noise_channel_is_perfect(payload, start):
    tx = transmit(quiet_sim(), QUIET, payload, start_slot=start)
    assert tx.sync_error is None
    assert tx.reception.frame_start == start
    assert list(tx.reception.payload) == payload
    assert compute_metrics(payload, tx.reception.payload, 1, 1.0).bit_errors == 0


def test_zero_noise_longest_payload():
    payload = np.random.default_rng(4).integers(0, 2, 2**16 - 1, dtype=np.uint8)
    tx = transmit(quiet_sim(), QUIET, payload)
    assert np.array_equal(tx.reception.payload, payload)


def test_majority_vote_never_worse():
    bers = {1: [], 3: []}
    for seed in range(20):
        payload = np.random.default_rng(seed).integers(0, 2, 1500, dtype=np.uint8)
        for m in (1, 3):
            sim = Simulator(build_topology(latency_model=LatencyModel(rng_seed=seed)))
            tx = transmit(sim, ChannelConfig(probes_per_slot=m), payload)
            bers[m].append(compute_metrics(payload, tx.aligned, 1, 1.0).ber)
    assert all(b3 <= b1 for b1, b3 in zip(bers[1], bers[3]))
    assert np.mean(bers[3]) < np.mean(bers[1])


# --- metrology ------------------------------------------------------------

def test_ber_from_mismatches():
    sent = np.zeros(10_000, dtype=np.uint8)
    recv = sent.copy()
    recv[:322] = 1
    m = compute_metrics(sent, recv, 10_000, 1.0)
    assert m.bit_errors == 322 and m.ber == pytest.approx(0.0322, abs=1e-15)
    assert m.zero_errors == 322 and m.one_errors == 0


def test_identical_streams():
    bits = np.random.default_rng(0).integers(0, 2, 500)
    m = compute_metrics(bits, bits, 500, 1.0)
    assert m.ber == 0 and m.bit_errors == 0


def test_missing_bits_count_as_errors():
    m = compute_metrics([1, 0, 1, 1], [1, 0], 4, 1.0)
    assert m.bit_errors == 2 and m.one_errors == 2 and m.ber == 0.5


def test_bandwidth_arithmetic():
    clock = 1.38e9
    slot = clock / 45_500
    m = compute_metrics(np.ones(10_000), np.ones(10_000), 10_000 * slot, clock)
    assert m.bandwidth_kbps == pytest.approx(45.5, abs=1e-9)


def test_empty_transmission_metrics():
    m = compute_metrics([], [], 0, 1.0)
    assert m.ber == 0.0 and m.bandwidth_kbps == 0.0


@pytest.mark.parametrize("x", [0.0, 0.5, 1.519, 3.0277, 5.0])
def test_q_function_against_numeric_integration(x):
    assert q_function(x) == pytest.approx(normal_tail(x), rel=1e-9, abs=1e-14)


def test_expected_error_rates_at_default_constants():
    p_false_one, p_missed_one = expected_error_rates(28_356, 68_368, 8_800, 55_000)
    assert p_false_one == pytest.approx(0.001232, abs=5e-6)
    assert p_missed_one == pytest.approx(0.06437, abs=5e-5)
    assert 0.027 < (p_false_one + p_missed_one) / 2 < 0.037


def test_expected_error_rates_without_noise():
    assert expected_error_rates(28_356, 68_368, 0, 55_000) == (0.0, 0.0)

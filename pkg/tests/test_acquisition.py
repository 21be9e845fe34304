"""Ingest, pairing and bounded-queue drop accounting tests."""

import itertools
import threading

import pytest

from fieldpack.acquisition import (
    DuplicateSensorIdError,
    FramePair,
    FramePairer,
    Ingestor,
    PairDropout,
    RecordType,
    RecordingQueue,
    SensorDescriptor,
    SensorKind,
    UnknownSensorError,
)
from fieldpack.clock import SimClock

LIDAR = SensorDescriptor(id=3, name="LIDAR", kind=SensorKind.LIDAR, nominal_rate_hz=750, silence_timeout_ms=1000)


def make_ingestor():
    clock = SimClock()
    ing = Ingestor(clock)
    ing.register(LIDAR)
    return ing, clock


def test_first_packet_seq_zero_and_stats():
    ing, _ = make_ingestor()
    rec = ing.ingest(3, RecordType.LIDAR_PKT, b"\x00" * 1206)
    assert rec.seq == 0
    stats = ing.stats(3)
    assert stats.ingested == 1
    assert stats.bytes_in == 1206


def test_seq_and_mono_monotonic():
    ing, clock = make_ingestor()
    r0 = ing.ingest(3, RecordType.LIDAR_PKT, b"a")
    clock.advance(1000)
    r1 = ing.ingest(3, RecordType.LIDAR_PKT, b"b")
    assert (r0.seq, r1.seq) == (0, 1)
    assert r1.mono_ns >= r0.mono_ns


def test_unknown_sensor_rejected_and_counted():
    ing, _ = make_ingestor()
    with pytest.raises(UnknownSensorError):
        ing.ingest(99, RecordType.LIDAR_PKT, b"x")
    assert ing.rejected_unknown == 1


def test_duplicate_id_names_existing_sensor():
    ing, _ = make_ingestor()
    dupe = SensorDescriptor(id=3, name="OTHER", kind=SensorKind.IMU, nominal_rate_hz=100, silence_timeout_ms=500)
    with pytest.raises(DuplicateSensorIdError, match="LIDAR"):
        ing.register(dupe)


def test_descriptor_timeout_must_exceed_period():
    with pytest.raises(ValueError):
        SensorDescriptor(id=1, name="X", kind=SensorKind.CAMERA, nominal_rate_hz=10, silence_timeout_ms=50)


def test_bandwidth_accounting_within_5_percent():
    ing, clock = make_ingestor()
    nbytes = 1206
    for i in range(1500):  # fill the meter's full 2 s window at 750 pkt/s
        clock.advance(1_333_333)
        ing.ingest(3, RecordType.LIDAR_PKT, b"\x00" * nbytes)
    now = clock.mono_ns()
    measured = ing.stats(3).meter.bandwidth_bps(now)
    window_s = ing.stats(3).meter.window_ns * 1e-9
    in_window = [e for e in ing.stats(3).meter._events]
    expected = sum(n for _, n in in_window) * 8 / window_s
    assert measured == pytest.approx(expected, rel=0.05)
    # 750 pkt/s of 1206 B is ~7.24 Mb/s
    assert measured == pytest.approx(7_236_000, rel=0.05)


# --- pairing -------------------------------------------------------------


def outcomes(pairer, arrivals):
    events = []
    for side, seq in arrivals:
        events.extend(pairer.offer(side, seq, item=f"{side}{seq}"))
    events.extend(pairer.flush())
    return events


def canonical(events):
    out = set()
    for e in events:
        if isinstance(e, FramePair):
            out.add(("pair", e.trigger_seq))
        else:
            out.add(("dropout", e.missing_side, e.trigger_seq))
    return out


def interleavings(left, right):
    """All merges of the two arrival sequences preserving per-side order."""
    if not left:
        yield [("RIGHT", s) for s in right]
        return
    if not right:
        yield [("LEFT", s) for s in left]
        return
    for rest in interleavings(left[1:], right):
        yield [("LEFT", left[0])] + rest
    for rest in interleavings(left, right[1:]):
        yield [("RIGHT", right[0])] + rest


def test_simple_pair():
    events = outcomes(FramePairer(), [("LEFT", 5), ("RIGHT", 5)])
    assert canonical(events) == {("pair", 5)}


def test_missing_right_frame_all_arrival_orders():
    # left {5,6,7}, right {5,7}: every interleaving must give pair(5), dropout(RIGHT,6), pair(7)
    expected = {("pair", 5), ("dropout", "RIGHT", 6), ("pair", 7)}
    for arrivals in interleavings([5, 6, 7], [5, 7]):
        events = outcomes(FramePairer(), arrivals)
        assert canonical(events) == expected, arrivals


def test_empty_streams_nothing():
    assert outcomes(FramePairer(), []) == []


def test_never_pairs_mismatched_seqs():
    events = outcomes(FramePairer(), [("LEFT", 1), ("RIGHT", 2)])
    assert canonical(events) == {("dropout", "RIGHT", 1), ("dropout", "LEFT", 2)}


def test_seq_window_expiry_without_flush():
    pairer = FramePairer(window_periods=5)
    events = []
    events.extend(pairer.offer("LEFT", 0, "l0"))
    for seq in range(1, 7):
        events.extend(pairer.offer("LEFT", seq, f"l{seq}"))
        events.extend(pairer.offer("RIGHT", seq, f"r{seq}"))
    # right side has moved 6 seqs past 0: the pending entry must have expired
    assert ("dropout", "RIGHT", 0) in canonical(events)


def test_time_window_expiry():
    pairer = FramePairer(window_periods=5, period_ns=100_000_000)
    pairer.offer("LEFT", 3, "l3", mono_ns=1_000_000_000)
    assert pairer.expire_older_than(1_400_000_000) == []
    expired = pairer.expire_older_than(1_600_000_000)
    assert [e.trigger_seq for e in expired] == [3]


def test_pair_payloads_preserved():
    pairer = FramePairer()
    events = pairer.offer("LEFT", 9, "Lnine")
    assert events == []
    events = pairer.offer("RIGHT", 9, "Rnine")
    assert len(events) == 1 and isinstance(events[0], FramePair)
    assert (events[0].left, events[0].right) == ("Lnine", "Rnine")


# --- recording queue -----------------------------------------------------


def record(ing, nbytes=10):
    return ing.ingest(3, RecordType.LIDAR_PKT, b"\x00" * nbytes)


def test_capacity_two_three_records_stalled_writer():
    ing, _ = make_ingestor()
    overflows = []
    q = RecordingQueue(capacity=2, ingestor=ing, on_overflow=overflows.append)
    results = [q.put(record(ing)) for _ in range(3)]
    assert results == [True, True, False]
    stats = ing.stats(3)
    assert stats.dropped == 1
    assert stats.recorded == 2
    assert overflows == [3]


def test_healthy_writer_no_drops():
    ing, _ = make_ingestor()
    q = RecordingQueue(capacity=1024, ingestor=ing)
    for _ in range(1000):
        assert q.put(record(ing))
    assert ing.stats(3).dropped == 0
    assert ing.stats(3).recorded == 1000


def test_conservation_under_concurrent_producers():
    ing, _ = make_ingestor()
    q = RecordingQueue(capacity=64, ingestor=ing)
    stop = threading.Event()
    consumed = []

    def writer():
        while not stop.is_set() or q.qsize():
            item = q.get(timeout=0.01)
            if item is not None:
                consumed.append(item)

    wt = threading.Thread(target=writer)
    wt.start()

    def producer(n):
        for _ in range(n):
            q.put(record(ing))

    producers = [threading.Thread(target=producer, args=(500,)) for _ in range(4)]
    for p in producers:
        p.start()
    for p in producers:
        p.join()
    stop.set()
    wt.join()

    stats = ing.stats(3)
    assert stats.ingested == 2000
    assert stats.recorded + stats.dropped == stats.ingested
    assert len(consumed) == stats.recorded

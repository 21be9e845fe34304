"""Lidar packet wire format tests against a brute-force byte-level oracle."""

import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fieldpack.sensors.lidar import (
    BLOCKS_PER_PACKET,
    CHANNELS_PER_BLOCK,
    PACKET_SIZE,
    POINTS_PER_PACKET,
    LidarBlock,
    LidarFlagError,
    LidarFormatError,
    LidarLengthError,
    encode_lidar_packet,
    packet_distance_stats,
    parse_lidar_packet,
)


def oracle_decode(raw: bytes):
    """Independent byte-walking decoder: plain struct reads, no shared code path."""
    assert len(raw) == 1206
    points = []
    pos = 0
    for _ in range(12):
        flag, azimuth = struct.unpack_from("<HH", raw, pos)
        assert flag == 0xFFEE
        pos += 4
        for ch in range(32):
            dist, refl = struct.unpack_from("<HB", raw, pos)
            pos += 3
            points.append((azimuth / 100.0, ch % 16, dist * 0.002, refl))
    timestamp_us = struct.unpack_from("<I", raw, pos)[0]
    return points, timestamp_us


def make_blocks(distance_raw=1000, azimuths=None, reflectivity=7):
    if azimuths is None:
        azimuths = [i * 20 for i in range(12)]
    return [
        LidarBlock(azimuth_cdeg=az, channels=tuple((distance_raw, reflectivity) for _ in range(32)))
        for az in azimuths
    ]


def test_encode_uniform_distance_matches_oracle():
    raw = encode_lidar_packet(make_blocks(), timestamp_us=123456)
    assert len(raw) == PACKET_SIZE
    oracle_points, oracle_ts = oracle_decode(raw)
    assert len(oracle_points) == 384
    assert all(p[2] == pytest.approx(2.000) for p in oracle_points)
    assert oracle_ts == 123456

    parsed = parse_lidar_packet(raw)
    assert len(parsed.points) == POINTS_PER_PACKET
    for got, want in zip(parsed.points, oracle_points):
        assert got.azimuth_deg == pytest.approx(want[0])
        assert got.channel == want[1]
        assert got.range_m == pytest.approx(want[2])
        assert got.reflectivity == want[3]


def test_encode_wrong_block_count_rejected():
    with pytest.raises(LidarFormatError):
        encode_lidar_packet(make_blocks()[:11], timestamp_us=0)


def test_all_zero_distances_flagged_zero_return():
    raw = encode_lidar_packet(make_blocks(distance_raw=0), timestamp_us=0)
    parsed = parse_lidar_packet(raw)
    assert len(parsed.points) == 384
    assert parsed.zero_return_count == 384


def test_parse_wrong_length():
    with pytest.raises(LidarLengthError):
        parse_lidar_packet(b"\x00" * 1205)


def test_parse_bad_flag():
    raw = bytearray(encode_lidar_packet(make_blocks(), timestamp_us=0))
    raw[0:2] = struct.pack("<H", 0xAAAA)
    with pytest.raises(LidarFlagError):
        parse_lidar_packet(bytes(raw))


def test_channel_count_enforced():
    with pytest.raises(LidarFormatError):
        LidarBlock(azimuth_cdeg=0, channels=tuple((1, 1) for _ in range(31)))


def test_azimuth_range_enforced():
    with pytest.raises(LidarFormatError):
        LidarBlock(azimuth_cdeg=36000, channels=tuple((1, 1) for _ in range(32)))


block_strategy = st.builds(
    LidarBlock,
    azimuth_cdeg=st.integers(min_value=0, max_value=35999),
    channels=st.tuples(
        *[st.tuples(st.integers(0, 0xFFFF), st.integers(0, 0xFF)) for _ in range(32)]
    ),
)


@settings(max_examples=50, deadline=None)
@given(
    blocks=st.lists(block_strategy, min_size=12, max_size=12),
    timestamp=st.integers(min_value=0, max_value=2**32 - 1),
)
def test_roundtrip_property(blocks, timestamp):
    raw = encode_lidar_packet(blocks, timestamp_us=timestamp)
    assert len(raw) == PACKET_SIZE
    parsed = parse_lidar_packet(raw)
    assert parsed.timestamp_us == timestamp
    idx = 0
    for block in blocks:
        for ch, (dist, refl) in enumerate(block.channels):
            point = parsed.points[idx]
            assert point.azimuth_deg == pytest.approx(block.azimuth_cdeg / 100.0)
            assert point.channel == ch % 16
            assert point.range_m == pytest.approx(dist * 0.002)
            assert point.reflectivity == refl
            idx += 1


def test_distance_stats_near_counting():
    # 0.4 m -> raw 200 (near), 3 m -> raw 1500 (far)
    near_blocks = make_blocks(distance_raw=200)
    far_blocks = make_blocks(distance_raw=1500)
    total, near = packet_distance_stats(encode_lidar_packet(near_blocks, 0))
    assert (total, near) == (384, 384)
    total, near = packet_distance_stats(encode_lidar_packet(far_blocks, 0))
    assert (total, near) == (384, 0)
    total, near = packet_distance_stats(encode_lidar_packet(make_blocks(distance_raw=0), 0))
    assert near == 384  # zero returns count as near

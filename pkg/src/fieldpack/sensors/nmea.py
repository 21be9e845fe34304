"""NMEA-0183 GGA parsing and generation with XOR checksums.

Only GGA (position + fix quality) is decoded; at the stream level other
sentence types are skipped rather than treated as errors.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass


class NmeaError(ValueError):
    pass


class NmeaChecksumError(NmeaError):
    pass


class UnsupportedSentenceError(NmeaError):
    pass


@dataclass(frozen=True)
class GnssFix:
    latitude_deg: float
    longitude_deg: float
    altitude_m: float
    fix_quality: int        # 0 = no fix
    satellites: int
    wall_time: dt.time

    def __post_init__(self):
        if abs(self.latitude_deg) > 90.0:
            raise ValueError(f"latitude {self.latitude_deg} out of range")
        if abs(self.longitude_deg) > 180.0:
            raise ValueError(f"longitude {self.longitude_deg} out of range")
        if self.fix_quality < 0:
            raise ValueError("fix_quality must be >= 0")


def nmea_checksum(body: str) -> str:
    """XOR of all body bytes (the text between '$' and '*'), as two uppercase hex digits."""
    if "$" in body or "*" in body:
        raise ValueError("checksum body must not contain '$' or '*'")
    csum = 0
    for ch in body.encode("ascii"):
        csum ^= ch
    return f"{csum:02X}"


def _split_sentence(sentence: str) -> tuple[str, str]:
    sentence = sentence.strip()
    if not sentence.startswith("$") or "*" not in sentence:
        raise NmeaError(f"not a framed NMEA sentence: {sentence!r}")
    body, _, tail = sentence[1:].partition("*")
    expected = nmea_checksum(body)
    got = tail.strip().upper()
    if got != expected:
        raise NmeaChecksumError(f"checksum {got} != computed {expected}")
    return body, tail


def _parse_angle(field: str, hemi: str, degree_digits: int) -> float:
    if not field:
        return 0.0
    degrees = float(field[:degree_digits])
    minutes = float(field[degree_digits:])
    value = degrees + minutes / 60.0
    if hemi in ("S", "W"):
        value = -value
    return value


def _parse_time(field: str) -> dt.time:
    if not field:
        return dt.time(0, 0, 0)
    whole, _, frac = field.partition(".")
    micro = int(round(float("0." + frac) * 1e6)) if frac else 0
    return dt.time(int(whole[0:2]), int(whole[2:4]), int(whole[4:6]), micro)


def parse_nmea_gga(sentence: str) -> GnssFix:
    """Decode a GGA sentence into a GnssFix; any talker prefix (GP, GN, ...) is accepted."""
    body, _ = _split_sentence(sentence)
    fields = body.split(",")
    if not fields[0].endswith("GGA"):
        raise UnsupportedSentenceError(f"unsupported sentence type {fields[0]!r}")
    if len(fields) < 10:
        raise NmeaError(f"GGA sentence has {len(fields)} fields, expected >= 10")
    return GnssFix(
        latitude_deg=_parse_angle(fields[2], fields[3], 2),
        longitude_deg=_parse_angle(fields[4], fields[5], 3),
        altitude_m=float(fields[9]) if fields[9] else 0.0,
        fix_quality=int(fields[6]) if fields[6] else 0,
        satellites=int(fields[7]) if fields[7] else 0,
        wall_time=_parse_time(fields[1]),
    )


def _format_angle(value: float, degree_digits: int, pos: str, neg: str) -> tuple[str, str]:
    hemi = pos if value >= 0 else neg
    value = abs(value)
    degrees = int(value)
    minutes = (value - degrees) * 60.0
    return f"{degrees:0{degree_digits}d}{minutes:07.4f}", hemi


def format_gga(fix: GnssFix, talker: str = "GP", hdop: float = 0.9) -> str:
    """Render a GnssFix as a framed GGA sentence (inverse of parse_nmea_gga)."""
    lat, lat_h = _format_angle(fix.latitude_deg, 2, "N", "S")
    lon, lon_h = _format_angle(fix.longitude_deg, 3, "E", "W")
    t = fix.wall_time
    time_field = f"{t.hour:02d}{t.minute:02d}{t.second:02d}"
    if t.microsecond:
        time_field += f".{t.microsecond // 10000:02d}"
    body = (
        f"{talker}GGA,{time_field},{lat},{lat_h},{lon},{lon_h},"
        f"{fix.fix_quality},{fix.satellites:02d},{hdop:.1f},{fix.altitude_m:.1f},M,0.0,M,,"
    )
    return f"${body}*{nmea_checksum(body)}"

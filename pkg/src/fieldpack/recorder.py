"""Chunked binary log: CRC-framed records, segment rolling, disk monitoring, replay.

Segment layout (all integers little-endian):
    header: magic "FPKLOG01" (8) + format version u16 (2) + session id (16) = 26 bytes
    records: sensor_id u8, record_type u8, payload_len u32, mono_ns u64,
             wall_ns u64 (22 bytes), payload, crc u32 over all preceding
             bytes of the record (IEEE CRC-32)

All sensors share one interleaved stream per segment, preserving global
arrival order; per-sensor split happens at replay. Files are flushed on roll
and on close, bounding the loss window to one segment.
"""

from __future__ import annotations

import os
import shutil
import struct
import uuid
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

from .acquisition import RecordType, SensorDescriptor, StampedRecord

MAGIC = b"FPKLOG01"
FORMAT_VERSION = 1
HEADER = struct.Struct("<8sH16s")          # 26 bytes
FRAME_HEADER = struct.Struct("<BBIQQ")     # 22 bytes
CRC_SIZE = 4
DEFAULT_ROLL_THRESHOLD = 512 * 1024 * 1024
DEFAULT_LOW_WATER_BYTES = 2 * 1024 * 1024 * 1024
MAX_PAYLOAD = 256 * 1024 * 1024            # sanity bound; larger lengths are corruption


class NotALogError(ValueError):
    pass


class DiskFullError(OSError):
    pass


def encode_record(record: StampedRecord) -> bytes:
    header = FRAME_HEADER.pack(
        record.sensor_id,
        int(record.record_type),
        len(record.payload),
        record.mono_ns,
        record.wall_ns,
    )
    body = header + record.payload
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def frame_size(payload_len: int) -> int:
    return FRAME_HEADER.size + payload_len + CRC_SIZE


@dataclass
class SegmentReport:
    path: str
    records: int = 0
    clean: bool = True
    error_kind: str | None = None       # CRC_MISMATCH, TRUNCATED, BAD_LENGTH
    error_offset: int | None = None


class SegmentWriter:
    """Single-writer append path for one session directory."""

    def __init__(
        self,
        session_dir: Path,
        session_id: bytes | None = None,
        roll_threshold: int = DEFAULT_ROLL_THRESHOLD,
    ):
        self.session_dir = Path(session_dir)
        self.session_dir.mkdir(parents=True, exist_ok=True)
        self.session_id = session_id if session_id is not None else uuid.uuid4().bytes
        if len(self.session_id) != 16:
            raise ValueError("session id must be 16 bytes")
        self.roll_threshold = roll_threshold
        self._segment_seq = 0
        self._file = None
        self._segment_bytes = 0
        self.bytes_written = 0
        self.records_written = 0
        self.segment_paths: list[Path] = []
        self._open_next_segment()

    def _open_next_segment(self) -> None:
        self._segment_seq += 1
        path = self.session_dir / f"{self._segment_seq:06d}.fpk"
        self._file = open(path, "wb")
        header = HEADER.pack(MAGIC, FORMAT_VERSION, self.session_id)
        self._file.write(header)
        self._segment_bytes = len(header)
        self.bytes_written += len(header)
        self.segment_paths.append(path)

    @property
    def current_segment(self) -> Path:
        return self.segment_paths[-1]

    def append(self, record: StampedRecord) -> int:
        """Write one framed record; returns its byte offset within its segment."""
        if self._file is None:
            raise ValueError("writer is closed")
        if self._segment_bytes >= self.roll_threshold:
            self.roll_segment()
        frame = encode_record(record)
        offset = self._segment_bytes
        try:
            self._file.write(frame)
        except OSError as exc:
            raise DiskFullError(str(exc)) from exc
        self._segment_bytes += len(frame)
        self.bytes_written += len(frame)
        self.records_written += 1
        return offset

    def roll_segment(self) -> Path:
        """Close the current segment (fsync) and open the next; no record spans files."""
        self._close_current()
        self._open_next_segment()
        return self.current_segment

    def _close_current(self) -> None:
        if self._file is not None:
            self._file.flush()
            os.fsync(self._file.fileno())
            self._file.close()
            self._file = None

    def close(self) -> None:
        self._close_current()


def iter_segment(path: Path, report: SegmentReport) -> Iterator[StampedRecord]:
    """Yield CRC-valid records in file order, stopping at the first hard corruption.

    A truncated trailing record is reported as TRUNCATED; records before it
    are still yielded. A bad magic raises NotALogError.
    """
    per_sensor_seq: dict[int, int] = {}
    with open(path, "rb") as fh:
        header = fh.read(HEADER.size)
        if len(header) < HEADER.size or header[:8] != MAGIC:
            raise NotALogError(f"{path} does not start with the log magic")
        offset = HEADER.size
        while True:
            frame_header = fh.read(FRAME_HEADER.size)
            if not frame_header:
                return
            if len(frame_header) < FRAME_HEADER.size:
                report.clean = False
                report.error_kind = "TRUNCATED"
                report.error_offset = offset
                return
            sensor_id, rtype, payload_len, mono_ns, wall_ns = FRAME_HEADER.unpack(frame_header)
            if payload_len > MAX_PAYLOAD:
                report.clean = False
                report.error_kind = "BAD_LENGTH"
                report.error_offset = offset
                return
            rest = fh.read(payload_len + CRC_SIZE)
            if len(rest) < payload_len + CRC_SIZE:
                report.clean = False
                report.error_kind = "TRUNCATED"
                report.error_offset = offset
                return
            payload, crc_bytes = rest[:payload_len], rest[payload_len:]
            expected = zlib.crc32(frame_header + payload) & 0xFFFFFFFF
            if struct.unpack("<I", crc_bytes)[0] != expected:
                report.clean = False
                report.error_kind = "CRC_MISMATCH"
                report.error_offset = offset
                return
            try:
                record_type = RecordType(rtype)
            except ValueError:
                report.clean = False
                report.error_kind = "BAD_TYPE"
                report.error_offset = offset
                return
            report.records += 1
            # ingest seq is not part of the frame; reconstruct per-sensor file order
            seq = per_sensor_seq.get(sensor_id, 0)
            per_sensor_seq[sensor_id] = seq + 1
            yield StampedRecord(
                sensor_id=sensor_id,
                record_type=record_type,
                mono_ns=mono_ns,
                wall_ns=wall_ns,
                seq=seq,
                payload=payload,
            )
            offset += frame_size(payload_len)


def replay_segment(path: Path) -> tuple[list[StampedRecord], SegmentReport]:
    report = SegmentReport(path=str(path))
    records = list(iter_segment(Path(path), report))
    return records, report


def session_segments(session_dir: Path) -> list[Path]:
    return sorted(Path(session_dir).glob("*.fpk"))


def replay_session(session_dir: Path) -> tuple[list[StampedRecord], list[SegmentReport]]:
    """Replay all segments in name order; per-sensor mono_ns stays non-decreasing."""
    records: list[StampedRecord] = []
    reports: list[SegmentReport] = []
    per_sensor_seq: dict[int, int] = {}
    for path in session_segments(session_dir):
        segment_records, report = replay_segment(path)
        for record in segment_records:
            seq = per_sensor_seq.get(record.sensor_id, 0)
            per_sensor_seq[record.sensor_id] = seq + 1
            records.append(
                record if record.seq == seq
                else StampedRecord(
                    sensor_id=record.sensor_id,
                    record_type=record.record_type,
                    mono_ns=record.mono_ns,
                    wall_ns=record.wall_ns,
                    seq=seq,
                    payload=record.payload,
                )
            )
        reports.append(report)
    return records, reports


MANIFEST_NAME = "manifest.txt"


def write_manifest(
    session_dir: Path,
    session_id: bytes,
    start_wall_ns: int,
    descriptors: list[SensorDescriptor],
) -> Path:
    path = Path(session_dir) / MANIFEST_NAME
    lines = [
        f"session_id: {session_id.hex()}",
        f"start_wall_ns: {start_wall_ns}",
        "sensors:",
    ]
    for d in descriptors:
        lines.append(
            f"  - id={d.id} name={d.name} kind={d.kind.value} "
            f"rate_hz={d.nominal_rate_hz} silence_timeout_ms={d.silence_timeout_ms}"
        )
    path.write_text("\n".join(lines) + "\n")
    return path


def read_manifest(session_dir: Path) -> dict:
    path = Path(session_dir) / MANIFEST_NAME
    if not path.exists():
        raise NotALogError(f"{session_dir} has no {MANIFEST_NAME}")
    info: dict = {"sensors": []}
    for line in path.read_text().splitlines():
        if line.startswith("session_id:"):
            info["session_id"] = line.split(":", 1)[1].strip()
        elif line.startswith("start_wall_ns:"):
            info["start_wall_ns"] = int(line.split(":", 1)[1].strip())
        elif line.strip().startswith("- id="):
            fields = dict(part.split("=", 1) for part in line.strip()[2:].split())
            info["sensors"].append(fields)
    return info


def disk_free(root: Path) -> int:
    """Bytes free on the filesystem holding root; raises if the path vanished."""
    return shutil.disk_usage(root).free


@dataclass
class SessionWriter:
    """Manifest plus rolling segments for one recording session."""

    root: Path
    descriptors: list[SensorDescriptor]
    start_wall_ns: int
    roll_threshold: int = DEFAULT_ROLL_THRESHOLD
    session_id: bytes = field(default_factory=lambda: uuid.uuid4().bytes)

    def __post_init__(self):
        self.session_dir = Path(self.root) / self.session_id.hex()
        self.session_dir.mkdir(parents=True, exist_ok=True)
        write_manifest(self.session_dir, self.session_id, self.start_wall_ns, self.descriptors)
        self.writer = SegmentWriter(
            self.session_dir, session_id=self.session_id, roll_threshold=self.roll_threshold
        )

    def append(self, record: StampedRecord) -> int:
        return self.writer.append(record)

    def close(self) -> None:
        self.writer.close()

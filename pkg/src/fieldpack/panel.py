"""Serial line protocol for the status screen and push buttons.

Framing: `$<TYPE>,<payload>*<XX>\\n` where XX is the uppercase-hex XOR of every
byte between '$' and '*'. ASCII framing keeps the link debuggable on a serial
console, and the checksum rejects any single-byte line corruption.

Outbound lines: STAT (NAME=STATE pairs in descriptor order), DISK (free MiB as
a decimal integer), FPS (centi-FPS as a decimal integer). Inbound: BTN with
`<1|2>,<PRESS>`; button 1 starts the sensors, button 2 toggles recording.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable

from .health import StatusSnapshot

MIB = 1024 * 1024


class PanelError(ValueError):
    pass


class PanelChecksumError(PanelError):
    pass


class PanelUnknownTypeError(PanelError):
    pass


class PanelType(enum.Enum):
    STAT = "STAT"
    DISK = "DISK"
    FPS = "FPS"
    BTN = "BTN"


class ButtonAction(enum.Enum):
    START_SENSORS = "start_sensors"
    TOGGLE_RECORDING = "toggle_recording"


@dataclass(frozen=True)
class PanelMessage:
    type: PanelType
    fields: tuple[str, ...]


_FIELD_FORBIDDEN = set("$*,")


def _validate_field(field: str) -> None:
    for ch in field:
        if ch in _FIELD_FORBIDDEN or ord(ch) < 0x20 or ord(ch) > 0x7E:
            raise PanelError(f"illegal character {ch!r} in panel field {field!r}")


def checksum(body: str) -> str:
    csum = 0
    for byte in body.encode("ascii"):
        csum ^= byte
    return f"{csum:02X}"


def encode_panel(message: PanelMessage) -> bytes:
    for field in message.fields:
        _validate_field(field)
    body = ",".join([message.type.value, *message.fields])
    return f"${body}*{checksum(body)}\n".encode("ascii")


def decode_panel(line: bytes) -> PanelMessage:
    try:
        text = line.decode("ascii").strip()
    except UnicodeDecodeError as exc:
        raise PanelError(f"non-ASCII panel line: {exc}") from exc
    if not text.startswith("$") or "*" not in text:
        raise PanelError(f"unframed panel line {text!r}")
    body, _, tail = text[1:].partition("*")
    if checksum(body) != tail.strip().upper():
        raise PanelChecksumError(f"checksum {tail.strip()!r} != computed {checksum(body)!r}")
    parts = body.split(",")
    try:
        msg_type = PanelType(parts[0])
    except ValueError:
        raise PanelUnknownTypeError(f"unknown panel type {parts[0]!r}") from None
    return PanelMessage(type=msg_type, fields=tuple(parts[1:]))


def stat_message(states_in_order: list[tuple[str, str]]) -> PanelMessage:
    return PanelMessage(
        type=PanelType.STAT,
        fields=tuple(f"{name}={state}" for name, state in states_in_order),
    )


def disk_message(free_bytes: int) -> PanelMessage:
    return PanelMessage(type=PanelType.DISK, fields=(str(free_bytes // MIB),))


def fps_message(fps: float) -> PanelMessage:
    return PanelMessage(type=PanelType.FPS, fields=(str(int(round(fps * 100))),))


def button_message(button: int) -> PanelMessage:
    if button not in (1, 2):
        raise PanelError(f"button must be 1 or 2, got {button}")
    return PanelMessage(type=PanelType.BTN, fields=(str(button), "PRESS"))


def button_action(message: PanelMessage) -> ButtonAction:
    if message.type is not PanelType.BTN:
        raise PanelError(f"not a button message: {message.type}")
    if len(message.fields) < 2 or message.fields[1] != "PRESS":
        raise PanelError(f"malformed button payload {message.fields!r}")
    if message.fields[0] == "1":
        return ButtonAction.START_SENSORS
    if message.fields[0] == "2":
        return ButtonAction.TOGGLE_RECORDING
    raise PanelError(f"unknown button {message.fields[0]!r}")


class PanelPublisher:
    """Renders each snapshot as exactly one STAT, one DISK, one FPS line, in that order."""

    def __init__(self, write: Callable[[bytes], None], sensor_order: list[str]):
        self._write = write
        self._sensor_order = list(sensor_order)

    def publish(self, snapshot: StatusSnapshot) -> list[bytes]:
        ordered = [(name, snapshot.states[name]) for name in self._sensor_order]
        lines = [
            encode_panel(stat_message(ordered)),
            encode_panel(disk_message(snapshot.disk_free_bytes)),
            encode_panel(fps_message(snapshot.camera_fps_measured)),
        ]
        for line in lines:
            self._write(line)
        return lines

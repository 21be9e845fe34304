"""Panel line protocol tests; the checksum oracle is an independent XOR fold."""

from functools import reduce

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fieldpack.clock import SimClock
from fieldpack.health import HealthMonitor, StatusSnapshot
from fieldpack.panel import (
    ButtonAction,
    PanelChecksumError,
    PanelError,
    PanelMessage,
    PanelPublisher,
    PanelType,
    PanelUnknownTypeError,
    button_action,
    button_message,
    decode_panel,
    disk_message,
    encode_panel,
    fps_message,
    stat_message,
)


def xor_oracle(body: str) -> str:
    return f"{reduce(lambda a, b: a ^ b, body.encode('ascii'), 0):02X}"


def test_disk_line_layout_and_checksum():
    line = encode_panel(disk_message(102400 * 1024 * 1024))
    body = "DISK,102400"
    assert line == f"${body}*{xor_oracle(body)}\n".encode()


def test_fps_payload_is_centi_fps():
    msg = fps_message(10.0)
    assert msg.fields == ("1000",)


def test_stat_line_five_sensors():
    states = [
        ("CAM_LEFT", "IDLE"), ("CAM_RIGHT", "IDLE"), ("LIDAR", "REC"),
        ("IMU", "CAL"), ("GNSS", "OFF"),
    ]
    line = encode_panel(stat_message(states))
    text = line.decode()
    payload = text[1:].split("*")[0]
    assert payload == "STAT,CAM_LEFT=IDLE,CAM_RIGHT=IDLE,LIDAR=REC,IMU=CAL,GNSS=OFF"
    assert text.rstrip().endswith(xor_oracle(payload))


def test_btn_press_decodes_to_toggle_recording():
    body = "BTN,2,PRESS"
    line = f"${body}*{xor_oracle(body)}\n".encode()
    msg = decode_panel(line)
    assert msg.type is PanelType.BTN
    assert button_action(msg) is ButtonAction.TOGGLE_RECORDING


def test_btn_one_maps_to_start_sensors():
    assert button_action(decode_panel(encode_panel(button_message(1)))) is ButtonAction.START_SENSORS


def test_checksum_off_by_one_rejected():
    body = "BTN,2,PRESS"
    good = int(xor_oracle(body), 16)
    line = f"${body}*{(good + 1) % 256:02X}\n".encode()
    with pytest.raises(PanelChecksumError):
        decode_panel(line)


def test_unknown_type_rejected():
    body = "ZZZ,1"
    with pytest.raises(PanelUnknownTypeError):
        decode_panel(f"${body}*{xor_oracle(body)}\n".encode())


def test_illegal_characters_rejected_on_encode():
    with pytest.raises(PanelError):
        encode_panel(PanelMessage(type=PanelType.DISK, fields=("12*34",)))
    with pytest.raises(PanelError):
        encode_panel(PanelMessage(type=PanelType.DISK, fields=("12,34",)))


field_text = st.text(
    alphabet=st.characters(
        min_codepoint=0x20, max_codepoint=0x7E, blacklist_characters="$*,"
    ),
    min_size=1,
    max_size=12,
)


@settings(max_examples=100, deadline=None)
@given(
    msg_type=st.sampled_from(list(PanelType)),
    fields=st.lists(field_text, min_size=1, max_size=6),
)
def test_decode_encode_identity(msg_type, fields):
    message = PanelMessage(type=msg_type, fields=tuple(fields))
    assert decode_panel(encode_panel(message)) == message


@settings(max_examples=100, deadline=None)
@given(
    msg_type=st.sampled_from(list(PanelType)),
    fields=st.lists(field_text, min_size=1, max_size=6),
    data=st.data(),
)
def test_single_byte_mutation_rejected(msg_type, fields, data):
    line = bytearray(encode_panel(PanelMessage(type=msg_type, fields=tuple(fields))))
    idx = data.draw(st.integers(0, len(line) - 2))  # keep the newline
    flip = data.draw(st.integers(1, 0xFF))
    line[idx] ^= flip
    try:
        decoded = decode_panel(bytes(line))
    except (PanelError, ValueError):
        return
    # survivors must decode to the identical message (e.g. checksum case changes)
    assert decoded == PanelMessage(type=msg_type, fields=tuple(fields))


def test_publisher_emits_stat_disk_fps_in_order():
    lines: list[bytes] = []
    order = ["CAM_LEFT", "CAM_RIGHT", "LIDAR", "IMU", "GNSS"]
    publisher = PanelPublisher(lines.append, order)
    snapshot = StatusSnapshot(
        taken_mono_ns=0,
        uptime_s=1.0,
        recording=False,
        disk_free_bytes=5 * 1024 * 1024 * 1024,
        camera_fps_measured=9.5,
        states={name: "IDLE" for name in order},
        faults=[],
    )
    publisher.publish(snapshot)
    types = [decode_panel(line).type for line in lines]
    assert types == [PanelType.STAT, PanelType.DISK, PanelType.FPS]
    assert decode_panel(lines[1]).fields == ("5120",)
    assert decode_panel(lines[2]).fields == ("950",)

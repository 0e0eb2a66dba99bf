import random
import struct

import pytest
from hypothesis import given, strategies as st

from pose_offload.protocol import (
    HEADER_SIZE,
    MAGIC,
    MAX_PAYLOAD,
    FrameMessage,
    Heartbeat,
    IncompleteMessage,
    MessageReader,
    PayloadKind,
    ProtocolError,
    ResultMessage,
    decode_from,
    decode_message,
    encode_message,
)

from helpers import random_message


def test_result_message_layout():
    data = encode_message(ResultMessage(7, 1, True, 1000))
    assert data.startswith(b"\x44\x52\x4E\x31")
    assert len(data) == HEADER_SIZE + 12 == 37
    assert data[4] == 3
    assert struct.unpack(">Q", data[5:13]) == (7,)
    assert data[HEADER_SIZE:] == b"\x01\x01\x00\x00" + (1000).to_bytes(8, "big")


def test_empty_frame_is_header_only():
    data = encode_message(FrameMessage(1, 2, PayloadKind.KEYPOINTS, b""))
    assert len(data) == HEADER_SIZE
    assert data[-4:] == b"\x00\x00\x00\x00"
    assert data[4] == 2


def test_encoded_frame_type_byte():
    assert encode_message(FrameMessage(1, 2, PayloadKind.ENCODED_FRAME, b"x"))[4] == 1


def test_payload_cap():
    encode_message(FrameMessage(0, 0, PayloadKind.ENCODED_FRAME, bytes(MAX_PAYLOAD)))
    with pytest.raises(ValueError):
        encode_message(FrameMessage(0, 0, PayloadKind.ENCODED_FRAME, bytes(MAX_PAYLOAD + 1)))


@pytest.mark.parametrize("msg", [
    ResultMessage(1, 2, False, 0),
    ResultMessage(1, 0, False, -1),
    FrameMessage(-1, 0, PayloadKind.KEYPOINTS, b""),
    Heartbeat(0, 2**63),
])
def test_out_of_range_fields_rejected(msg):
    with pytest.raises(ValueError):
        encode_message(msg)


def test_bad_magic():
    data = bytearray(encode_message(Heartbeat(1, 1)))
    data[0] = ord("X")
    with pytest.raises(ProtocolError):
        decode_message(bytes(data))
    with pytest.raises(ProtocolError):
        decode_message(b"XY")


def test_truncated_payload_is_incomplete():
    data = encode_message(FrameMessage(1, 1, PayloadKind.KEYPOINTS, bytes(100)))
    with pytest.raises(IncompleteMessage) as info:
        decode_message(data[: HEADER_SIZE + 50])
    assert info.value.needed == 50


def test_unknown_type():
    data = bytearray(encode_message(Heartbeat(1, 1)))
    data[4] = 9
    with pytest.raises(ProtocolError):
        decode_message(bytes(data))


def test_result_with_wrong_length_or_flags():
    good = encode_message(ResultMessage(1, 1, True, 5))
    bad_len = good[:21] + struct.pack(">I", 11) + good[HEADER_SIZE:-1]
    with pytest.raises(ProtocolError):
        decode_message(bad_len)
    bad_flag = good[:HEADER_SIZE + 1] + b"\x02" + good[HEADER_SIZE + 2:]
    with pytest.raises(ProtocolError):
        decode_message(bad_flag)


def test_trailing_bytes_rejected_but_stream_decode_ok():
    data = encode_message(Heartbeat(1, 1)) + b"\x00"
    with pytest.raises(ProtocolError):
        decode_message(data)
    msg, used = decode_from(data)
    assert msg == Heartbeat(1, 1) and used == len(data) - 1


def test_reader_reassembles_split_stream():
    rng = random.Random(3)
    msgs = [random_message(rng) for _ in range(40)]
    stream = b"".join(encode_message(m) for m in msgs)
    reader = MessageReader()
    got = []
    pos = 0
    while pos < len(stream):
        step = rng.randrange(1, 300)
        got.extend(reader.feed(stream[pos:pos + step]))
        pos += step
    assert got == msgs and reader.pending == 0


frame_msgs = st.builds(FrameMessage, st.integers(0, 2**64 - 1), st.integers(-(2**63), 2**63 - 1),
                       st.sampled_from(list(PayloadKind)), st.binary(max_size=512))
result_msgs = st.builds(ResultMessage, st.integers(0, 2**64 - 1), st.integers(0, 1), st.booleans(),
                        st.integers(0, 2**64 - 1), st.integers(-(2**63), 2**63 - 1))
heartbeats = st.builds(Heartbeat, st.integers(0, 2**64 - 1), st.integers(-(2**63), 2**63 - 1))


@given(st.one_of(frame_msgs, result_msgs, heartbeats))
def test_round_trip(msg):
    data = encode_message(msg)
    assert decode_message(data) == msg
    assert encode_message(decode_message(data)) == data


@given(st.binary(max_size=200))
def test_fuzz_never_crashes(data):
    try:
        decode_message(data)
    except (ProtocolError, IncompleteMessage):
        pass


@given(st.binary(max_size=60))
def test_fuzz_after_magic(tail):
    try:
        decode_message(MAGIC + tail)
    except (ProtocolError, IncompleteMessage):
        pass

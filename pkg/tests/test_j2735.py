import csv
import io
from dataclasses import replace

import pytest
from hypothesis import given, settings

from support import bsms, frame_from_vector, frames, maps, uper_vectors
from v2xviz.j2735 import (
    BSM_CSV_HEADER,
    ELEV_UNAVAILABLE,
    HEADING_UNAVAILABLE,
    LAT_UNAVAILABLE,
    LON_UNAVAILABLE,
    MSG_BSM,
    SPEED_UNAVAILABLE,
    BsmCore,
    ConstraintViolation,
    EventState,
    InvalidValue,
    Lane,
    LaneType,
    MapData,
    MessageFrame,
    MovementState,
    NodeXY,
    OutOfRange,
    Position3D,
    Role,
    SpatData,
    TrailingData,
    Truncated,
    UnknownMessageId,
    bsm_to_csv,
    decode_frame,
    encode_body,
    encode_frame,
    map_to_text,
    peek_message_id,
)

VECTORS = uper_vectors()["frames"]

SENTINEL_BSM = BsmCore(
    0, bytes(4), 0, LAT_UNAVAILABLE, LON_UNAVAILABLE, ELEV_UNAVAILABLE, SPEED_UNAVAILABLE, HEADING_UNAVAILABLE
)


def test_oracle_corpus_is_large_enough():
    assert len(VECTORS) >= 100
    assert {v["type"] for v in VECTORS} == {"BsmFrame", "SpatFrame", "MapFrame"}


@pytest.mark.parametrize("vec", VECTORS, ids=[f"{v['type']}-{i}" for i, v in enumerate(VECTORS)])
def test_matches_reference_compiler(vec):
    frame = frame_from_vector(vec)
    assert encode_frame(frame).hex() == vec["hex"]
    assert decode_frame(bytes.fromhex(vec["hex"])) == frame


def test_all_sentinel_bsm_bytes():
    data = encode_body(SENTINEL_BSM)
    assert data.hex() == "0028000000000000035a4e900eb49d20000007fff84000"
    assert decode_frame(data).body == SENTINEL_BSM
    assert not SENTINEL_BSM.has_position
    assert SENTINEL_BSM.speed_mps is None and SENTINEL_BSM.heading_deg is None


def test_known_spat_from_reference_bytes():
    frame = decode_frame(bytes.fromhex("002609620c0400000000a00320"))
    assert frame.body == SpatData(
        1201,
        3,
        (
            MovementState(1, EventState.STOP_AND_REMAIN, 0),
            MovementState(2, EventState.PROTECTED_MOVEMENT_ALLOWED, 50),
        ),
    )


@settings(max_examples=300)
@given(frames)
def test_round_trip(frame):
    data = encode_frame(frame)
    assert decode_frame(data) == frame
    assert encode_frame(decode_frame(data)) == data
    assert peek_message_id(data) == frame.message_id


@pytest.mark.parametrize(
    "field, value",
    [("msg_count", 128), ("msg_count", -1), ("latitude", 900_000_002), ("longitude", -1_800_000_000),
     ("elevation", -4097), ("speed", 8192), ("heading", 28801), ("sec_mark", 65536)],
)
def test_out_of_range_names_field(field, value):
    with pytest.raises(OutOfRange) as err:
        encode_body(replace(SENTINEL_BSM, **{field: value}))
    assert err.value.field == field


def test_wrong_id_length_rejected():
    with pytest.raises(InvalidValue):
        encode_body(replace(SENTINEL_BSM, temporary_id=b"\x01\x02\x03"))


def test_frame_id_must_match_body():
    with pytest.raises(InvalidValue):
        MessageFrame(18, SENTINEL_BSM)


def test_empty_collections_rejected():
    with pytest.raises(InvalidValue):
        encode_body(SpatData(1, 0, ()))
    with pytest.raises(InvalidValue):
        encode_body(MapData(1, Position3D(0, 0, 0), 300, ()))
    with pytest.raises(InvalidValue):
        encode_body(MapData(1, Position3D(0, 0, 0), 300, (Lane(1, LaneType.VEHICLE, (NodeXY(0, 0),)),)))


def test_duplicate_signal_groups_rejected():
    m = MovementState(4, EventState.DARK, 0)
    with pytest.raises(InvalidValue):
        encode_body(SpatData(1, 0, (m, m)))


def test_empty_input_is_truncated():
    with pytest.raises(Truncated):
        decode_frame(b"")


@given(bsms)
def test_every_strict_prefix_is_truncated(bsm):
    data = encode_body(bsm)
    for n in range(len(data) - 1):
        with pytest.raises(Truncated):
            decode_frame(data[:n])


def test_unknown_message_id():
    with pytest.raises(UnknownMessageId):
        decode_frame(bytes([0x00, 0x2A, 0x00]))  # id 21


def test_constraint_violation_on_decode():
    # heading field is 15 bits; 0x7fff = 32767 > 28800
    data = bytearray(encode_body(replace(SENTINEL_BSM, heading=0)))
    bits = int.from_bytes(data, "big")
    total = len(data) * 8
    heading_offset = 15 + 7 + 32 + 16 + 31 + 32 + 16 + 13
    bits |= 0x7FFF << (total - heading_offset - 15)
    with pytest.raises(ConstraintViolation):
        decode_frame(bits.to_bytes(len(data), "big"))


def test_trailing_data_rejected():
    data = encode_body(SENTINEL_BSM)
    with pytest.raises(TrailingData):
        decode_frame(data + b"\x00")
    with pytest.raises(TrailingData):
        decode_frame(data[:-1] + bytes([data[-1] | 0x01]))


def test_peek_short_input():
    assert peek_message_id(b"\x00") is None


# --------------------------------------------------------------------------
# CSV and text export


def test_csv_header_only_for_no_frames():
    assert bsm_to_csv([]) == ",".join(BSM_CSV_HEADER) + "\n"


def test_csv_units_and_sentinels():
    bsm = BsmCore(5, bytes.fromhex("0a0b0c0d"), 1234, 399610000, -830720000, 2400, 500, 7200, Role.PEDESTRIAN)
    rows = list(csv.DictReader(io.StringIO(bsm_to_csv([(1.5, bsm), (2.0, SENTINEL_BSM)]))))
    assert rows[0] == {
        "timestamp": "1.500000",
        "id_hex": "0A0B0C0D",
        "msg_count": "5",
        "sec_mark_ms": "1234",
        "lat_deg": "39.961",
        "lon_deg": "-83.072",
        "elev_m": "240",
        "speed_mps": "10",
        "heading_deg": "90",
        "role": "pedestrian",
    }
    for col in ("lat_deg", "lon_deg", "elev_m", "speed_mps", "heading_deg"):
        assert rows[1][col] == ""


def test_csv_line_endings():
    text = bsm_to_csv([(0.0, SENTINEL_BSM)])
    assert "\r" not in text and text.count("\n") == 2


def test_map_text_structure():
    m = MapData(7, Position3D(399999000, -830000000, 2500), 366, (Lane(1, LaneType.VEHICLE, (NodeXY(0, 0), NodeXY(100, -100))),))
    text = map_to_text(m)
    assert text.count("lane {") == 1
    assert text.count("nodeXY") == 2
    assert "399999000" in text and "39.9999000 deg" in text
    assert map_to_text(m) == text


@given(maps())
def test_map_text_counts(m):
    text = map_to_text(m)
    assert text.count("lane {") == len(m.lanes)
    assert text.count("nodeXY") == sum(len(l.nodes) for l in m.lanes)


def test_bsm_message_id():
    assert decode_frame(encode_body(SENTINEL_BSM)).message_id == MSG_BSM == 20

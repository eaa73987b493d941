"""SPaT / MAP / BSM subset: value types, UPER codec, CSV and text export.

The schema is frozen in ``v2x_subset.asn`` next to this module.  Ranges,
scale factors and "unavailable" codes follow SAE J2735 2016-03.
"""

from __future__ import annotations

import enum
import io
import csv
from dataclasses import dataclass
from decimal import Decimal
from typing import Iterable, Sequence, Union

from .uper import BitReader, BitWriter, EndOfData

MSG_MAP = 18
MSG_SPAT = 19
MSG_BSM = 20

LAT_RANGE = (-900_000_000, 900_000_001)
LON_RANGE = (-1_799_999_999, 1_800_000_001)
ELEV_RANGE = (-4096, 61439)
SPEED_RANGE = (0, 8191)
HEADING_RANGE = (0, 28800)
MSG_COUNT_RANGE = (0, 127)
SEC_MARK_RANGE = (0, 65535)
INTERSECTION_ID_RANGE = (0, 65535)
SIGNAL_GROUP_RANGE = (1, 255)
TIME_MARK_RANGE = (0, 36001)
LANE_ID_RANGE = (0, 255)
LANE_WIDTH_RANGE = (0, 32767)
NODE_OFFSET_RANGE = (-32768, 32767)
MESSAGE_ID_RANGE = (0, 32767)

MOVEMENTS_SIZE = (1, 255)
LANES_SIZE = (1, 255)
NODES_SIZE = (2, 63)

LAT_UNAVAILABLE = 900_000_001
LON_UNAVAILABLE = 1_800_000_001
ELEV_UNAVAILABLE = -4096
SPEED_UNAVAILABLE = 8191
HEADING_UNAVAILABLE = 28800

LATLON_SCALE = Decimal("1e-7")  # degrees per count
ELEV_SCALE = Decimal("0.1")  # metres per count
SPEED_SCALE = Decimal("0.02")  # m/s per count
HEADING_SCALE = Decimal("0.0125")  # degrees per count


class CodecError(ValueError):
    """Base class for encode/decode failures."""


class InvalidValue(CodecError):
    """A value violates a schema invariant (encode side)."""


class OutOfRange(InvalidValue):
    def __init__(self, field: str, value: object, lower: int, upper: int):
        super().__init__(f"{field}={value!r} outside {lower}..{upper}")
        self.field = field


class DecodeError(CodecError):
    pass


class Truncated(DecodeError):
    pass


class UnknownMessageId(DecodeError):
    pass


class ConstraintViolation(DecodeError):
    pass


class TrailingData(DecodeError):
    """Bits left over after a complete frame, or non-zero padding."""


class Role(enum.Enum):
    VEHICLE = "vehicle"
    PEDESTRIAN = "pedestrian"
    MOTORCYCLE = "motorcycle"
    EMERGENCY = "emergency"


class EventState(enum.Enum):
    STOP_AND_REMAIN = "stop-And-Remain"
    PERMISSIVE_MOVEMENT_ALLOWED = "permissive-Movement-Allowed"
    PROTECTED_MOVEMENT_ALLOWED = "protected-Movement-Allowed"
    PERMISSIVE_CLEARANCE = "permissive-clearance"
    PROTECTED_CLEARANCE = "protected-clearance"
    DARK = "dark"


class LaneType(enum.Enum):
    VEHICLE = "vehicle"
    CROSSWALK = "crosswalk"


_ROLES = list(Role)
_EVENT_STATES = list(EventState)
_LANE_TYPES = list(LaneType)


@dataclass(frozen=True)
class BsmCore:
    msg_count: int
    temporary_id: bytes
    sec_mark: int
    latitude: int
    longitude: int
    elevation: int
    speed: int
    heading: int
    role: Role = Role.VEHICLE

    @property
    def id_hex(self) -> str:
        return self.temporary_id.hex().upper()

    @property
    def has_position(self) -> bool:
        return self.latitude != LAT_UNAVAILABLE and self.longitude != LON_UNAVAILABLE

    @property
    def lat_deg(self) -> float | None:
        return None if self.latitude == LAT_UNAVAILABLE else self.latitude * 1e-7

    @property
    def lon_deg(self) -> float | None:
        return None if self.longitude == LON_UNAVAILABLE else self.longitude * 1e-7

    @property
    def elev_m(self) -> float | None:
        return None if self.elevation == ELEV_UNAVAILABLE else self.elevation * 0.1

    @property
    def speed_mps(self) -> float | None:
        return None if self.speed == SPEED_UNAVAILABLE else self.speed * 0.02

    @property
    def heading_deg(self) -> float | None:
        return None if self.heading == HEADING_UNAVAILABLE else self.heading * 0.0125


@dataclass(frozen=True)
class MovementState:
    signal_group: int
    event_state: EventState
    min_end_time: int


@dataclass(frozen=True)
class SpatData:
    intersection_id: int
    revision: int
    movements: tuple[MovementState, ...]


@dataclass(frozen=True)
class Position3D:
    latitude: int
    longitude: int
    elevation: int


@dataclass(frozen=True)
class NodeXY:
    x_cm: int
    y_cm: int


@dataclass(frozen=True)
class Lane:
    lane_id: int
    lane_type: LaneType
    nodes: tuple[NodeXY, ...]


@dataclass(frozen=True)
class MapData:
    intersection_id: int
    ref_point: Position3D
    lane_width: int
    lanes: tuple[Lane, ...]


Body = Union[MapData, SpatData, BsmCore]

_BODY_IDS = {MapData: MSG_MAP, SpatData: MSG_SPAT, BsmCore: MSG_BSM}


@dataclass(frozen=True)
class MessageFrame:
    message_id: int
    body: Body

    def __post_init__(self) -> None:
        expected = _BODY_IDS.get(type(self.body))
        if expected != self.message_id:
            raise InvalidValue(
                f"message_id {self.message_id} does not match body {type(self.body).__name__}"
            )

    @classmethod
    def wrap(cls, body: Body) -> "MessageFrame":
        return cls(_BODY_IDS[type(body)], body)


# --------------------------------------------------------------------------
# encoding


def _int(w: BitWriter, value: int, bounds: tuple[int, int], field: str) -> None:
    lo, hi = bounds
    if isinstance(value, bool) or not isinstance(value, int) or not lo <= value <= hi:
        raise OutOfRange(field, value, lo, hi)
    w.write_constrained(value, lo, hi)


def _count(w: BitWriter, n: int, bounds: tuple[int, int], field: str) -> None:
    lo, hi = bounds
    if not lo <= n <= hi:
        raise OutOfRange(f"len({field})", n, lo, hi)
    w.write_count(n, lo, hi)


def _enum(w: BitWriter, value: enum.Enum, members: list, field: str) -> None:
    if value not in members:
        raise InvalidValue(f"{field}={value!r} is not a {members[0].__class__.__name__}")
    w.write_enum(members.index(value), len(members))


def _encode_bsm(w: BitWriter, b: BsmCore) -> None:
    _int(w, b.msg_count, MSG_COUNT_RANGE, "msg_count")
    if not isinstance(b.temporary_id, (bytes, bytearray)) or len(b.temporary_id) != 4:
        raise InvalidValue(f"temporary_id must be 4 octets, got {b.temporary_id!r}")
    w.write_octets(bytes(b.temporary_id))
    _int(w, b.sec_mark, SEC_MARK_RANGE, "sec_mark")
    _int(w, b.latitude, LAT_RANGE, "latitude")
    _int(w, b.longitude, LON_RANGE, "longitude")
    _int(w, b.elevation, ELEV_RANGE, "elevation")
    _int(w, b.speed, SPEED_RANGE, "speed")
    _int(w, b.heading, HEADING_RANGE, "heading")
    _enum(w, b.role, _ROLES, "role")


def _encode_spat(w: BitWriter, s: SpatData) -> None:
    _int(w, s.intersection_id, INTERSECTION_ID_RANGE, "intersection_id")
    _int(w, s.revision, MSG_COUNT_RANGE, "revision")
    groups = [m.signal_group for m in s.movements]
    if len(set(groups)) != len(groups):
        raise InvalidValue(f"duplicate signal groups {groups}")
    _count(w, len(s.movements), MOVEMENTS_SIZE, "movements")
    for m in s.movements:
        _int(w, m.signal_group, SIGNAL_GROUP_RANGE, "signal_group")
        _enum(w, m.event_state, _EVENT_STATES, "event_state")
        _int(w, m.min_end_time, TIME_MARK_RANGE, "min_end_time")


def _encode_position(w: BitWriter, p: Position3D, prefix: str) -> None:
    _int(w, p.latitude, LAT_RANGE, f"{prefix}.latitude")
    _int(w, p.longitude, LON_RANGE, f"{prefix}.longitude")
    _int(w, p.elevation, ELEV_RANGE, f"{prefix}.elevation")


def _encode_map(w: BitWriter, m: MapData) -> None:
    _int(w, m.intersection_id, INTERSECTION_ID_RANGE, "intersection_id")
    _encode_position(w, m.ref_point, "ref_point")
    _int(w, m.lane_width, LANE_WIDTH_RANGE, "lane_width")
    ids = [lane.lane_id for lane in m.lanes]
    if len(set(ids)) != len(ids):
        raise InvalidValue(f"duplicate lane ids {ids}")
    _count(w, len(m.lanes), LANES_SIZE, "lanes")
    for lane in m.lanes:
        _int(w, lane.lane_id, LANE_ID_RANGE, "lane_id")
        _enum(w, lane.lane_type, _LANE_TYPES, "lane_type")
        _count(w, len(lane.nodes), NODES_SIZE, "nodes")
        for node in lane.nodes:
            _int(w, node.x_cm, NODE_OFFSET_RANGE, "x_cm")
            _int(w, node.y_cm, NODE_OFFSET_RANGE, "y_cm")


_ENCODERS = {MSG_MAP: _encode_map, MSG_SPAT: _encode_spat, MSG_BSM: _encode_bsm}


def encode_frame(frame: MessageFrame) -> bytes:
    """Canonical UPER encoding of ``frame``, zero-padded to whole octets."""
    w = BitWriter()
    _int(w, frame.message_id, MESSAGE_ID_RANGE, "message_id")
    _ENCODERS[frame.message_id](w, frame.body)
    return w.to_bytes()


def encode_body(body: Body) -> bytes:
    return encode_frame(MessageFrame.wrap(body))


# --------------------------------------------------------------------------
# decoding


def _rint(r: BitReader, bounds: tuple[int, int], field: str) -> int:
    lo, hi = bounds
    value = r.read_constrained(lo, hi)
    if value > hi:
        raise ConstraintViolation(f"{field}={value} outside {lo}..{hi}")
    return value


def _rcount(r: BitReader, bounds: tuple[int, int], field: str) -> int:
    lo, hi = bounds
    n = r.read_count(lo, hi)
    if n > hi:
        raise ConstraintViolation(f"len({field})={n} outside {lo}..{hi}")
    return n


def _renum(r: BitReader, members: list, field: str):
    index = r.read_enum(len(members))
    if index >= len(members):
        raise ConstraintViolation(f"{field} index {index} outside 0..{len(members) - 1}")
    return members[index]


def _decode_bsm(r: BitReader) -> BsmCore:
    return BsmCore(
        msg_count=_rint(r, MSG_COUNT_RANGE, "msg_count"),
        temporary_id=r.read_octets(4),
        sec_mark=_rint(r, SEC_MARK_RANGE, "sec_mark"),
        latitude=_rint(r, LAT_RANGE, "latitude"),
        longitude=_rint(r, LON_RANGE, "longitude"),
        elevation=_rint(r, ELEV_RANGE, "elevation"),
        speed=_rint(r, SPEED_RANGE, "speed"),
        heading=_rint(r, HEADING_RANGE, "heading"),
        role=_renum(r, _ROLES, "role"),
    )


def _decode_spat(r: BitReader) -> SpatData:
    intersection_id = _rint(r, INTERSECTION_ID_RANGE, "intersection_id")
    revision = _rint(r, MSG_COUNT_RANGE, "revision")
    movements = tuple(
        MovementState(
            signal_group=_rint(r, SIGNAL_GROUP_RANGE, "signal_group"),
            event_state=_renum(r, _EVENT_STATES, "event_state"),
            min_end_time=_rint(r, TIME_MARK_RANGE, "min_end_time"),
        )
        for _ in range(_rcount(r, MOVEMENTS_SIZE, "movements"))
    )
    groups = [m.signal_group for m in movements]
    if len(set(groups)) != len(groups):
        raise ConstraintViolation(f"duplicate signal groups {groups}")
    return SpatData(intersection_id, revision, movements)


def _decode_map(r: BitReader) -> MapData:
    intersection_id = _rint(r, INTERSECTION_ID_RANGE, "intersection_id")
    ref = Position3D(
        _rint(r, LAT_RANGE, "ref_point.latitude"),
        _rint(r, LON_RANGE, "ref_point.longitude"),
        _rint(r, ELEV_RANGE, "ref_point.elevation"),
    )
    lane_width = _rint(r, LANE_WIDTH_RANGE, "lane_width")
    lanes = []
    for _ in range(_rcount(r, LANES_SIZE, "lanes")):
        lane_id = _rint(r, LANE_ID_RANGE, "lane_id")
        lane_type = _renum(r, _LANE_TYPES, "lane_type")
        nodes = tuple(
            NodeXY(_rint(r, NODE_OFFSET_RANGE, "x_cm"), _rint(r, NODE_OFFSET_RANGE, "y_cm"))
            for _ in range(_rcount(r, NODES_SIZE, "nodes"))
        )
        lanes.append(Lane(lane_id, lane_type, nodes))
    ids = [lane.lane_id for lane in lanes]
    if len(set(ids)) != len(ids):
        raise ConstraintViolation(f"duplicate lane ids {ids}")
    return MapData(intersection_id, ref, lane_width, tuple(lanes))


_DECODERS = {MSG_MAP: _decode_map, MSG_SPAT: _decode_spat, MSG_BSM: _decode_bsm}


def decode_frame(data: bytes) -> MessageFrame:
    """Decode one UPER frame.

    Raises Truncated, UnknownMessageId, ConstraintViolation or TrailingData;
    any frame returned satisfies the schema invariants.
    """
    r = BitReader(bytes(data))
    try:
        message_id = r.read_constrained(*MESSAGE_ID_RANGE)
        decoder = _DECODERS.get(message_id)
        if decoder is None:
            raise UnknownMessageId(f"message id {message_id}")
        body = decoder(r)
    except EndOfData as exc:
        raise Truncated(str(exc)) from None
    if not r.padding_is_canonical():
        raise TrailingData(f"{r.remaining} bits left after frame")
    return MessageFrame(message_id, body)


def peek_message_id(data: bytes) -> int | None:
    """The leading messageId, or None if fewer than 15 bits are present."""
    if len(data) < 2:
        return None
    return int.from_bytes(data[:2], "big") >> 1


# --------------------------------------------------------------------------
# export


BSM_CSV_HEADER = (
    "timestamp",
    "id_hex",
    "msg_count",
    "sec_mark_ms",
    "lat_deg",
    "lon_deg",
    "elev_m",
    "speed_mps",
    "heading_deg",
    "role",
)


def _scaled(raw: int, scale: Decimal, sentinel: int | None) -> str:
    if raw == sentinel:
        return ""
    text = format(raw * scale, "f")
    if "." in text:
        text = text.rstrip("0").rstrip(".")
    return "0" if text == "-0" else text


def bsm_to_csv(frames: Iterable[tuple[float, BsmCore]]) -> str:
    """CSV text, one row per BSM, engineering units, empty cells for unavailable values."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(BSM_CSV_HEADER)
    for ts, b in frames:
        writer.writerow(
            (
                f"{ts:.6f}",
                b.id_hex,
                b.msg_count,
                b.sec_mark,
                _scaled(b.latitude, LATLON_SCALE, LAT_UNAVAILABLE),
                _scaled(b.longitude, LATLON_SCALE, LON_UNAVAILABLE),
                _scaled(b.elevation, ELEV_SCALE, ELEV_UNAVAILABLE),
                _scaled(b.speed, SPEED_SCALE, SPEED_UNAVAILABLE),
                _scaled(b.heading, HEADING_SCALE, HEADING_UNAVAILABLE),
                b.role.value,
            )
        )
    return out.getvalue()


def _deg(raw: int, sentinel: int) -> str:
    return "unavailable" if raw == sentinel else f"{raw * LATLON_SCALE:.7f} deg"


def map_to_text(m: MapData) -> str:
    """Indented value-notation style listing of a MAP, for reading and diffing."""
    ref = m.ref_point
    elev = "unavailable" if ref.elevation == ELEV_UNAVAILABLE else f"{ref.elevation * ELEV_SCALE:.1f} m"
    lines = [
        "MapData {",
        f"  intersectionId {m.intersection_id},",
        "  refPoint {",
        f"    lat {ref.latitude},  -- {_deg(ref.latitude, LAT_UNAVAILABLE)}",
        f"    long {ref.longitude},  -- {_deg(ref.longitude, LON_UNAVAILABLE)}",
        f"    elevation {ref.elevation}  -- {elev}",
        "  },",
        f"  laneWidth {m.lane_width},  -- {m.lane_width / 100:.2f} m",
        "  lanes {",
    ]
    for i, lane in enumerate(m.lanes):
        lines += [
            "    lane {",
            f"      laneID {lane.lane_id},",
            f"      laneType {lane.lane_type.value},",
            "      nodes {",
        ]
        for j, node in enumerate(lane.nodes):
            sep = "," if j < len(lane.nodes) - 1 else ""
            lines.append(
                f"        nodeXY {{ x {node.x_cm}, y {node.y_cm} }}{sep}"
                f"  -- {node.x_cm / 100:.2f} m E, {node.y_cm / 100:.2f} m N"
            )
        lines += ["      }", "    }" + ("," if i < len(m.lanes) - 1 else "")]
    lines += ["  }", "}"]
    return "\n".join(lines) + "\n"


def spat_summary(s: SpatData) -> str:
    parts = [
        f"sg{m.signal_group}={m.event_state.value}/{m.min_end_time / 10:.1f}s" for m in s.movements
    ]
    return f"SPaT id={s.intersection_id} rev={s.revision} " + " ".join(parts)


def bsm_rows(frames: Sequence[tuple[float, MessageFrame]]) -> list[tuple[float, BsmCore]]:
    return [(ts, f.body) for ts, f in frames if f.message_id == MSG_BSM]

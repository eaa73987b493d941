"""Capture-to-scenario transforms and synthetic intersection captures.

Transforms take and return CaptureFile objects and leave timestamps alone.
The synthetic generators stand in for field recordings of a midblock
pedestrian signal (rests in green until the button is pressed) and a
four-way intersection whose roadside unit publishes BSMs for approaching
road users only.
"""

from __future__ import annotations

import logging
import math
import random
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, NamedTuple, Sequence

from . import geo
from .geo import GeoPoint, LocalPoint
from .j2735 import (
    ELEV_RANGE,
    ELEV_UNAVAILABLE,
    HEADING_UNAVAILABLE,
    MSG_BSM,
    BsmCore,
    DecodeError,
    EventState,
    Lane,
    LaneType,
    MapData,
    MessageFrame,
    MovementState,
    NodeXY,
    Position3D,
    Role,
    SpatData,
    decode_frame,
    encode_body,
)
from .pcap_io import (
    RAW,
    CaptureFile,
    CaptureRecord,
    Encapsulation,
    PcapError,
    extract_payload,
    replace_payload,
    wrap_payload,
)

log = logging.getLogger(__name__)

# Nominal reference points for the two synthetic intersections.
SIGNAL_INTERSECTION_REF = GeoPoint(39.9610000, -83.0720000, 240.0)
TRAFFIC_INTERSECTION_REF = GeoPoint(40.2364000, -83.3672000, 300.0)
SIGNAL_INTERSECTION_ID = 1201
TRAFFIC_INTERSECTION_ID = 2301

BASE_EPOCH_S = 1_577_836_800  # 2020-01-01T00:00:00Z, on a minute boundary
BSM_PERIOD_US = 100_000
LANE_WIDTH_CM = 366
PEDESTRIAN_SPEED_MPS = 1.4

SIDE_BEARINGS = {"north": 0.0, "east": 90.0, "south": 180.0, "west": 270.0}


class ScenarioError(ValueError):
    pass


class NotBsm(ScenarioError):
    pass


class InvalidPressTime(ScenarioError):
    pass


@dataclass(frozen=True)
class RelocationSpec:
    src_ref: GeoPoint
    dst_ref: GeoPoint
    delta_heading_deg: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.delta_heading_deg < 360.0:
            raise ScenarioError("delta_heading_deg must be in [0, 360)")


@dataclass(frozen=True)
class ApproachFilter:
    center_bearing_deg: float
    half_width_deg: float = 45.0

    def __post_init__(self) -> None:
        if not 0.0 < self.half_width_deg <= 180.0:
            raise ScenarioError("half_width_deg must be in (0, 180]")


@dataclass
class TransformStats:
    kept: int = 0
    dropped: int = 0
    undecodable: int = 0
    unavailable_position: int = 0
    by_message_id: Counter = field(default_factory=Counter)


class TransformResult(NamedTuple):
    capture: CaptureFile
    stats: TransformStats


def _decode_record(rec: CaptureRecord, encap: Encapsulation) -> MessageFrame:
    return decode_frame(extract_payload(rec, encap))


def decoded_frames(
    capture: CaptureFile, encap: Encapsulation = RAW
) -> Iterable[tuple[float, MessageFrame]]:
    """(timestamp, frame) for every decodable record; the rest are skipped."""
    for rec in capture.records:
        try:
            yield capture.time_of(rec), _decode_record(rec, encap)
        except (DecodeError, PcapError):
            continue


def round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def bsm_position(b: BsmCore) -> GeoPoint:
    elev = 0.0 if b.elevation == ELEV_UNAVAILABLE else b.elevation / 10.0
    return GeoPoint(b.latitude / 1e7, b.longitude / 1e7, elev)


# --------------------------------------------------------------------------
# transforms


def isolate_bsm(capture: CaptureFile, encap: Encapsulation = RAW) -> TransformResult:
    """Keep only records that decode to a BSM, in order, timestamps untouched."""
    stats = TransformStats()
    kept = []
    for rec in capture.records:
        try:
            frame = _decode_record(rec, encap)
        except (DecodeError, PcapError):
            stats.undecodable += 1
            continue
        stats.by_message_id[frame.message_id] += 1
        if frame.message_id == MSG_BSM:
            kept.append(rec)
        else:
            stats.dropped += 1
    stats.kept = len(kept)
    if stats.undecodable:
        log.info("isolate_bsm: dropped %d undecodable records", stats.undecodable)
    return TransformResult(capture.derive(kept), stats)


def relocate_bsm(b: BsmCore, spec: RelocationSpec) -> BsmCore:
    """Rigidly move one BSM from the source to the destination intersection."""
    if not b.has_position:
        return b
    local = geo.to_local(spec.src_ref, bsm_position(b))
    moved = geo.from_local(spec.dst_ref, geo.rotate(local, spec.delta_heading_deg))
    heading = b.heading
    if heading != HEADING_UNAVAILABLE:
        heading = round_half_away(heading + spec.delta_heading_deg / 0.0125) % 28800
    elevation = b.elevation
    if elevation != ELEV_UNAVAILABLE:
        elevation += round_half_away((spec.dst_ref.elev_m - spec.src_ref.elev_m) * 10.0)
        # The end codes mean "at or beyond"; the low one is taken by "unavailable".
        elevation = min(max(elevation, ELEV_RANGE[0] + 1), ELEV_RANGE[1])
    return replace(
        b,
        latitude=round_half_away(moved.lat_deg * 1e7),
        longitude=round_half_away(moved.lon_deg * 1e7),
        heading=heading,
        elevation=elevation,
    )


def relocate(
    capture: CaptureFile, spec: RelocationSpec, encap: Encapsulation = RAW
) -> TransformResult:
    """Move every BSM by rotation about ``src_ref`` then translation to ``dst_ref``.

    Raises NotBsm for any record that is not a decodable BSM.  BSMs without a
    position are passed through unchanged and counted.
    """
    stats = TransformStats()
    out = []
    for i, rec in enumerate(capture.records):
        try:
            frame = _decode_record(rec, encap)
        except (DecodeError, PcapError) as exc:
            raise NotBsm(f"record {i} does not decode: {exc}") from exc
        if frame.message_id != MSG_BSM:
            raise NotBsm(f"record {i} has message id {frame.message_id}")
        if not frame.body.has_position:
            stats.unavailable_position += 1
            out.append(rec)
            continue
        moved = relocate_bsm(frame.body, spec)
        out.append(replace_payload(rec, encode_body(moved), encap))
    stats.kept = len(out)
    return TransformResult(capture.derive(out), stats)


def is_approaching(b: BsmCore, intersection_ref: GeoPoint, flt: ApproachFilter) -> bool:
    if not b.has_position or b.heading == HEADING_UNAVAILABLE:
        return False
    local = geo.to_local(intersection_ref, bsm_position(b))
    origin = LocalPoint(0.0, 0.0)
    try:
        sector_bearing = geo.bearing_deg(origin, local)
    except geo.DegenerateSegment:
        return False
    if geo.angle_diff(sector_bearing, flt.center_bearing_deg) > flt.half_width_deg:
        return False
    to_center = (sector_bearing + 180.0) % 360.0
    return geo.angle_diff(b.heading * 0.0125, to_center) < 90.0


def filter_approaching(
    capture: CaptureFile,
    intersection_ref: GeoPoint,
    flt: ApproachFilter,
    encap: Encapsulation = RAW,
) -> TransformResult:
    """Keep BSMs inside the bearing sector whose heading points at the intersection."""
    stats = TransformStats()
    kept = []
    for rec in capture.records:
        try:
            frame = _decode_record(rec, encap)
        except (DecodeError, PcapError):
            stats.undecodable += 1
            continue
        if frame.message_id == MSG_BSM and is_approaching(frame.body, intersection_ref, flt):
            kept.append(rec)
        else:
            stats.dropped += 1
    stats.kept = len(kept)
    return TransformResult(capture.derive(kept), stats)


# --------------------------------------------------------------------------
# synthetic intersections


def _position3d(p: GeoPoint) -> Position3D:
    return Position3D(
        round_half_away(p.lat_deg * 1e7),
        round_half_away(p.lon_deg * 1e7),
        round_half_away(p.elev_m * 10.0),
    )


def _cm(v: float) -> int:
    return round_half_away(v * 100.0)


def _straight_lane(lane_id: int, kind: LaneType, pts: Sequence[tuple[float, float]]) -> Lane:
    return Lane(lane_id, kind, tuple(NodeXY(_cm(x), _cm(y)) for x, y in pts))


def signal_intersection_map(
    ref: GeoPoint = SIGNAL_INTERSECTION_REF,
    intersection_id: int = SIGNAL_INTERSECTION_ID,
    departure_lanes: bool = True,
) -> MapData:
    """Straight east-west road with a midblock crosswalk at the reference point.

    Each side has two approach lanes (and, optionally, one departure lane).
    Without departure lanes this is the four-vehicle-lane plus crosswalk
    layout of the pedestrian-signal demo.
    """
    w = LANE_WIDTH_CM / 100.0
    lanes = [
        # west side, eastbound approach (south half of the road)
        _straight_lane(1, LaneType.VEHICLE, [(-6.0, -0.5 * w), (-25.0, -0.5 * w), (-50.0, -0.5 * w)]),
        _straight_lane(2, LaneType.VEHICLE, [(-6.0, -1.5 * w), (-25.0, -1.5 * w), (-50.0, -1.5 * w)]),
        # east side, westbound approach (north half)
        _straight_lane(3, LaneType.VEHICLE, [(6.0, 0.5 * w), (25.0, 0.5 * w), (50.0, 0.5 * w)]),
        _straight_lane(4, LaneType.VEHICLE, [(6.0, 1.5 * w), (25.0, 1.5 * w), (50.0, 1.5 * w)]),
    ]
    if departure_lanes:
        lanes += [
            _straight_lane(5, LaneType.VEHICLE, [(-6.0, 0.5 * w), (-50.0, 0.5 * w)]),
            _straight_lane(6, LaneType.VEHICLE, [(6.0, -0.5 * w), (50.0, -0.5 * w)]),
        ]
    lanes.append(_straight_lane(10, LaneType.CROSSWALK, [(0.0, -2.5 * w), (0.0, 2.5 * w)]))
    return MapData(intersection_id, _position3d(ref), LANE_WIDTH_CM, tuple(lanes))


def traffic_intersection_map(
    ref: GeoPoint = TRAFFIC_INTERSECTION_REF, intersection_id: int = TRAFFIC_INTERSECTION_ID
) -> MapData:
    """Four-way intersection: per leg two approach lanes, one departure lane, one crosswalk."""
    w = LANE_WIDTH_CM / 100.0
    lanes = []
    lane_id = 1
    for side, bearing in SIDE_BEARINGS.items():
        # Build the north leg, then rotate it onto the other legs.
        leg = [
            (LaneType.VEHICLE, [(-0.5 * w, 15.0), (-0.5 * w, 40.0), (-0.5 * w, 70.0)]),
            (LaneType.VEHICLE, [(-1.5 * w, 15.0), (-1.5 * w, 40.0), (-1.5 * w, 70.0)]),
            (LaneType.VEHICLE, [(0.5 * w, 15.0), (0.5 * w, 70.0)]),
            (LaneType.CROSSWALK, [(-2.5 * w, 12.0), (1.5 * w, 12.0)]),
        ]
        for kind, pts in leg:
            rotated = [geo.rotate(LocalPoint(x, y), bearing) for x, y in pts]
            lanes.append(_straight_lane(lane_id, kind, [(p.east_m, p.north_m) for p in rotated]))
            lane_id += 1
    return MapData(intersection_id, _position3d(ref), LANE_WIDTH_CM, tuple(lanes))


def _sec_mark(ticks_us: int) -> int:
    return (ticks_us // 1000) % 60_000


def _new_capture(encap: Encapsulation) -> CaptureFile:
    return CaptureFile(link_type=encap.link_type)


def _append(cap: CaptureFile, t_us: int, body, encap: Encapsulation) -> None:
    cap.records.append(cap.make_record(BASE_EPOCH_S * 1_000_000 + t_us, wrap_payload(encode_body(body), encap)))


def _finish(cap: CaptureFile, entries: list[tuple[int, int, object]], encap: Encapsulation) -> CaptureFile:
    # Stable sort keeps the generation order for equal timestamps.
    for t_us, _, body in sorted(entries, key=lambda e: (e[0], e[1])):
        _append(cap, t_us, body, encap)
    return cap


def signal_phase_at(
    t_us: int, presses_us: Sequence[int], walk_us: int
) -> tuple[bool, int]:
    """(walk_active, min_end_time in tenths) of the pedestrian signal at ``t_us``.

    While idle the vehicle phase rests in green and its end time counts up one
    second per second from the end of the last walk (or from t = 0).  A press
    starts a walk interval ``(press, press + walk]`` that counts down to zero;
    presses during an active walk are ignored.
    """
    idle_since = 0
    for press in sorted(presses_us):
        if press < idle_since:
            continue
        if t_us <= press:
            break
        end = press + walk_us
        if t_us <= end:
            remaining = end - t_us
            return True, -(-remaining // 100_000)
        idle_since = end
    return False, ((t_us - idle_since) // 1_000_000 * 10) % 36_000


def synth_signal_intersection(
    duration_s: float,
    walk_interval_s: float = 10.0,
    button_press_times: Sequence[float] = (),
    ref: GeoPoint = SIGNAL_INTERSECTION_REF,
    encap: Encapsulation = RAW,
) -> CaptureFile:
    """MAP at 1 Hz and SPaT at 10 Hz for the pedestrian-actuated signal.

    Signal group 1 is the crosswalk, signal group 2 the through traffic.
    """
    if duration_s <= 0:
        raise ScenarioError("duration_s must be positive")
    if walk_interval_s <= 0:
        raise ScenarioError("walk_interval_s must be positive")
    for p in button_press_times:
        if not 0.0 <= p < duration_s:
            raise InvalidPressTime(f"press at {p} s is outside [0, {duration_s})")
    duration_us = round(duration_s * 1_000_000)
    presses = [round(p * 1_000_000) for p in button_press_times]
    walk_us = round(walk_interval_s * 1_000_000)

    mp = signal_intersection_map(ref)
    entries: list[tuple[int, int, object]] = []
    for t in range(0, duration_us, 1_000_000):
        entries.append((t, 0, mp))
    revision = 0
    was_walk = False
    for k, t in enumerate(range(0, duration_us, BSM_PERIOD_US)):
        walk, end_time = signal_phase_at(t, presses, walk_us)
        if walk != was_walk:
            revision = (revision + 1) % 128
            was_walk = walk
        if walk:
            vehicles, crosswalk = EventState.STOP_AND_REMAIN, EventState.PROTECTED_MOVEMENT_ALLOWED
        else:
            vehicles, crosswalk = EventState.PROTECTED_MOVEMENT_ALLOWED, EventState.STOP_AND_REMAIN
        spat = SpatData(
            SIGNAL_INTERSECTION_ID,
            revision,
            (MovementState(1, crosswalk, end_time), MovementState(2, vehicles, end_time)),
        )
        entries.append((t, 1 + k, spat))
    return _finish(_new_capture(encap), entries, encap)


@dataclass(frozen=True)
class StreamPlan:
    """A straight constant-speed track, in the intersection's local frame."""

    temporary_id: bytes
    role: Role
    start: LocalPoint
    heading_deg: float
    speed_mps: float
    length_m: float  # stream ends once this far along the track


def _distinct_ids(n: int, seed: int) -> list[bytes]:
    rng = random.Random(seed)
    ids: list[bytes] = []
    while len(ids) < n:
        candidate = rng.getrandbits(32).to_bytes(4, "big")
        if candidate not in ids:
            ids.append(candidate)
    return ids


def traffic_plans(
    approaches: Mapping[str, int],
    include_pedestrian: bool = False,
    speed_mps: float = 10.0,
    start_distance_m: float = 150.0,
    spacing_m: float = 30.0,
    seed: int = 0,
) -> list[StreamPlan]:
    unknown = set(approaches) - set(SIDE_BEARINGS)
    if unknown:
        raise ScenarioError(f"unknown approach sides {sorted(unknown)}")
    if speed_mps <= 0:
        raise ScenarioError("speed_mps must be positive")
    total = sum(approaches.values()) + (1 if include_pedestrian else 0)
    ids = iter(_distinct_ids(total, seed))
    plans = []
    for side, bearing in SIDE_BEARINGS.items():
        for k in range(approaches.get(side, 0)):
            distance = start_distance_m + k * spacing_m
            start = geo.rotate(LocalPoint(0.0, distance), bearing)
            plans.append(
                StreamPlan(next(ids), Role.VEHICLE, start, (bearing + 180.0) % 360.0, speed_mps, distance)
            )
    if include_pedestrian:
        w = LANE_WIDTH_CM / 100.0
        # Crosses the north leg's crosswalk from east to west.
        plans.append(
            StreamPlan(next(ids), Role.PEDESTRIAN, LocalPoint(1.5 * w, 12.0), 270.0, PEDESTRIAN_SPEED_MPS, 4.0 * w)
        )
    return plans


def synth_traffic_intersection(
    duration_s: float,
    approaches: Mapping[str, int],
    include_pedestrian: bool = False,
    speed_mps: float = 10.0,
    start_distance_m: float = 150.0,
    spacing_m: float = 30.0,
    ref: GeoPoint = TRAFFIC_INTERSECTION_REF,
    encap: Encapsulation = RAW,
    seed: int = 0,
) -> CaptureFile:
    """MAP at 1 Hz plus 10 Hz BSMs for road users approaching on straight lines.

    Vehicles on one side start ``spacing_m`` apart and drive at the reference
    point; each stream stops once its road user reaches the end of its track,
    so the capture only ever shows approaching traffic.
    """
    if duration_s <= 0:
        raise ScenarioError("duration_s must be positive")
    duration_us = round(duration_s * 1_000_000)
    plans = traffic_plans(approaches, include_pedestrian, speed_mps, start_distance_m, spacing_m, seed)

    mp = traffic_intersection_map(ref)
    entries: list[tuple[int, int, object]] = []
    order = 0
    for t in range(0, duration_us, 1_000_000):
        entries.append((t, order, mp))
        order += 1
    for plan in plans:
        along = LocalPoint(*_unit(plan.heading_deg))
        count = 0
        for t in range(0, duration_us, BSM_PERIOD_US):
            travelled = plan.speed_mps * t / 1_000_000
            if travelled >= plan.length_m:
                break
            local = LocalPoint(
                plan.start.east_m + along.east_m * travelled,
                plan.start.north_m + along.north_m * travelled,
            )
            p = geo.from_local(ref, local)
            bsm = BsmCore(
                msg_count=count % 128,
                temporary_id=plan.temporary_id,
                sec_mark=_sec_mark(t),
                latitude=round_half_away(p.lat_deg * 1e7),
                longitude=round_half_away(p.lon_deg * 1e7),
                elevation=round_half_away(ref.elev_m * 10.0),
                speed=round_half_away(plan.speed_mps / 0.02),
                heading=round_half_away(plan.heading_deg / 0.0125) % 28800,
                role=plan.role,
            )
            entries.append((t, order, bsm))
            order += 1
            count += 1
    return _finish(_new_capture(encap), entries, encap)


def _unit(heading_deg: float) -> tuple[float, float]:
    th = math.radians(heading_deg)
    return math.sin(th), math.cos(th)

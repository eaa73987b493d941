from collections import Counter
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from v2xviz import geo
from v2xviz.geo import GeoPoint, LocalPoint
from v2xviz.j2735 import (
    HEADING_UNAVAILABLE,
    LAT_UNAVAILABLE,
    MSG_BSM,
    MSG_MAP,
    MSG_SPAT,
    BsmCore,
    EventState,
    LaneType,
    Role,
    encode_body,
)
from v2xviz.pcap_io import ETHERNET_UDP, RAW, CaptureFile, CaptureRecord, wrap_payload
from v2xviz.scenario import (
    SIGNAL_INTERSECTION_REF,
    TRAFFIC_INTERSECTION_REF,
    ApproachFilter,
    InvalidPressTime,
    NotBsm,
    RelocationSpec,
    ScenarioError,
    bsm_position,
    decoded_frames,
    filter_approaching,
    is_approaching,
    isolate_bsm,
    relocate,
    relocate_bsm,
    round_half_away,
    signal_intersection_map,
    signal_phase_at,
    synth_signal_intersection,
    synth_traffic_intersection,
    traffic_intersection_map,
)

REF = GeoPoint(40.0, -83.0, 250.0)


def bsm_at(ref: GeoPoint, east: float, north: float, heading_deg: float, tid: bytes = b"\x01\x02\x03\x04") -> BsmCore:
    p = geo.from_local(ref, LocalPoint(east, north))
    return BsmCore(
        1, tid, 500, round(p.lat_deg * 1e7), round(p.lon_deg * 1e7), round(ref.elev_m * 10), 500,
        round(heading_deg / 0.0125) % 28800,
    )


def capture_of(bodies, encap=RAW, start_us=1_000_000) -> CaptureFile:
    cap = CaptureFile(link_type=encap.link_type)
    for i, body in enumerate(bodies):
        cap.records.append(cap.make_record(start_us + i * 100_000, wrap_payload(encode_body(body), encap)))
    return cap


def bodies(cap: CaptureFile, encap=RAW):
    return [f.body for _, f in decoded_frames(cap, encap)]


# --------------------------------------------------------------------------
# isolate


def test_isolate_keeps_bsms_in_order():
    spat = synth_signal_intersection(1.0).records[1]
    b1, b2 = bsm_at(REF, 0, 10, 0), bsm_at(REF, 0, 20, 0, b"\x09\x09\x09\x09")
    cap = capture_of([b1, b2])
    mixed = cap.derive([spat, cap.records[0], spat, spat, cap.records[1]])
    result = isolate_bsm(mixed)
    assert result.capture.records == cap.records
    assert result.stats.kept == 2 and result.stats.dropped == 3
    assert result.stats.by_message_id == Counter({MSG_SPAT: 3, MSG_BSM: 2})


def test_isolate_counts_undecodable_and_is_idempotent():
    cap = capture_of([bsm_at(REF, 0, 10, 0)])
    cap.records.append(CaptureRecord(9, 0, b"\xff\xff"))
    once = isolate_bsm(cap)
    assert once.stats.undecodable == 1 and len(once.capture.records) == 1
    twice = isolate_bsm(once.capture)
    assert twice.capture == once.capture


def test_isolate_without_bsms_is_empty():
    assert isolate_bsm(synth_signal_intersection(2.0)).capture.records == []


def test_isolate_all_bsm_is_identity():
    cap = capture_of([bsm_at(REF, 0, d, 0) for d in range(5)])
    assert isolate_bsm(cap).capture == cap


# --------------------------------------------------------------------------
# relocate


def test_identity_relocation_is_bit_exact():
    cap = capture_of([bsm_at(REF, e, n, h) for e, n, h in [(0, 10, 180), (-30, 5, 91.3), (12.3, -40, 359.9875)]])
    out = relocate(cap, RelocationSpec(REF, REF, 0.0)).capture
    assert out == cap


def test_vehicle_at_source_ref_lands_on_destination_ref():
    src = GeoPoint(40.0, -83.0, 250.0)
    dst = GeoPoint(39.5, -82.5, 200.0)
    b = BsmCore(3, b"abcd", 7, 400_000_000, -830_000_000, 2500, 300, 0)
    moved = relocate_bsm(b, RelocationSpec(src, dst, 90.0))
    assert (moved.latitude, moved.longitude) == (395_000_000, -825_000_000)
    assert moved.heading == 7200
    assert moved.elevation == 2000
    assert (moved.msg_count, moved.temporary_id, moved.sec_mark, moved.speed) == (3, b"abcd", 7, 300)


def test_relocation_preserves_100m_separation():
    src, dst = TRAFFIC_INTERSECTION_REF, SIGNAL_INTERSECTION_REF
    a, b = bsm_at(src, 0, 50, 0), bsm_at(src, 0, -50, 0)
    spec = RelocationSpec(src, dst, 37.0)
    pa, pb = (bsm_position(relocate_bsm(x, spec)) for x in (a, b))
    d = horizontal_distance_geo(dst, pa, pb)
    assert d == pytest.approx(100.0, abs=0.1)


def horizontal_distance_geo(ref, p, q) -> float:
    return geo.horizontal_distance(geo.to_local(ref, p), geo.to_local(ref, q))


def test_heading_wraps():
    b = bsm_at(REF, 0, 10, 350.0)
    moved = relocate_bsm(b, RelocationSpec(REF, REF, 20.0))
    assert moved.heading == round(10.0 / 0.0125)


def test_unavailable_fields_pass_through():
    b = replace(bsm_at(REF, 0, 10, 0), heading=HEADING_UNAVAILABLE, elevation=-4096)
    moved = relocate_bsm(b, RelocationSpec(REF, GeoPoint(40.1, -83.1, 0), 45.0))
    assert moved.heading == HEADING_UNAVAILABLE and moved.elevation == -4096
    nowhere = replace(b, latitude=LAT_UNAVAILABLE)
    result = relocate(capture_of([nowhere]), RelocationSpec(REF, GeoPoint(40.1, -83.1), 45.0))
    assert result.stats.unavailable_position == 1
    assert bodies(result.capture) == [nowhere]


def test_elevation_shift_saturates():
    b = replace(bsm_at(REF, 0, 10, 0), elevation=61000)
    up = relocate_bsm(b, RelocationSpec(GeoPoint(40, -83, 0), GeoPoint(40, -83, 100), 0.0))
    assert up.elevation == 61439
    down = relocate_bsm(replace(b, elevation=-4000), RelocationSpec(GeoPoint(40, -83, 100), GeoPoint(40, -83, 0), 0.0))
    assert down.elevation == -4095


def test_relocate_rejects_non_bsm():
    with pytest.raises(NotBsm):
        relocate(synth_signal_intersection(1.0), RelocationSpec(REF, REF))
    with pytest.raises(NotBsm):
        relocate(CaptureFile([CaptureRecord(0, 0, b"\x00")]), RelocationSpec(REF, REF))


def test_relocate_keeps_ethernet_framing():
    cap = capture_of([bsm_at(REF, 3, 40, 180)], ETHERNET_UDP)
    out = relocate(cap, RelocationSpec(REF, GeoPoint(40.2, -83.2, 250), 0.0), ETHERNET_UDP).capture
    assert len(out.records[0].payload) == len(cap.records[0].payload)
    moved = bodies(out, ETHERNET_UDP)[0]
    assert moved.latitude != bodies(cap, ETHERNET_UDP)[0].latitude


def test_relocation_parameters_validation():
    with pytest.raises(ScenarioError):
        RelocationSpec(REF, REF, 360.0)
    with pytest.raises(ScenarioError):
        RelocationSpec(REF, REF, -1.0)


def test_round_half_away():
    assert [round_half_away(x) for x in (0.5, 1.5, -0.5, -1.5, 2.4999, -2.5000001)] == [1, 2, -1, -2, 2, -3]


@settings(max_examples=200)
@given(
    st.floats(-60, 60), st.floats(-179, 179), st.floats(-60, 60), st.floats(-179, 179),
    st.floats(0, 359.99), st.floats(0, 359.9875), st.floats(-1000, 1000), st.floats(-1000, 1000),
)
def test_heading_shift_within_one_count(slat, slon, dlat, dlon, delta, heading, e, n):
    src, dst = GeoPoint(slat, slon), GeoPoint(dlat, dlon)
    b = bsm_at(src, e, n, heading)
    moved = relocate_bsm(b, RelocationSpec(src, dst, delta))
    shift = (moved.heading - b.heading) % 28800
    expected = delta / 0.0125
    assert min(abs(shift - expected), 28800 - abs(shift - expected)) <= 1


# --------------------------------------------------------------------------
# approach filter


def test_filter_examples():
    flt = ApproachFilter(0.0, 45.0)
    assert is_approaching(bsm_at(REF, 0, 200, 180), REF, flt)
    assert not is_approaching(bsm_at(REF, 0, 200, 0), REF, flt)
    assert not is_approaching(bsm_at(REF, 200, 0, 270), REF, flt)


def test_filter_wraps_around_north():
    flt = ApproachFilter(350.0, 20.0)
    assert is_approaching(bsm_at(REF, 20, 200, 185), REF, flt)  # bearing ~5.7 deg


def test_filter_skips_unknowns():
    flt = ApproachFilter(0.0, 45.0)
    assert not is_approaching(replace(bsm_at(REF, 0, 200, 180), heading=HEADING_UNAVAILABLE), REF, flt)
    assert not is_approaching(replace(bsm_at(REF, 0, 200, 180), latitude=LAT_UNAVAILABLE), REF, flt)
    assert not is_approaching(bsm_at(REF, 0, 0, 180), REF, flt)


def test_filter_output_is_ordered_subset():
    cap = synth_traffic_intersection(5.0, {"north": 2, "east": 1, "south": 1, "west": 1})
    bsms = isolate_bsm(cap).capture
    kept = filter_approaching(bsms, TRAFFIC_INTERSECTION_REF, ApproachFilter(0.0, 30.0)).capture
    positions = [bsms.records.index(r) for r in kept.records]
    assert positions == sorted(positions) and len(positions) == 100
    for b in bodies(kept):
        lp = geo.to_local(TRAFFIC_INTERSECTION_REF, bsm_position(b))
        assert lp.north_m > 100 and abs(lp.east_m) < 1


def test_filter_validation():
    with pytest.raises(ScenarioError):
        ApproachFilter(0.0, 0.0)
    with pytest.raises(ScenarioError):
        ApproachFilter(0.0, 181.0)


# --------------------------------------------------------------------------
# synthetic intersections


def test_signal_map_layouts():
    full = signal_intersection_map()
    assert len(full.lanes) == 7
    assert [l.lane_type for l in full.lanes].count(LaneType.CROSSWALK) == 1
    assert len(signal_intersection_map(departure_lanes=False).lanes) == 5
    assert len(traffic_intersection_map().lanes) == 16


def seconds_of(cap):
    """(t, SpatData) of the first SPaT in each whole second."""
    out = {}
    for t, f in decoded_frames(cap):
        if f.message_id == MSG_SPAT:
            sec = round(t - cap.time_of(cap.records[0]), 3)
            if sec == int(sec):
                out[int(sec)] = f.body
    return out


def test_idle_signal_counts_up():
    cap = synth_signal_intersection(5.0)
    ids = [f.message_id for _, f in decoded_frames(cap)]
    assert ids.count(MSG_MAP) == 5 and ids.count(MSG_SPAT) == 50
    per_second = seconds_of(cap)
    assert [per_second[s].movements[1].min_end_time for s in range(5)] == [0, 10, 20, 30, 40]
    for _, f in decoded_frames(cap):
        if f.message_id == MSG_SPAT:
            assert f.body.movements[1].event_state is EventState.PROTECTED_MOVEMENT_ALLOWED


def signal_oracle(t: float, press: float, walk: float):
    """Direct simulation of the pedestal state machine for a single press."""
    if press < t <= press + walk:
        remaining = press + walk - t
        return "walk", int(-(-round(remaining * 10, 6) // 1))
    since = press + walk if t > press + walk else 0.0
    return "idle", int((t - since) // 1) * 10 % 36000


def test_press_gives_red_then_countdown():
    cap = synth_signal_intersection(15.0, walk_interval_s=10.0, button_press_times=[2.0])
    t0 = cap.time_of(cap.records[0])
    countdown = []
    for t, f in decoded_frames(cap):
        if f.message_id != MSG_SPAT:
            continue
        rel = round(t - t0, 6)
        crosswalk, vehicles = f.body.movements
        state, value = signal_oracle(rel, 2.0, 10.0)
        assert vehicles.min_end_time == value
        if state == "walk":
            assert vehicles.event_state is EventState.STOP_AND_REMAIN
            assert crosswalk.event_state is EventState.PROTECTED_MOVEMENT_ALLOWED
            countdown.append(crosswalk.min_end_time)
        else:
            assert vehicles.event_state is EventState.PROTECTED_MOVEMENT_ALLOWED
            assert crosswalk.event_state is EventState.STOP_AND_REMAIN
    assert countdown == sorted(countdown, reverse=True)
    assert countdown[-1] == 0 and len(countdown) == 100


def test_signal_phase_ignores_press_during_walk():
    assert signal_phase_at(5_000_000, [2_000_000, 4_000_000], 10_000_000) == (True, 70)


def test_signal_rejects_bad_input():
    with pytest.raises(ScenarioError):
        synth_signal_intersection(0.0)
    with pytest.raises(InvalidPressTime):
        synth_signal_intersection(5.0, button_press_times=[5.0])
    with pytest.raises(InvalidPressTime):
        synth_signal_intersection(5.0, button_press_times=[-0.1])


def test_traffic_single_vehicle_kinematics():
    cap = synth_traffic_intersection(10.0, {"north": 1})
    bsms = [b for b in bodies(cap) if isinstance(b, BsmCore)]
    assert len(bsms) == 100
    dists = [
        geo.horizontal_distance(LocalPoint(0, 0), geo.to_local(TRAFFIC_INTERSECTION_REF, bsm_position(b))) for b in bsms
    ]
    assert dists[0] == pytest.approx(150.0, abs=0.01)
    for a, b in zip(dists, dists[1:]):
        assert a - b == pytest.approx(1.0, abs=0.01)
    assert {b.heading_deg for b in bsms} == {180.0}
    assert {b.speed_mps for b in bsms} == {10.0}


def test_traffic_sec_mark_and_ids():
    cap = synth_traffic_intersection(3.0, {"north": 2, "west": 1}, include_pedestrian=True)
    seen = {}
    for t, f in decoded_frames(cap):
        if f.message_id == MSG_BSM:
            assert f.body.sec_mark == round((t % 60) * 1000)
            seen.setdefault(f.body.temporary_id, f.body.role)
    assert len(seen) == 4
    assert list(seen.values()).count(Role.PEDESTRIAN) == 1


def test_traffic_without_users_has_only_maps():
    cap = synth_traffic_intersection(3.0, {})
    assert {f.message_id for _, f in decoded_frames(cap)} == {MSG_MAP}


def test_traffic_streams_stop_at_the_intersection():
    cap = synth_traffic_intersection(30.0, {"east": 1}, start_distance_m=50.0)
    bsms = [b for b in bodies(cap) if isinstance(b, BsmCore)]
    assert len(bsms) == 50


def test_synthetic_frames_all_decode():
    for cap in (
        synth_signal_intersection(3.0, button_press_times=[0.5]),
        synth_traffic_intersection(3.0, {"north": 1, "east": 1, "south": 1, "west": 1}, include_pedestrian=True),
    ):
        assert len(list(decoded_frames(cap))) == len(cap.records)

"""Regenerate the golden files in tests/data.

Run after an intentional change to rendering or capture writing, then review
the diff by eye (SVGs open in any browser) before committing.
"""

from __future__ import annotations

from pathlib import Path

from v2xviz import geo, render, scenario
from v2xviz.j2735 import BsmCore, EventState, MovementState, Role, SpatData
from v2xviz.pcap_io import ETHERNET_UDP, save_capture

DATA = Path(__file__).resolve().parent.parent / "tests" / "data"


def golden_capture():
    # Ethernet framing so generic capture tools can dissect it down to UDP.
    return scenario.synth_signal_intersection(
        3.0, walk_interval_s=1.0, button_press_times=[1.0], encap=ETHERNET_UDP
    )


def intersection_scene():
    m = scenario.signal_intersection_map(departure_lanes=False)
    spat = SpatData(
        scenario.SIGNAL_INTERSECTION_ID,
        3,
        (
            MovementState(1, EventState.STOP_AND_REMAIN, 70),
            MovementState(2, EventState.PROTECTED_MOVEMENT_ALLOWED, 70),
        ),
    )
    vp = render.Viewport(scenario.SIGNAL_INTERSECTION_REF, 0.1, 1280, 720)
    return m, spat, vp


def users_scene():
    ref = scenario.TRAFFIC_INTERSECTION_REF
    m = scenario.traffic_intersection_map()

    def at(east, north):
        p = geo.from_local(ref, geo.LocalPoint(east, north))
        return round(p.lat_deg * 1e7), round(p.lon_deg * 1e7)

    users = []
    for tid, role, (e, n), heading in (
        (bytes.fromhex("1A2B3C4D"), Role.VEHICLE, (-1.83, 30.0), 180.0),
        (bytes(4), Role.VEHICLE, (30.0, -1.83), 270.0),
        (bytes.fromhex("DEADBEEF"), Role.VEHICLE, (-25.0, 5.49), 45.0),
        (bytes.fromhex("0BADF00D"), Role.PEDESTRIAN, (2.0, 12.0), 270.0),
    ):
        lat, lon = at(e, n)
        users.append(BsmCore(7, tid, 12_300, lat, lon, 3000, 500, round(heading / 0.0125), role))
    vp = render.Viewport(ref, 0.1, 1280, 720)
    return users, m, vp


def main() -> None:
    DATA.mkdir(parents=True, exist_ok=True)
    save_capture(DATA / "golden_signal.pcap", golden_capture())
    m, spat, vp = intersection_scene()
    (DATA / "golden_intersection.svg").write_bytes(render.render_intersection_frame(m, spat, vp).to_bytes())
    users, m, vp = users_scene()
    (DATA / "golden_users.svg").write_bytes(render.render_users_frame(users, m, vp).to_bytes())
    print("wrote goldens to", DATA)


if __name__ == "__main__":
    main()

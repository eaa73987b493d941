"""Deterministic SVG frames of intersection geometry, signal state and road users.

Elements are emitted in a fixed order (underlay, lanes, reference point,
lights, users, text) and every coordinate is printed with two decimals, so an
equal scene always serializes to the same bytes.
"""

from __future__ import annotations

import colorsys
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence
from xml.sax.saxutils import escape, quoteattr

from . import geo
from .geo import GeoPoint, LocalPoint
from .j2735 import (
    MSG_BSM,
    MSG_MAP,
    MSG_SPAT,
    BsmCore,
    EventState,
    LaneType,
    MapData,
    SpatData,
)
from .pcap_io import RAW, CaptureFile, Encapsulation
from .scenario import bsm_position, decoded_frames

VEHICLE_LENGTH_M = 4.8
VEHICLE_WIDTH_M = 1.9
PEDESTRIAN_RADIUS_M = 0.5
STALE_AFTER_S = 1.0

BACKGROUND = "#f4f4f0"
CROSSWALK_COLOR = "#8b0000"
PEDESTRIAN_COLOR = "#ff0000"
REF_POINT_COLOR = "#d00000"
# Vehicle lanes, by position in the MAP's lane list.
LANE_PALETTE = (
    "#e6c700",  # yellow
    "#ff8c00",  # orange
    "#d000d0",  # magenta
    "#1f5fff",  # blue
    "#00a36c",  # green
    "#00b5c8",  # cyan
    "#7b3fb8",  # purple
    "#8a5a2b",  # brown
)
LIGHT_COLORS = {"red": "#e02020", "yellow": "#f0c000", "green": "#20b040"}
LIGHT_OFF = "#3a3a3a"
LIGHT_ORDER = ("red", "yellow", "green")

EVENT_COLOR = {
    EventState.STOP_AND_REMAIN: "red",
    EventState.PERMISSIVE_MOVEMENT_ALLOWED: "green",
    EventState.PROTECTED_MOVEMENT_ALLOWED: "green",
    EventState.PERMISSIVE_CLEARANCE: "yellow",
    EventState.PROTECTED_CLEARANCE: "yellow",
    EventState.DARK: "off",
}

_GOLDEN = 2654435761


class RenderError(ValueError):
    pass


class MismatchedIntersection(RenderError):
    pass


class EmptyCapture(RenderError):
    pass


@dataclass(frozen=True)
class Viewport:
    center: GeoPoint
    meters_per_pixel: float
    width_px: int
    height_px: int
    underlay: str | None = None  # referenced image path, never embedded

    def __post_init__(self) -> None:
        if self.width_px <= 0 or self.height_px <= 0 or not self.meters_per_pixel > 0:
            raise RenderError("viewport size and scale must be positive")

    def project(self, p: GeoPoint) -> tuple[float, float]:
        return self.project_local(geo.to_local(self.center, p))

    def project_local(self, lp: LocalPoint) -> tuple[float, float]:
        return (
            self.width_px / 2.0 + lp.east_m / self.meters_per_pixel,
            self.height_px / 2.0 - lp.north_m / self.meters_per_pixel,
        )


def _n(v: float) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


@dataclass(frozen=True)
class Element:
    tag: str
    attrs: tuple[tuple[str, str], ...]
    text: str | None = None
    children: tuple["Element", ...] = ()

    def to_svg(self, indent: str = "  ") -> str:
        attrs = "".join(f" {k}={quoteattr(v)}" for k, v in self.attrs)
        if self.children:
            inner = "\n".join(c.to_svg(indent + "  ") for c in self.children)
            return f"{indent}<{self.tag}{attrs}>\n{inner}\n{indent}</{self.tag}>"
        if self.text is not None:
            return f"{indent}<{self.tag}{attrs}>{escape(self.text)}</{self.tag}>"
        return f"{indent}<{self.tag}{attrs}/>"

    def iter(self) -> Iterable["Element"]:
        yield self
        for c in self.children:
            yield from c.iter()

    def get(self, key: str) -> str | None:
        return dict(self.attrs).get(key)


def _el(tag: str, text: str | None = None, children: Sequence[Element] = (), **attrs: str) -> Element:
    return Element(tag, tuple((k.rstrip("_").replace("__", ":").replace("_", "-"), v) for k, v in attrs.items()), text, tuple(children))


@dataclass
class Frame:
    width_px: int
    height_px: int
    elements: list[Element] = field(default_factory=list)
    skipped_users: int = 0
    time: float | None = None

    def to_svg(self) -> str:
        head = (
            '<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" xmlns:xlink="http://www.w3.org/1999/xlink" '
            f'version="1.1" width="{self.width_px}" height="{self.height_px}" '
            f'viewBox="0 0 {self.width_px} {self.height_px}">'
        )
        body = [
            f'  <rect class="background" x="0" y="0" width="{self.width_px}" '
            f'height="{self.height_px}" fill="{BACKGROUND}"/>'
        ]
        body += [e.to_svg() for e in self.elements]
        return head + "\n" + "\n".join(body) + "\n</svg>\n"

    def to_bytes(self) -> bytes:
        return self.to_svg().encode("utf-8")

    def find(self, cls: str) -> list[Element]:
        return [e for top in self.elements for e in top.iter() if e.get("class") == cls]


def color_from_id(temporary_id: bytes) -> tuple[int, int, int]:
    """Stable identity colour: golden-ratio hash of the ID onto the hue circle."""
    value = int.from_bytes(bytes(temporary_id), "big")
    hue = ((value * _GOLDEN) % 2**32) / 2**32
    r, g, b = colorsys.hsv_to_rgb(hue, 0.8, 0.9)
    return round(r * 255), round(g * 255), round(b * 255)


def _hex(rgb: tuple[int, int, int]) -> str:
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def lane_color(index: int, lane_type: LaneType) -> str:
    if lane_type is LaneType.CROSSWALK:
        return CROSSWALK_COLOR
    return LANE_PALETTE[index % len(LANE_PALETTE)]


def ref_point_geo(m: MapData) -> GeoPoint:
    rp = m.ref_point
    return GeoPoint(rp.latitude / 1e7, rp.longitude / 1e7, rp.elevation / 10.0)


# --------------------------------------------------------------------------
# scene layers


def _lane_elements(m: MapData, vp: Viewport) -> list[Element]:
    origin = geo.to_local(vp.center, ref_point_geo(m))
    out = []
    for i, lane in enumerate(m.lanes):
        color = lane_color(i, lane.lane_type)
        pts = [
            vp.project_local(LocalPoint(origin.east_m + n.x_cm / 100.0, origin.north_m + n.y_cm / 100.0))
            for n in lane.nodes
        ]
        poly = _el(
            "polyline",
            class_="lane",
            points=" ".join(f"{_n(x)},{_n(y)}" for x, y in pts),
            fill="none",
            stroke=color,
            stroke_width="2",
        )
        dots = [_el("circle", class_="lane-node", cx=_n(x), cy=_n(y), r="3", fill=color) for x, y in pts]
        out.append(
            _el("g", children=[poly, *dots], class_="lane-group", id=f"lane-{lane.lane_id}")
        )
    return out


def _ref_element(m: MapData, vp: Viewport) -> Element:
    x, y = vp.project(ref_point_geo(m))
    arm = 8.0
    return _el(
        "g",
        children=[
            _el("line", x1=_n(x - arm), y1=_n(y), x2=_n(x + arm), y2=_n(y), stroke=REF_POINT_COLOR, stroke_width="2"),
            _el("line", x1=_n(x), y1=_n(y - arm), x2=_n(x), y2=_n(y + arm), stroke=REF_POINT_COLOR, stroke_width="2"),
        ],
        class_="ref-point",
    )


LIGHT_MARGIN_PX = 20.0
LIGHT_SPACING_PX = 50.0
LIGHT_RADIUS_PX = 10.0


def _light_layout(spat: SpatData) -> list[tuple[float, float, object]]:
    movements = sorted(spat.movements, key=lambda m: m.signal_group)
    return [
        (LIGHT_MARGIN_PX + 15.0 + i * LIGHT_SPACING_PX, LIGHT_MARGIN_PX, m) for i, m in enumerate(movements)
    ]


def _light_elements(spat: SpatData) -> list[Element]:
    out = []
    for x, y, m in _light_layout(spat):
        active = EVENT_COLOR[m.event_state]
        parts = [
            _el(
                "rect",
                x=_n(x - 15.0),
                y=_n(y),
                width="30.00",
                height="80.00",
                rx="4",
                fill="#101010",
            )
        ]
        for j, name in enumerate(LIGHT_ORDER):
            lit = name == active
            parts.append(
                _el(
                    "circle",
                    class_=f"lamp lamp-{name}" + (" lit" if lit else ""),
                    cx=_n(x),
                    cy=_n(y + 15.0 + 25.0 * j),
                    r=_n(LIGHT_RADIUS_PX),
                    fill=LIGHT_COLORS[name] if lit else LIGHT_OFF,
                )
            )
        out.append(
            _el("g", children=parts, class_="light", id=f"sg-{m.signal_group}", data_state=active)
        )
    return out


def _countdown_elements(spat: SpatData) -> list[Element]:
    return [
        _el(
            "text",
            f"{m.min_end_time / 10:.1f}",
            class_="countdown",
            x=_n(x),
            y=_n(y + 100.0),
            text_anchor="middle",
            font_family="monospace",
            font_size="14",
            fill="#000000",
        )
        for x, y, m in _light_layout(spat)
    ]


def _user_element(b: BsmCore, vp: Viewport) -> Element:
    x, y = vp.project(bsm_position(b))
    if b.role.value == "pedestrian":
        return _el(
            "circle",
            class_="pedestrian",
            cx=_n(x),
            cy=_n(y),
            r=_n(PEDESTRIAN_RADIUS_M / vp.meters_per_pixel),
            fill=PEDESTRIAN_COLOR,
            data_id=b.id_hex,
        )
    length = VEHICLE_LENGTH_M / vp.meters_per_pixel
    width = VEHICLE_WIDTH_M / vp.meters_per_pixel
    heading = b.heading_deg if b.heading_deg is not None else 90.0
    # Unrotated, the long axis lies along screen east (heading 90).
    angle = (heading - 90.0) % 360.0
    rect = _el(
        "rect",
        class_="vehicle",
        x=_n(x - length / 2.0),
        y=_n(y - width / 2.0),
        width=_n(length),
        height=_n(width),
        fill=_hex(color_from_id(b.temporary_id)),
        stroke="#000000",
        stroke_width="1",
        data_id=b.id_hex,
    )
    return _el("g", children=[rect], class_="user", transform=f"rotate({_n(angle)} {_n(x)} {_n(y)})")


# --------------------------------------------------------------------------
# frames


def render_scene(
    vp: Viewport,
    map_data: MapData | None = None,
    spat: SpatData | None = None,
    users: Sequence[BsmCore] = (),
    time: float | None = None,
) -> Frame:
    frame = Frame(vp.width_px, vp.height_px, time=time)
    if vp.underlay:
        frame.elements.append(
            _el(
                "image",
                class_="underlay",
                x="0",
                y="0",
                width=str(vp.width_px),
                height=str(vp.height_px),
                xlink__href=vp.underlay,
            )
        )
    if map_data is not None:
        frame.elements += _lane_elements(map_data, vp)
        frame.elements.append(_ref_element(map_data, vp))
    if spat is not None:
        frame.elements += _light_elements(spat)
    for b in users:
        if not b.has_position:
            frame.skipped_users += 1
            continue
        try:
            frame.elements.append(_user_element(b, vp))
        except geo.OutOfValidity:
            frame.skipped_users += 1
    if spat is not None:
        frame.elements += _countdown_elements(spat)
    if time is not None:
        frame.elements.append(
            _el("text", f"t={time:.1f}s", class_="clock", x="10", y=_n(vp.height_px - 10.0),
                font_family="monospace", font_size="12", fill="#000000")
        )
    return frame


def render_intersection_frame(map_data: MapData, spat: SpatData, vp: Viewport) -> Frame:
    if spat.intersection_id != map_data.intersection_id:
        raise MismatchedIntersection(
            f"SPaT for {spat.intersection_id} does not belong to MAP {map_data.intersection_id}"
        )
    return render_scene(vp, map_data, spat)


def render_users_frame(users: Sequence[BsmCore], map_data: MapData | None, vp: Viewport) -> Frame:
    return render_scene(vp, map_data, None, users)


def render_sequence(
    capture: CaptureFile,
    vp: Viewport,
    step_s: float,
    encap: Encapsulation = RAW,
    map_capture: CaptureFile | None = None,
) -> list[Frame]:
    """One frame per ``step_s`` from the first record to the last.

    Each frame shows the latest MAP and SPaT at or before its time and every
    road user whose most recent BSM is at most 1 s old.
    """
    if step_s <= 0:
        raise RenderError("step_s must be positive")
    if not capture.records:
        raise EmptyCapture("capture has no records")

    events = list(decoded_frames(capture, encap))
    if map_capture is not None:
        events += [(t, f) for t, f in decoded_frames(map_capture, encap) if f.message_id == MSG_MAP]
        events.sort(key=lambda e: e[0])

    times = [capture.time_of(r) for r in capture.records]
    start, last = min(times), max(times)
    step_us = round(step_s * 1_000_000)
    span_us = round((last - start) * 1_000_000)
    frame_times = [start + k * step_us / 1_000_000 for k in range(span_us // step_us + 1)]

    frames = []
    current_map: MapData | None = None
    current_spat: SpatData | None = None
    latest: dict[bytes, tuple[float, BsmCore]] = {}
    i = 0
    for ft in frame_times:
        while i < len(events) and events[i][0] <= ft + 1e-9:
            t, f = events[i]
            if f.message_id == MSG_MAP:
                current_map = f.body
            elif f.message_id == MSG_SPAT:
                current_spat = f.body
            elif f.message_id == MSG_BSM:
                latest[f.body.temporary_id] = (t, f.body)
            i += 1
        users = [b for t, b in sorted(latest.values(), key=lambda e: e[1].temporary_id)
                 if ft - t <= STALE_AFTER_S + 1e-9]
        spat = current_spat
        if spat is not None and current_map is not None and spat.intersection_id != current_map.intersection_id:
            spat = None
        frames.append(render_scene(vp, current_map, spat, users, time=ft - start))
    return frames


def write_frames(frames: Sequence[Frame], out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, frame in enumerate(frames, start=1):
        p = out / f"frame_{k:06d}.svg"
        p.write_bytes(frame.to_bytes())
        paths.append(p)
    return paths

"""Intersection Movement Assist: time-to-intersection conflict warning.

Each road user's time to the intersection is its straight-line distance to
the MAP reference point divided by its speed.  A warning is raised when the
host's time falls strictly inside the remote's time plus or minus half the
safety margin.
"""

from __future__ import annotations

import bisect
import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from . import geo
from .geo import GeoPoint
from .j2735 import MSG_BSM, BsmCore
from .replay import ReceivedMessage
from .scenario import bsm_position

DEFAULT_T_SAFETY_S = 3.0
DEFAULT_TRACK_TIMEOUT_S = 2.0


class NegativeInput(ValueError):
    pass


def time_to_intersection(distance_m: float, speed_mps: float) -> float | None:
    """Seconds to reach the intersection, or None for a stationary vehicle."""
    if distance_m < 0 or speed_mps < 0:
        raise NegativeInput(f"distance={distance_m}, speed={speed_mps}")
    if speed_mps == 0:
        return None
    return distance_m / speed_mps


def check_warning(t_host: float, t_remote: float, t_safety: float) -> bool:
    half = t_safety / 2.0
    return t_remote - half < t_host < t_remote + half


def conflict(d_host: float, v_host: float, d_remote: float, v_remote: float, t_safety: float) -> bool:
    """check_warning on the two times to intersection, decided without dividing.

    Multiplying through by both speeds keeps the strict boundary exact when
    distances and speeds are integers, where d/v would round.
    """
    for v in (d_host, v_host, d_remote, v_remote):
        if v < 0:
            raise NegativeInput(f"negative input {v}")
    if v_host == 0 or v_remote == 0:
        return False
    return abs(d_host * v_remote - d_remote * v_host) < t_safety / 2.0 * v_host * v_remote


@dataclass(frozen=True)
class HostState:
    position: GeoPoint
    speed_mps: float
    heading_deg: float = 0.0

    def __post_init__(self) -> None:
        if not self.speed_mps >= 0 or self.speed_mps == float("inf"):
            raise ValueError("host speed must be finite and >= 0")


@dataclass(frozen=True)
class ImaConfig:
    intersection_ref: GeoPoint
    t_safety_s: float = DEFAULT_T_SAFETY_S
    track_timeout_s: float = DEFAULT_TRACK_TIMEOUT_S

    def __post_init__(self) -> None:
        if self.t_safety_s <= 0 or self.track_timeout_s <= 0:
            raise ValueError("t_safety_s and track_timeout_s must be > 0")


@dataclass
class RemoteTrack:
    id: bytes
    position: GeoPoint
    distance_m: float
    speed_mps: float | None
    heading_deg: float | None
    last_seen: float

    @property
    def id_hex(self) -> str:
        return self.id.hex().upper()


@dataclass(frozen=True)
class TrackInfo:
    id_hex: str
    position: GeoPoint
    distance_m: float
    speed_mps: float | None
    heading_deg: float | None
    t_remote: float | None


@dataclass(frozen=True)
class Advisory:
    tracks: tuple[TrackInfo, ...] = ()
    warning: bool = False
    offending: TrackInfo | None = None
    t_host: float | None = None
    time: float | None = None


@dataclass
class ImaApp:
    """Track table plus warning logic; feed it one received message at a time."""

    config: ImaConfig
    tracks: dict[bytes, RemoteTrack] = field(default_factory=dict)

    def distance_to_ref(self, p: GeoPoint) -> float:
        local = geo.to_local(self.config.intersection_ref, p)
        return max(0.0, geo.horizontal_distance(geo.LocalPoint(0.0, 0.0), local))

    def _update(self, b: BsmCore, now: float) -> None:
        if not b.has_position:
            return
        p = bsm_position(b)
        self.tracks[b.temporary_id] = RemoteTrack(
            id=b.temporary_id,
            position=p,
            distance_m=self.distance_to_ref(p),
            speed_mps=b.speed_mps,
            heading_deg=b.heading_deg,
            last_seen=now,
        )

    def evict(self, now: float) -> None:
        timeout = self.config.track_timeout_s
        for key in [k for k, t in self.tracks.items() if now - t.last_seen > timeout]:
            del self.tracks[key]

    def step(self, host: HostState, msg: ReceivedMessage, now: float) -> Advisory:
        if msg.frame.message_id != MSG_BSM:
            return Advisory(time=now)
        self._update(msg.frame.body, now)
        return self.evaluate(host, now)

    def evaluate(self, host: HostState, now: float) -> Advisory:
        self.evict(now)
        d_host = self.distance_to_ref(host.position)
        t_host = time_to_intersection(d_host, host.speed_mps)
        infos = []
        best: tuple[float, TrackInfo] | None = None
        for track in sorted(self.tracks.values(), key=lambda t: (t.distance_m, t.id)):
            t_remote = None
            if track.speed_mps is not None:
                t_remote = time_to_intersection(track.distance_m, track.speed_mps)
            info = TrackInfo(
                track.id_hex, track.position, track.distance_m, track.speed_mps, track.heading_deg, t_remote
            )
            infos.append(info)
            if t_host is None or t_remote is None:
                continue
            if conflict(d_host, host.speed_mps, track.distance_m, track.speed_mps, self.config.t_safety_s):
                gap = abs(t_host - t_remote)
                if best is None or gap < best[0]:
                    best = (gap, info)
        return Advisory(
            tracks=tuple(infos),
            warning=best is not None,
            offending=best[1] if best else None,
            t_host=t_host,
            time=now,
        )


def _fmt(v: float | None) -> str:
    return "NA" if v is None else f"{v:.1f}"


def format_advisory(a: Advisory) -> str:
    lines = [
        f"id={t.id_hex} dist={_fmt(t.distance_m)} speed={_fmt(t.speed_mps)} hdg={_fmt(t.heading_deg)}"
        for t in a.tracks
    ]
    if a.warning and a.offending is not None:
        o = a.offending
        lines.append(f"IMA WARNING: VEHICLE {o.id_hex} dist={_fmt(o.distance_m)} speed={_fmt(o.speed_mps)}")
    return "\n".join(lines)


# --------------------------------------------------------------------------
# host trajectory


@dataclass(frozen=True)
class HostSample:
    t: float
    position: GeoPoint
    speed_mps: float
    heading_deg: float


class HostTrajectory:
    """Timestamped host samples with linear interpolation between them."""

    def __init__(self, samples: Iterable[HostSample]):
        self.samples = sorted(samples, key=lambda s: s.t)
        if not self.samples:
            raise ValueError("empty host trajectory")
        self._times = [s.t for s in self.samples]

    def at(self, t: float) -> HostState:
        i = bisect.bisect_right(self._times, t)
        if i == 0:
            s = self.samples[0]
            return HostState(s.position, s.speed_mps, s.heading_deg)
        if i == len(self.samples):
            s = self.samples[-1]
            return HostState(s.position, s.speed_mps, s.heading_deg)
        a, b = self.samples[i - 1], self.samples[i]
        f = (t - a.t) / (b.t - a.t)

        def lerp(x: float, y: float) -> float:
            return x + (y - x) * f

        pos = GeoPoint(
            lerp(a.position.lat_deg, b.position.lat_deg),
            lerp(a.position.lon_deg, b.position.lon_deg),
            lerp(a.position.elev_m, b.position.elev_m),
        )
        return HostState(pos, lerp(a.speed_mps, b.speed_mps), a.heading_deg if f < 0.5 else b.heading_deg)

    @classmethod
    def straight(
        cls,
        ref: GeoPoint,
        approach_bearing_deg: float,
        start_distance_m: float,
        speed_mps: float,
        duration_s: float,
        period_s: float = 0.1,
    ) -> "HostTrajectory":
        """Host driving through ``ref`` from ``start_distance_m`` out on the given side."""
        heading = (approach_bearing_deg + 180.0) % 360.0
        samples = []
        n = int(round(duration_s / period_s))
        for k in range(n + 1):
            t = k * period_s
            along = start_distance_m - speed_mps * t
            local = geo.rotate(geo.LocalPoint(0.0, along), approach_bearing_deg)
            samples.append(HostSample(t, geo.from_local(ref, local), speed_mps, heading))
        return cls(samples)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["timestamp", "lat", "lon", "speed_mps", "heading_deg"])
            for s in self.samples:
                w.writerow([f"{s.t:.3f}", f"{s.position.lat_deg:.9f}", f"{s.position.lon_deg:.9f}",
                            f"{s.speed_mps:.3f}", f"{s.heading_deg:.4f}"])

    @classmethod
    def from_csv(cls, path: str | Path) -> "HostTrajectory":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls(
            HostSample(
                float(r["timestamp"]),
                GeoPoint(float(r["lat"]), float(r["lon"])),
                float(r["speed_mps"]),
                float(r["heading_deg"]),
            )
            for r in rows
        )


# --------------------------------------------------------------------------
# analytic reference for the straight-line, constant-speed case


def warning_intervals(
    host_start_m: float,
    host_speed: float,
    remote_start_m: float,
    remote_speed: float,
    t_safety: float,
    horizon_s: float | None = None,
) -> list[tuple[float, float]]:
    """Open time intervals during which the warning condition holds.

    The host drives through the reference point (its distance is
    ``|host_start - v t|``); the remote approaches until it reaches the
    reference at ``remote_start / remote_speed``, which bounds the horizon.
    Distances are piecewise linear in time, so the condition is solved
    exactly on each linear piece.
    """
    if host_speed <= 0 or remote_speed <= 0:
        return []
    end = remote_start_m / remote_speed
    if horizon_s is not None:
        end = min(end, horizon_s)
    half = t_safety / 2.0
    cross = host_start_m / host_speed
    pieces = [(0.0, min(cross, end)), (max(cross, 0.0), end)]
    out: list[tuple[float, float]] = []
    for lo, hi in pieces:
        if hi <= lo:
            continue
        mid = (lo + hi) / 2.0
        sign = 1.0 if host_start_m - host_speed * mid >= 0 else -1.0
        # gap(t) = t_host(t) - t_remote(t) = a + b t on this piece
        a = sign * host_start_m / host_speed - remote_start_m / remote_speed
        b = -sign + 1.0
        if b == 0.0:
            if -half < a < half:
                out.append((lo, hi))
            continue
        t1, t2 = sorted(((-half - a) / b, (half - a) / b))
        s, e = max(lo, t1), min(hi, t2)
        if s < e:
            out.append((s, e))
    merged: list[tuple[float, float]] = []
    for s, e in out:
        if merged and abs(merged[-1][1] - s) < 1e-12:
            merged[-1] = (merged[-1][0], e)
        else:
            merged.append((s, e))
    return merged


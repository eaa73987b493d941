"""``v2xviz`` command line: one subcommand per pipeline stage plus an end-to-end demo.

Exit codes: 0 success, 1 bad usage or unreadable input, 2 data errors (for
example a capture with no usable records).
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence, TextIO

from . import geo, ima, j2735, pcap_io, render, replay, scenario
from .geo import GeoPoint
from .pcap_io import Encapsulation

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

DEFAULT_PORT = 47347
DEMO_DST_REF = GeoPoint(39.9950000, -83.0100000, 230.0)


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that reports usage errors with exit status 1."""

    def error(self, message: str):  # type: ignore[override]
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# --------------------------------------------------------------------------
# argument types


def geo_point(text: str) -> GeoPoint:
    """``lat,lon`` or ``lat,lon,elev`` in decimal degrees and metres."""
    parts = text.split(",")
    if len(parts) not in (2, 3):
        raise argparse.ArgumentTypeError(f"expected lat,lon[,elev], got {text!r}")
    try:
        return GeoPoint(*(float(p) for p in parts))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def frame_size(text: str) -> tuple[int, int]:
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WIDTHxHEIGHT, got {text!r}") from None
    if w <= 0 or h <= 0:
        raise argparse.ArgumentTypeError("width and height must be positive")
    return w, h


def endpoint(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not host:
        raise argparse.ArgumentTypeError(f"expected host:port, got {text!r}")
    try:
        return host, int(port)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad port in {text!r}") from None


def positive(kind: type = float) -> Callable[[str], float]:
    def convert(text: str):
        v = kind(text)
        if v <= 0:
            raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
        return v

    convert.__name__ = f"positive {kind.__name__}"
    return convert


def non_negative_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return v


def port_number(text: str) -> int:
    v = int(text)
    if not 0 <= v <= 65535:
        raise argparse.ArgumentTypeError(f"port out of range: {text}")
    return v


# --------------------------------------------------------------------------
# config file


def read_config(path: str) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment line."""
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    values = {}
    for n, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{n}: expected key=value")
        values[key.strip().lstrip("-")] = value.strip()
    return values


def _apply_config(parser: argparse.ArgumentParser, values: dict[str, str]) -> None:
    """Install config values as defaults of ``parser``; command-line flags still win."""
    by_name = {}
    for action in parser._actions:
        for opt in action.option_strings:
            by_name[opt.lstrip("-")] = action
    defaults = {}
    for key, raw in values.items():
        action = by_name.get(key) or by_name.get(key.replace("_", "-"))
        if action is None or isinstance(action, argparse._HelpAction):
            raise UsageError(f"config key {key!r} is not an option of '{parser.prog}'")
        if isinstance(action, argparse._StoreTrueAction):
            defaults[action.dest] = raw.lower() in ("1", "true", "yes", "on")
        elif isinstance(action, argparse._AppendAction):
            convert = action.type or str
            try:
                defaults[action.dest] = [convert(v.strip()) for v in raw.split(",") if v.strip()]
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"config key {key!r}: {exc}") from exc
        else:
            # argparse converts string defaults with the action's type.
            defaults[action.dest] = raw
        action.required = False
    parser.set_defaults(**defaults)


# --------------------------------------------------------------------------
# helpers


def _encap(args: argparse.Namespace) -> Encapsulation:
    kind = "ethernet_ipv4_udp" if args.encap == "ethernet" else "raw_payload"
    return Encapsulation(kind, args.skip)


def _load(path: str) -> pcap_io.CaptureFile:
    try:
        cap = pcap_io.load_capture(path)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except pcap_io.PcapError as exc:
        raise UsageError(f"{path}: {exc}") from exc
    if cap.truncated:
        print(f"warning: {path} ends with a truncated record", file=sys.stderr)
    return cap


def _save(path: str, cap: pcap_io.CaptureFile) -> None:
    try:
        pcap_io.save_capture(path, cap)
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _write_text(path: str, text: str) -> None:
    try:
        Path(path).write_text(text, encoding="utf-8", newline="\n")
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _report(stats: scenario.TransformStats, out: TextIO) -> None:
    print(
        f"kept {stats.kept}, dropped {stats.dropped}, undecodable {stats.undecodable}"
        + (f", position unavailable {stats.unavailable_position}" if stats.unavailable_position else ""),
        file=out,
    )


# --------------------------------------------------------------------------
# subcommands


def cmd_decode(args: argparse.Namespace, out: TextIO) -> int:
    cap = _load(args.input)
    frames = list(scenario.decoded_frames(cap, _encap(args)))
    if not frames:
        raise DataError(f"{args.input}: no decodable records out of {len(cap.records)}")
    if args.bsm_csv:
        _write_text(args.bsm_csv, j2735.bsm_to_csv(j2735.bsm_rows(frames)))
    if args.map_text:
        maps: list[j2735.MapData] = []
        for _, f in frames:
            if f.message_id == j2735.MSG_MAP and f.body not in maps:
                maps.append(f.body)
        _write_text(args.map_text, "".join(j2735.map_to_text(m) for m in maps))
    if not args.bsm_csv and not args.map_text:
        for ts, f in frames:
            if f.message_id == j2735.MSG_SPAT:
                text = j2735.spat_summary(f.body)
            elif f.message_id == j2735.MSG_BSM:
                b = f.body
                text = f"BSM id={b.id_hex} lat={b.lat_deg} lon={b.lon_deg} speed={b.speed_mps} hdg={b.heading_deg}"
            else:
                text = f"MAP id={f.body.intersection_id} lanes={len(f.body.lanes)}"
            print(f"{ts:.6f} {text}", file=out)
    skipped = len(cap.records) - len(frames)
    print(f"decoded {len(frames)} of {len(cap.records)} records" + (f" ({skipped} skipped)" if skipped else ""),
          file=sys.stderr)
    return EXIT_OK


def cmd_isolate(args: argparse.Namespace, out: TextIO) -> int:
    cap = _load(args.input)
    result = scenario.isolate_bsm(cap, _encap(args))
    _save(args.output, result.capture)
    _report(result.stats, out)
    return EXIT_OK


def cmd_relocate(args: argparse.Namespace, out: TextIO) -> int:
    cap = _load(args.input)
    try:
        spec = scenario.RelocationSpec(args.src, args.dst, args.dheading % 360.0)
        result = scenario.relocate(cap, spec, _encap(args))
    except scenario.NotBsm as exc:
        raise DataError(f"{exc}; run 'isolate' first") from exc
    except geo.GeoError as exc:
        raise DataError(str(exc)) from exc
    _save(args.output, result.capture)
    _report(result.stats, out)
    return EXIT_OK


def cmd_filter(args: argparse.Namespace, out: TextIO) -> int:
    cap = _load(args.input)
    try:
        flt = scenario.ApproachFilter(args.center % 360.0, args.half_width)
    except scenario.ScenarioError as exc:
        raise UsageError(str(exc)) from exc
    try:
        result = scenario.filter_approaching(cap, args.ref, flt, _encap(args))
    except geo.GeoError as exc:
        raise DataError(str(exc)) from exc
    _save(args.output, result.capture)
    _report(result.stats, out)
    return EXIT_OK


def cmd_synth(args: argparse.Namespace, out: TextIO) -> int:
    encap = _encap(args)
    try:
        if args.kind == "signal":
            cap = scenario.synth_signal_intersection(
                args.duration,
                walk_interval_s=args.walk,
                button_press_times=args.press or (),
                ref=args.ref or scenario.SIGNAL_INTERSECTION_REF,
                encap=encap,
            )
        else:
            cap = scenario.synth_traffic_intersection(
                args.duration,
                {"north": args.north, "east": args.east, "south": args.south, "west": args.west},
                include_pedestrian=args.pedestrian,
                speed_mps=args.speed,
                start_distance_m=args.start_distance,
                spacing_m=args.spacing,
                ref=args.ref or scenario.TRAFFIC_INTERSECTION_REF,
                encap=encap,
                seed=args.seed,
            )
    except scenario.ScenarioError as exc:
        raise UsageError(str(exc)) from exc
    _save(args.output, cap)
    print(f"wrote {len(cap.records)} records to {args.output}", file=out)
    return EXIT_OK


def cmd_render(args: argparse.Namespace, out: TextIO) -> int:
    encap = _encap(args)
    cap = _load(args.input)
    map_cap = _load(args.map) if args.map else None
    center = args.center
    if center is None:
        for source in (map_cap, cap):
            if source is None:
                continue
            maps = [f.body for _, f in scenario.decoded_frames(source, encap) if f.message_id == j2735.MSG_MAP]
            if maps:
                center = render.ref_point_geo(maps[0])
                break
    if center is None:
        raise DataError("no MAP in the input; give --center")
    width, height = args.size
    vp = render.Viewport(center, args.mpp, width, height, args.underlay)
    try:
        frames = render.render_sequence(cap, vp, args.step, encap, map_capture=map_cap)
    except render.EmptyCapture as exc:
        raise DataError(f"{args.input}: {exc}") from exc
    try:
        paths = render.write_frames(frames, args.output)
    except OSError as exc:
        raise UsageError(f"cannot write frames to {args.output}: {exc}") from exc
    print(f"wrote {len(paths)} frames to {args.output}", file=out)
    return EXIT_OK


def cmd_replay(args: argparse.Namespace, out: TextIO) -> int:
    cap = _load(args.input)
    if not cap.records:
        raise DataError(f"{args.input}: capture has no records")
    host, port = args.dest
    config = replay.ReplayConfig(host, port, args.speed, args.loop, args.broadcast)
    try:
        report = replay.replay(cap, config, _encap(args))
    except replay.SocketError as exc:
        raise UsageError(str(exc)) from exc
    if report.sent == 0:
        raise DataError("no record had an extractable payload")
    print(
        f"sent {report.sent} datagrams ({report.skipped} skipped); interval error p99 "
        f"{report.interval_error_percentile(99) * 1000:.2f} ms, max {report.max_timing_error * 1000:.2f} ms",
        file=out,
    )
    return EXIT_OK


def _wait(duration: float | None) -> None:
    try:
        if duration is None:
            while True:
                time.sleep(3600)
        time.sleep(duration)
    except KeyboardInterrupt:
        pass


def cmd_listen(args: argparse.Namespace, out: TextIO) -> int:
    rows: list[tuple[float, j2735.BsmCore]] = []
    start = time.monotonic()

    def sink(msg: replay.ReceivedMessage) -> None:
        t = msg.arrival_monotonic - start
        f = msg.frame
        if f.message_id == j2735.MSG_BSM:
            rows.append((t, f.body))
            print(f"{t:.3f} BSM id={f.body.id_hex}", file=out, flush=True)
        elif f.message_id == j2735.MSG_SPAT:
            print(f"{t:.3f} {j2735.spat_summary(f.body)}", file=out, flush=True)
        else:
            print(f"{t:.3f} MAP id={f.body.intersection_id}", file=out, flush=True)

    try:
        listener = replay.Listener(args.port, sink, args.host)
    except replay.BindError as exc:
        raise UsageError(str(exc)) from exc
    with listener:
        _wait(args.duration)
    if args.csv:
        _write_text(args.csv, j2735.bsm_to_csv(rows))
    print(
        f"received {listener.received}, decoded {listener.received - listener.decode_failures}, "
        f"undecodable {listener.decode_failures}, dropped {listener.dropped}",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_ima(args: argparse.Namespace, out: TextIO) -> int:
    try:
        trajectory = ima.HostTrajectory.from_csv(args.host_log)
    except OSError as exc:
        raise UsageError(f"cannot read {args.host_log}: {exc.strerror or exc}") from exc
    except (KeyError, ValueError) as exc:
        raise DataError(f"{args.host_log}: bad host trajectory ({exc})") from exc
    app = ima.ImaApp(ima.ImaConfig(args.ref, args.tsafety, args.timeout))
    start = time.monotonic()

    def sink(msg: replay.ReceivedMessage) -> None:
        now = msg.arrival_monotonic - start
        advisory = app.step(trajectory.at(now), msg, now)
        if msg.frame.message_id == j2735.MSG_BSM:
            text = ima.format_advisory(advisory)
            print(f"--- t={now:.1f}s\n{text}" if text else f"--- t={now:.1f}s", file=out, flush=True)

    try:
        listener = replay.Listener(args.port, sink, args.host)
    except replay.BindError as exc:
        raise UsageError(str(exc)) from exc
    with listener:
        _wait(args.duration)
    return EXIT_OK


# --------------------------------------------------------------------------
# end-to-end demo


@dataclass
class DemoResult:
    expected: list[tuple[float, float]]
    observed: list[tuple[float, float]]
    samples: list[tuple[float, bool]] = field(default_factory=list)
    final_advisory: str = ""
    received: int = 0
    sent: int = 0
    tolerance_s: float = 0.1

    @property
    def ok(self) -> bool:
        if len(self.expected) != len(self.observed):
            return False
        slack = self.tolerance_s + 1e-6
        return all(
            abs(es - os_) <= slack and abs(ee - oe) <= slack
            for (es, ee), (os_, oe) in zip(self.expected, self.observed)
        )

    def summary(self) -> str:
        if not self.expected and not self.observed:
            return "no warning expected, none observed"

        def fmt(ws: list[tuple[float, float]]) -> str:
            return " ".join(f"[{s:.2f}, {e:.2f}]" for s, e in ws) or "none"

        verdict = "overlap OK" if self.ok else "MISMATCH"
        return f"warning window {fmt(self.expected)} observed {fmt(self.observed)}, {verdict}"


def warning_runs(samples: Sequence[tuple[float, bool]]) -> list[tuple[float, float]]:
    """Maximal runs of consecutive warning samples, as (first, last) times."""
    runs: list[tuple[float, float]] = []
    current: tuple[float, float] | None = None
    for t, warn in sorted(samples):
        if warn:
            current = (current[0], t) if current else (t, t)
        elif current:
            runs.append(current)
            current = None
    if current:
        runs.append(current)
    return runs


def run_demo(
    port: int = DEFAULT_PORT,
    speed: float = 1.0,
    host_speed: float = 10.0,
    host_distance: float = 150.0,
    host_side: str = "west",
    remote_speed: float = 10.0,
    remote_distance: float = 165.0,
    dst_ref: GeoPoint = DEMO_DST_REF,
    delta_heading: float = 0.0,
    t_safety: float = ima.DEFAULT_T_SAFETY_S,
) -> DemoResult:
    """Synthesize, isolate, filter, relocate, replay over loopback and run IMA.

    Scenario time comes from each BSM's sec_mark relative to the start of the
    capture, so the outcome does not depend on replay speed or scheduling.
    """
    duration = remote_distance / remote_speed + 1.0
    # Vehicles on the east and south legs exercise the approach filter.
    raw = scenario.synth_traffic_intersection(
        duration,
        {"north": 1, "east": 1, "south": 1},
        speed_mps=remote_speed,
        start_distance_m=remote_distance,
    )
    src_ref = scenario.TRAFFIC_INTERSECTION_REF
    bsms = scenario.isolate_bsm(raw).capture
    north = scenario.filter_approaching(bsms, src_ref, scenario.ApproachFilter(0.0, 45.0)).capture
    if not north.records:
        raise DataError("approach filter left no BSMs")
    moved = scenario.relocate(north, scenario.RelocationSpec(src_ref, dst_ref, delta_heading % 360.0)).capture

    host = ima.HostTrajectory.straight(
        dst_ref, scenario.SIDE_BEARINGS[host_side], host_distance, host_speed, duration
    )
    app = ima.ImaApp(ima.ImaConfig(dst_ref, t_safety))
    start_ms = round(raw.time_of(raw.records[0]) * 1000) % 60_000
    samples: list[tuple[float, bool]] = []
    last_text = [""]

    def sink(msg: replay.ReceivedMessage) -> None:
        if msg.frame.message_id != j2735.MSG_BSM:
            return
        t = ((msg.frame.body.sec_mark - start_ms) % 60_000) / 1000.0
        advisory = app.step(host.at(t), msg, t)
        samples.append((t, advisory.warning))
        last_text[0] = ima.format_advisory(advisory)

    listener = replay.Listener(port, sink)
    with listener:
        report = replay.replay(moved, replay.ReplayConfig("127.0.0.1", listener.port, speed))
        time.sleep(0.2)
    expected = ima.warning_intervals(host_distance, host_speed, remote_distance, remote_speed, t_safety)
    return DemoResult(
        expected=expected,
        observed=warning_runs(samples),
        samples=sorted(samples),
        final_advisory=last_text[0],
        received=listener.received,
        sent=report.sent,
    )


def cmd_demo(args: argparse.Namespace, out: TextIO) -> int:
    try:
        result = run_demo(
            port=args.port,
            speed=args.speed,
            host_speed=args.host_speed,
            host_distance=args.host_distance,
            remote_speed=args.remote_speed,
            remote_distance=args.remote_distance,
            dst_ref=args.dst,
            delta_heading=args.dheading,
            t_safety=args.tsafety,
        )
    except replay.BindError as exc:
        print(f"demo: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"replayed {result.sent} BSMs, received {result.received}", file=out)
    if result.final_advisory:
        print("final advisory:", file=out)
        print(result.final_advisory, file=out)
    print(result.summary(), file=out)
    if result.received != result.sent:
        print(f"demo: lost {result.sent - result.received} datagrams on loopback", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK if result.ok else EXIT_DATA


# --------------------------------------------------------------------------
# parser


def _add_encap(p: argparse.ArgumentParser) -> None:
    p.add_argument("--encap", choices=("raw", "ethernet"), default="raw",
                   help="record framing: raw UPER payload or Ethernet/IPv4/UDP (default raw)")
    p.add_argument("--skip", type=non_negative_int, default=0,
                   help="bytes to drop from the front of each raw record (default 0)")


def build_parser() -> tuple[_Parser, dict[str, argparse.ArgumentParser]]:
    parser = _Parser(prog="v2xviz", description="Decode, visualize, relocate and replay V2X intersection captures.")
    parser.add_argument("--config", metavar="FILE",
                        help="key=value file of option defaults for the chosen subcommand; flags override it")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    leaves: dict[str, argparse.ArgumentParser] = {}

    def leaf(name: str, helptext: str, func, group=sub, key: str | None = None) -> argparse.ArgumentParser:
        p = group.add_parser(name, help=helptext, description=helptext)
        p.set_defaults(func=func)
        leaves[key or name] = p
        return p

    p = leaf("decode", "decode a capture; export BSMs as CSV and MAPs as text", cmd_decode)
    p.add_argument("--in", dest="input", required=True, metavar="PCAP", help="capture to decode")
    p.add_argument("--bsm-csv", metavar="CSV", help="write one CSV row per BSM here")
    p.add_argument("--map-text", metavar="TXT", help="write each distinct MAP as text here")
    _add_encap(p)

    p = leaf("isolate", "keep only the BSM records of a capture", cmd_isolate)
    p.add_argument("--in", dest="input", required=True, metavar="PCAP", help="input capture")
    p.add_argument("--out", dest="output", required=True, metavar="PCAP", help="output capture")
    _add_encap(p)

    p = leaf("relocate", "move BSM traffic from one intersection to another", cmd_relocate)
    p.add_argument("--in", dest="input", required=True, metavar="PCAP", help="BSM-only input capture")
    p.add_argument("--out", dest="output", required=True, metavar="PCAP", help="output capture")
    p.add_argument("--src", type=geo_point, required=True, metavar="LAT,LON[,ELEV]",
                   help="reference point of the recorded intersection")
    p.add_argument("--dst", type=geo_point, required=True, metavar="LAT,LON[,ELEV]",
                   help="reference point of the target intersection")
    p.add_argument("--dheading", type=float, default=0.0, metavar="DEG",
                   help="clockwise rotation about the source reference, degrees (default 0)")
    _add_encap(p)

    p = leaf("filter", "keep BSMs approaching from one side of an intersection", cmd_filter)
    p.add_argument("--in", dest="input", required=True, metavar="PCAP", help="BSM-only input capture")
    p.add_argument("--out", dest="output", required=True, metavar="PCAP", help="output capture")
    p.add_argument("--ref", type=geo_point, required=True, metavar="LAT,LON", help="intersection reference point")
    p.add_argument("--center", type=float, default=0.0, metavar="DEG",
                   help="bearing from the reference to the approach side (default 0, north)")
    p.add_argument("--half-width", type=float, default=45.0, metavar="DEG",
                   help="half width of the approach sector (default 45)")
    _add_encap(p)

    synth = sub.add_parser("synth", help="write a synthetic intersection capture",
                           description="write a synthetic intersection capture")
    kinds = synth.add_subparsers(dest="kind", metavar="KIND", parser_class=_Parser)
    kinds.required = True

    p = leaf("signal", "pedestrian-actuated midblock signal: MAP 1 Hz, SPaT 10 Hz", cmd_synth, kinds, "synth signal")
    p.add_argument("--out", dest="output", required=True, metavar="PCAP", help="output capture")
    p.add_argument("--duration", type=positive(), default=60.0, metavar="S", help="length in seconds (default 60)")
    p.add_argument("--walk", type=positive(), default=10.0, metavar="S",
                   help="walk interval after a button press, seconds (default 10)")
    p.add_argument("--press", type=float, action="append", metavar="S",
                   help="button press time in seconds; repeat for several presses")
    p.add_argument("--ref", type=geo_point, metavar="LAT,LON[,ELEV]", help="reference point (default built in)")
    _add_encap(p)

    p = leaf("traffic", "four-way intersection with approaching road users", cmd_synth, kinds, "synth traffic")
    p.add_argument("--out", dest="output", required=True, metavar="PCAP", help="output capture")
    p.add_argument("--duration", type=positive(), default=20.0, metavar="S", help="length in seconds (default 20)")
    for side in ("north", "east", "south", "west"):
        p.add_argument(f"--{side}", type=non_negative_int, default=0, metavar="N",
                       help=f"vehicles approaching from the {side} (default 0)")
    p.add_argument("--pedestrian", action="store_true", help="add one pedestrian crossing the north crosswalk")
    p.add_argument("--speed", type=positive(), default=10.0, metavar="M/S", help="vehicle speed (default 10)")
    p.add_argument("--start-distance", type=positive(), default=150.0, metavar="M",
                   help="distance of the first vehicle on each side at t=0 (default 150)")
    p.add_argument("--spacing", type=positive(), default=30.0, metavar="M",
                   help="gap between vehicles on the same side (default 30)")
    p.add_argument("--seed", type=int, default=0, help="seed for temporary IDs (default 0)")
    p.add_argument("--ref", type=geo_point, metavar="LAT,LON[,ELEV]", help="reference point (default built in)")
    _add_encap(p)

    p = leaf("render", "render SVG frames of geometry, signals and road users", cmd_render)
    p.add_argument("--in", dest="input", required=True, metavar="PCAP", help="capture with SPaT, MAP and/or BSMs")
    p.add_argument("--map", metavar="PCAP", help="separate capture supplying MAP messages")
    p.add_argument("--center", type=geo_point, metavar="LAT,LON", help="viewport center (default: MAP reference)")
    p.add_argument("--mpp", type=positive(), default=0.2, help="metres per pixel (default 0.2)")
    p.add_argument("--size", type=frame_size, default=(1280, 720), metavar="WxH",
                   help="frame size in pixels (default 1280x720)")
    p.add_argument("--step", type=positive(), default=0.1, metavar="S", help="time between frames (default 0.1)")
    p.add_argument("--underlay", metavar="IMAGE", help="image referenced as the frame background")
    p.add_argument("--out", dest="output", required=True, metavar="DIR", help="directory for frame_NNNNNN.svg")
    _add_encap(p)

    p = leaf("replay", "send a capture's payloads as UDP datagrams with original pacing", cmd_replay)
    p.add_argument("--in", dest="input", required=True, metavar="PCAP", help="capture to replay")
    p.add_argument("--dest", type=endpoint, default=("127.0.0.1", DEFAULT_PORT), metavar="HOST:PORT",
                   help=f"destination (default 127.0.0.1:{DEFAULT_PORT})")
    p.add_argument("--speed", type=positive(), default=1.0, help="speed factor, 2 = twice as fast (default 1)")
    p.add_argument("--loop", type=positive(int), default=1, metavar="N", help="times to play the capture (default 1)")
    p.add_argument("--broadcast", action="store_true", help="allow a broadcast destination address")
    _add_encap(p)

    p = leaf("listen", "receive and decode V2X datagrams", cmd_listen)
    p.add_argument("--port", type=port_number, default=DEFAULT_PORT, help=f"UDP port (default {DEFAULT_PORT})")
    p.add_argument("--host", default="127.0.0.1", help="address to bind (default 127.0.0.1)")
    p.add_argument("--csv", metavar="CSV", help="write received BSMs here on exit")
    p.add_argument("--duration", type=positive(), metavar="S", help="stop after this many seconds (default: Ctrl-C)")

    p = leaf("ima", "run Intersection Movement Assist on received BSMs", cmd_ima)
    p.add_argument("--port", type=port_number, default=DEFAULT_PORT, help=f"UDP port (default {DEFAULT_PORT})")
    p.add_argument("--host", default="127.0.0.1", help="address to bind (default 127.0.0.1)")
    p.add_argument("--ref", type=geo_point, required=True, metavar="LAT,LON", help="intersection reference point")
    p.add_argument("--tsafety", type=positive(), default=ima.DEFAULT_T_SAFETY_S, metavar="S",
                   help="safety margin in seconds (default 3)")
    p.add_argument("--timeout", type=positive(), default=ima.DEFAULT_TRACK_TIMEOUT_S, metavar="S",
                   help="forget a remote vehicle after this long without a BSM (default 2)")
    p.add_argument("--host-log", required=True, metavar="CSV",
                   help="host trajectory: timestamp,lat,lon,speed_mps,heading_deg")
    p.add_argument("--duration", type=positive(), metavar="S", help="stop after this many seconds (default: Ctrl-C)")

    p = leaf("demo", "end-to-end IMA check over loopback against the analytic warning window", cmd_demo)
    p.add_argument("--port", type=port_number, default=DEFAULT_PORT, help=f"loopback UDP port (default {DEFAULT_PORT})")
    p.add_argument("--speed", type=positive(), default=1.0, help="replay speed factor (default 1)")
    p.add_argument("--host-speed", type=positive(), default=10.0, metavar="M/S", help="host speed (default 10)")
    p.add_argument("--host-distance", type=positive(), default=150.0, metavar="M",
                   help="host start distance west of the intersection (default 150)")
    p.add_argument("--remote-speed", type=positive(), default=10.0, metavar="M/S", help="remote speed (default 10)")
    p.add_argument("--remote-distance", type=positive(), default=165.0, metavar="M",
                   help="remote start distance north of the intersection (default 165)")
    p.add_argument("--dst", type=geo_point, default=DEMO_DST_REF, metavar="LAT,LON[,ELEV]",
                   help="intersection the traffic is moved to (default 39.995,-83.01,230)")
    p.add_argument("--dheading", type=float, default=0.0, metavar="DEG", help="rotation applied when moving (default 0)")
    p.add_argument("--tsafety", type=positive(), default=ima.DEFAULT_T_SAFETY_S, metavar="S",
                   help="safety margin in seconds (default 3)")
    return parser, leaves


def _split_config(argv: list[str]) -> tuple[str | None, list[str]]:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config is None:
        return None, argv
    rest, skip = [], False
    for a in argv:
        if skip:
            skip = False
        elif a == "--config":
            skip = True
        elif not a.startswith("--config="):
            rest.append(a)
    return known.config, rest


def _leaf_key(argv: Sequence[str]) -> str | None:
    """Subcommand named on the command line, e.g. ``decode`` or ``synth traffic``."""
    words = [a for a in argv if not a.startswith("-")]
    if not words:
        return None
    if words[0] == "synth":
        return f"synth {words[1]}" if len(words) > 1 else None
    return words[0]


def run(argv: Sequence[str] | None = None, out: TextIO | None = None) -> int:
    out = out or sys.stdout
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        config_path, rest = _split_config(argv)
        parser, leaves = build_parser()
        if config_path is not None:
            key = _leaf_key(rest)
            if key in leaves:
                _apply_config(leaves[key], read_config(config_path))
        args = parser.parse_args(rest)
        return args.func(args, out)
    except SystemExit as exc:  # --help
        return exc.code if isinstance(exc.code, int) else EXIT_OK
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


def pipeline_demo(argv: Sequence[str] = (), out: TextIO | None = None) -> int:
    """End-to-end loopback demo; same as ``v2xviz demo``."""
    return run(["demo", *argv], out)


def main() -> None:
    sys.exit(run())

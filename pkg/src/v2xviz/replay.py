"""UDP re-broadcast of captured payloads with their original pacing, and a listener.

One datagram per record, payload = the record's application bytes with no
extra framing.  A capture of this traffic (Ethernet/IPv4/UDP) reads back
through ``pcap_io`` with the ``ethernet_ipv4_udp`` encapsulation.
"""

from __future__ import annotations

import collections
import gc
import logging
import socket
import threading
import time
from dataclasses import dataclass, field
from typing import Callable

from .j2735 import DecodeError, MessageFrame, decode_frame
from .pcap_io import RAW, CaptureFile, Encapsulation, PcapError, extract_payload

log = logging.getLogger(__name__)

# Below this the sender spins instead of sleeping; it has to cover the
# scheduler's worst sleep overshoot, which reaches several ms on busy VMs.
_SPIN_S = 0.010


class ReplayError(RuntimeError):
    pass


class SocketError(ReplayError):
    pass


class BindError(ReplayError):
    pass


@dataclass(frozen=True)
class ReplayConfig:
    host: str = "127.0.0.1"
    port: int = 47347
    speed_factor: float = 1.0
    loop_count: int = 1
    broadcast: bool = False

    def __post_init__(self) -> None:
        if not self.speed_factor > 0:
            raise ValueError("speed_factor must be > 0")
        if self.loop_count < 1:
            raise ValueError("loop_count must be >= 1")


@dataclass
class ReplayReport:
    sent: int = 0
    skipped: int = 0
    # Per datagram: actual send time minus scheduled time, seconds.
    lateness: list[float] = field(default_factory=list)
    # Per consecutive pair: actual spacing minus scheduled spacing, seconds.
    interval_errors: list[float] = field(default_factory=list)

    @property
    def max_timing_error(self) -> float:
        return max((abs(e) for e in self.interval_errors), default=0.0)

    def interval_error_percentile(self, q: float) -> float:
        errs = sorted(abs(e) for e in self.interval_errors)
        if not errs:
            return 0.0
        rank = min(len(errs) - 1, max(0, int(round(q / 100.0 * len(errs))) - 1))
        return errs[rank]


def schedule(capture: CaptureFile, speed_factor: float = 1.0, loop_count: int = 1) -> list[float]:
    """Send offsets in seconds from the first datagram.

    Each wait is the timestamp delta divided by ``speed_factor``, with
    out-of-order deltas clamped to zero; loops follow each other back to back.
    """
    ticks = [capture.ticks_of(r) for r in capture.records]
    per_second = capture.ticks_per_second
    offsets: list[float] = []
    elapsed = 0
    for _ in range(loop_count):
        for i, t in enumerate(ticks):
            if i > 0:
                elapsed += max(0, t - ticks[i - 1])
            offsets.append(elapsed / per_second / speed_factor)
    return offsets


def _wait_until(target: float) -> float:
    while True:
        now = time.perf_counter()
        remaining = target - now
        if remaining <= 0:
            return now
        if remaining > _SPIN_S:
            time.sleep(remaining - _SPIN_S)


def replay(
    capture: CaptureFile,
    config: ReplayConfig,
    encap: Encapsulation = RAW,
    stop: threading.Event | None = None,
) -> ReplayReport:
    """Send every record's payload to ``config.host:config.port`` on schedule.

    Targets are absolute (start + offset) so sleep errors do not accumulate.
    """
    if not capture.records:
        raise ReplayError("capture has no records")
    payloads = []
    report = ReplayReport()
    for rec in capture.records:
        try:
            payloads.append(extract_payload(rec, encap))
        except PcapError:
            payloads.append(None)
    offsets = schedule(capture, config.speed_factor, config.loop_count)

    try:
        sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        if config.broadcast:
            sock.setsockopt(socket.SOL_SOCKET, socket.SO_BROADCAST, 1)
    except OSError as exc:
        raise SocketError(str(exc)) from exc
    dest = (config.host, config.port)
    # A collection pass in the middle of an interval shows up as jitter.
    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        with sock:
            start = time.perf_counter()
            for i, offset in enumerate(offsets):
                if stop is not None and stop.is_set():
                    break
                payload = payloads[i % len(payloads)]
                target = start + offset
                now = _wait_until(target)
                if payload is None:
                    report.skipped += 1
                    continue
                try:
                    sock.sendto(payload, dest)
                except (ConnectionRefusedError, ConnectionResetError):
                    # ICMP port-unreachable from a previous datagram; not fatal for UDP.
                    pass
                except OSError as exc:
                    raise SocketError(f"send to {dest}: {exc}") from exc
                report.lateness.append(now - target)
                report.sent += 1
    finally:
        if gc_was_enabled:
            gc.enable()

    lat = report.lateness
    report.interval_errors = [lat[i] - lat[i - 1] for i in range(1, len(lat))]
    return report


# --------------------------------------------------------------------------
# listener


@dataclass(frozen=True)
class ReceivedMessage:
    arrival_monotonic: float
    frame: MessageFrame


Sink = Callable[[ReceivedMessage], None]


class Listener:
    """Receives datagrams, decodes them and hands valid frames to ``sink``.

    A receive thread feeds a bounded queue (oldest entries dropped when full)
    and a delivery thread calls the sink, so a slow sink never stalls the
    socket.  Binding happens in the constructor so BindError surfaces early.
    """

    def __init__(self, port: int, sink: Sink, host: str = "127.0.0.1", queue_size: int = 1024):
        self.sink = sink
        self.received = 0
        self.delivered = 0
        self.decode_failures = 0
        self.dropped = 0
        self._queue: collections.deque[ReceivedMessage] = collections.deque()
        self._queue_size = queue_size
        self._cond = threading.Condition()
        self._stop = threading.Event()
        self._recv_done = threading.Event()
        self._threads: list[threading.Thread] = []
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        try:
            self._sock.bind((host, port))
        except OSError as exc:
            self._sock.close()
            raise BindError(f"cannot bind {host}:{port}: {exc}") from exc
        self._sock.settimeout(0.05)
        self.port = self._sock.getsockname()[1]

    def start(self) -> "Listener":
        for target in (self._receive_loop, self._deliver_loop):
            t = threading.Thread(target=target, daemon=True)
            t.start()
            self._threads.append(t)
        return self

    def stop(self, drain: bool = True, timeout: float = 2.0) -> None:
        """Stop receiving; with ``drain`` queued frames are delivered first."""
        self._stop.set()
        if self._threads:
            self._threads[0].join(timeout)
        with self._cond:
            if not drain:
                self._queue.clear()
            self._cond.notify_all()
        for t in self._threads[1:]:
            t.join(timeout)
        self._sock.close()

    def __enter__(self) -> "Listener":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()

    def _receive_loop(self) -> None:
        try:
            self._receive()
        finally:
            self._recv_done.set()
            with self._cond:
                self._cond.notify_all()

    def _receive(self) -> None:
        while not self._stop.is_set():
            try:
                data = self._sock.recv(65535)
            except socket.timeout:
                continue
            except OSError:
                return
            self._handle(data)
        # Pick up whatever already sits in the socket buffer.
        self._sock.setblocking(False)
        while True:
            try:
                data = self._sock.recv(65535)
            except OSError:
                return
            self._handle(data)

    def _handle(self, data: bytes) -> None:
        arrival = time.monotonic()
        self.received += 1
        try:
            frame = decode_frame(data)
        except DecodeError:
            self.decode_failures += 1
            return
        with self._cond:
            if len(self._queue) >= self._queue_size:
                self._queue.popleft()
                self.dropped += 1
            self._queue.append(ReceivedMessage(arrival, frame))
            self._cond.notify()

    def _deliver_loop(self) -> None:
        while True:
            with self._cond:
                while not self._queue and not self._recv_done.is_set():
                    self._cond.wait(0.1)
                if not self._queue:
                    return
                msg = self._queue.popleft()
            try:
                self.sink(msg)
            except Exception:
                log.exception("sink raised; message dropped")
            self.delivered += 1


def listen(
    port: int,
    sink: Sink,
    stop: threading.Event,
    host: str = "127.0.0.1",
    queue_size: int = 1024,
) -> Listener:
    """Run a listener until ``stop`` is set; returns it for its counters."""
    listener = Listener(port, sink, host, queue_size).start()
    try:
        stop.wait()
    finally:
        listener.stop()
    return listener

"""Datagram protocol and node roles: recorder -> processing server -> actuator.

Byte layout (all integers and floats little-endian):

    header   magic 0x46 0x4E | version u8 (=1) | type u8
    0x01 INIT          channel_count u8 | calib_duration_s f64
    0x02 COMMAND       action u8 (1=run 2=pause 3=stop)
    0x03 CALIB_REPORT  i0 deep wl1 f64 | i0 deep wl2 | i0 sup wl1 | i0 sup wl2
                       | ambient deep wl1 | ambient deep wl2
                       | ambient sup wl1 | ambient sup wl2
    0x04 DATA_FRAME    t_index u32 | channel u8 | intensity wl1 f64 | intensity wl2 f64
    0x05 STRESS        t_index u32 | level u8

Wavelength order is shared configuration, not carried on the wire. Data and
stress packets are fire-and-forget with last-value semantics: no retries, no
acknowledgements. Command packets are idempotent.
"""

from __future__ import annotations

import enum
import socket
import struct
import threading
import time
from collections import deque
from dataclasses import dataclass

from .hemodynamics import CHANNELS, CalibrationBaseline, OpticalFrame, calibrate

MAGIC = b"\x46\x4e"
VERSION = 1
HEADER = struct.Struct("<2sBB")

TYPE_INIT = 0x01
TYPE_COMMAND = 0x02
TYPE_CALIB_REPORT = 0x03
TYPE_DATA_FRAME = 0x04
TYPE_STRESS = 0x05

_INIT = struct.Struct("<Bd")
_COMMAND = struct.Struct("<B")
_CALIB = struct.Struct("<8d")
_DATA = struct.Struct("<IBdd")
_STRESS = struct.Struct("<IB")


class DecodeError(Exception):
    pass


class BadMagic(DecodeError):
    pass


class BadVersion(DecodeError):
    pass


class TruncatedPayload(DecodeError):
    pass


class UnknownType(DecodeError):
    pass


class ProtocolViolation(Exception):
    pass


class CommandAction(enum.IntEnum):
    RUN = 1
    PAUSE = 2
    STOP = 3


@dataclass(frozen=True)
class Init:
    channel_count: int
    calib_duration_s: float


@dataclass(frozen=True)
class Command:
    action: CommandAction


@dataclass(frozen=True)
class CalibReport:
    i0: tuple  # ((deep wl1, deep wl2), (superficial wl1, superficial wl2))
    ambient: tuple


@dataclass(frozen=True)
class DataFrame:
    t_index: int
    channel: int  # index into CHANNELS
    intensity: tuple  # (wl1, wl2)


@dataclass(frozen=True)
class StressPacket:
    t_index: int
    level: int


def encode(p) -> bytes:
    if isinstance(p, Init):
        return HEADER.pack(MAGIC, VERSION, TYPE_INIT) + _INIT.pack(p.channel_count, p.calib_duration_s)
    if isinstance(p, Command):
        return HEADER.pack(MAGIC, VERSION, TYPE_COMMAND) + _COMMAND.pack(int(p.action))
    if isinstance(p, CalibReport):
        flat = (*p.i0[0], *p.i0[1], *p.ambient[0], *p.ambient[1])
        return HEADER.pack(MAGIC, VERSION, TYPE_CALIB_REPORT) + _CALIB.pack(*flat)
    if isinstance(p, DataFrame):
        return HEADER.pack(MAGIC, VERSION, TYPE_DATA_FRAME) + _DATA.pack(
            p.t_index, p.channel, p.intensity[0], p.intensity[1]
        )
    if isinstance(p, StressPacket):
        return HEADER.pack(MAGIC, VERSION, TYPE_STRESS) + _STRESS.pack(p.t_index, p.level)
    raise TypeError(f"not a packet: {p!r}")


def decode(data: bytes):
    if len(data) < HEADER.size:
        raise TruncatedPayload(f"datagram of {len(data)} bytes is shorter than the header")
    magic, version, ptype = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    if version != VERSION:
        raise BadVersion(f"unsupported version {version}")
    payload = data[HEADER.size:]

    def unpack(fmt: struct.Struct):
        if len(payload) != fmt.size:
            raise TruncatedPayload(f"type 0x{ptype:02x}: payload {len(payload)} != {fmt.size}")
        return fmt.unpack(payload)

    if ptype == TYPE_INIT:
        count, dur = unpack(_INIT)
        return Init(channel_count=count, calib_duration_s=dur)
    if ptype == TYPE_COMMAND:
        (action,) = unpack(_COMMAND)
        try:
            return Command(action=CommandAction(action))
        except ValueError:
            raise UnknownType(f"unknown command action {action}")
    if ptype == TYPE_CALIB_REPORT:
        v = unpack(_CALIB)
        return CalibReport(i0=((v[0], v[1]), (v[2], v[3])), ambient=((v[4], v[5]), (v[6], v[7])))
    if ptype == TYPE_DATA_FRAME:
        t, ch, i1, i2 = unpack(_DATA)
        return DataFrame(t_index=t, channel=ch, intensity=(i1, i2))
    if ptype == TYPE_STRESS:
        t, level = unpack(_STRESS)
        return StressPacket(t_index=t, level=level)
    raise UnknownType(f"unknown packet type 0x{ptype:02x}")


def frame_to_packet(frame: OpticalFrame, wavelengths) -> DataFrame:
    return DataFrame(
        t_index=frame.t_index,
        channel=CHANNELS.index(frame.channel),
        intensity=tuple(frame.intensity[wl] for wl in wavelengths),
    )


def packet_to_frame(p: DataFrame, wavelengths) -> OpticalFrame:
    return OpticalFrame(
        t_index=p.t_index,
        channel=CHANNELS[p.channel],
        intensity={wl: v for wl, v in zip(wavelengths, p.intensity)},
    )


def calib_report_from_baseline(baseline: CalibrationBaseline, wavelengths) -> CalibReport:
    i0 = tuple(tuple(baseline.i0[(ch, wl)] for wl in wavelengths) for ch in CHANNELS)
    amb = tuple(tuple(baseline.ambient[(ch, wl)] for wl in wavelengths) for ch in CHANNELS)
    return CalibReport(i0=i0, ambient=amb)


def baseline_from_calib_report(report: CalibReport, wavelengths) -> CalibrationBaseline:
    i0 = {}
    ambient = {}
    for ci, ch in enumerate(CHANNELS):
        for wi, wl in enumerate(wavelengths):
            i0[(ch, wl)] = report.i0[ci][wi]
            ambient[(ch, wl)] = report.ambient[ci][wi]
    return CalibrationBaseline(i0=i0, ambient=ambient)


# --- transports -------------------------------------------------------------

class LoopbackTransport:
    """In-process datagram channel preserving message boundaries."""

    def __init__(self):
        self._queue = deque()
        self._cond = threading.Condition()

    def send(self, data: bytes) -> None:
        with self._cond:
            self._queue.append(bytes(data))
            self._cond.notify()

    def recv(self, timeout: float | None = 0.0):
        with self._cond:
            if not self._queue and timeout:
                self._cond.wait(timeout)
            if self._queue:
                return self._queue.popleft()
            return None

    def close(self) -> None:
        pass


class UdpTransport:
    """Thin UDP socket wrapper with the same send/recv surface."""

    def __init__(self, local=None, remote=None):
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        if local is not None:
            self.sock.bind(local)
        self.remote = remote

    @property
    def local_address(self):
        return self.sock.getsockname()

    def send(self, data: bytes) -> None:
        if self.remote is None:
            raise ValueError("transport has no remote endpoint")
        self.sock.sendto(data, self.remote)

    def recv(self, timeout: float | None = 0.0):
        if timeout:
            self.sock.settimeout(timeout)
        else:
            self.sock.setblocking(False)
        try:
            data, _ = self.sock.recvfrom(65536)
            return data
        except (TimeoutError, BlockingIOError):
            return None

    def close(self) -> None:
        self.sock.close()


class LossyTransport:
    """Wraps a transport and drops sends i.i.d. with the given probability."""

    def __init__(self, inner, loss_rate: float, seed: int = 0):
        import random

        self.inner = inner
        self.loss_rate = loss_rate
        self._rng = random.Random(seed)

    def send(self, data: bytes) -> None:
        if self._rng.random() >= self.loss_rate:
            self.inner.send(data)

    def recv(self, timeout: float | None = 0.0):
        return self.inner.recv(timeout)

    def close(self) -> None:
        self.inner.close()


# --- actuator ---------------------------------------------------------------

@dataclass
class ActuatorState:
    """Debounced vibration switch: flips only after debounce_m consecutive
    packets of the opposite level; stale or duplicate t_index is ignored."""

    debounce_m: int = 3
    vibration_on: bool = False
    opposite_count: int = 0
    last_packet_t_index: int = -1

    def apply(self, p: StressPacket) -> bool:
        if p.t_index <= self.last_packet_t_index:
            return self.vibration_on
        self.last_packet_t_index = p.t_index
        level = 1 if p.level else 0
        if level == int(self.vibration_on):
            self.opposite_count = 0
        else:
            self.opposite_count += 1
            if self.opposite_count >= self.debounce_m:
                self.vibration_on = not self.vibration_on
                self.opposite_count = 0
        return self.vibration_on


def actuator_apply(state: ActuatorState, p: StressPacket) -> bool:
    return state.apply(p)


# --- nodes ------------------------------------------------------------------

class RecorderNode:
    """Acquisition-side state machine: init -> calibrate -> run/pause/stop.

    One tick() emits one DataFrame per channel while running; pauses emit
    nothing. Run before init is a protocol violation.
    """

    IDLE, READY, RUNNING, PAUSED, STOPPED = range(5)

    def __init__(self, source, transport, wavelengths, fs: float):
        self.source = source
        self.transport = transport
        self.wavelengths = tuple(wavelengths)
        self.fs = fs
        self.state = self.IDLE
        self.baseline: CalibrationBaseline | None = None

    def handle_packet(self, p) -> None:
        if isinstance(p, (bytes, bytearray)):
            p = decode(p)
        if isinstance(p, Init):
            if p.channel_count != len(CHANNELS):
                raise ProtocolViolation(
                    f"recorder has {len(CHANNELS)} channels, init asked for {p.channel_count}"
                )
            frames = []
            for _ in range(int(round(p.calib_duration_s * self.fs))):
                frames.extend(self.source.next_frames())
            self.baseline = calibrate(frames, p.calib_duration_s, self.fs)
            self.transport.send(encode(calib_report_from_baseline(self.baseline, self.wavelengths)))
            self.state = self.READY
        elif isinstance(p, Command):
            if self.state == self.IDLE:
                raise ProtocolViolation(f"{p.action.name.lower()} before init")
            if p.action is CommandAction.RUN:
                self.state = self.RUNNING
            elif p.action is CommandAction.PAUSE:
                self.state = self.PAUSED
            else:
                self.state = self.STOPPED

    def tick(self) -> int:
        """Emit this tick's frames if running; returns frames sent."""
        if self.state != self.RUNNING:
            return 0
        frames = self.source.next_frames()
        for f in frames:
            self.transport.send(encode(frame_to_packet(f, self.wavelengths)))
        return len(frames)


class StressServer:
    """Receive side of the processing node: bounded intake queue with a
    drop-oldest overflow policy, frame dispatcher and stress packet emitter.

    on_frame(DataFrame) -> stress level (0/1) or None when the tick is not
    classifiable yet; on_calib(CalibReport) installs the baseline.
    """

    def __init__(self, recv_transport, send_transport, on_frame, on_calib=None,
                 queue_size: int = 256):
        self.recv_transport = recv_transport
        self.send_transport = send_transport
        self.on_frame = on_frame
        self.on_calib = on_calib
        self.queue: deque = deque(maxlen=queue_size)
        self.dropped = 0
        self.sent = 0

    def pump(self, budget: int = 1024) -> int:
        """Drain the transport into the bounded queue; returns datagrams read."""
        n = 0
        while n < budget:
            data = self.recv_transport.recv(timeout=0.0)
            if data is None:
                break
            if len(self.queue) == self.queue.maxlen:
                self.dropped += 1
            self.queue.append(data)
            n += 1
        return n

    def process(self) -> list[StressPacket]:
        """Decode and dispatch everything queued; send and return stress packets."""
        out = []
        while self.queue:
            data = self.queue.popleft()
            try:
                p = decode(data)
            except DecodeError:
                continue
            if isinstance(p, CalibReport):
                if self.on_calib is not None:
                    self.on_calib(p)
            elif isinstance(p, DataFrame):
                level = self.on_frame(p)
                if level is not None:
                    sp = StressPacket(t_index=p.t_index, level=int(level))
                    if self.send_transport is not None:
                        self.send_transport.send(encode(sp))
                    self.sent += 1
                    out.append(sp)
        return out

    def run(self, stop_event: threading.Event, poll_interval_s: float = 0.005) -> None:
        """Poll loop for distributed mode; poll rate must exceed the frame rate."""
        while not stop_event.is_set():
            if self.pump() == 0:
                time.sleep(poll_interval_s)
            self.process()


class ActuatorNode:
    """Vibration endpoint: applies stress packets through the debounce filter."""

    def __init__(self, transport, state: ActuatorState | None = None, on_change=None):
        self.transport = transport
        self.state = state if state is not None else ActuatorState()
        self.on_change = on_change
        self.trace: list[tuple[int, int, bool]] = []

    def drain(self) -> bool:
        while True:
            data = self.transport.recv(timeout=0.0)
            if data is None:
                return self.state.vibration_on
            try:
                p = decode(data)
            except DecodeError:
                continue
            if isinstance(p, StressPacket):
                before = self.state.vibration_on
                now = self.state.apply(p)
                self.trace.append((p.t_index, p.level, now))
                if self.on_change is not None and now != before:
                    self.on_change(now)

    def run(self, stop_event: threading.Event, poll_interval_s: float = 0.005) -> None:
        while not stop_event.is_set():
            self.drain()
            time.sleep(poll_interval_s)

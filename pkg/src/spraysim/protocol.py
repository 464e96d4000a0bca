"""Serial actuation protocol and a microcontroller emulator.

Wire grammar (ASCII, one frame per line)::

    frame := ("ON" digit duty3 | "OFF" digit) LF
    digit := "1".."4"        (nozzle number, bounded by the configured count)
    duty3 := 3 ASCII digits, value <= 255

``ON2170\\n`` switches nozzle 2 to duty 170/255; ``OFF3\\n`` closes nozzle 3.
"""

import functools
import math
from typing import List, NamedTuple, Optional

LF = b"\n"


class EncodingError(ValueError):
    pass


class ClockError(RuntimeError):
    """Emulator time moved backwards."""


class WireCommand(NamedTuple):
    verb: str
    nozzle: int
    duty: Optional[int] = None

    @classmethod
    def on(cls, nozzle, duty):
        return cls("ON", nozzle, duty)

    @classmethod
    def off(cls, nozzle):
        return cls("OFF", nozzle)


def encode(cmd, nozzle_count=4):
    if not 1 <= nozzle_count <= 9:
        raise EncodingError("nozzle numbers are a single digit")
    if not isinstance(cmd.nozzle, int) or not 1 <= cmd.nozzle <= nozzle_count:
        raise EncodingError(f"nozzle {cmd.nozzle!r} outside 1..{nozzle_count}")
    if cmd.verb == "OFF":
        if cmd.duty is not None:
            raise EncodingError("OFF carries no duty")
        return b"OFF%d\n" % cmd.nozzle
    if cmd.verb == "ON":
        if not isinstance(cmd.duty, int) or not 0 <= cmd.duty <= 255:
            raise EncodingError(f"duty {cmd.duty!r} outside 0..255")
        return b"ON%d%03d\n" % (cmd.nozzle, cmd.duty)
    raise EncodingError(f"unknown verb {cmd.verb!r}")


class FrameError(NamedTuple):
    offset: int  # byte offset of the frame in the decoded buffer
    frame: bytes
    reason: str


class Decoded(NamedTuple):
    commands: List[WireCommand]
    errors: List[FrameError]
    remainder: bytes


def _parse_frame(body, nozzle_count):
    if body.startswith(b"OFF"):
        if len(body) != 4:
            return None, "OFF frame must be 4 bytes before LF"
        digits = body[3:]
        verb = "OFF"
    elif body.startswith(b"ON"):
        if len(body) != 6:
            return None, "ON frame must be 6 bytes before LF"
        digits = body[2:]
        verb = "ON"
    else:
        return None, "unknown verb"
    if not all(0x30 <= b <= 0x39 for b in digits):
        return None, "non-digit in frame"
    nozzle = digits[0] - 0x30
    if not 1 <= nozzle <= nozzle_count:
        return None, f"nozzle {nozzle} outside 1..{nozzle_count}"
    if verb == "OFF":
        return WireCommand.off(nozzle), None
    duty = int(digits[1:])
    if duty > 255:
        return None, f"duty {duty} > 255"
    return WireCommand.on(nozzle, duty), None


@functools.lru_cache(maxsize=8192)
def _parse_cached(body, nozzle_count):
    return _parse_frame(body, nozzle_count)


def decode(data, nozzle_count=4):
    """Parse every complete LF-terminated frame in ``data``.

    Malformed frames are reported in ``errors`` and skipped; parsing resumes
    after the next LF. Bytes after the last LF are returned as ``remainder``.
    """
    bodies = bytes(data).split(LF)
    remainder = bodies.pop()
    parsed = [_parse_cached(b, nozzle_count) for b in bodies]
    commands = [cmd for cmd, _ in parsed if cmd is not None]
    errors = []
    if len(commands) < len(parsed):
        pos = 0
        for body, (cmd, reason) in zip(bodies, parsed):
            if cmd is None:
                errors.append(FrameError(pos, body + LF, reason))
            pos += len(body) + 1
    return Decoded(commands, errors, remainder)


class StreamDecoder:
    """Incremental decoder: feed arbitrary chunks, get commands as frames complete."""

    def __init__(self, nozzle_count=4):
        self.nozzle_count = nozzle_count
        self.buffer = b""
        self.errors = []

    def feed(self, chunk):
        result = decode(self.buffer + bytes(chunk), self.nozzle_count)
        self.errors.extend(result.errors)
        self.buffer = result.remainder
        return result.commands


def _open_time(duty, period, t0, t1):
    """Time the PWM output is high over ``[t0, t1)`` for a fixed duty."""
    on = duty * period / 255

    def cumulative(t):
        k, phase = divmod(t, period)
        return k * on + min(phase, on)

    return cumulative(t1) - cumulative(t0)


class McuEmulator:
    """Decodes wire commands and drives one PWM channel per nozzle.

    Times are in milliseconds and must be non-decreasing. A duty received
    mid-period takes effect at the next period boundary.
    """

    def __init__(self, nozzle_count=4, period_ms=100.0):
        self.nozzle_count = nozzle_count
        self.period_ms = period_ms
        self.decoder = StreamDecoder(nozzle_count)
        self.duty = [0] * nozzle_count
        self.pending = [None] * nozzle_count
        self.on_time_ms = [0.0] * nozzle_count
        self.now = None

    def feed(self, data):
        for cmd in self.decoder.feed(data):
            self.pending[cmd.nozzle - 1] = cmd.duty if cmd.verb == "ON" else 0
        return self

    def _period_index(self, t):
        return math.floor(t / self.period_ms)

    def step(self, now):
        """Advance to ``now`` and return the open/closed state of every valve."""
        if self.now is not None and now < self.now:
            raise ClockError(f"time went backwards: {now} < {self.now}")
        if self.now is None:
            boundary_crossed = now % self.period_ms == 0
            self.now = now
        else:
            boundary_crossed = self._period_index(now) > self._period_index(self.now)
            for i in range(self.nozzle_count):
                if boundary_crossed and self.pending[i] is not None:
                    b = self._period_index(now) * self.period_ms
                    self.on_time_ms[i] += _open_time(self.duty[i], self.period_ms, self.now, b)
                    self.on_time_ms[i] += _open_time(self.pending[i], self.period_ms, b, now)
                else:
                    self.on_time_ms[i] += _open_time(self.duty[i], self.period_ms, self.now, now)
            self.now = now
        if boundary_crossed:
            for i, p in enumerate(self.pending):
                if p is not None:
                    self.duty[i] = p
                    self.pending[i] = None
        phase = now % self.period_ms
        return tuple(phase < d * self.period_ms / 255 for d in self.duty)


def mcu_step(state, now):
    return state.step(now)

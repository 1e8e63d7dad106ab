"""Signal phase-and-timing infrastructure: fixed-time controllers, the
newline-delimited JSON wire format, and a deterministic lossy-channel model.

Everything here is pure and clock-driven so the same seed and the same
message sequence always produce the same deliveries, byte for byte. The
socket-facing broker lives in ecodrive.broker; this module has no I/O.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

GREEN = "GREEN"
AMBER = "AMBER"
RED = "RED"
PHASES = (GREEN, AMBER, RED)


class WireError(ValueError):
    """Raised for malformed phase/timing wire messages."""


@dataclass(frozen=True)
class PhasePlan:
    """One signal group's fixed-time cycle: an ordered list of colored
    intervals, repeated forever, shifted by cycle_offset_s.

    Durations are held in whole milliseconds internally so controller
    arithmetic stays exact at any query instant.
    """

    intervals: tuple[tuple[str, float], ...]
    cycle_offset_s: float = 0.0

    def __post_init__(self):
        if not self.intervals:
            raise ValueError("phase plan needs at least one interval")
        colors = set()
        for color, duration in self.intervals:
            if color not in PHASES:
                raise ValueError(f"unknown phase color {color!r}")
            if not (math.isfinite(duration) and duration > 0.0):
                raise ValueError(f"interval duration must be > 0, got {duration}")
            colors.add(color)
        if GREEN not in colors or RED not in colors:
            raise ValueError("phase plan must contain at least one GREEN and one RED interval")
        if not (math.isfinite(self.cycle_offset_s) and self.cycle_offset_s >= 0.0):
            raise ValueError("cycle_offset_s must be finite and >= 0")

    @classmethod
    def green_amber_red(cls, green_s: float, amber_s: float, red_s: float, cycle_offset_s: float = 0.0) -> "PhasePlan":
        """The common three-interval cycle; amber_s of 0 drops the amber."""

        ivals: list[tuple[str, float]] = [(GREEN, green_s)]
        if amber_s > 0.0:
            ivals.append((AMBER, amber_s))
        ivals.append((RED, red_s))
        return cls(tuple(ivals), cycle_offset_s)

    @property
    def durations_ms(self) -> tuple[int, ...]:
        return tuple(round(d * 1000) for _, d in self.intervals)

    @property
    def cycle_ms(self) -> int:
        return sum(self.durations_ms)

    def phase_at_ms(self, t_ms: int) -> tuple[str, int]:
        """Color and exact remaining milliseconds of that interval at t_ms."""

        in_cycle = (t_ms + round(self.cycle_offset_s * 1000)) % self.cycle_ms
        edge = 0
        for (color, _), dur_ms in zip(self.intervals, self.durations_ms):
            edge += dur_ms
            if in_cycle < edge:
                return color, edge - in_cycle
        raise AssertionError("unreachable: in_cycle within cycle")

    def red_time_after_amber_s(self) -> float:
        """Duration of the red that follows the first amber; 0 without amber.

        Used by the advisory's amber rule (amber is treated as red lasting
        the amber residual plus this value).
        """

        n = len(self.intervals)
        for i, (color, _) in enumerate(self.intervals):
            if color == AMBER:
                nxt_color, nxt_dur = self.intervals[(i + 1) % n]
                return nxt_dur if nxt_color == RED else 0.0
        return 0.0


def controller_state(plan: PhasePlan, t_s: float) -> tuple[str, int]:
    """Controller view at time t_s: (phase, residual floor-quantized seconds).

    The residual is floored to whole seconds, matching the 1 s resolution
    of the broadcast: a green 30 / amber 4 / red 26 plan queried at t = 31.5
    reports (AMBER, 2).
    """

    if t_s < 0.0:
        raise ValueError(f"t_s must be >= 0, got {t_s}")
    phase, remaining_ms = plan.phase_at_ms(round(t_s * 1000))
    return phase, remaining_ms // 1000


# -- wire format --------------------------------------------------------------

_WIRE_KEYS = ("intersection_id", "signal_group_id", "phase", "time_remaining_s", "timestamp_ms")


@dataclass(frozen=True)
class SpatMessage:
    """One phase-and-timing broadcast for one signal group.

    timestamp_ms is the send instant in scenario time; time_remaining_s is
    the floor-quantized residual of the current phase at that instant.
    """

    intersection_id: str
    signal_group_id: str
    phase: str
    time_remaining_s: int
    timestamp_ms: int

    def __post_init__(self):
        if self.phase not in PHASES:
            raise WireError(f"unknown phase {self.phase!r}")
        if self.time_remaining_s < 0:
            raise WireError(f"negative time_remaining_s: {self.time_remaining_s}")

    @property
    def key(self) -> tuple[str, str]:
        return (self.intersection_id, self.signal_group_id)


def encode_message(msg: SpatMessage) -> str:
    """Encode a broadcast as one newline-terminated JSON line."""

    payload = {
        "intersection_id": msg.intersection_id,
        "signal_group_id": msg.signal_group_id,
        "phase": msg.phase,
        "time_remaining_s": msg.time_remaining_s,
        "timestamp_ms": msg.timestamp_ms,
    }
    return json.dumps(payload, separators=(",", ":")) + "\n"


def decode_message(line: str) -> SpatMessage:
    """Parse one wire line, rejecting anything that is not exactly the format."""

    try:
        doc = json.loads(line)
    except json.JSONDecodeError as exc:
        raise WireError(f"not valid JSON: {line!r}") from exc
    if not isinstance(doc, dict):
        raise WireError("wire message must be a JSON object")
    if set(doc) != set(_WIRE_KEYS):
        raise WireError(f"wire message fields {sorted(doc)} != {sorted(_WIRE_KEYS)}")
    for key in ("time_remaining_s", "timestamp_ms"):
        if not isinstance(doc[key], int) or isinstance(doc[key], bool):
            raise WireError(f"{key} must be an integer, got {doc[key]!r}")
    return SpatMessage(
        intersection_id=str(doc["intersection_id"]),
        signal_group_id=str(doc["signal_group_id"]),
        phase=str(doc["phase"]),
        time_remaining_s=doc["time_remaining_s"],
        timestamp_ms=doc["timestamp_ms"],
    )


# -- controllers --------------------------------------------------------------


@dataclass(frozen=True)
class FixedTimeController:
    """Binds a phase plan to the signal group it times."""

    intersection_id: str
    signal_group_id: str
    plan: PhasePlan

    @property
    def key(self) -> tuple[str, str]:
        return (self.intersection_id, self.signal_group_id)

    def state_at(self, t_s: float) -> tuple[str, int]:
        return controller_state(self.plan, t_s)

    def message_at(self, t_ms: int) -> SpatMessage:
        phase, remaining_ms = self.plan.phase_at_ms(t_ms)
        return SpatMessage(
            intersection_id=self.intersection_id,
            signal_group_id=self.signal_group_id,
            phase=phase,
            time_remaining_s=remaining_ms // 1000,
            timestamp_ms=t_ms,
        )


def broadcast_tick(controllers: Sequence[FixedTimeController], t_s: float) -> list[SpatMessage]:
    """All groups' messages for one whole-second broadcast instant."""

    t_ms = round(t_s * 1000)
    if t_ms % 1000 != 0:
        raise ValueError(f"broadcasts happen on whole seconds, got t={t_s}")
    return [c.message_at(t_ms) for c in controllers]


# -- channel model ------------------------------------------------------------


@dataclass
class ChannelModel:
    """Deterministic model of a lossy, delayed broadcast link.

    Each message is independently dropped with drop_probability; survivors
    are delayed by latency_ms plus a uniform draw from [-jitter_ms,
    +jitter_ms] (clamped so delivery never precedes sending). Delivery
    order is forced to match send order within each signal group, as a
    stream transport would guarantee. All randomness comes from the seed.
    """

    latency_ms: float = 100.0
    jitter_ms: float = 0.0
    drop_probability: float = 0.0
    seed: int = 0
    _rng: random.Random = field(init=False, repr=False)
    _last_delivery_ms: dict[tuple[str, str], float] = field(init=False, repr=False)

    def __post_init__(self):
        if self.latency_ms < 0.0 or self.jitter_ms < 0.0:
            raise ValueError("latency_ms and jitter_ms must be >= 0")
        if not 0.0 <= self.drop_probability < 1.0:
            raise ValueError("drop_probability must be in [0, 1)")
        self.reset()

    def reset(self):
        self._rng = random.Random(self.seed)
        self._last_delivery_ms = {}

    def offer(self, msg: SpatMessage) -> Optional[float]:
        """Delivery time for one sent message, or None when it is dropped.

        Must be called in send order; later-sent messages of a group never
        land before earlier-sent ones.
        """

        dropped = self._rng.random() < self.drop_probability
        jitter = self._rng.uniform(-self.jitter_ms, self.jitter_ms) if self.jitter_ms > 0.0 else 0.0
        if dropped:
            return None
        t = msg.timestamp_ms + max(0.0, self.latency_ms + jitter)
        prev = self._last_delivery_ms.get(msg.key)
        if prev is not None and t < prev:
            t = prev
        self._last_delivery_ms[msg.key] = t
        return t


def plan_deliveries(channel: ChannelModel, messages: Iterable[SpatMessage]) -> list[tuple[float, SpatMessage]]:
    """Run a message sequence through a channel.

    Returns (delivery_time_ms, message) pairs sorted by delivery time with
    a stable tie order. The channel is reset first, so the result is a pure
    function of (channel config, message sequence).
    """

    channel.reset()
    queued: list[tuple[float, int, SpatMessage]] = []
    for i, msg in enumerate(messages):
        t = channel.offer(msg)
        if t is not None:
            queued.append((t, i, msg))
    queued.sort(key=lambda item: (item[0], item[1]))
    return [(t, msg) for t, _, msg in queued]

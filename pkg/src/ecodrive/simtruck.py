"""Longitudinal truck dynamics and the two driver models.

The truck is a point mass on a lane chain with bounded acceleration. The
baseline driver behaves like a human without connectivity: cruise, react to
what the eyes can see, brake for amber/red, go on green. The eco driver
tracks the advisory band, shaping its target speed to arrive just after a
red releases or comfortably before a green ends, and drops back to baseline
behavior whenever the advisory is gated off.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from . import advisor as _adv
from . import spatnet
from .advisor import LeadVehicleObservation, SpeedBand
from .geomap import ChainCursor, GeoPoint

BASELINE = "BASELINE"
ECO = "ECO"
DRIVER_KINDS = (BASELINE, ECO)

COAST_OFF_DECEL_MPS2 = 0.3  # lift-off coasting, well below comfortable braking


@dataclass(frozen=True)
class TruckParams:
    """Capability envelope of the tractor-trailer."""

    max_accel_mps2: float = 1.0
    max_decel_mps2: float = 2.5
    emergency_decel_mps2: float = 4.0
    max_speed_mps: float = 31.9  # 115 km/h cruise ceiling
    length_m: float = 20.0

    def __post_init__(self):
        if self.max_accel_mps2 <= 0.0 or self.max_decel_mps2 <= 0.0:
            raise ValueError("acceleration limits must be > 0")
        if self.emergency_decel_mps2 < self.max_decel_mps2:
            raise ValueError("emergency_decel_mps2 must be >= max_decel_mps2")
        if self.max_speed_mps <= 0.0 or self.length_m <= 0.0:
            raise ValueError("max_speed_mps and length_m must be > 0")


@dataclass(frozen=True)
class TruckState:
    position: GeoPoint
    heading_deg: float
    speed_mps: float
    accel_mps2: float
    odometer_m: float
    t_s: float


def step_truck(
    state: TruckState,
    commanded_accel_mps2: float,
    params: TruckParams,
    dt_s: float,
    cursor: Optional[ChainCursor] = None,
    allow_emergency: bool = False,
) -> TruckState:
    """Advance the truck one step under a commanded acceleration.

    The command is clamped to [-max_decel, max_accel]; the lower bound
    widens to -emergency_decel only when allow_emergency is set (the panic
    range a full brake pedal reaches in live mode). Speed is clamped to
    [0, max_speed] and displacement uses the trapezoid of old and new
    speed. The stored accel is the realized one, (v' - v)/dt, which the
    fuel proxy reads.
    """

    if dt_s <= 0.0:
        raise ValueError(f"dt_s must be > 0, got {dt_s}")
    lower = params.emergency_decel_mps2 if allow_emergency else params.max_decel_mps2
    a = min(params.max_accel_mps2, max(-lower, commanded_accel_mps2))
    v1 = min(params.max_speed_mps, max(0.0, state.speed_mps + a * dt_s))
    ds = 0.5 * (state.speed_mps + v1) * dt_s
    realized = (v1 - state.speed_mps) / dt_s

    position = state.position
    heading = state.heading_deg
    if cursor is not None:
        cursor.advance(ds)
        position = cursor.position
        heading = cursor.heading_deg
    return TruckState(
        position=position,
        heading_deg=heading,
        speed_mps=v1,
        accel_mps2=realized,
        odometer_m=state.odometer_m + ds,
        t_s=state.t_s + dt_s,
    )


@dataclass(frozen=True)
class DriverParams:
    """Shared tunables for both driver models.

    cruise_speed_mps of None means drive at the posted limit. The arrival
    margins shape where within a phase the eco driver aims: at least
    red_arrival_margin_s after a red is believed to release (absorbing the
    one-second broadcast quantization), and at least green_arrival_margin_s
    before a green runs out.
    """

    cruise_speed_mps: Optional[float] = None
    reaction_time_s: float = 1.0
    amber_sight_distance_m: float = 150.0
    comfortable_decel_mps2: float = 1.5
    band_tracking_gain: float = 0.5
    red_arrival_margin_s: float = 1.0
    green_arrival_margin_s: float = 1.5
    stop_setback_m: float = 1.0
    headway_s: float = 1.0
    standstill_gap_m: float = 5.0

    def __post_init__(self):
        if self.reaction_time_s < 0.0 or self.amber_sight_distance_m <= 0.0:
            raise ValueError("reaction_time_s must be >= 0 and amber_sight_distance_m > 0")
        if not 0.0 < self.band_tracking_gain <= 1.0:
            raise ValueError("band_tracking_gain must be in (0, 1]")
        if self.comfortable_decel_mps2 <= 0.0:
            raise ValueError("comfortable_decel_mps2 must be > 0")


def _clamp(x: float, lo: float, hi: float) -> float:
    return min(hi, max(lo, x))


def band_tracking_accel(
    speed_mps: float,
    band: SpeedBand,
    params: DriverParams = DriverParams(),
    truck: TruckParams = TruckParams(),
) -> float:
    """Plain proportional tracking toward clamp(speed, v_lower, v_upper).

    Inside the band there is nothing to correct (zero acceleration);
    outside, a gentle proportional pull toward the nearest bound, bounded
    by comfortable deceleration and the truck's acceleration limit. A
    collapsed [0, 0] band decelerates comfortably toward a stop.
    """

    target = _clamp(speed_mps, band.v_lower_mps, band.v_upper_mps)
    a = params.band_tracking_gain * (target - speed_mps)
    return _clamp(a, -params.comfortable_decel_mps2, truck.max_accel_mps2)


class BaselineDriver:
    """Sight-and-reaction driver without connectivity.

    Holds cruise speed; when an amber or red comes within sight distance it
    commits to stopping after a reaction delay, braking at the rate the
    remaining distance demands, capped at the service brake limit, and
    resumes cruise one reaction after the light turns green. A slow lead
    vehicle is followed with a simple headway rule regardless of signals.
    """

    def __init__(self, params: DriverParams = DriverParams(), truck: TruckParams = TruckParams()):
        self.params = params
        self.truck = truck
        self._wants_stop_raw = False
        self._raw_since_s = -math.inf
        self._stopping = False

    def reset(self):
        self._wants_stop_raw = False
        self._raw_since_s = -math.inf
        self._stopping = False

    def _cruise_accel(self, speed: float, speed_limit: float) -> float:
        target = self.params.cruise_speed_mps if self.params.cruise_speed_mps is not None else speed_limit
        target = min(target, speed_limit)
        a = self.params.band_tracking_gain * (target - speed)
        return _clamp(a, -self.params.comfortable_decel_mps2, self.truck.max_accel_mps2)

    def _stop_accel(self, speed: float, distance_m: float) -> float:
        braking_d = max(distance_m - self.params.stop_setback_m, 0.2)
        if speed <= 1.0 and braking_d <= 1.5:
            # At the line: the v^2/2d rate alone decays to zero and lets the
            # truck creep across, so finish the stop and hold against creep.
            return -self.params.comfortable_decel_mps2
        needed = speed * speed / (2.0 * braking_d)
        return -min(needed, self.truck.max_decel_mps2)

    def _follow_accel(self, speed: float, lead: LeadVehicleObservation) -> Optional[float]:
        """Braking demanded by the lead vehicle, or None when headway is fine."""

        safe_gap = self.params.standstill_gap_m + self.params.headway_s * speed
        closing = lead.relative_speed_mps
        if lead.gap_m >= safe_gap and closing <= 0.0:
            return None
        needed = 0.0
        if closing > 0.0:
            room = max(lead.gap_m - self.params.standstill_gap_m, 0.5)
            needed = closing * closing / (2.0 * room)
        if lead.gap_m < safe_gap:
            needed = max(needed, self.params.comfortable_decel_mps2 * 2.0 * (1.0 - lead.gap_m / safe_gap))
        return -min(needed, self.truck.max_decel_mps2)

    def command(
        self,
        state: TruckState,
        visible_signal: Optional[tuple[str, float]],
        speed_limit_mps: float,
        lead: Optional[LeadVehicleObservation] = None,
    ) -> float:
        """Commanded acceleration for this tick.

        visible_signal is (phase, distance_m) of the next signal as the
        driver's eyes report it, or None when no signal is in view.
        """

        wants_stop = (
            visible_signal is not None
            and visible_signal[0] in (spatnet.AMBER, spatnet.RED)
            and visible_signal[1] <= self.params.amber_sight_distance_m
        )
        if wants_stop != self._wants_stop_raw:
            self._wants_stop_raw = wants_stop
            self._raw_since_s = state.t_s
        if state.t_s - self._raw_since_s >= self.params.reaction_time_s:
            self._stopping = self._wants_stop_raw

        if self._stopping:
            d = visible_signal[1] if visible_signal is not None else 0.0
            a = self._stop_accel(state.speed_mps, d)
        else:
            a = self._cruise_accel(state.speed_mps, speed_limit_mps)

        if lead is not None:
            a_follow = self._follow_accel(state.speed_mps, lead)
            if a_follow is not None:
                a = min(a, a_follow)
        return a


class EcoDriver:
    """Band-following driver.

    Uses the advisory context (distance and aged residual) to pick a target
    inside [v_lower, v_upper] shaped by the arrival margins, then closes on
    it proportionally, braking no harder than comfortable. Without that
    context it degrades to plain band tracking, and on SUPPRESSED_TTC or
    NO_SIGNAL it hands over to the baseline behavior, eyes on the road.
    """

    def __init__(self, params: DriverParams = DriverParams(), truck: TruckParams = TruckParams()):
        self.params = params
        self.truck = truck
        self.fallback = BaselineDriver(params, truck)

    def reset(self):
        self.fallback.reset()

    def _target_speed(self, record: _adv.AdvisoryRecord) -> float:
        band = record.band
        vl, vu = band.v_lower_mps, band.v_upper_mps
        d = record.d_sig_m
        t_used = record.t_used_s
        cruise = self.params.cruise_speed_mps if self.params.cruise_speed_mps is not None else record.v_lim_mps
        cruise = min(cruise, record.v_lim_mps)

        lo, hi = vl, vu
        if d is not None and d > 0.0 and record.phase is not None:
            if record.phase == spatnet.GREEN and vl > 0.0:
                # Catch this green: aim to reach the line with margin to spare.
                m = self.params.green_arrival_margin_s
                lo = min(vu, d / (t_used - m)) if t_used > m else vu
            elif vl == 0.0 and vu > 0.0 and t_used > 0.0:
                # Waiting for a release: plan arrival a margin after it.
                hi = min(vu, d / (t_used + self.params.red_arrival_margin_s))
        return _clamp(cruise, min(lo, hi), hi)

    def command(
        self,
        state: TruckState,
        record: _adv.AdvisoryRecord,
        visible_signal: Optional[tuple[str, float]],
        lead: Optional[LeadVehicleObservation] = None,
    ) -> float:
        band = record.band
        if band.gating in (_adv.GATING_SUPPRESSED_TTC, _adv.GATING_NO_SIGNAL):
            return self.fallback.command(state, visible_signal, record.v_lim_mps, lead)

        if record.d_sig_m is None or record.phase is None:
            a = band_tracking_accel(state.speed_mps, band, self.params, self.truck)
        elif record.phase == spatnet.GREEN and band.v_upper_mps <= 0.0 and record.d_sig_m > 0.0:
            # This green is unreachable at any legal speed and the residual
            # says nothing about the wait after it. Braking to a halt
            # mid-block would be wrong; ease off and let the upcoming
            # amber/red residual produce a concrete arrival plan.
            a = -COAST_OFF_DECEL_MPS2 if state.speed_mps > 0.5 else 0.0
        else:
            target = self._target_speed(record)
            a = self.params.band_tracking_gain * (target - state.speed_mps)
            a = _clamp(a, -self.params.comfortable_decel_mps2, self.truck.max_accel_mps2)

        if lead is not None:
            a_follow = self.fallback._follow_accel(state.speed_mps, lead)
            if a_follow is not None:
                a = min(a, a_follow)
        return a


def brake_to_stop_feasible(speed_mps: float, distance_m: float, params: TruckParams, reaction_s: float) -> bool:
    """Can the truck stop before the line from here, reaction included?"""

    d_after_reaction = distance_m - speed_mps * reaction_s
    if d_after_reaction <= 0.0:
        return False
    return speed_mps * speed_mps / (2.0 * d_after_reaction) <= params.max_decel_mps2

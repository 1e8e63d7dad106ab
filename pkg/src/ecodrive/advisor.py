"""Recommended speed band computation and advisory gating.

Turns (distance to signal, received phase/timing, speed limit, lead vehicle)
into a [v_lower, v_upper] band that lets the truck cross on green without
stopping, plus a gating flag saying whether the band may be shown at all.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Optional

from . import geomap, spatnet

GATING_ACTIVE = "ACTIVE"
GATING_CAPPED_BY_LEAD = "CAPPED_BY_LEAD"
GATING_SUPPRESSED_TTC = "SUPPRESSED_TTC"
GATING_NO_SIGNAL = "NO_SIGNAL"
GATINGS = (GATING_ACTIVE, GATING_CAPPED_BY_LEAD, GATING_SUPPRESSED_TTC, GATING_NO_SIGNAL)

# Residuals below this are unobservable at the 1 s SPaT resolution; the
# reference speed degenerates to the +inf sentinel there.
EPSILON_T_S = 0.1

DEFAULT_STALENESS_S = 2.5
DEFAULT_TTC_THRESHOLD_S = 4.0


@dataclass(frozen=True)
class SpeedBand:
    """Recommended speed range with its gating status.

    gating ACTIVE and CAPPED_BY_LEAD are displayable bands; SUPPRESSED_TTC
    keeps the computed values but tells the display layer to withhold them;
    NO_SIGNAL means no band could be computed at all.
    """

    v_lower_mps: float
    v_upper_mps: float
    gating: str

    def __post_init__(self):
        if self.gating not in GATINGS:
            raise ValueError(f"unknown gating {self.gating!r}")
        if self.gating != GATING_NO_SIGNAL:
            if not (0.0 <= self.v_lower_mps <= self.v_upper_mps):
                raise ValueError(f"malformed band [{self.v_lower_mps}, {self.v_upper_mps}]")

    @property
    def displayable(self) -> bool:
        return self.gating in (GATING_ACTIVE, GATING_CAPPED_BY_LEAD)


NO_SIGNAL_BAND = SpeedBand(0.0, 0.0, GATING_NO_SIGNAL)


@dataclass(frozen=True)
class LeadVehicleObservation:
    """Ranged preceding vehicle: gap, its speed, and closing speed (positive
    when the gap is shrinking)."""

    gap_m: float
    lead_speed_mps: float
    relative_speed_mps: float

    def __post_init__(self):
        if not (math.isfinite(self.gap_m) and self.gap_m > 0.0):
            raise ValueError(f"gap_m must be finite and > 0, got {self.gap_m}")
        if self.lead_speed_mps < 0.0:
            raise ValueError(f"lead_speed_mps must be >= 0, got {self.lead_speed_mps}")


@dataclass(frozen=True)
class AdvisoryInput:
    """One advisory tick's resolved inputs.

    t_current_s is the residual phase time already aged by the loop
    (t_used); spat_age_ms records how old the underlying message was when
    used.
    """

    d_sig_m: float
    phase: str
    t_current_s: float
    v_lim_mps: float
    ego_speed_mps: float = 0.0
    lead: Optional[LeadVehicleObservation] = None
    spat_age_ms: float = 0.0

    def __post_init__(self):
        for name in ("d_sig_m", "t_current_s", "v_lim_mps", "ego_speed_mps", "spat_age_ms"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.d_sig_m < 0.0 or self.t_current_s < 0.0 or self.spat_age_ms < 0.0:
            raise ValueError("d_sig_m, t_current_s and spat_age_ms must be >= 0")
        if self.v_lim_mps <= 0.0:
            raise ValueError(f"v_lim_mps must be > 0, got {self.v_lim_mps}")
        if self.ego_speed_mps < 0.0:
            raise ValueError(f"ego_speed_mps must be >= 0, got {self.ego_speed_mps}")
        if self.phase not in spatnet.PHASES:
            raise ValueError(f"unknown phase {self.phase!r}")


def reference_speed(d_sig_m: float, t_current_s: float) -> float:
    """Constant speed arriving at the stop line as the residual elapses.

    Residuals under EPSILON_T_S cannot be timed against (the phase is as
    good as over at 1 s resolution) and yield the +inf sentinel.
    """

    if d_sig_m < 0.0 or t_current_s < 0.0:
        raise ValueError(f"negative distance or time ({d_sig_m}, {t_current_s})")
    if t_current_s < EPSILON_T_S:
        return math.inf
    return d_sig_m / t_current_s


def time_to_collision(obs: LeadVehicleObservation) -> Optional[float]:
    """Gap over closing speed; None when the gap is not shrinking."""

    if obs.relative_speed_mps <= 0.0:
        return None
    return obs.gap_m / obs.relative_speed_mps


def advise(
    inp: AdvisoryInput,
    red_time_after_amber_s: float = 0.0,
    ttc_threshold_s: float = DEFAULT_TTC_THRESHOLD_S,
) -> SpeedBand:
    """Compute the speed band for one tick against a matched signal.

    RED bounds arrival from below (reach the line no sooner than release):
    [0, min(v0, v_lim)]. GREEN bounds it from above (cross before the green
    ends): [v0, v_lim], collapsing to [0, 0] when even the limit is too
    slow. AMBER is treated as red lasting the amber residual plus the
    following red (red_time_after_amber_s), the worst case for a heavy
    vehicle. A slower lead vehicle then caps v_upper at its speed, and a
    time-to-collision under threshold suppresses display entirely;
    suppression dominates the cap.
    """

    phase = inp.phase
    t = inp.t_current_s
    if phase == spatnet.AMBER:
        if red_time_after_amber_s < 0.0:
            raise ValueError("red_time_after_amber_s must be >= 0")
        phase = spatnet.RED
        t = t + red_time_after_amber_s

    v0 = reference_speed(inp.d_sig_m, t)
    if phase == spatnet.GREEN:
        if v0 <= inp.v_lim_mps:
            lower, upper = v0, inp.v_lim_mps
        else:
            lower, upper = 0.0, 0.0
    else:
        lower, upper = 0.0, min(v0, inp.v_lim_mps)

    gating = GATING_ACTIVE
    if inp.lead is not None:
        if inp.lead.lead_speed_mps < upper:
            upper = inp.lead.lead_speed_mps
            lower = min(lower, upper)
            gating = GATING_CAPPED_BY_LEAD
        ttc = time_to_collision(inp.lead)
        if ttc is not None and ttc < ttc_threshold_s:
            gating = GATING_SUPPRESSED_TTC

    return SpeedBand(v_lower_mps=lower, v_upper_mps=upper, gating=gating)


# -- receiver-side message tracking -------------------------------------------


class SpatTracker:
    """Latest phase/timing message per signal group, with age bookkeeping.

    Out-of-order arrivals (possible across a drop under jitter) are ignored
    in favor of the newer timestamp already held.
    """

    def __init__(self):
        self._latest: dict[tuple[str, str], spatnet.SpatMessage] = {}

    def update(self, msg: spatnet.SpatMessage):
        held = self._latest.get(msg.key)
        if held is None or msg.timestamp_ms >= held.timestamp_ms:
            self._latest[msg.key] = msg

    def latest(self, key: tuple[str, str]) -> Optional[spatnet.SpatMessage]:
        return self._latest.get(key)

    def clear(self):
        self._latest.clear()


@dataclass(frozen=True)
class AdvisoryConfig:
    staleness_s: float = DEFAULT_STALENESS_S
    ttc_threshold_s: float = DEFAULT_TTC_THRESHOLD_S
    max_match_radius_m: float = 25.0

    def __post_init__(self):
        if self.staleness_s <= 0.0 or self.ttc_threshold_s <= 0.0:
            raise ValueError("staleness_s and ttc_threshold_s must be > 0")


@dataclass(frozen=True)
class AdvisoryRecord:
    """One advisory tick: the band plus the context it was computed from.

    For NO_SIGNAL ticks (no match, no message yet, or stale message) the
    band is NO_SIGNAL_BAND, input is None and d_sig_m/phase may be None.
    """

    t_ms: int
    band: SpeedBand
    input: Optional[AdvisoryInput]
    d_sig_m: Optional[float]
    phase: Optional[str]
    t_used_s: float
    v_lim_mps: float
    ego_speed_mps: float
    signal: Optional[geomap.SignalNode]
    lead: Optional[LeadVehicleObservation]


class AdvisoryEngine:
    """Map matching + message tracking + band computation, one call per tick.

    red_times_after_amber maps (intersection_id, signal_group_id) to the
    red duration following that group's amber, from the deployment's phase
    plans; groups without an entry get amber handled with zero added red,
    which is less conservative but still a red.
    """

    def __init__(
        self,
        mapgraph: geomap.MapGraph,
        cfg: AdvisoryConfig = AdvisoryConfig(),
        red_times_after_amber: Optional[dict[tuple[str, str], float]] = None,
    ):
        self.mapgraph = mapgraph
        self.cfg = cfg
        self.tracker = SpatTracker()
        self.red_times_after_amber = dict(red_times_after_amber or {})

    def receive(self, msg: spatnet.SpatMessage):
        self.tracker.update(msg)

    def advise_at(
        self,
        t_ms: int,
        position: geomap.GeoPoint,
        heading_deg: float,
        ego_speed_mps: float,
        lead: Optional[LeadVehicleObservation] = None,
        v_lim_hint_mps: float = 1.0,
    ) -> AdvisoryRecord:
        d_sig: Optional[float] = None
        signal: Optional[geomap.SignalNode] = None
        v_lim = v_lim_hint_mps
        try:
            m = geomap.match_to_map(position, heading_deg, self.mapgraph, self.cfg.max_match_radius_m)
            d_sig = m.distance_to_signal_m
            signal = m.signal
            v_lim = self.mapgraph.segments[m.segment_id].speed_limit_mps
        except geomap.MatchError:
            pass

        msg = None
        if signal is not None:
            msg = self.tracker.latest((signal.intersection_id, signal.signal_group_id))

        if d_sig is None or msg is None or (t_ms - msg.timestamp_ms) > self.cfg.staleness_s * 1000.0:
            return AdvisoryRecord(
                t_ms=t_ms,
                band=NO_SIGNAL_BAND,
                input=None,
                d_sig_m=d_sig,
                phase=None,
                t_used_s=0.0,
                v_lim_mps=v_lim,
                ego_speed_mps=ego_speed_mps,
                signal=signal,
                lead=lead,
            )

        age_ms = float(t_ms - msg.timestamp_ms)
        t_used = max(0.0, msg.time_remaining_s - age_ms / 1000.0)
        inp = AdvisoryInput(
            d_sig_m=d_sig,
            phase=msg.phase,
            t_current_s=t_used,
            v_lim_mps=v_lim,
            ego_speed_mps=ego_speed_mps,
            lead=lead,
            spat_age_ms=age_ms,
        )
        red_after = self.red_times_after_amber.get(msg.key, 0.0)
        band = advise(inp, red_time_after_amber_s=red_after, ttc_threshold_s=self.cfg.ttc_threshold_s)
        return AdvisoryRecord(
            t_ms=t_ms,
            band=band,
            input=inp,
            d_sig_m=d_sig,
            phase=msg.phase,
            t_used_s=t_used,
            v_lim_mps=v_lim,
            ego_speed_mps=ego_speed_mps,
            signal=signal,
            lead=lead,
        )


def advisory_loop(
    spat_stream,
    localization_source,
    lead_source,
    clock,
    mapgraph: geomap.MapGraph,
    cfg: AdvisoryConfig = AdvisoryConfig(),
    red_times_after_amber: Optional[dict[tuple[str, str], float]] = None,
) -> Iterator[AdvisoryRecord]:
    """Advisory ticks over latest-value sources, one record per pull.

    spat_stream yields (delivery_time_ms, SpatMessage) in delivery order;
    localization_source() and lead_source() return the newest (position,
    heading_deg, speed_mps) and Optional[LeadVehicleObservation]; clock()
    returns current scenario milliseconds. Each pull drains the messages
    due by now, computes one record, and yields it, so the caller sets the
    rate by how often it pulls (the simulator and the live host both pull
    every 100 ms). The loop ends when localization_source() returns None.
    """

    engine = AdvisoryEngine(mapgraph, cfg, red_times_after_amber)
    pending = iter(spat_stream)
    lookahead: Optional[tuple[float, spatnet.SpatMessage]] = next(pending, None)
    while True:
        now = clock()
        while lookahead is not None and lookahead[0] <= now:
            engine.receive(lookahead[1])
            lookahead = next(pending, None)
        loc = localization_source()
        if loc is None:
            return
        position, heading_deg, speed_mps = loc
        yield engine.advise_at(round(now), position, heading_deg, speed_mps, lead_source())

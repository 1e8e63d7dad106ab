"""Scenario configuration, the deterministic simulation loop, and the
trajectory log format.

A scenario wires the pieces together on one simulated clock: fixed-time
controllers broadcast at 1 Hz, messages cross a seeded lossy channel, the
advisory engine runs at 10 Hz, a driver model turns its output (or the view
out the windshield) into acceleration commands, and every tick is logged.
Identical config and seed produce byte-identical logs.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import math
import os
from dataclasses import dataclass, field, fields, replace
from typing import Optional

from . import __version__, energy, geomap, spatnet
from .advisor import AdvisoryConfig, AdvisoryEngine, AdvisoryRecord, LeadVehicleObservation
from .simtruck import (
    BASELINE,
    DRIVER_KINDS,
    BaselineDriver,
    DriverParams,
    EcoDriver,
    TruckParams,
    TruckState,
    step_truck,
)


class ScenarioError(ValueError):
    """Raised for invalid scenario configuration documents."""


@dataclass(frozen=True)
class PlanSpec:
    """One signal group's plan as configured."""

    intersection_id: str
    signal_group_id: str
    plan: spatnet.PhasePlan


@dataclass(frozen=True)
class LeadScript:
    """Scripted observations of a preceding vehicle.

    Keyframes are (t_s, gap_m, lead_speed_mps); between keyframes both gap
    and speed interpolate linearly, outside the keyframe span there is no
    lead. The lead is an observation source, not a simulated vehicle
    (traffic-flow simulation is out of scope), so fixtures are responsible
    for keeping scripted gaps physically sensible.
    """

    keyframes: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        if len(self.keyframes) < 1:
            raise ScenarioError("lead script needs at least one keyframe")
        last_t = -math.inf
        for t, gap, speed in self.keyframes:
            if t <= last_t:
                raise ScenarioError("lead script keyframe times must increase strictly")
            if gap <= 0.0:
                raise ScenarioError(f"lead script gap must be > 0, got {gap} at t={t}")
            if speed < 0.0:
                raise ScenarioError(f"lead script speed must be >= 0, got {speed} at t={t}")
            last_t = t

    def observation_at(self, t_s: float, ego_speed_mps: float) -> Optional[LeadVehicleObservation]:
        ks = self.keyframes
        if t_s < ks[0][0] or t_s > ks[-1][0]:
            return None
        for i in range(len(ks) - 1):
            t0, g0, v0 = ks[i]
            t1, g1, v1 = ks[i + 1]
            if t0 <= t_s <= t1:
                f = (t_s - t0) / (t1 - t0)
                gap = g0 + (g1 - g0) * f
                speed = v0 + (v1 - v0) * f
                return LeadVehicleObservation(
                    gap_m=gap,
                    lead_speed_mps=speed,
                    relative_speed_mps=ego_speed_mps - speed,
                )
        t, gap, speed = ks[-1]
        return LeadVehicleObservation(gap, speed, ego_speed_mps - speed)


@dataclass(frozen=True)
class StartState:
    lat: float
    lon: float
    heading_deg: float
    speed_mps: float

    def __post_init__(self):
        if self.speed_mps < 0.0:
            raise ScenarioError(f"start speed must be >= 0, got {self.speed_mps}")


@dataclass(frozen=True)
class ScenarioConfig:
    map_doc: dict
    plans: tuple[PlanSpec, ...]
    start: StartState
    driver_kind: str
    channel: spatnet.ChannelModel
    seed: int
    duration_s: float
    dt_s: float = 0.1
    lead_script: Optional[LeadScript] = None
    driver_params: DriverParams = DriverParams()
    truck_params: TruckParams = TruckParams()
    energy_params: energy.VehicleEnergyParams = energy.VehicleEnergyParams()
    advisory: AdvisoryConfig = AdvisoryConfig()

    def __post_init__(self):
        if self.driver_kind not in DRIVER_KINDS:
            raise ScenarioError(f"driver kind must be one of {DRIVER_KINDS}, got {self.driver_kind!r}")
        if self.duration_s <= 0.0:
            raise ScenarioError("duration_s must be > 0")
        dt_ms = round(self.dt_s * 1000)
        if dt_ms <= 0 or abs(self.dt_s * 1000 - dt_ms) > 1e-9 or 1000 % dt_ms != 0:
            raise ScenarioError(f"dt_s must divide 1 s evenly, got {self.dt_s}")
        if not self.plans:
            raise ScenarioError("at least one phase plan is required")
        keys = [(p.intersection_id, p.signal_group_id) for p in self.plans]
        if len(set(keys)) != len(keys):
            raise ScenarioError("duplicate (intersection_id, signal_group_id) in plans")

    @property
    def dt_ms(self) -> int:
        return round(self.dt_s * 1000)

    def controllers(self) -> list[spatnet.FixedTimeController]:
        return [spatnet.FixedTimeController(p.intersection_id, p.signal_group_id, p.plan) for p in self.plans]

    def red_times_after_amber(self) -> dict[tuple[str, str], float]:
        return {
            (p.intersection_id, p.signal_group_id): p.plan.red_time_after_amber_s()
            for p in self.plans
        }


def _params_from(doc: dict, cls, context: str):
    """Build a params dataclass from a config subtree, rejecting unknown keys."""

    known = {f.name for f in fields(cls)}
    unknown = set(doc) - known
    if unknown:
        raise ScenarioError(f"{context}: unknown keys {sorted(unknown)}")
    try:
        return cls(**doc)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{context}: {exc}") from exc


def _plan_from(doc: dict) -> PlanSpec:
    for key in ("intersection_id", "signal_group_id"):
        if key not in doc:
            raise ScenarioError(f"plan entry missing {key!r}")
    offset = float(doc.get("cycle_offset_s", 0.0))
    if "intervals" in doc:
        try:
            intervals = tuple((str(c), float(d)) for c, d in doc["intervals"])
            plan = spatnet.PhasePlan(intervals, offset)
        except (TypeError, ValueError) as exc:
            raise ScenarioError(f"plan {doc['intersection_id']}/{doc['signal_group_id']}: {exc}") from exc
    else:
        missing = {"green_s", "red_s"} - set(doc)
        if missing:
            raise ScenarioError(
                f"plan {doc['intersection_id']}/{doc['signal_group_id']} needs 'intervals' "
                f"or green_s/amber_s/red_s, missing {sorted(missing)}"
            )
        plan = spatnet.PhasePlan.green_amber_red(
            float(doc["green_s"]), float(doc.get("amber_s", 0.0)), float(doc["red_s"]), offset
        )
    return PlanSpec(str(doc["intersection_id"]), str(doc["signal_group_id"]), plan)


def load_scenario(path: str) -> ScenarioConfig:
    """Parse a scenario config file (JSON) and its referenced map.

    The map path is resolved relative to the config file's directory.
    """

    with open(path, encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ScenarioError(f"{path}: config root must be an object")
    for key in ("map", "plans", "start", "driver", "duration_s"):
        if key not in doc:
            raise ScenarioError(f"{path}: missing required key {key!r}")

    map_path = os.path.join(os.path.dirname(os.path.abspath(path)), str(doc["map"]))
    with open(map_path, encoding="utf-8") as f:
        map_doc = json.load(f)
    geomap.load_map(map_doc)  # fail early with the map's own diagnostics

    plans = tuple(_plan_from(p) for p in doc["plans"])

    start_doc = dict(doc["start"])
    start = StartState(
        lat=float(start_doc["lat"]),
        lon=float(start_doc["lon"]),
        heading_deg=float(start_doc["heading_deg"]),
        speed_mps=float(start_doc.get("speed_mps", 0.0)),
    )

    driver_doc = dict(doc["driver"])
    kind = str(driver_doc.pop("kind", "")).upper()
    driver_params = _params_from(driver_doc, DriverParams, "driver")

    channel_doc = dict(doc.get("channel", {}))
    channel = spatnet.ChannelModel(
        latency_ms=float(channel_doc.get("latency_ms", 100.0)),
        jitter_ms=float(channel_doc.get("jitter_ms", 0.0)),
        drop_probability=float(channel_doc.get("drop_probability", 0.0)),
        seed=int(doc.get("seed", 0)),
    )

    lead = None
    if doc.get("lead_script"):
        lead = LeadScript(tuple(
            (float(k["t_s"]), float(k["gap_m"]), float(k["lead_speed_mps"]))
            for k in doc["lead_script"]
        ))

    truck_params = _params_from(dict(doc.get("truck", {})), TruckParams, "truck")
    energy_params = _params_from(dict(doc.get("energy", {})), energy.VehicleEnergyParams, "energy")
    advisory = _params_from(dict(doc.get("advisory", {})), AdvisoryConfig, "advisory")

    return ScenarioConfig(
        map_doc=map_doc,
        plans=plans,
        start=start,
        driver_kind=kind,
        channel=channel,
        seed=int(doc.get("seed", 0)),
        duration_s=float(doc["duration_s"]),
        dt_s=float(doc.get("dt_s", 0.1)),
        lead_script=lead,
        driver_params=driver_params,
        truck_params=truck_params,
        energy_params=energy_params,
        advisory=advisory,
    )


def config_digest(cfg: ScenarioConfig) -> str:
    """Fairness digest: everything that defines the comparison conditions.

    Covers the map, the phase plans, the start state, duration, step and
    lead script. Driver model, channel model and seed are deliberately
    excluded: those are the treatment variables a comparison varies, while
    the digest pins the conditions that must match for the comparison to
    be fair.
    """

    payload = {
        "map": cfg.map_doc,
        "plans": [
            {
                "intersection_id": p.intersection_id,
                "signal_group_id": p.signal_group_id,
                "intervals": [[c, d] for c, d in p.plan.intervals],
                "cycle_offset_s": p.plan.cycle_offset_s,
            }
            for p in sorted(cfg.plans, key=lambda p: (p.intersection_id, p.signal_group_id))
        ],
        "start": {
            "lat": cfg.start.lat,
            "lon": cfg.start.lon,
            "heading_deg": cfg.start.heading_deg,
            "speed_mps": cfg.start.speed_mps,
        },
        "duration_s": cfg.duration_s,
        "dt_s": cfg.dt_s,
        "lead_script": [list(k) for k in cfg.lead_script.keyframes] if cfg.lead_script else None,
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


# -- trajectory log ------------------------------------------------------------

LOG_COLUMNS = (
    "t_s", "lat", "lon", "speed_mps", "accel_mps2", "d_sig_m",
    "phase", "v_lower_mps", "v_upper_mps", "gating", "fuel_rate_gps",
)
_LOG_MAGIC = "# ecodrive-log v1"


@dataclass(frozen=True)
class LogRow:
    t_s: float
    lat: float
    lon: float
    speed_mps: float
    accel_mps2: float
    d_sig_m: Optional[float]
    phase: Optional[str]
    v_lower_mps: float
    v_upper_mps: float
    gating: str
    fuel_rate_gps: float
    # Context carried in memory but not in the CSV columns.
    t_used_s: float = 0.0
    v_lim_mps: float = math.nan
    ego_lead_gap_m: Optional[float] = None


@dataclass
class TrajectoryLog:
    header: dict[str, str]
    rows: list[LogRow] = field(default_factory=list)

    @property
    def digest(self) -> str:
        return self.header.get("digest", "")

    @property
    def driver(self) -> str:
        return self.header.get("driver", "")


def _fmt_row(r: LogRow) -> str:
    d_sig = "nan" if r.d_sig_m is None else f"{r.d_sig_m:.3f}"
    phase = r.phase if r.phase is not None else "NONE"
    return (
        f"{r.t_s:.3f},{r.lat:.8f},{r.lon:.8f},{r.speed_mps:.4f},{r.accel_mps2:.4f},"
        f"{d_sig},{phase},{r.v_lower_mps:.4f},{r.v_upper_mps:.4f},{r.gating},{r.fuel_rate_gps:.6f}"
    )


def write_log(log: TrajectoryLog, path: str):
    """Write the CSV: comment header block, column header, fixed-format rows."""

    lines = [_LOG_MAGIC]
    for key in ("digest", "seed", "version", "driver"):
        lines.append(f"# {key}: {log.header.get(key, '')}")
    lines.append(",".join(LOG_COLUMNS))
    lines.extend(_fmt_row(r) for r in log.rows)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def read_log(path: str) -> TrajectoryLog:
    """Read a CSV log back.

    Columns not present in the CSV (t_used_s, v_lim_mps) come back as their
    defaults; the delimited file is the interchange format, not a full
    state dump.
    """

    header: dict[str, str] = {}
    rows: list[LogRow] = []
    with open(path, encoding="utf-8") as f:
        first = f.readline().rstrip("\n")
        if first != _LOG_MAGIC:
            raise ValueError(f"{path}: not a trajectory log (missing {_LOG_MAGIC!r})")
        for line in f:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("# "):
                key, _, value = line[2:].partition(": ")
                header[key] = value
                continue
            if line == ",".join(LOG_COLUMNS):
                continue
            parts = line.split(",")
            if len(parts) != len(LOG_COLUMNS):
                raise ValueError(f"{path}: bad row {line!r}")
            d_sig = float(parts[5])
            rows.append(LogRow(
                t_s=float(parts[0]),
                lat=float(parts[1]),
                lon=float(parts[2]),
                speed_mps=float(parts[3]),
                accel_mps2=float(parts[4]),
                d_sig_m=None if math.isnan(d_sig) else d_sig,
                phase=None if parts[6] == "NONE" else parts[6],
                v_lower_mps=float(parts[7]),
                v_upper_mps=float(parts[8]),
                gating=parts[9],
                fuel_rate_gps=float(parts[10]),
            ))
    return TrajectoryLog(header=header, rows=rows)


def log_to_advisory_lines(log: TrajectoryLog):
    """Re-emit a log as the advisory wire format for UI replay."""

    for r in log.rows:
        yield json.dumps({
            "t_ms": round(r.t_s * 1000),
            "d_sig_m": r.d_sig_m,
            "phase": r.phase,
            "t_used_s": r.t_used_s,
            "v_lower_mps": r.v_lower_mps,
            "v_upper_mps": r.v_upper_mps,
            "gating": r.gating,
            "ego_speed_mps": r.speed_mps,
        }, separators=(",", ":")) + "\n"


# -- the simulation loop -------------------------------------------------------


def run_scenario(cfg: ScenarioConfig) -> TrajectoryLog:
    """Run one scenario to completion and return its log.

    The loop is a single-threaded discrete-time simulation: per 100 ms tick
    it (1) broadcasts on whole seconds and schedules deliveries through the
    seeded channel, (2) drains deliveries due by now into the advisory
    engine, (3) computes the advisory record, (4) asks the driver model for
    an acceleration (the baseline driver sees only the true signal within
    sight distance; the eco driver sees the advisory), (5) logs, and (6)
    steps the truck. The run ends at duration or when the lane chain runs
    out, whichever is first.
    """

    mapgraph = geomap.load_map(cfg.map_doc)
    controllers = {c.key: c for c in cfg.controllers()}
    engine = AdvisoryEngine(mapgraph, cfg.advisory, cfg.red_times_after_amber())
    channel = replace(cfg.channel)

    if cfg.driver_kind == BASELINE:
        driver = BaselineDriver(cfg.driver_params, cfg.truck_params)
    else:
        driver = EcoDriver(cfg.driver_params, cfg.truck_params)

    start_point = geomap.GeoPoint(cfg.start.lat, cfg.start.lon)
    cursor = geomap.ChainCursor.at_point(mapgraph, start_point, cfg.start.heading_deg)
    state = TruckState(
        position=cursor.position,
        heading_deg=cursor.heading_deg,
        speed_mps=min(cfg.start.speed_mps, cfg.truck_params.max_speed_mps),
        accel_mps2=0.0,
        odometer_m=0.0,
        t_s=0.0,
    )

    header = {
        "digest": config_digest(cfg),
        "seed": str(cfg.seed),
        "version": __version__,
        "driver": cfg.driver_kind,
    }
    log = TrajectoryLog(header=header)

    duration_ms = round(cfg.duration_s * 1000)
    dt_ms = cfg.dt_ms
    pending: list[tuple[float, int, spatnet.SpatMessage]] = []
    seq = 0

    for t_ms in range(0, duration_ms + 1, dt_ms):
        if t_ms % 1000 == 0:
            for msg in spatnet.broadcast_tick(list(controllers.values()), t_ms / 1000.0):
                arrival = channel.offer(msg)
                if arrival is not None:
                    heapq.heappush(pending, (arrival, seq, msg))
                seq += 1
        while pending and pending[0][0] <= t_ms:
            engine.receive(heapq.heappop(pending)[2])

        lead = None
        if cfg.lead_script is not None:
            lead = cfg.lead_script.observation_at(t_ms / 1000.0, state.speed_mps)

        record = engine.advise_at(
            t_ms, state.position, state.heading_deg, state.speed_mps,
            lead=lead, v_lim_hint_mps=cursor.speed_limit_mps,
        )
        visible = _visible_signal(record, controllers, t_ms)

        if isinstance(driver, EcoDriver):
            a_cmd = driver.command(state, record, visible, lead)
        else:
            a_cmd = driver.command(state, visible, record.v_lim_mps, lead)

        fuel = energy.fuel_rate_gps(
            energy.tractive_power_w(state.speed_mps, state.accel_mps2, 0.0, cfg.energy_params),
            cfg.energy_params,
        )
        log.rows.append(LogRow(
            t_s=t_ms / 1000.0,
            lat=state.position.lat,
            lon=state.position.lon,
            speed_mps=state.speed_mps,
            accel_mps2=state.accel_mps2,
            d_sig_m=record.d_sig_m,
            phase=record.phase,
            v_lower_mps=record.band.v_lower_mps,
            v_upper_mps=record.band.v_upper_mps,
            gating=record.band.gating,
            fuel_rate_gps=fuel,
            t_used_s=record.t_used_s,
            v_lim_mps=record.v_lim_mps,
            ego_lead_gap_m=lead.gap_m if lead is not None else None,
        ))

        if t_ms + dt_ms > duration_ms or cursor.at_chain_end:
            break
        state = step_truck(state, a_cmd, cfg.truck_params, cfg.dt_s, cursor)

    return log


def _visible_signal(
    record: AdvisoryRecord,
    controllers: dict[tuple[str, str], spatnet.FixedTimeController],
    t_ms: int,
) -> Optional[tuple[str, float]]:
    """What the driver's eyes see: the true current color of the next signal.

    None when no signal lies ahead; distance is the matched d_sig so the
    sight-distance rule is applied by the driver.
    """

    if record.signal is None or record.d_sig_m is None:
        return None
    ctrl = controllers.get((record.signal.intersection_id, record.signal.signal_group_id))
    if ctrl is None:
        return None
    phase, _ = ctrl.plan.phase_at_ms(t_ms)
    return (phase, record.d_sig_m)


def summarize_fuel(log: TrajectoryLog) -> energy.FuelSummary:
    """Fuel totals straight off the logged columns."""

    if not log.rows:
        raise ValueError("empty trajectory log")
    return energy.trip_fuel(
        [r.t_s for r in log.rows],
        [r.speed_mps for r in log.rows],
        [r.fuel_rate_gps for r in log.rows],
    )

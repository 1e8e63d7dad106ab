"""Longitudinal power and fuel-rate proxy for a heavy truck.

Not an engine map: a physics-based proxy good enough to rank driving
strategies. Tractive power is inertia + rolling + aero + grade; fuel rate
converts positive tractive power through a flat engine efficiency and
clamps at an idle floor so a stopped truck still burns fuel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

GRAVITY_MPS2 = 9.81


@dataclass(frozen=True)
class VehicleEnergyParams:
    """Tractor-trailer defaults; override per study vehicle."""

    mass_kg: float = 25_000.0
    rolling_coeff: float = 0.007
    drag_area_CdA_m2: float = 7.5
    air_density_kgm3: float = 1.207
    idle_fuel_gps: float = 0.9
    engine_efficiency: float = 0.38
    diesel_energy_Jpg: float = 42_800.0

    def __post_init__(self):
        for name in ("mass_kg", "drag_area_CdA_m2", "air_density_kgm3", "diesel_energy_Jpg"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be > 0")
        if not 0.0 < self.engine_efficiency <= 1.0:
            raise ValueError("engine_efficiency must be in (0, 1]")
        if self.rolling_coeff < 0.0 or self.idle_fuel_gps < 0.0:
            raise ValueError("rolling_coeff and idle_fuel_gps must be >= 0")


def tractive_power_w(
    speed_mps: float,
    accel_mps2: float,
    grade: float = 0.0,
    params: VehicleEnergyParams = VehicleEnergyParams(),
) -> float:
    """Power at the wheels in watts; negative while braking or descending.

    grade is the road pitch angle in radians (sin(grade) is the climb
    fraction).
    """

    if speed_mps < 0.0:
        raise ValueError(f"negative speed: {speed_mps}")
    m = params.mass_kg
    inertia = m * accel_mps2 * speed_mps
    rolling = m * GRAVITY_MPS2 * params.rolling_coeff * speed_mps
    aero = 0.5 * params.air_density_kgm3 * params.drag_area_CdA_m2 * speed_mps**3
    climb = m * GRAVITY_MPS2 * math.sin(grade) * speed_mps
    return inertia + rolling + aero + climb


def fuel_rate_gps(power_w: float, params: VehicleEnergyParams = VehicleEnergyParams()) -> float:
    """Grams of diesel per second for a given wheel power.

    Negative power (engine braking, regeneration is not modeled) burns the
    idle rate, never less: fuel rate is monotone in power and bounded below
    by idle_fuel_gps.
    """

    useful = max(0.0, power_w)
    return max(params.idle_fuel_gps, useful / (params.engine_efficiency * params.diesel_energy_Jpg))


STOP_SPEED_MPS = 0.1
STOP_MIN_DURATION_S = 1.0


@dataclass(frozen=True)
class FuelSummary:
    """Trip totals from one trajectory log."""

    total_g: float
    idle_g: float
    moving_g: float
    stops_count: int
    duration_s: float
    distance_m: float
    stop_time_s: float
    min_speed_mps: float


def _stop_intervals(t_s: Sequence[float], speed: Sequence[float]) -> list[tuple[int, int]]:
    """Index ranges [i, j] where speed stays below the stop threshold >= 1 s."""

    out: list[tuple[int, int]] = []
    i = 0
    n = len(speed)
    while i < n:
        if speed[i] >= STOP_SPEED_MPS:
            i += 1
            continue
        j = i
        while j + 1 < n and speed[j + 1] < STOP_SPEED_MPS:
            j += 1
        if t_s[j] - t_s[i] >= STOP_MIN_DURATION_S:
            out.append((i, j))
        i = j + 1
    return out


def trip_fuel(
    t_s: Sequence[float],
    speed_mps: Sequence[float],
    fuel_rate: Sequence[float],
    distance_m: Optional[float] = None,
) -> FuelSummary:
    """Integrate a sampled trip: trapezoidal fuel, stop census, totals.

    The three sequences are parallel samples at strictly increasing times.
    distance_m defaults to trapezoidal integration of speed.
    """

    n = len(t_s)
    if n != len(speed_mps) or n != len(fuel_rate):
        raise ValueError("t_s, speed_mps and fuel_rate must have equal length")
    if n < 2:
        raise ValueError("a trip needs at least two samples")
    for k in range(1, n):
        if not t_s[k] > t_s[k - 1]:
            raise ValueError(f"time must increase strictly (row {k})")

    total = 0.0
    dist = 0.0
    for k in range(1, n):
        dt = t_s[k] - t_s[k - 1]
        total += 0.5 * (fuel_rate[k] + fuel_rate[k - 1]) * dt
        dist += 0.5 * (speed_mps[k] + speed_mps[k - 1]) * dt

    stops = _stop_intervals(t_s, speed_mps)
    idle = 0.0
    stop_time = 0.0
    for i, j in stops:
        stop_time += t_s[j] - t_s[i]
        for k in range(i + 1, j + 1):
            idle += 0.5 * (fuel_rate[k] + fuel_rate[k - 1]) * (t_s[k] - t_s[k - 1])

    return FuelSummary(
        total_g=total,
        idle_g=idle,
        moving_g=total - idle,
        stops_count=len(stops),
        duration_s=t_s[-1] - t_s[0],
        distance_m=dist if distance_m is None else distance_m,
        stop_time_s=stop_time,
        min_speed_mps=min(speed_mps),
    )


def fuel_rows_from_motion(
    t_s: Sequence[float],
    speed_mps: Sequence[float],
    accel_mps2: Sequence[float],
    grade: float = 0.0,
    params: VehicleEnergyParams = VehicleEnergyParams(),
) -> list[float]:
    """Recompute the fuel-rate column from speed/accel samples."""

    return [
        fuel_rate_gps(tractive_power_w(v, a, grade, params), params)
        for v, a in zip(speed_mps, accel_mps2)
    ]

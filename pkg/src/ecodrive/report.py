"""Comparison of eco vs baseline trajectory logs, and figure rendering.

The comparison mirrors the evaluation discipline of the system's test
protocol: both runs must share the same corridor, phase plans and start
state (enforced through the config digest), fuel totals are computed over
a common travelled distance so neither run is billed for road the other
never covered, and the narrative checks (full stop, minimum approach
speed, crossing right after the release) are recomputed from the data
every time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from . import energy, spatnet
from .scenario import LogRow, TrajectoryLog

# A jump of this size between consecutive d_sig samples means the advisory
# switched to the next signal: the stop line was crossed.
_CROSSING_JUMP_M = 20.0
_NEAR_LINE_M = 30.0


class ComparisonError(ValueError):
    """Raised when two logs cannot be fairly compared."""


@dataclass(frozen=True)
class Crossing:
    """One stop-line crossing recovered from a log."""

    t_s: float
    speed_mps: float
    phase: Optional[str]
    green_onset_t_s: Optional[float]

    @property
    def after_green_s(self) -> Optional[float]:
        if self.green_onset_t_s is None:
            return None
        return self.t_s - self.green_onset_t_s


@dataclass(frozen=True)
class LogAnalysis:
    fuel: energy.FuelSummary
    distance_m: float
    min_approach_speed_mps: float
    crossings: tuple[Crossing, ...]

    @property
    def stopped(self) -> bool:
        return self.fuel.stops_count > 0


def cumulative_distance(log: TrajectoryLog) -> list[float]:
    """Trapezoidal odometer reconstructed from the speed column."""

    out = [0.0]
    rows = log.rows
    for k in range(1, len(rows)):
        dt = rows[k].t_s - rows[k - 1].t_s
        out.append(out[-1] + 0.5 * (rows[k].speed_mps + rows[k - 1].speed_mps) * dt)
    return out


def trim_to_distance(log: TrajectoryLog, distance_m: float) -> TrajectoryLog:
    """Rows up to the first sample at or past the given travelled distance."""

    cum = cumulative_distance(log)
    end = len(log.rows)
    for i, d in enumerate(cum):
        if d >= distance_m:
            end = i + 1
            break
    return TrajectoryLog(header=dict(log.header), rows=log.rows[:end])


def find_crossings(log: TrajectoryLog) -> tuple[Crossing, ...]:
    """Stop-line crossings: d_sig jumps to the next signal or runs out."""

    crossings: list[Crossing] = []
    rows = log.rows
    for k in range(1, len(rows)):
        prev, cur = rows[k - 1], rows[k]
        if prev.d_sig_m is None or prev.d_sig_m > _NEAR_LINE_M:
            continue
        jumped = cur.d_sig_m is not None and cur.d_sig_m > prev.d_sig_m + _CROSSING_JUMP_M
        gone = cur.d_sig_m is None
        if not (jumped or gone):
            continue
        crossings.append(Crossing(
            t_s=cur.t_s,
            speed_mps=prev.speed_mps,
            phase=prev.phase,
            green_onset_t_s=_green_onset_before(rows, k - 1),
        ))
    return tuple(crossings)


def _green_onset_before(rows: list[LogRow], idx: int) -> Optional[float]:
    """Start of the contiguous green run the row at idx sits in, if any."""

    if rows[idx].phase != spatnet.GREEN:
        return None
    onset = rows[idx].t_s
    for j in range(idx - 1, -1, -1):
        if rows[j].phase != spatnet.GREEN:
            break
        onset = rows[j].t_s
    return onset


def analyze_log(log: TrajectoryLog) -> LogAnalysis:
    if not log.rows:
        raise ValueError("empty trajectory log")
    fuel = energy.trip_fuel(
        [r.t_s for r in log.rows],
        [r.speed_mps for r in log.rows],
        [r.fuel_rate_gps for r in log.rows],
    )
    approach_speeds = [r.speed_mps for r in log.rows if r.d_sig_m is not None]
    return LogAnalysis(
        fuel=fuel,
        distance_m=cumulative_distance(log)[-1],
        min_approach_speed_mps=min(approach_speeds) if approach_speeds else math.nan,
        crossings=find_crossings(log),
    )


# Acceptance windows for relative fuel savings, per scenario family.
SAVINGS_WINDOWS = {
    "acceleration": (2.0, 25.0),
    "deceleration": (1.0, 15.0),
    None: (1.0, 25.0),
}


@dataclass(frozen=True)
class ComparisonReport:
    digest: str
    expect: Optional[str]
    window_m: float
    baseline_fuel: energy.FuelSummary
    eco_fuel: energy.FuelSummary
    savings_percent: float
    stop_delta: int
    baseline: LogAnalysis
    eco: LogAnalysis
    flags: dict[str, bool] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.flags.values())


def compare_logs(
    baseline_log: TrajectoryLog,
    eco_log: TrajectoryLog,
    expect: Optional[str] = None,
) -> ComparisonReport:
    """Build the comparison report for a baseline/eco pair.

    Refuses pairs whose headers carry different config digests: runs over
    different corridors, plans or start states are not comparable. Fuel is
    integrated over the largest distance both runs covered. expect selects
    which narrative flags apply ("acceleration", "deceleration", or None
    for the generic set).
    """

    if expect not in SAVINGS_WINDOWS:
        raise ComparisonError(f"expect must be one of {sorted(k for k in SAVINGS_WINDOWS if k)}, got {expect!r}")
    if not baseline_log.rows or not eco_log.rows:
        raise ComparisonError("cannot compare empty logs")
    if baseline_log.digest != eco_log.digest:
        raise ComparisonError(
            "config digests differ; runs are not comparable "
            f"(baseline {baseline_log.digest[:12]}… vs eco {eco_log.digest[:12]}…)"
        )

    base_full = analyze_log(baseline_log)
    eco_full = analyze_log(eco_log)

    window_m = min(base_full.distance_m, eco_full.distance_m)
    base_fuel = analyze_log(trim_to_distance(baseline_log, window_m)).fuel
    eco_fuel = analyze_log(trim_to_distance(eco_log, window_m)).fuel
    savings = 0.0
    if base_fuel.total_g > 0.0:
        savings = (base_fuel.total_g - eco_fuel.total_g) / base_fuel.total_g * 100.0

    if baseline_log.driver == "ECO" and eco_log.driver == "BASELINE":
        raise ComparisonError("arguments appear swapped: pass the baseline log first, then the eco log")

    lo, hi = SAVINGS_WINDOWS[expect]
    stop_delta = base_full.fuel.stops_count - eco_full.fuel.stops_count
    if baseline_log.rows == eco_log.rows:
        # Self-comparison is the degenerate fairness check: zero everything.
        flags = {"self_comparison_zero": savings == 0.0 and stop_delta == 0}
    else:
        flags = {
            "eco_uses_less_fuel": eco_fuel.total_g < base_fuel.total_g,
            "savings_in_window": lo <= savings <= hi,
            "baseline_full_stop": base_full.stopped,
            "eco_no_full_stop": not eco_full.stopped,
        }
        if expect == "acceleration":
            flags["eco_min_speed_gt_3"] = eco_full.min_approach_speed_mps > 3.0
        if expect == "deceleration":
            after = [c.after_green_s for c in eco_full.crossings if c.after_green_s is not None]
            flags["eco_crosses_within_2s_of_green"] = any(
                0.0 < a <= 2.0 for a in after
            ) and any(c.speed_mps > 1.0 for c in eco_full.crossings)

    return ComparisonReport(
        digest=baseline_log.digest,
        expect=expect,
        window_m=window_m,
        baseline_fuel=base_fuel,
        eco_fuel=eco_fuel,
        savings_percent=savings,
        stop_delta=stop_delta,
        baseline=base_full,
        eco=eco_full,
        flags=flags,
    )


def render_report(report: ComparisonReport) -> str:
    """Human-readable comparison summary."""

    lines = [
        "eco-driving comparison",
        f"  digest            {report.digest}",
        f"  fuel window       {report.window_m:.1f} m common distance",
        f"  baseline fuel     {report.baseline_fuel.total_g:.2f} g "
        f"({report.baseline_fuel.idle_g:.2f} g idle, {report.baseline_fuel.stops_count} stop(s))",
        f"  eco fuel          {report.eco_fuel.total_g:.2f} g "
        f"({report.eco_fuel.idle_g:.2f} g idle, {report.eco_fuel.stops_count} stop(s))",
        f"  savings           {report.savings_percent:.2f} %",
        f"  stop delta        {report.stop_delta}",
        f"  min approach speed  baseline {report.baseline.min_approach_speed_mps:.2f} m/s, "
        f"eco {report.eco.min_approach_speed_mps:.2f} m/s",
    ]
    for c in report.eco.crossings:
        after = f", {c.after_green_s:.1f} s after green onset" if c.after_green_s is not None else ""
        lines.append(f"  eco crossing      t={c.t_s:.1f} s at {c.speed_mps:.2f} m/s ({c.phase or 'NONE'}{after})")
    lines.append("  checks:")
    for name, ok in report.flags.items():
        lines.append(f"    [{'PASS' if ok else 'FAIL'}] {name}")
    return "\n".join(lines) + "\n"


def report_csv_row(report: ComparisonReport) -> str:
    """One summary row: comparable across scenario families."""

    header = (
        "digest,expect,window_m,baseline_fuel_g,eco_fuel_g,savings_percent,"
        "stop_delta,baseline_min_speed_mps,eco_min_speed_mps,passed"
    )
    row = (
        f"{report.digest},{report.expect or ''},{report.window_m:.1f},"
        f"{report.baseline_fuel.total_g:.3f},{report.eco_fuel.total_g:.3f},"
        f"{report.savings_percent:.2f},{report.stop_delta},"
        f"{report.baseline.min_approach_speed_mps:.2f},{report.eco.min_approach_speed_mps:.2f},"
        f"{int(report.passed)}"
    )
    return header + "\n" + row + "\n"


# -- figures -------------------------------------------------------------------

_PHASE_COLORS = {spatnet.GREEN: "#2ca02c", spatnet.AMBER: "#ff9f1c", spatnet.RED: "#d62728"}


def _phase_band_spans(log: TrajectoryLog) -> list[tuple[float, float, str]]:
    spans: list[tuple[float, float, str]] = []
    start = None
    color = None
    for r in log.rows:
        if r.phase != color:
            if color is not None and start is not None:
                spans.append((start, r.t_s, color))
            start, color = r.t_s, r.phase
    if color is not None and start is not None:
        spans.append((start, log.rows[-1].t_s, color))
    return [(a, b, c) for a, b, c in spans if c in _PHASE_COLORS]


def save_comparison_figures(
    baseline_log: TrajectoryLog,
    eco_log: TrajectoryLog,
    out_dir: str,
    stem: str = "comparison",
) -> list[str]:
    """Render speed/time, distance/time and cumulative-fuel figures as PNGs.

    Returns the written paths. The signal's received phase is drawn as a
    color bar under the time axis of the speed plot.
    """

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    import os

    os.makedirs(out_dir, exist_ok=True)
    paths = []

    fig, ax = plt.subplots(figsize=(9, 4.5))
    ax.plot([r.t_s for r in baseline_log.rows], [r.speed_mps for r in baseline_log.rows],
            label="baseline", color="#7f7f7f", lw=1.6)
    ax.plot([r.t_s for r in eco_log.rows], [r.speed_mps for r in eco_log.rows],
            label="eco", color="#1f77b4", lw=1.6)
    upper = [r.v_upper_mps if r.gating in ("ACTIVE", "CAPPED_BY_LEAD") else math.nan for r in eco_log.rows]
    lower = [r.v_lower_mps if r.gating in ("ACTIVE", "CAPPED_BY_LEAD") else math.nan for r in eco_log.rows]
    ax.fill_between([r.t_s for r in eco_log.rows], lower, upper, color="#2ca02c", alpha=0.15,
                    label="advised band")
    for a, b, color in _phase_band_spans(eco_log):
        ax.axvspan(a, b, ymin=0.0, ymax=0.03, color=_PHASE_COLORS[color], lw=0)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("speed [m/s]")
    ax.legend(loc="best")
    ax.set_title("speed over time")
    fig.tight_layout()
    p = os.path.join(out_dir, f"{stem}_speed.png")
    fig.savefig(p, dpi=130)
    plt.close(fig)
    paths.append(p)

    fig, ax = plt.subplots(figsize=(9, 4.5))
    ax.plot([r.t_s for r in baseline_log.rows], cumulative_distance(baseline_log),
            label="baseline", color="#7f7f7f", lw=1.6)
    ax.plot([r.t_s for r in eco_log.rows], cumulative_distance(eco_log),
            label="eco", color="#1f77b4", lw=1.6)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("distance travelled [m]")
    ax.legend(loc="best")
    ax.set_title("distance over time")
    fig.tight_layout()
    p = os.path.join(out_dir, f"{stem}_distance.png")
    fig.savefig(p, dpi=130)
    plt.close(fig)
    paths.append(p)

    fig, ax = plt.subplots(figsize=(9, 4.5))
    for label, color, log in (("baseline", "#7f7f7f", baseline_log), ("eco", "#1f77b4", eco_log)):
        cum = [0.0]
        rows = log.rows
        for k in range(1, len(rows)):
            dt = rows[k].t_s - rows[k - 1].t_s
            cum.append(cum[-1] + 0.5 * (rows[k].fuel_rate_gps + rows[k - 1].fuel_rate_gps) * dt)
        ax.plot([r.t_s for r in rows], cum, label=label, color=color, lw=1.6)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("cumulative fuel [g]")
    ax.legend(loc="best")
    ax.set_title("fuel consumption over time")
    fig.tight_layout()
    p = os.path.join(out_dir, f"{stem}_fuel.png")
    fig.savefig(p, dpi=130)
    plt.close(fig)
    paths.append(p)

    return paths

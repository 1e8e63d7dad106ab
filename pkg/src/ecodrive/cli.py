"""Command-line entry point.

Subcommands:
  run      run a scenario config and write its trajectory log
  compare  compare a baseline log against an eco log, emit report + figures
  replay   stream an existing log as advisory wire records
  live     host an interactive session: a UI drives the truck over a socket

Exit codes are a stable contract: 0 success, 1 comparison check failure
(for CI gating), 2 usage or IO error.
"""

from __future__ import annotations

import argparse
import json
import os
import socket
import sys
import threading
import time
from dataclasses import replace
from typing import Optional

from . import advisor, geomap, report, spatnet
from . import energy
from .scenario import (
    ScenarioConfig,
    ScenarioError,
    TrajectoryLog,
    LogRow,
    config_digest,
    load_scenario,
    log_to_advisory_lines,
    read_log,
    run_scenario,
    write_log,
)
from .simtruck import TruckState, step_truck
from . import __version__

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2

COAST_DRAG_MPS2 = 0.2  # pedal-free rolling/aero slowdown in live mode
COMMAND_STALE_S = 1.5  # heartbeat is 1 Hz; >1.5 s silence means pedals released


def _parse_endpoint(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise argparse.ArgumentTypeError(f"expected HOST:PORT, got {text!r}")
    return host, int(port)


def _with_seed(cfg: ScenarioConfig, seed: Optional[int]) -> ScenarioConfig:
    if seed is None:
        return cfg
    return replace(cfg, seed=seed, channel=replace(cfg.channel, seed=seed))


# -- run -------------------------------------------------------------------


def cmd_run(args) -> int:
    cfg = _with_seed(load_scenario(args.config), args.seed)
    log = run_scenario(cfg)
    write_log(log, args.out)
    if args.verbose:
        from .scenario import summarize_fuel

        fuel = summarize_fuel(log)
        print(
            f"{args.out}: {len(log.rows)} rows, driver {log.driver}, "
            f"{fuel.total_g:.1f} g fuel, {fuel.stops_count} stop(s), digest {log.digest[:12]}",
            file=sys.stderr,
        )
    print(f"wrote {args.out}")
    return EXIT_OK


# -- compare ---------------------------------------------------------------


def cmd_compare(args) -> int:
    baseline = read_log(args.baseline)
    eco = read_log(args.eco)
    rep = report.compare_logs(baseline, eco, expect=args.expect)

    text = report.render_report(rep)
    sys.stdout.write(text)

    os.makedirs(args.out, exist_ok=True)
    stem = args.expect or "comparison"
    txt_path = os.path.join(args.out, f"{stem}_report.txt")
    with open(txt_path, "w", encoding="utf-8") as f:
        f.write(text)
    csv_path = os.path.join(args.out, f"{stem}_summary.csv")
    with open(csv_path, "w", encoding="utf-8", newline="\n") as f:
        f.write(report.report_csv_row(rep))
    written = [txt_path, csv_path]
    if not args.no_figures:
        written += report.save_comparison_figures(baseline, eco, args.out, stem)
    if args.verbose:
        for p in written:
            print(f"wrote {p}", file=sys.stderr)
    return EXIT_OK if rep.passed else EXIT_CHECK_FAILED


# -- replay ----------------------------------------------------------------


def cmd_replay(args) -> int:
    log = read_log(args.log)
    sink = None
    if args.endpoint is not None:
        sink = socket.create_connection(args.endpoint, timeout=5.0)
    try:
        prev_t = None
        for row, line in zip(log.rows, log_to_advisory_lines(log)):
            if args.realtime and prev_t is not None:
                time.sleep(max(0.0, row.t_s - prev_t))
            prev_t = row.t_s
            if sink is not None:
                sink.sendall(line.encode("utf-8"))
            else:
                sys.stdout.write(line)
        if sink is None:
            sys.stdout.flush()
    except BrokenPipeError:
        pass
    finally:
        if sink is not None:
            try:
                sink.close()
            except OSError:
                pass
    return EXIT_OK


# -- live ------------------------------------------------------------------


class _CommandMailbox:
    """Latest-value mailbox between the socket reader and the sim loop."""

    def __init__(self):
        self._lock = threading.Lock()
        self._cmd: Optional[dict] = None
        self._wall: float = 0.0
        self.disconnected = threading.Event()

    def put_line(self, line: str):
        try:
            doc = json.loads(line)
            throttle = float(doc.get("throttle", 0.0))
            brake = float(doc.get("brake", 0.0))
        except (ValueError, TypeError):
            return  # malformed command lines are dropped, not fatal
        with self._lock:
            self._cmd = {"throttle": throttle, "brake": brake}
            self._wall = time.monotonic()

    def latest(self) -> tuple[Optional[dict], float]:
        with self._lock:
            if self._cmd is None:
                return None, float("inf")
            return dict(self._cmd), time.monotonic() - self._wall


class _TcpUiLink:
    """Single-client newline-JSON link: records out, pedal commands in."""

    def __init__(self, host: str, port: int, wait_s: float):
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        listener.bind((host, port))
        listener.listen(1)
        listener.settimeout(wait_s)
        bound = listener.getsockname()
        print(f"live: waiting for UI on {bound[0]}:{bound[1]}", file=sys.stderr)
        try:
            self._conn, peer = listener.accept()
        except socket.timeout:
            listener.close()
            raise TimeoutError(f"no UI connected to {bound[0]}:{bound[1]} within {wait_s:.0f} s") from None
        finally:
            listener.close()
        print(f"live: UI connected from {peer[0]}:{peer[1]}", file=sys.stderr)
        self.mailbox = _CommandMailbox()
        threading.Thread(target=self._read_loop, name="live-ui-read", daemon=True).start()

    def _read_loop(self):
        buf = b""
        try:
            while True:
                chunk = self._conn.recv(4096)
                if not chunk:
                    break
                buf += chunk
                while b"\n" in buf:
                    line, buf = buf.split(b"\n", 1)
                    if line.strip():
                        self.mailbox.put_line(line.decode("utf-8", errors="replace"))
        except OSError:
            pass
        self.mailbox.disconnected.set()

    def send_line(self, text: str) -> bool:
        try:
            self._conn.sendall(text.encode("utf-8"))
            return True
        except OSError:
            self.mailbox.disconnected.set()
            return False

    def close(self):
        try:
            self._conn.close()
        except OSError:
            pass


class _WsUiLink:
    """Browser bridge: same line protocol carried over websocket text frames."""

    def __init__(self, host: str, port: int, wait_s: float):
        try:
            from websockets.sync.server import serve
        except ImportError as exc:
            raise RuntimeError(
                "websocket mode needs the 'ui' extra: pip install ecodrive[ui]"
            ) from exc

        self.mailbox = _CommandMailbox()
        self._conn = None
        self._ready = threading.Event()
        self._server = serve(self._handler, host, port)
        threading.Thread(target=self._server.serve_forever, name="live-ws-serve", daemon=True).start()
        print(f"live: waiting for UI on ws://{host}:{port}", file=sys.stderr)
        if not self._ready.wait(timeout=wait_s):
            self._server.shutdown()
            raise TimeoutError(f"no UI connected to ws://{host}:{port} within {wait_s:.0f} s")
        print("live: UI connected", file=sys.stderr)

    def _handler(self, conn):
        if self._conn is not None:
            conn.close()
            return
        self._conn = conn
        self._ready.set()
        try:
            for message in conn:
                if isinstance(message, bytes):
                    message = message.decode("utf-8", errors="replace")
                for line in message.splitlines():
                    if line.strip():
                        self.mailbox.put_line(line)
        except Exception:
            pass
        self.mailbox.disconnected.set()

    def send_line(self, text: str) -> bool:
        if self._conn is None:
            return False
        try:
            self._conn.send(text.rstrip("\n"))
            return True
        except Exception:
            self.mailbox.disconnected.set()
            return False

    def close(self):
        try:
            if self._conn is not None:
                self._conn.close()
        except Exception:
            pass
        self._server.shutdown()


def _human_accel(cmd: Optional[dict], age_s: float, speed_mps: float, tp) -> tuple[float, bool]:
    """Pedal commands to acceleration.

    Brake wins when both pedals are pressed. A full brake press unlocks the
    emergency deceleration authority; anything less scales the service
    brake. No pedals (or a stale command stream) leaves the truck coasting
    against a light drag term.
    """

    throttle = brake = 0.0
    if cmd is not None and age_s <= COMMAND_STALE_S:
        throttle = min(1.0, max(0.0, cmd["throttle"]))
        brake = min(1.0, max(0.0, cmd["brake"]))
    if brake > 0.0:
        if brake >= 0.999:
            return -tp.emergency_decel_mps2, True
        return -brake * tp.max_decel_mps2, False
    if throttle > 0.0:
        return throttle * tp.max_accel_mps2, False
    if speed_mps > 0.01:
        return -COAST_DRAG_MPS2, False
    return 0.0, False


def cmd_live(args) -> int:
    import heapq

    cfg = _with_seed(load_scenario(args.config), args.seed)
    host, port = args.bind
    link = _WsUiLink(host, port, args.wait_s) if args.ws else _TcpUiLink(host, port, args.wait_s)

    mapgraph = geomap.load_map(cfg.map_doc)
    controllers = {c.key: c for c in cfg.controllers()}
    engine = advisor.AdvisoryEngine(mapgraph, cfg.advisory, cfg.red_times_after_amber())
    channel = replace(cfg.channel)
    cursor = geomap.ChainCursor.at_point(
        mapgraph, geomap.GeoPoint(cfg.start.lat, cfg.start.lon), cfg.start.heading_deg
    )
    state = TruckState(
        position=cursor.position,
        heading_deg=cursor.heading_deg,
        speed_mps=min(cfg.start.speed_mps, cfg.truck_params.max_speed_mps),
        accel_mps2=0.0,
        odometer_m=0.0,
        t_s=0.0,
    )
    log = TrajectoryLog(header={
        "digest": config_digest(cfg),
        "seed": str(cfg.seed),
        "version": __version__,
        "driver": "HUMAN",
    })

    duration_ms = round(cfg.duration_s * 1000)
    dt_ms = cfg.dt_ms
    pending: list[tuple[float, int, spatnet.SpatMessage]] = []
    seq = 0
    wall0 = time.monotonic()
    coasting_out = False

    try:
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

            if not coasting_out:
                line = json.dumps({
                    "t_ms": t_ms,
                    "d_sig_m": record.d_sig_m,
                    "phase": record.phase,
                    "t_used_s": record.t_used_s,
                    "v_lower_mps": record.band.v_lower_mps,
                    "v_upper_mps": record.band.v_upper_mps,
                    "gating": record.band.gating,
                    "ego_speed_mps": state.speed_mps,
                }, separators=(",", ":")) + "\n"
                if not link.send_line(line) or link.mailbox.disconnected.is_set():
                    coasting_out = True
                    print("live: UI disconnected, coasting to a stop", file=sys.stderr)

            if coasting_out:
                a_cmd = -cfg.driver_params.comfortable_decel_mps2 if state.speed_mps > 0.05 else 0.0
                emergency = False
            else:
                cmd, age = link.mailbox.latest()
                a_cmd, emergency = _human_accel(cmd, age, state.speed_mps, cfg.truck_params)

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

            if coasting_out and state.speed_mps <= 0.05:
                break
            if t_ms + dt_ms > duration_ms or cursor.at_chain_end:
                break
            state = step_truck(state, a_cmd, cfg.truck_params, cfg.dt_s, cursor,
                               allow_emergency=emergency)

            if args.rate > 0.0:
                deadline = wall0 + ((t_ms + dt_ms) / 1000.0) / args.rate
                delay = deadline - time.monotonic()
                if delay > 0.0:
                    time.sleep(delay)
    finally:
        link.close()

    write_log(log, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


# -- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ecodrive",
        description="Connected eco-driving simulator: run corridors, compare drivers, host a live UI.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    common.add_argument("--verbose", action="store_true", help="chatty progress on stderr")

    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", parents=[common], help="run a scenario and write its trajectory log")
    p_run.add_argument("config", help="scenario config file (JSON)")
    p_run.add_argument("-o", "--out", required=True, help="output trajectory log path (CSV)")
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare", parents=[common],
                           help="compare a baseline log against an eco log")
    p_cmp.add_argument("baseline", help="baseline trajectory log")
    p_cmp.add_argument("eco", help="eco trajectory log")
    p_cmp.add_argument("--expect", choices=("acceleration", "deceleration"), default=None,
                       help="scenario family: selects the savings window and narrative checks")
    p_cmp.add_argument("--out", default="reports", help="directory for report, CSV and figures")
    p_cmp.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    p_cmp.set_defaults(func=cmd_compare)

    p_rep = sub.add_parser("replay", parents=[common],
                           help="stream an existing log as advisory wire records")
    p_rep.add_argument("log", help="trajectory log to replay")
    p_rep.add_argument("--endpoint", type=_parse_endpoint, default=None,
                       help="send to HOST:PORT instead of stdout")
    p_rep.add_argument("--realtime", action="store_true", help="pace rows by their timestamps")
    p_rep.set_defaults(func=cmd_replay)

    p_live = sub.add_parser("live", parents=[common],
                            help="host an interactive session for the driver UI")
    p_live.add_argument("config", help="scenario config file (JSON)")
    p_live.add_argument("--bind", type=_parse_endpoint, default=("127.0.0.1", 8765),
                        help="HOST:PORT to serve the UI on (default 127.0.0.1:8765)")
    p_live.add_argument("--ws", action="store_true",
                        help="serve a websocket bridge instead of a plain TCP socket")
    p_live.add_argument("-o", "--out", default="live_session.csv", help="session log path")
    p_live.add_argument("--wait-s", type=float, default=30.0, help="seconds to wait for the UI")
    p_live.add_argument("--rate", type=float, default=1.0,
                        help="wall-clock pacing multiplier; 0 runs unpaced")
    p_live.set_defaults(func=cmd_live)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        name = exc.filename if exc.filename else str(exc)
        print(f"error: no such file: {name}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TimeoutError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ScenarioError, report.ComparisonError, geomap.MapLoadError,
            geomap.MatchError, spatnet.WireError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    raise SystemExit(main())

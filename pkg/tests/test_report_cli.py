"""Comparison report analysis and command-line interface tests."""

import json
import os
import socket
import threading
import time

import pytest

from ecodrive import cli, report
from ecodrive.report import (
    ComparisonError,
    compare_logs,
    cumulative_distance,
    find_crossings,
    render_report,
    report_csv_row,
    trim_to_distance,
)
from ecodrive.scenario import LogRow, TrajectoryLog, read_log
from ecodrive.spatnet import GREEN, RED

from conftest import fixture_path

DIGEST = "ab" * 32


def row(t, speed, d_sig, phase, fuel=1.0):
    return LogRow(
        t_s=float(t), lat=0.0, lon=0.0, speed_mps=float(speed), accel_mps2=0.0,
        d_sig_m=d_sig, phase=phase, v_lower_mps=0.0, v_upper_mps=15.0,
        gating="ACTIVE", fuel_rate_gps=float(fuel),
    )


def make_log(driver, rows, digest=DIGEST):
    header = {"digest": digest, "seed": "7", "version": "0.1.0", "driver": driver}
    return TrajectoryLog(header=header, rows=rows)


def stop_and_go_log(driver="BASELINE"):
    # rolls at the red, waits, departs on green, crosses at t=31
    rows = []
    for t in range(10):  # 100 m out, closing at 10 m/s
        rows.append(row(t, 10.0, 100.0 - 10.0 * t, RED, fuel=4.0))
    for t in range(10, 25):  # held at the line
        rows.append(row(t, 0.0, 5.0, RED, fuel=0.9))
    for i, t in enumerate(range(25, 31)):  # released
        rows.append(row(t, 2.0 * i, max(5.0 - 2.0 * i, 1.0), GREEN, fuel=5.0))
    for t in range(31, 60):  # next block
        rows.append(row(t, 10.0, 300.0 - 10.0 * (t - 31), GREEN, fuel=4.0))
    return make_log(driver, rows)


def glide_log(driver="ECO", digest=DIGEST):
    # carries 8 m/s through the whole approach, crossing without stopping
    rows = []
    d = 100.0
    for t in range(60):
        phase = GREEN if t >= 8 else RED
        rows.append(row(t, 8.0, d if d > 0 else 290.0 + d, phase, fuel=3.0))
        d -= 8.0
    return make_log(driver, rows, digest=digest)


# -- analysis ------------------------------------------------------------------


def test_cumulative_distance_trapezoid():
    log = make_log("BASELINE", [row(0, 10, None, None), row(1, 10, None, None), row(2, 14, None, None)])
    assert cumulative_distance(log) == pytest.approx([0.0, 10.0, 22.0])


def test_trim_to_distance_keeps_prefix():
    log = make_log("BASELINE", [row(t, 10, None, None) for t in range(6)])
    trimmed = trim_to_distance(log, 25.0)
    assert len(trimmed.rows) == 4  # cum 0,10,20,30: first at or past 25 m
    assert trimmed.header == log.header


def test_find_crossings_recovers_time_speed_and_green_onset():
    log = stop_and_go_log()
    crossings = find_crossings(log)
    assert len(crossings) == 1
    c = crossings[0]
    assert c.t_s == pytest.approx(31.0)
    assert c.speed_mps == pytest.approx(10.0)  # speed of the last row before the jump
    assert c.phase == GREEN
    assert c.after_green_s == pytest.approx(6.0)  # green onset at t=25


def test_crossing_detected_when_signal_runs_out():
    rows = [row(0, 10, 25.0, GREEN), row(1, 10, 15.0, GREEN), row(2, 10, None, None)]
    crossings = find_crossings(make_log("ECO", rows))
    assert len(crossings) == 1
    assert crossings[0].t_s == pytest.approx(2.0)


def test_no_crossing_far_from_the_line():
    # a d_sig jump 200 m out is a rematch, not a crossing
    rows = [row(0, 10, 210.0, GREEN), row(1, 10, 200.0, GREEN), row(2, 10, 420.0, GREEN)]
    assert find_crossings(make_log("ECO", rows)) == ()


# -- comparison ------------------------------------------------------------------


def test_compare_rejects_digest_mismatch():
    with pytest.raises(ComparisonError, match="digest"):
        compare_logs(stop_and_go_log(), glide_log(digest="cd" * 32))


def test_compare_rejects_swapped_arguments():
    with pytest.raises(ComparisonError, match="swapped"):
        compare_logs(glide_log(driver="ECO"), stop_and_go_log(driver="BASELINE"))


def test_compare_rejects_unknown_expectation():
    with pytest.raises(ComparisonError, match="expect"):
        compare_logs(stop_and_go_log(), glide_log(), expect="sideways")


def test_compare_rejects_empty_log():
    with pytest.raises(ComparisonError):
        compare_logs(make_log("BASELINE", []), glide_log())


def test_self_comparison_is_zero():
    a, b = stop_and_go_log(), stop_and_go_log()
    rep = compare_logs(a, b)
    assert rep.flags == {"self_comparison_zero": True}
    assert rep.passed
    assert rep.savings_percent == 0.0
    assert rep.stop_delta == 0


def test_synthetic_pair_narrative_flags():
    rep = compare_logs(stop_and_go_log(), glide_log(), expect="acceleration")
    assert rep.flags["baseline_full_stop"] is True
    assert rep.flags["eco_no_full_stop"] is True
    assert rep.flags["eco_uses_less_fuel"] is True
    assert rep.flags["eco_min_speed_gt_3"] is True
    assert rep.window_m <= min(
        cumulative_distance(stop_and_go_log())[-1],
        cumulative_distance(glide_log())[-1],
    )


def test_render_report_lists_every_flag():
    rep = compare_logs(stop_and_go_log(), glide_log(), expect="acceleration")
    text = render_report(rep)
    for name in rep.flags:
        assert name in text
    assert "[PASS]" in text or "[FAIL]" in text


def test_report_csv_row_shape():
    rep = compare_logs(stop_and_go_log(), glide_log(), expect="acceleration")
    header, data = report_csv_row(rep).strip().split("\n")
    assert len(header.split(",")) == len(data.split(",")) == 10
    assert data.split(",")[0] == DIGEST


def test_comparison_figures_written(tmp_path):
    paths = report.save_comparison_figures(stop_and_go_log(), glide_log(), str(tmp_path), "unit")
    assert paths
    for p in paths:
        assert os.path.exists(p)
        assert p.endswith(".png")
        assert os.path.getsize(p) > 1000


# -- command line ------------------------------------------------------------------


@pytest.fixture(scope="module")
def short_cfg(tmp_path_factory):
    with open(fixture_path("accel_baseline.json"), encoding="utf-8") as f:
        doc = json.load(f)
    doc["duration_s"] = 20
    doc["map"] = fixture_path("maps", "mainline.json")
    p = tmp_path_factory.mktemp("cli") / "short.json"
    p.write_text(json.dumps(doc))
    return str(p)


@pytest.fixture(scope="module")
def short_log(short_cfg, tmp_path_factory):
    out = str(tmp_path_factory.mktemp("cli-logs") / "short.csv")
    assert cli.main(["run", short_cfg, "-o", out]) == 0
    return out


def test_run_writes_log_and_reports_path(short_cfg, tmp_path, capsys):
    out = str(tmp_path / "run.csv")
    rc = cli.main(["run", short_cfg, "-o", out])
    captured = capsys.readouterr()
    assert rc == 0
    assert f"wrote {out}" in captured.out
    assert os.path.exists(out)
    assert read_log(out).driver == "BASELINE"


def test_run_is_byte_deterministic(short_cfg, tmp_path):
    a = str(tmp_path / "a.csv")
    b = str(tmp_path / "b.csv")
    assert cli.main(["run", short_cfg, "-o", a]) == 0
    assert cli.main(["run", short_cfg, "-o", b]) == 0
    with open(a, "rb") as fa, open(b, "rb") as fb:
        assert fa.read() == fb.read()


def test_run_missing_config_exits_usage(capsys):
    rc = cli.main(["run", "no-such-config.json", "-o", "/tmp/never.csv"])
    captured = capsys.readouterr()
    assert rc == 2
    assert "error: no such file" in captured.err


def test_compare_self_passes(short_log, tmp_path, capsys):
    out_dir = str(tmp_path / "reports")
    rc = cli.main(["compare", short_log, short_log, "--out", out_dir, "--no-figures"])
    captured = capsys.readouterr()
    assert rc == 0
    assert "self_comparison_zero" in captured.out
    assert os.path.exists(os.path.join(out_dir, "comparison_report.txt"))
    assert os.path.exists(os.path.join(out_dir, "comparison_summary.csv"))


def test_compare_digest_mismatch_exits_usage(short_cfg, short_log, tmp_path, capsys):
    with open(short_cfg, encoding="utf-8") as f:
        doc = json.load(f)
    doc["duration_s"] = 21  # different conditions, different digest
    other_cfg = tmp_path / "other.json"
    other_cfg.write_text(json.dumps(doc))
    other_log = str(tmp_path / "other.csv")
    assert cli.main(["run", str(other_cfg), "-o", other_log]) == 0

    rc = cli.main(["compare", short_log, other_log, "--out", str(tmp_path / "r"), "--no-figures"])
    captured = capsys.readouterr()
    assert rc == 2
    assert "digest" in captured.err


def test_replay_emits_wire_lines(short_log, capsys):
    rc = cli.main(["replay", short_log])
    captured = capsys.readouterr()
    assert rc == 0
    lines = [ln for ln in captured.out.splitlines() if ln.strip()]
    assert len(lines) == len(read_log(short_log).rows)
    first = json.loads(lines[0])
    assert first["t_ms"] == 0
    assert "v_upper_mps" in first and "gating" in first


def test_version_flag():
    with pytest.raises(SystemExit) as exc:
        cli.main(["--version"])
    assert exc.value.code == 0


def test_unknown_subcommand_exits_usage():
    with pytest.raises(SystemExit) as exc:
        cli.main(["frobnicate"])
    assert exc.value.code == 2


def test_live_session_over_tcp(short_cfg, tmp_path):
    port = 20000 + os.getpid() % 20000
    out = str(tmp_path / "live.csv")
    rc_box = {}

    def serve():
        rc_box["rc"] = cli.main([
            "live", short_cfg,
            "--bind", f"127.0.0.1:{port}",
            "-o", out, "--wait-s", "10", "--rate", "0",
        ])

    server = threading.Thread(target=serve)
    server.start()

    sock = None
    for _ in range(100):
        try:
            sock = socket.create_connection(("127.0.0.1", port), timeout=0.2)
            break
        except OSError:
            time.sleep(0.05)
    assert sock is not None, "live host never started listening"

    sock.sendall(b'{"t_ms":0,"throttle":0.6,"brake":0.0}\n')
    buf = b""
    while b"\n" not in buf:
        buf += sock.recv(4096)
    first = json.loads(buf.split(b"\n", 1)[0])
    assert {"t_ms", "phase", "v_upper_mps", "gating", "ego_speed_mps"} <= set(first)
    sock.close()  # hang up: the host coasts out and finishes

    server.join(timeout=30.0)
    assert rc_box.get("rc") == 0
    log = read_log(out)
    assert log.driver == "HUMAN"
    assert log.rows, "live session wrote an empty log"

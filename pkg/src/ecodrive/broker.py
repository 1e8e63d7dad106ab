"""Socket broker streaming phase-and-timing messages at 1 Hz, and the
subscriber client with injected channel impairments.

The broker plays the cloud server role: every period it asks each
controller for its current message and fans the batch out to all connected
subscribers over newline-delimited JSON. A slow subscriber only loses its
own ticks (bounded queue, drop-oldest); it never stalls the clock or other
subscribers. The subscriber applies a ChannelModel locally, delaying and
dropping messages exactly as the deterministic core prescribes.

Run `python -m ecodrive.broker --bind HOST:PORT --scenario CFG` to host a
corridor; see --help for the channel flags used by the tap mode.
"""

from __future__ import annotations

import argparse
import heapq
import socket
import sys
import threading
import time
from collections import deque
from typing import Iterator, Optional, Sequence

from . import spatnet

_RECV_CHUNK = 4096


class _Subscriber:
    """One connected client: bounded tick queue plus a sender thread."""

    def __init__(self, sock: socket.socket, queue_limit: int):
        self.sock = sock
        self.queue: deque[bytes] = deque(maxlen=queue_limit)
        self.ready = threading.Event()
        self.dead = threading.Event()
        self.lock = threading.Lock()

    def push(self, payload: bytes):
        # deque(maxlen) silently evicts the oldest tick for this
        # subscriber only; nobody else is affected.
        with self.lock:
            self.queue.append(payload)
        self.ready.set()

    def run(self):
        try:
            while not self.dead.is_set():
                if not self.ready.wait(timeout=0.2):
                    continue
                while True:
                    with self.lock:
                        if not self.queue:
                            self.ready.clear()
                            break
                        payload = self.queue.popleft()
                    self.sock.sendall(payload)
        except OSError:
            pass
        finally:
            self.dead.set()
            try:
                self.sock.close()
            except OSError:
                pass


class SpatBroker:
    """Pushes each whole-second broadcast batch to every subscriber."""

    def __init__(
        self,
        controllers: Sequence[spatnet.FixedTimeController],
        period_s: float = 1.0,
        queue_limit: int = 16,
    ):
        if period_s <= 0.0:
            raise ValueError("period_s must be > 0")
        self.controllers = list(controllers)
        self.period_s = period_s
        self.queue_limit = queue_limit
        self._subs: list[_Subscriber] = []
        self._subs_lock = threading.Lock()
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self._listener: Optional[socket.socket] = None
        self.address: Optional[tuple[str, int]] = None

    def start(self, host: str = "127.0.0.1", port: int = 0) -> tuple[str, int]:
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        listener.bind((host, port))
        listener.listen()
        listener.settimeout(0.2)
        self._listener = listener
        self.address = listener.getsockname()[:2]

        accept_t = threading.Thread(target=self._accept_loop, name="spat-broker-accept", daemon=True)
        pace_t = threading.Thread(target=self._pace_loop, name="spat-broker-pace", daemon=True)
        self._threads = [accept_t, pace_t]
        accept_t.start()
        pace_t.start()
        return self.address

    def stop(self):
        self._stop.set()
        if self._listener is not None:
            try:
                self._listener.close()
            except OSError:
                pass
        with self._subs_lock:
            subs = list(self._subs)
        for sub in subs:
            sub.dead.set()
            try:
                sub.sock.close()
            except OSError:
                pass
        for t in self._threads:
            t.join(timeout=2.0)

    def _accept_loop(self):
        assert self._listener is not None
        while not self._stop.is_set():
            try:
                sock, _ = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            sub = _Subscriber(sock, self.queue_limit)
            with self._subs_lock:
                self._subs.append(sub)
            threading.Thread(target=sub.run, name="spat-broker-send", daemon=True).start()

    def _pace_loop(self):
        t0 = time.monotonic()
        k = 0
        while not self._stop.is_set():
            batch = spatnet.broadcast_tick(self.controllers, float(k))
            payload = "".join(spatnet.encode_message(m) for m in batch).encode("utf-8")
            with self._subs_lock:
                self._subs = [s for s in self._subs if not s.dead.is_set()]
                subs = list(self._subs)
            for sub in subs:
                sub.push(payload)
            k += 1
            deadline = t0 + k * self.period_s
            while not self._stop.is_set():
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    break
                self._stop.wait(min(remaining, 0.2))


def subscribe(
    endpoint: tuple[str, int],
    channel: Optional[spatnet.ChannelModel] = None,
    connect_timeout_s: float = 5.0,
) -> Iterator[spatnet.SpatMessage]:
    """Yield messages from a broker, shaped by an optional channel model.

    Delays are realized against the broker's scenario clock: the first
    received timestamp anchors scenario time to the local wall clock, and
    each surviving message is yielded once its channel delivery time comes
    due. Per-group delivery order is preserved. The stream ends when the
    broker closes the connection.
    """

    sock = socket.create_connection(endpoint, timeout=connect_timeout_s)
    sock.settimeout(0.05)
    heap: list[tuple[float, int, spatnet.SpatMessage]] = []
    seq = 0
    anchor: Optional[tuple[float, int]] = None  # (wall_s, scenario_ms)
    buf = b""
    eof = False
    try:
        while True:
            now = time.monotonic()
            while heap and heap[0][0] <= now:
                yield heapq.heappop(heap)[2]
            if eof and not heap:
                return
            try:
                chunk = sock.recv(_RECV_CHUNK)
                if not chunk:
                    eof = True
                    continue
                buf += chunk
            except socket.timeout:
                continue
            except OSError:
                eof = True
                continue
            while b"\n" in buf:
                line, buf = buf.split(b"\n", 1)
                if not line.strip():
                    continue
                msg = spatnet.decode_message(line.decode("utf-8"))
                if anchor is None:
                    anchor = (time.monotonic(), msg.timestamp_ms)
                if channel is None:
                    deliver_ms = float(msg.timestamp_ms)
                else:
                    offered = channel.offer(msg)
                    if offered is None:
                        continue
                    deliver_ms = offered
                wall = anchor[0] + (deliver_ms - anchor[1]) / 1000.0
                heapq.heappush(heap, (wall, seq, msg))
                seq += 1
    finally:
        try:
            sock.close()
        except OSError:
            pass


def _parse_bind(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise argparse.ArgumentTypeError(f"--bind expects HOST:PORT, got {text!r}")
    return host, int(port)


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="python -m ecodrive.broker",
        description="Host a 1 Hz signal phase-and-timing broker, or tap one through a lossy channel.",
    )
    parser.add_argument("--bind", type=_parse_bind, default=("127.0.0.1", 8571),
                        help="HOST:PORT to serve on (default 127.0.0.1:8571)")
    parser.add_argument("--scenario", required=True,
                        help="scenario config file supplying the phase plans")
    parser.add_argument("--tap", action="store_true",
                        help="connect to --bind instead of serving, printing received messages")
    parser.add_argument("--latency-ms", type=float, default=100.0, help="tap channel latency (default 100)")
    parser.add_argument("--jitter-ms", type=float, default=0.0, help="tap channel jitter (default 0)")
    parser.add_argument("--drop", type=float, default=0.0, help="tap channel drop probability (default 0)")
    parser.add_argument("--seed", type=int, default=0, help="tap channel random seed")
    args = parser.parse_args(argv)

    from .scenario import load_scenario

    cfg = load_scenario(args.scenario)
    if args.tap:
        channel = spatnet.ChannelModel(args.latency_ms, args.jitter_ms, args.drop, args.seed)
        try:
            for msg in subscribe(args.bind, channel):
                sys.stdout.write(spatnet.encode_message(msg))
                sys.stdout.flush()
        except KeyboardInterrupt:
            pass
        return 0

    broker = SpatBroker(cfg.controllers())
    host, port = broker.start(*args.bind)
    print(f"serving {len(broker.controllers)} signal group(s) on {host}:{port}", file=sys.stderr)
    try:
        while True:
            time.sleep(0.5)
    except KeyboardInterrupt:
        return 0
    finally:
        broker.stop()


if __name__ == "__main__":
    raise SystemExit(main())

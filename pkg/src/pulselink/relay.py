"""Two-party session relay over newline-delimited JSON / TCP.

Each player's sample and profile messages are forwarded to the session
partner through a bounded per-connection queue.  Biosignals have
last-value semantics, so under backpressure the oldest queued sample is
evicted rather than blocking the sender: fresh data always wins.  The
last profile per player is cached and re-sent to a late-joining partner.

Concurrency: one reader and one writer thread per connection.  A reader
never blocks on a slow partner (it only appends to the partner's bounded
queue); only the partner's own writer thread blocks on its socket.
"""

from __future__ import annotations

import logging
import socket
import threading
import time
from collections import deque
from dataclasses import dataclass

from . import protocol
from .protocol import ProtocolError, WireMessage

log = logging.getLogger(__name__)

DEFAULT_PORT = 8765
DEFAULT_QUEUE_CAPACITY = 64
DEFAULT_RATE_LIMIT_PER_S = 50.0


@dataclass(frozen=True)
class RelayConfig:
    """Tuning knobs for a relay instance.

    rate_limit_per_s of None disables the per-player sample rate cap;
    send_buffer_bytes, when set, fixes SO_SNDBUF on accepted sockets
    (small values keep latency bounded and make backpressure testable).
    """

    queue_capacity: int = DEFAULT_QUEUE_CAPACITY
    rate_limit_per_s: float | None = DEFAULT_RATE_LIMIT_PER_S
    send_buffer_bytes: int | None = None

    def __post_init__(self) -> None:
        if self.queue_capacity < 1:
            raise ValueError("queue_capacity must be at least 1")
        if self.rate_limit_per_s is not None and self.rate_limit_per_s <= 0:
            raise ValueError("rate_limit_per_s must be positive or None")


class Outbox:
    """Per-connection outbound buffers drained by the writer thread.

    Control replies (joined / pong / error) are never dropped; forwarded
    data messages share a bounded queue where the oldest queued sample is
    evicted when full.  Closing wakes the writer, which drains whatever
    is left before exiting.
    """

    def __init__(self, capacity: int):
        self._cond = threading.Condition()
        self._control: deque[WireMessage] = deque()
        self._data: deque[WireMessage] = deque()
        self._capacity = capacity
        self._closed = False

    def put_control(self, msg: WireMessage) -> None:
        with self._cond:
            if self._closed:
                return
            self._control.append(msg)
            self._cond.notify()

    def put_data(self, msg: WireMessage) -> int:
        """Enqueue a forwarded message; returns the number of evictions (0 or 1)."""
        with self._cond:
            if self._closed:
                return 1
            dropped = 0
            if len(self._data) >= self._capacity:
                self._evict_locked()
                dropped = 1
            self._data.append(msg)
            self._cond.notify()
            return dropped

    def _evict_locked(self) -> None:
        # Prefer dumping a stale sample; profiles and anything else only go
        # when no sample is queued.
        for index, queued in enumerate(self._data):
            if queued.kind == "sample":
                del self._data[index]
                return
        self._data.popleft()

    def pop(self, timeout: float | None = None) -> WireMessage | None:
        """Next message to write, control first; None once closed and drained."""
        with self._cond:
            while not self._control and not self._data:
                if self._closed:
                    return None
                if not self._cond.wait(timeout=timeout):
                    return None
            if self._control:
                return self._control.popleft()
            return self._data.popleft()

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()

    @property
    def closed(self) -> bool:
        with self._cond:
            return self._closed

    def __len__(self) -> int:
        with self._cond:
            return len(self._data)


class Session:
    """State for one two-player session: slots, cached profiles, counters."""

    def __init__(self, session_id: str, config: RelayConfig):
        self.session_id = session_id
        self._config = config
        self._lock = threading.Lock()
        self._players: dict[str, Outbox] = {}
        self._profiles: dict[str, WireMessage] = {}
        self._forwarded = {pid: 0 for pid in protocol.PLAYER_IDS}
        self._dropped = {pid: 0 for pid in protocol.PLAYER_IDS}

    def join(self, player_id: str, outbox: Outbox) -> bool:
        """Register a player; returns whether the partner is already present.

        Queues the join acknowledgement for the newcomer, an arrival notice
        for the waiting partner, and re-sends the partner's cached profile.
        """
        with self._lock:
            if len(self._players) >= 2:
                raise ProtocolError("session_full", "session already has two players")
            if player_id in self._players:
                raise ProtocolError(
                    "player_taken", f"player {player_id!r} already joined"
                )
            partner_id = next(iter(self._players), None)
            self._players[player_id] = outbox
            outbox.put_control(
                protocol.joined_message(
                    self.session_id, player_id, partner_present=partner_id is not None
                )
            )
            if partner_id is not None:
                self._players[partner_id].put_control(
                    protocol.joined_message(
                        self.session_id, player_id, partner_present=True
                    )
                )
                cached = self._profiles.get(partner_id)
                if cached is not None:
                    self._forward_locked(partner_id, cached)
            return partner_id is not None

    def forward(self, from_player: str, msg: WireMessage) -> None:
        """Queue a data message for the partner; an absent partner counts a drop."""
        with self._lock:
            if msg.kind == "profile":
                self._profiles[from_player] = msg
            self._forward_locked(from_player, msg)

    def _forward_locked(self, from_player: str, msg: WireMessage) -> None:
        partner = next(
            (box for pid, box in self._players.items() if pid != from_player), None
        )
        if partner is None:
            self._dropped[from_player] += 1
            return
        self._forwarded[from_player] += 1
        self._dropped[from_player] += partner.put_data(msg)

    def leave(self, player_id: str) -> None:
        with self._lock:
            self._players.pop(player_id, None)

    @property
    def empty(self) -> bool:
        with self._lock:
            return not self._players

    def stats(self) -> dict:
        with self._lock:
            return {
                "session_id": self.session_id,
                "players": sorted(self._players),
                "forwarded": dict(self._forwarded),
                "dropped": dict(self._dropped),
            }


class _TokenBucket:
    """Per-connection sample rate cap; burst allowance is one second's worth."""

    def __init__(self, rate_per_s: float):
        self._rate = rate_per_s
        self._tokens = rate_per_s
        self._last = time.monotonic()

    def allow(self) -> bool:
        now = time.monotonic()
        self._tokens = min(self._rate, self._tokens + (now - self._last) * self._rate)
        self._last = now
        if self._tokens >= 1.0:
            self._tokens -= 1.0
            return True
        return False


class _Connection:
    """Reader/writer pair for one accepted socket."""

    def __init__(self, server: "RelayServer", sock: socket.socket, peer: str):
        self.server = server
        self.sock = sock
        self.peer = peer
        self.outbox = Outbox(server.config.queue_capacity)
        self.session: Session | None = None
        self.player_id: str | None = None
        limit = server.config.rate_limit_per_s
        self._bucket = _TokenBucket(limit) if limit else None
        self.reader = threading.Thread(
            target=self._read_loop, name=f"relay-read-{peer}", daemon=True
        )
        self.writer = threading.Thread(
            target=self._write_loop, name=f"relay-write-{peer}", daemon=True
        )

    def start(self) -> None:
        self.reader.start()
        self.writer.start()

    # -- writer ---------------------------------------------------------

    def _write_loop(self) -> None:
        try:
            while True:
                msg = self.outbox.pop(timeout=1.0)
                if msg is None:
                    if self.outbox.closed:  # drained after close
                        break
                    continue
                self.sock.sendall(protocol.encode(msg))
        except OSError:
            pass
        finally:
            try:
                self.sock.shutdown(socket.SHUT_WR)
            except OSError:
                pass

    # -- reader ---------------------------------------------------------

    def _read_loop(self) -> None:
        rfile = self.sock.makefile("rb")
        try:
            while True:
                line = rfile.readline(protocol.MAX_LINE_BYTES + 1)
                if not line:
                    break
                if not line.endswith(b"\n"):
                    if len(line) > protocol.MAX_LINE_BYTES:
                        self._reply_error("line_too_long", "line exceeds limit")
                    break  # oversized or truncated by EOF
                try:
                    msg = protocol.decode(line)
                except ProtocolError as exc:
                    self._reply_error(exc.code, exc.text)
                    if exc.code in protocol.FATAL_CODES:
                        break
                    continue
                if not self._dispatch(msg):
                    break
        except OSError:
            pass
        finally:
            rfile.close()
            self._teardown()

    def _dispatch(self, msg: WireMessage) -> bool:
        """Handle one message; False ends the connection."""
        if msg.kind == "ping":
            self.outbox.put_control(protocol.pong_for(msg))
            return True
        if msg.kind == "join":
            return self._handle_join(msg)
        if msg.kind == "leave":
            return False
        if msg.kind in ("sample", "profile"):
            return self._handle_data(msg)
        # joined / error / pong are relay-to-client only; ignore echoes.
        return True

    def _handle_join(self, msg: WireMessage) -> bool:
        if self.session is not None:
            self._reply_error("already_joined", "connection already joined a session")
            return False
        if msg.player_id is None:
            self._reply_error("bad_field", "join needs player_id")
            return False
        try:
            self.session = self.server._join_session(
                msg.session_id, msg.player_id, self.outbox
            )
        except ProtocolError as exc:
            self._reply_error(exc.code, exc.text)
            return False
        self.player_id = msg.player_id
        return True

    def _handle_data(self, msg: WireMessage) -> bool:
        if self.session is None:
            self._reply_error("not_joined", "join a session first")
            return False
        if msg.session_id != self.session.session_id:
            self._reply_error("bad_session", "session_id does not match join")
            return False
        if msg.kind == "sample":
            if self._bucket is not None and not self._bucket.allow():
                self._reply_error("rate_limited", "sample rate cap exceeded")
                return True
            try:
                msg.sample()  # range/type validation only
            except (ProtocolError, ValueError) as exc:
                self._reply_error("bad_sample", str(exc))
                return True
        else:
            try:
                msg.profile()
            except (ProtocolError, ValueError) as exc:
                self._reply_error("bad_profile", str(exc))
                return True
        self.session.forward(self.player_id, msg)
        return True

    def _reply_error(self, code: str, text: str) -> None:
        session_id = self.session.session_id if self.session else ""
        self.outbox.put_control(protocol.error_message(session_id, code, text))

    def _teardown(self) -> None:
        if self.session is not None:
            self.session.leave(self.player_id)
            self.server._reap_session(self.session)
            self.session = None
        self.outbox.close()
        self.server._forget(self)

    def close(self) -> None:
        self.outbox.close()
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass


class RelayServer:
    """Accepts relay connections and serves sessions until stopped."""

    def __init__(
        self,
        host: str = "127.0.0.1",
        port: int = 0,
        config: RelayConfig | None = None,
    ):
        self.config = config or RelayConfig()
        self._host = host
        self._port = port
        self._listener: socket.socket | None = None
        self._accept_thread: threading.Thread | None = None
        self._lock = threading.Lock()
        self._sessions: dict[str, Session] = {}
        self._final_stats: dict[str, dict] = {}
        self._connections: set[_Connection] = set()
        self._stopped = threading.Event()

    # -- lifecycle ------------------------------------------------------

    def start(self) -> None:
        """Bind and start accepting; returns once the port is listening."""
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        listener.bind((self._host, self._port))
        listener.listen(16)
        self._listener = listener
        self._port = listener.getsockname()[1]
        self._accept_thread = threading.Thread(
            target=self._accept_loop, name="relay-accept", daemon=True
        )
        self._accept_thread.start()
        log.info("relay listening on %s:%d", self._host, self._port)

    @property
    def address(self) -> tuple[str, int]:
        return (self._host, self._port)

    def serve_forever(self) -> None:
        """start() if needed, then block until stop() or KeyboardInterrupt."""
        if self._listener is None:
            self.start()
        try:
            self._stopped.wait()
        except KeyboardInterrupt:
            pass
        finally:
            self.stop()

    def stop(self) -> None:
        self._stopped.set()
        if self._listener is not None:
            try:
                # close() alone does not wake a thread blocked in accept()
                self._listener.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            try:
                self._listener.close()
            except OSError:
                pass
        with self._lock:
            connections = list(self._connections)
        for conn in connections:
            conn.close()
        if self._accept_thread is not None:
            self._accept_thread.join(timeout=2.0)

    # -- observability ----------------------------------------------------

    def session_stats(self, session_id: str) -> dict | None:
        """Counters for a session; retains the last snapshot after it ends."""
        with self._lock:
            session = self._sessions.get(session_id)
            if session is not None:
                return session.stats()
            return self._final_stats.get(session_id)

    # -- internals --------------------------------------------------------

    def _accept_loop(self) -> None:
        while not self._stopped.is_set():
            try:
                sock, addr = self._listener.accept()
            except OSError:
                break
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            if self.config.send_buffer_bytes is not None:
                sock.setsockopt(
                    socket.SOL_SOCKET, socket.SO_SNDBUF, self.config.send_buffer_bytes
                )
            conn = _Connection(self, sock, f"{addr[0]}:{addr[1]}")
            with self._lock:
                self._connections.add(conn)
            conn.start()

    def _join_session(self, session_id: str, player_id: str, outbox: Outbox) -> Session:
        """Resolve the session and register the player in one atomic step.

        Holding the server lock through the join means a concurrent reap of
        an emptied session can never strand a joiner in an orphaned object.
        """
        with self._lock:
            session = self._sessions.get(session_id)
            if session is None:
                session = Session(session_id, self.config)
                self._sessions[session_id] = session
            session.join(player_id, outbox)
            return session

    def _reap_session(self, session: Session) -> None:
        with self._lock:
            if session.empty and self._sessions.get(session.session_id) is session:
                self._final_stats[session.session_id] = session.stats()
                del self._sessions[session.session_id]

    def _forget(self, conn: _Connection) -> None:
        with self._lock:
            self._connections.discard(conn)

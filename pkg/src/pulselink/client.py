"""Client handle for the relay: join a session, stream samples, receive
the partner's messages, and measure round-trip time with ping/pong.

A background thread reads the socket and sorts messages: pongs resolve
pending pings, everything else lands in an inbox consumed with poll()
or receive().  Sends and receives may come from different threads; each
individual operation is atomic.
"""

from __future__ import annotations

import itertools
import socket
import threading
import time
from collections import deque

from . import protocol
from .emotion import BiosignalSample, CalibrationProfile
from .protocol import ProtocolError, WireMessage

DEFAULT_TIMEOUT = 5.0


class RelayError(Exception):
    """Join refused or connection-level failure, with the relay's code."""

    def __init__(self, code: str, text: str = ""):
        super().__init__(f"{code}: {text}" if text else code)
        self.code = code
        self.text = text


class RelayClient:
    """One player's connection to a relay session."""

    def __init__(self, sock: socket.socket, session_id: str, player_id: str):
        self._sock = sock
        self.session_id = session_id
        self.player_id = player_id
        self.partner_present = False
        self._send_lock = threading.Lock()
        self._inbox: deque[WireMessage] = deque()
        self._inbox_cond = threading.Condition()
        self._pings: dict[int, threading.Event] = {}
        self._ping_tokens = itertools.count(1)
        self._join_event = threading.Event()
        self._join_error: ProtocolError | None = None
        self._closed = threading.Event()
        self._reader = threading.Thread(
            target=self._read_loop, name=f"relay-client-{player_id}", daemon=True
        )

    @classmethod
    def connect(
        cls,
        address: tuple[str, int],
        session_id: str,
        player_id: str,
        timeout: float = DEFAULT_TIMEOUT,
    ) -> "RelayClient":
        """Dial the relay and join; raises RelayError with the relay's code
        when the join is refused (full session, duplicate player id)."""
        if player_id not in protocol.PLAYER_IDS:
            raise ValueError(f"player_id must be one of {protocol.PLAYER_IDS}")
        sock = socket.create_connection(address, timeout=timeout)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        sock.settimeout(None)
        client = cls(sock, session_id, player_id)
        client._reader.start()
        client._send(protocol.join_message(session_id, player_id))
        if not client._join_event.wait(timeout):
            client.close(leave=False)
            raise RelayError("timeout", "no join acknowledgement from relay")
        if client._join_error is not None:
            client.close(leave=False)
            raise RelayError(client._join_error.code, client._join_error.text)
        return client

    # -- sending ----------------------------------------------------------

    def _send(self, msg: WireMessage) -> None:
        data = protocol.encode(msg)
        with self._send_lock:
            self._sock.sendall(data)

    def send_sample(self, sample: BiosignalSample) -> None:
        self._send(protocol.sample_message(self.session_id, self.player_id, sample))

    def send_profile(self, profile: CalibrationProfile) -> None:
        self._send(protocol.profile_message(self.session_id, self.player_id, profile))

    # -- receiving --------------------------------------------------------

    def poll(self) -> list[WireMessage]:
        """Drain the inbox without blocking; messages are in arrival order."""
        with self._inbox_cond:
            messages = list(self._inbox)
            self._inbox.clear()
        return messages

    def receive(self, timeout: float | None = None) -> WireMessage | None:
        """Next inbox message, waiting up to timeout; None when nothing arrived."""
        deadline = None if timeout is None else time.monotonic() + timeout
        with self._inbox_cond:
            while not self._inbox:
                if self._closed.is_set():
                    return None
                remaining = None if deadline is None else deadline - time.monotonic()
                if remaining is not None and remaining <= 0:
                    return None
                self._inbox_cond.wait(timeout=remaining)
            return self._inbox.popleft()

    def ping(self, timeout: float = 2.0) -> float:
        """Round-trip time in seconds for one ping/pong exchange."""
        token = next(self._ping_tokens)
        event = threading.Event()
        self._pings[token] = event
        start = time.perf_counter()
        self._send(protocol.ping_message(self.session_id, token))
        try:
            if not event.wait(timeout):
                raise TimeoutError(f"no pong within {timeout} s")
        finally:
            self._pings.pop(token, None)
        return time.perf_counter() - start

    # -- lifecycle --------------------------------------------------------

    @property
    def closed(self) -> bool:
        return self._closed.is_set()

    def close(self, leave: bool = True) -> None:
        if leave and not self._closed.is_set():
            try:
                self._send(protocol.leave_message(self.session_id, self.player_id))
            except OSError:
                pass
        self._closed.set()
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()
        if threading.current_thread() is not self._reader:
            self._reader.join(timeout=2.0)
        with self._inbox_cond:
            self._inbox_cond.notify_all()

    def __enter__(self) -> "RelayClient":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    # -- reader thread ------------------------------------------------------

    def _read_loop(self) -> None:
        rfile = self._sock.makefile("rb")
        try:
            while True:
                line = rfile.readline(protocol.MAX_LINE_BYTES + 1)
                if not line or not line.endswith(b"\n"):
                    break
                try:
                    msg = protocol.decode(line)
                except ProtocolError:
                    continue  # relay speaking a newer dialect; skip the line
                self._handle(msg)
        except OSError:
            pass
        finally:
            rfile.close()
            if not self._join_event.is_set():
                self._join_error = ProtocolError(
                    "disconnected", "relay closed the connection before join completed"
                )
                self._join_event.set()
            self._closed.set()
            with self._inbox_cond:
                self._inbox_cond.notify_all()

    def _handle(self, msg: WireMessage) -> None:
        if msg.kind == "pong":
            event = self._pings.get(msg.t_ms)
            if event is not None:
                event.set()
            return
        if msg.kind == "joined":
            if msg.player_id == self.player_id and not self._join_event.is_set():
                self.partner_present = bool(msg.partner_present)
                self._join_event.set()
                return
            # partner arrival notice
            self.partner_present = True
        elif msg.kind == "error" and not self._join_event.is_set():
            self._join_error = ProtocolError(msg.code or "error", msg.text or "")
            self._join_event.set()
            return
        with self._inbox_cond:
            self._inbox.append(msg)
            self._inbox_cond.notify_all()

"""Wire protocol shared by the relay and its clients.

One UTF-8 JSON object per line over a TCP stream, at most MAX_LINE_BYTES
per line including the newline.  Unknown object fields are ignored so
the format can grow; an unknown "kind" is answered with error code
"bad_kind".  Timestamps are integers (milliseconds); biosignal values
are encoded with at most 3 fractional digits.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

from .emotion import BiosignalSample, CalibrationProfile

MAX_LINE_BYTES = 4096
KINDS = frozenset(
    {"join", "joined", "profile", "sample", "leave", "error", "ping", "pong"}
)
PLAYER_IDS = ("A", "B")

# Codes after which the relay closes the connection; the rest are answered
# and the stream continues (bad_kind stays open so newer peers can degrade).
FATAL_CODES = frozenset(
    {
        "bad_json",
        "bad_field",
        "line_too_long",
        "not_joined",
        "already_joined",
        "bad_session",
        "session_full",
        "player_taken",
    }
)


class ProtocolError(Exception):
    """A message violating the wire format; code matches the error reply."""

    def __init__(self, code: str, text: str):
        super().__init__(f"{code}: {text}")
        self.code = code
        self.text = text


@dataclass(frozen=True)
class WireMessage:
    """One framed protocol unit; unused payload fields stay None."""

    kind: str
    session_id: str
    player_id: str | None = None
    t_ms: int | None = None  # sample timestamp, or ping/pong echo token
    hr_bpm: float | None = None
    eda_us: float | None = None
    hr_rest: float | None = None
    hr_stress: float | None = None
    eda_rest: float | None = None
    eda_stress: float | None = None
    code: str | None = None
    text: str | None = None
    partner_present: bool | None = None

    def sample(self) -> BiosignalSample:
        """Materialise the sample payload, enforcing its invariants."""
        if self.t_ms is None or self.hr_bpm is None or self.eda_us is None:
            raise ProtocolError("bad_field", "sample needs t_ms, hr_bpm and eda_us")
        return BiosignalSample(self.t_ms, self.hr_bpm, self.eda_us)

    def profile(self) -> CalibrationProfile:
        """Materialise the profile payload, enforcing its invariants."""
        anchors = (self.hr_rest, self.hr_stress, self.eda_rest, self.eda_stress)
        if any(anchor is None for anchor in anchors):
            raise ProtocolError("bad_field", "profile needs all four anchors")
        return CalibrationProfile(*anchors)


def join_message(session_id: str, player_id: str) -> WireMessage:
    return WireMessage("join", session_id, player_id=player_id)


def joined_message(
    session_id: str, player_id: str, partner_present: bool
) -> WireMessage:
    """Join acknowledgement / partner-arrival notice; player_id names the joiner."""
    return WireMessage(
        "joined", session_id, player_id=player_id, partner_present=partner_present
    )


def sample_message(
    session_id: str, player_id: str, sample: BiosignalSample
) -> WireMessage:
    return WireMessage(
        "sample",
        session_id,
        player_id=player_id,
        t_ms=sample.t_ms,
        hr_bpm=sample.hr_bpm,
        eda_us=sample.eda_us,
    )


def profile_message(
    session_id: str, player_id: str, profile: CalibrationProfile
) -> WireMessage:
    return WireMessage(
        "profile",
        session_id,
        player_id=player_id,
        hr_rest=profile.hr_rest,
        hr_stress=profile.hr_stress,
        eda_rest=profile.eda_rest,
        eda_stress=profile.eda_stress,
    )


def leave_message(session_id: str, player_id: str) -> WireMessage:
    return WireMessage("leave", session_id, player_id=player_id)


def error_message(session_id: str, code: str, text: str) -> WireMessage:
    return WireMessage("error", session_id, code=code, text=text)


def ping_message(session_id: str, token: int) -> WireMessage:
    return WireMessage("ping", session_id, t_ms=token)


def pong_for(ping: WireMessage) -> WireMessage:
    """Pong echoes the ping payload back unchanged."""
    return replace(ping, kind="pong")


_NUMERIC_FIELDS = (
    "hr_bpm",
    "eda_us",
    "hr_rest",
    "hr_stress",
    "eda_rest",
    "eda_stress",
)


def encode(msg: WireMessage) -> bytes:
    """Serialise one message to its newline-terminated JSON line."""
    obj: dict = {"kind": msg.kind, "session_id": msg.session_id}
    if msg.player_id is not None:
        obj["player_id"] = msg.player_id
    if msg.t_ms is not None:
        obj["t_ms"] = msg.t_ms
    for name in _NUMERIC_FIELDS:
        value = getattr(msg, name)
        if value is not None:
            obj[name] = round(float(value), 3)
    if msg.code is not None:
        obj["code"] = msg.code
    if msg.text is not None:
        obj["text"] = msg.text
    if msg.partner_present is not None:
        obj["partner_present"] = msg.partner_present
    line = json.dumps(obj, separators=(",", ":")).encode("utf-8") + b"\n"
    if len(line) > MAX_LINE_BYTES:
        raise ProtocolError("line_too_long", f"{len(line)} bytes exceeds {MAX_LINE_BYTES}")
    return line


def _string_field(obj: dict, name: str, required: bool = True) -> str | None:
    value = obj.get(name)
    if value is None:
        if required:
            raise ProtocolError("bad_field", f"missing {name}")
        return None
    if not isinstance(value, str):
        raise ProtocolError("bad_field", f"{name} must be a string")
    return value


def _int_field(obj: dict, name: str) -> int | None:
    value = obj.get(name)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, int):
        raise ProtocolError("bad_field", f"{name} must be an integer")
    return value


def _number_field(obj: dict, name: str) -> float | None:
    value = obj.get(name)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ProtocolError("bad_field", f"{name} must be a number")
    return float(value)


def decode(line: bytes | str) -> WireMessage:
    """Parse one line into a WireMessage, ignoring unknown fields.

    Raises ProtocolError with a code suitable for the error reply; field
    presence beyond (kind, session_id) is the receiver's concern.
    """
    if isinstance(line, bytes):
        if len(line) > MAX_LINE_BYTES:
            raise ProtocolError(
                "line_too_long", f"{len(line)} bytes exceeds {MAX_LINE_BYTES}"
            )
        try:
            text = line.decode("utf-8")
        except UnicodeDecodeError:
            raise ProtocolError("bad_json", "line is not valid UTF-8") from None
    else:
        text = line
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProtocolError("bad_json", str(exc)) from None
    if not isinstance(obj, dict):
        raise ProtocolError("bad_json", "expected a JSON object")

    kind = _string_field(obj, "kind")
    session_id = _string_field(obj, "session_id")
    if kind not in KINDS:
        raise ProtocolError("bad_kind", f"unknown kind {kind!r}")
    player_id = _string_field(obj, "player_id", required=False)
    if player_id is not None and player_id not in PLAYER_IDS:
        raise ProtocolError("bad_field", f"player_id must be one of {PLAYER_IDS}")

    partner_present = obj.get("partner_present")
    if partner_present is not None and not isinstance(partner_present, bool):
        raise ProtocolError("bad_field", "partner_present must be a boolean")

    return WireMessage(
        kind=kind,
        session_id=session_id,
        player_id=player_id,
        t_ms=_int_field(obj, "t_ms"),
        hr_bpm=_number_field(obj, "hr_bpm"),
        eda_us=_number_field(obj, "eda_us"),
        hr_rest=_number_field(obj, "hr_rest"),
        hr_stress=_number_field(obj, "hr_stress"),
        eda_rest=_number_field(obj, "eda_rest"),
        eda_stress=_number_field(obj, "eda_stress"),
        code=_string_field(obj, "code", required=False),
        text=_string_field(obj, "text", required=False),
        partner_present=partner_present,
    )

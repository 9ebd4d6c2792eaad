"""One player's session pipeline.

Publishes the player's own (simulated) biosignals to the relay while the
partner's incoming samples are mapped, using the partner's calibration
profile, into five-level frames that drive beat-aligned waveform
rendering.  An offline variant consumes a trace directly and is fully
deterministic, which makes the mapping/synthesis path testable without a
network.

Mapping happens on the receiver: each client publishes its own profile
so the partner can interpret its raw values.  Between partner samples
the last parameters persist (zero-order hold), and a parameter change
only takes effect at the next beat boundary so every beat starts at
amplitude zero.
"""

from __future__ import annotations

import math
import threading
import time
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence, TextIO

import numpy as np

from .client import RelayClient
from .emotion import (
    DEFAULT_HYSTERESIS,
    DEFAULT_PROFILE,
    BiosignalSample,
    CalibrationProfile,
    EmotionLevels,
    apply_hysteresis,
    levels_to_params,
    quantize,
)
from .relay import RelayConfig, RelayServer
from .simulate import ScenarioSpec, format_decimal, generate
from .synth import (
    DEFAULT_SAMPLE_RATE,
    AudioBuffer,
    HeartbeatParams,
    render_beat,
    render_stream,
)

FRAME_HEADER = "t_ms,arousal_level,valence_level,h_bpm,f_hz"
_EPS_S = 1e-9  # tolerance when comparing beat boundaries to timestamps


@dataclass(frozen=True)
class LevelFrame:
    """The partner's current five-level state and the parameters it implies."""

    t_ms: int
    arousal_level: int
    valence_level: int
    h_bpm: float
    f_hz: float
    source: str = "partner"


def format_frame(frame: LevelFrame) -> str:
    return ",".join(
        (
            str(frame.t_ms),
            str(frame.arousal_level),
            str(frame.valence_level),
            format_decimal(frame.h_bpm),
            format_decimal(frame.f_hz),
        )
    )


class FrameWriter:
    """Streams frame CSV rows; the header appears only once a frame exists."""

    def __init__(self, sink: TextIO):
        self._sink = sink
        self.count = 0

    def write(self, frame: LevelFrame) -> None:
        if self.count == 0:
            self._sink.write(FRAME_HEADER + "\n")
        self._sink.write(format_frame(frame) + "\n")
        self._sink.flush()
        self.count += 1


def emit_frames(sink: TextIO, frames: Iterable[LevelFrame]) -> int:
    """Write frames as CSV rows, flushing per frame; empty input writes nothing."""
    writer = FrameWriter(sink)
    for frame in frames:
        writer.write(frame)
    return writer.count


class PartnerMapper:
    """Maps incoming partner samples to LevelFrames, holding hysteresis state.

    The profile may be swapped mid-stream (the partner's profile can
    arrive after their first samples); levels re-derive from the next
    sample onwards.
    """

    def __init__(
        self,
        profile: CalibrationProfile | None = None,
        base: HeartbeatParams = HeartbeatParams(),
        margin: float = DEFAULT_HYSTERESIS,
    ):
        self.profile = profile or DEFAULT_PROFILE
        self.base = base
        self.margin = margin
        self._arousal: int | None = None
        self._valence: int | None = None

    def set_profile(self, profile: CalibrationProfile) -> None:
        self.profile = profile

    def _level(self, prev: int | None, value: float, lo: float, hi: float) -> int:
        if prev is None:
            return quantize(value, lo, hi)
        return apply_hysteresis(prev, value, lo, hi, self.margin)

    def push(self, sample: BiosignalSample) -> LevelFrame:
        prof = self.profile
        arousal = self._level(self._arousal, sample.hr_bpm, prof.hr_rest, prof.hr_stress)
        valence = self._level(self._valence, sample.eda_us, prof.eda_rest, prof.eda_stress)
        self._arousal, self._valence = arousal, valence
        params = levels_to_params(EmotionLevels(arousal, valence), self.base)
        return LevelFrame(sample.t_ms, arousal, valence, params.h_bpm, params.f_hz)


def map_trace(
    trace: Iterable[BiosignalSample],
    profile: CalibrationProfile | None = None,
    base: HeartbeatParams = HeartbeatParams(),
    margin: float = DEFAULT_HYSTERESIS,
) -> list[LevelFrame]:
    """Map a whole sample sequence through one mapper instance."""
    mapper = PartnerMapper(profile, base, margin)
    return [mapper.push(sample) for sample in trace]


def plan_beats(
    frames: Sequence[LevelFrame], base: HeartbeatParams = HeartbeatParams()
) -> tuple[list[tuple[int, HeartbeatParams]], int, float]:
    """Derive the beat-aligned parameter schedule implied by a frame sequence.

    Beats are anchored at the first frame's timestamp; a frame takes
    effect at the first beat boundary at or after it (zero-order hold in
    between).  Returns (schedule, total_beats, anchor_seconds); the last
    frame still gets one full beat.
    """
    if not frames:
        return [], 0, 0.0
    anchor = frames[0].t_ms / 1000.0
    end = frames[-1].t_ms / 1000.0
    schedule: list[tuple[int, HeartbeatParams]] = []
    params: HeartbeatParams | None = None
    t = anchor
    beat = 0
    idx = 0
    # keep scheduling while boundaries fall inside the trace, and until a
    # frame arriving after the last boundary has had its beat
    while idx < len(frames) or t <= end + _EPS_S:
        latest: LevelFrame | None = None
        while idx < len(frames) and frames[idx].t_ms / 1000.0 <= t + _EPS_S:
            latest = frames[idx]
            idx += 1
        if latest is not None:
            candidate = replace(base, h_bpm=latest.h_bpm, f_hz=latest.f_hz)
            if candidate != params:
                schedule.append((beat, candidate))
                params = candidate
        t += params.period
        beat += 1
    return schedule, beat, anchor


def offline_pipeline(
    trace: Iterable[BiosignalSample],
    profile: CalibrationProfile | None = None,
    base: HeartbeatParams = HeartbeatParams(),
    *,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
    margin: float = DEFAULT_HYSTERESIS,
) -> tuple[AudioBuffer, list[LevelFrame]]:
    """Deterministic no-network variant of the online session path.

    Runs the identical mapping and beat-aligned synthesis on a trace; the
    output is bit-reproducible for identical inputs.  An empty trace
    yields empty frames and zero-length audio.
    """
    frames = map_trace(trace, profile, base, margin)
    if not frames:
        return AudioBuffer(sample_rate, np.zeros(0)), []
    schedule, total_beats, anchor = plan_beats(frames, base)
    audio = render_stream(schedule, total_beats, sample_rate)
    lead = round(anchor * sample_rate)
    samples = audio.samples
    if lead > 0:
        samples = np.concatenate([np.zeros(lead), samples])
    return AudioBuffer(sample_rate, samples), frames


# ---------------------------------------------------------------------------
# online session
# ---------------------------------------------------------------------------


@dataclass
class SessionResult:
    """Everything one session run produced, plus the counters for its report."""

    player_id: str
    session_id: str
    samples_sent: int = 0
    samples_received: int = 0
    frames: list[LevelFrame] = field(default_factory=list)
    received: list[BiosignalSample] = field(default_factory=list)
    rtt_ms: list[float] = field(default_factory=list)
    relay_errors: list[str] = field(default_factory=list)
    relay_dropped: int | None = None  # known only when the relay is in-process
    partner_seen: bool = False
    audio: AudioBuffer | None = None

    @property
    def level_changes(self) -> int:
        return sum(
            1
            for prev, cur in zip(self.frames, self.frames[1:])
            if (prev.arousal_level, prev.valence_level)
            != (cur.arousal_level, cur.valence_level)
        )

    def report(self) -> dict:
        """Counters for the session report JSON document.

        One-way latency is estimated as half the measured ping round trip;
        relay_dropped stays null unless the relay ran in this process.
        """
        return {
            "player_id": self.player_id,
            "session_id": self.session_id,
            "samples_sent": self.samples_sent,
            "samples_received": self.samples_received,
            "frames_emitted": len(self.frames),
            "level_changes": self.level_changes,
            "pings": len(self.rtt_ms),
            "rtt_ms_p50": _percentile(self.rtt_ms, 50),
            "rtt_ms_p95": _percentile(self.rtt_ms, 95),
            "latency_ms_p50": _percentile([rtt / 2 for rtt in self.rtt_ms], 50),
            "latency_ms_p95": _percentile([rtt / 2 for rtt in self.rtt_ms], 95),
            "relay_dropped": self.relay_dropped,
        }


def _percentile(values: Sequence[float], pct: float) -> float | None:
    if not values:
        return None
    data = sorted(values)
    rank = max(0, math.ceil(pct / 100.0 * len(data)) - 1)
    return data[rank]


class _ParamCell:
    """Last-writer-wins handoff from the receiver to the beat renderer."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._params: HeartbeatParams | None = None
        self._first_seen_s: float | None = None

    def set(self, params: HeartbeatParams, session_time_s: float) -> None:
        with self._lock:
            if self._params is None:
                self._first_seen_s = session_time_s
            self._params = params

    def get(self) -> tuple[HeartbeatParams | None, float | None]:
        with self._lock:
            return self._params, self._first_seen_s


def run_session(
    relay_address: tuple[str, int],
    session_id: str,
    player_id: str,
    scenario: ScenarioSpec,
    profile: CalibrationProfile | None = None,
    *,
    frame_sink: TextIO | None = None,
    seed: int = 0,
    pace: float = 1.0,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
    base: HeartbeatParams = HeartbeatParams(),
    margin: float = DEFAULT_HYSTERESIS,
    ping_interval_s: float = 1.0,
) -> SessionResult:
    """Run one player's end against a relay and return the session result.

    pace > 1 compresses wall time: scenario timestamps stay logical while
    emission, beat scheduling and termination all run pace times faster.
    """
    client = RelayClient.connect(relay_address, session_id, player_id)
    try:
        return run_session_with_client(
            client,
            scenario,
            profile,
            frame_sink=frame_sink,
            seed=seed,
            pace=pace,
            sample_rate=sample_rate,
            base=base,
            margin=margin,
            ping_interval_s=ping_interval_s,
        )
    finally:
        client.close()


def run_session_with_client(
    client: RelayClient,
    scenario: ScenarioSpec,
    profile: CalibrationProfile | None = None,
    *,
    frame_sink: TextIO | None = None,
    seed: int = 0,
    pace: float = 1.0,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
    base: HeartbeatParams = HeartbeatParams(),
    margin: float = DEFAULT_HYSTERESIS,
    ping_interval_s: float = 1.0,
    drain_grace_s: float = 0.3,
) -> SessionResult:
    """Session loop over an already-joined client (the client is not closed)."""
    if pace <= 0:
        raise ValueError("pace must be positive")
    own_samples = generate(scenario, seed)
    duration_s = scenario.total_duration_ms / 1000.0
    result = SessionResult(client.player_id, client.session_id)
    mapper = PartnerMapper(None, base, margin)
    writer = FrameWriter(frame_sink) if frame_sink is not None else None
    cell = _ParamCell()
    stop = threading.Event()
    publisher_done = threading.Event()
    epoch = time.monotonic()
    failures: list[BaseException] = []

    def clock() -> float:
        return (time.monotonic() - epoch) * pace

    client.send_profile(profile or DEFAULT_PROFILE)

    def publish() -> None:
        try:
            for sample in own_samples:
                target = epoch + (sample.t_ms / 1000.0) / pace
                while not stop.is_set():
                    delay = target - time.monotonic()
                    if delay <= 0:
                        break
                    stop.wait(min(delay, 0.05))
                if stop.is_set():
                    break
                client.send_sample(sample)
                result.samples_sent += 1
        except OSError:
            pass
        except BaseException as exc:  # surface after join
            failures.append(exc)
        finally:
            publisher_done.set()

    def measure_pings() -> None:
        while not stop.is_set():
            try:
                result.rtt_ms.append(client.ping(timeout=1.0) * 1000.0)
            except (TimeoutError, OSError):
                pass
            except BaseException as exc:
                failures.append(exc)
                return
            if stop.wait(ping_interval_s):
                return

    audio_chunks: list[np.ndarray] = []

    def render_audio() -> None:
        cache: dict[HeartbeatParams, np.ndarray] = {}
        frontier: float | None = None
        try:
            while not stop.is_set():
                params, first_seen = cell.get()
                if params is None:
                    stop.wait(0.002)
                    continue
                if frontier is None:
                    frontier = first_seen
                    lead = round(frontier * sample_rate)
                    if lead > 0:
                        audio_chunks.append(np.zeros(lead))
                if frontier >= duration_s - _EPS_S:
                    return
                if clock() >= frontier:
                    chunk = cache.get(params)
                    if chunk is None:
                        chunk = render_beat(params, sample_rate)
                        cache[params] = chunk
                    audio_chunks.append(chunk)
                    frontier += params.period
                else:
                    stop.wait(min(0.002, (frontier - clock()) / pace))
        except BaseException as exc:
            failures.append(exc)

    threads = [
        threading.Thread(target=publish, name="session-publish", daemon=True),
        threading.Thread(target=measure_pings, name="session-ping", daemon=True),
        threading.Thread(target=render_audio, name="session-audio", daemon=True),
    ]
    for thread in threads:
        thread.start()

    grace_deadline: float | None = None
    try:
        while True:
            msg = client.receive(timeout=0.02)
            if msg is not None:
                if msg.kind == "sample":
                    try:
                        sample = msg.sample()
                    except Exception:
                        continue  # relay validated already; never crash on input
                    result.received.append(sample)
                    result.samples_received += 1
                    frame = mapper.push(sample)
                    result.frames.append(frame)
                    if writer is not None:
                        writer.write(frame)
                    cell.set(
                        replace(base, h_bpm=frame.h_bpm, f_hz=frame.f_hz), clock()
                    )
                elif msg.kind == "profile":
                    try:
                        mapper.set_profile(msg.profile())
                    except Exception:
                        continue
                elif msg.kind == "joined":
                    result.partner_seen = True
                elif msg.kind == "error":
                    result.relay_errors.append(msg.code or "error")
                continue
            if client.closed:
                break
            if clock() >= duration_s and publisher_done.is_set():
                now = time.monotonic()
                if grace_deadline is None:
                    grace_deadline = now + drain_grace_s
                elif now >= grace_deadline:
                    break
    finally:
        stop.set()
        for thread in threads:
            thread.join(timeout=5.0)

    if failures:
        raise failures[0]

    total = np.concatenate(audio_chunks) if audio_chunks else np.zeros(0)
    want = round(duration_s * sample_rate)
    if len(total) < want:
        total = np.concatenate([total, np.zeros(want - len(total))])
    result.audio = AudioBuffer(sample_rate, total)
    result.partner_seen = result.partner_seen or client.partner_present
    return result


def simulate_pair(
    scenario_a: ScenarioSpec,
    scenario_b: ScenarioSpec,
    *,
    session_id: str = "local",
    profile_a: CalibrationProfile | None = None,
    profile_b: CalibrationProfile | None = None,
    seed_a: int = 1,
    seed_b: int = 2,
    pace: float = 1.0,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
    base: HeartbeatParams = HeartbeatParams(),
    margin: float = DEFAULT_HYSTERESIS,
    ping_interval_s: float = 1.0,
    relay_config: RelayConfig | None = None,
    frame_sink_a: TextIO | None = None,
    frame_sink_b: TextIO | None = None,
) -> tuple[SessionResult, SessionResult, dict]:
    """Run a relay plus both loopback clients in-process.

    Both clients join before either starts publishing, so neither misses
    the other's profile or early samples.  Returns (result_a, result_b,
    relay_session_stats); each result's relay_dropped is filled with the
    relay's drop count for the partner's stream.
    """
    server = RelayServer(config=relay_config or RelayConfig())
    server.start()
    results: dict[str, SessionResult] = {}
    failures: list[BaseException] = []
    try:
        with RelayClient.connect(server.address, session_id, "A") as client_a:
            with RelayClient.connect(server.address, session_id, "B") as client_b:

                def run(client: RelayClient, scenario, profile, seed, sink) -> None:
                    try:
                        results[client.player_id] = run_session_with_client(
                            client,
                            scenario,
                            profile,
                            frame_sink=sink,
                            seed=seed,
                            pace=pace,
                            sample_rate=sample_rate,
                            base=base,
                            margin=margin,
                            ping_interval_s=ping_interval_s,
                        )
                    except BaseException as exc:
                        failures.append(exc)

                threads = [
                    threading.Thread(
                        target=run,
                        args=(client_a, scenario_a, profile_a, seed_a, frame_sink_a),
                        name="simulate-A",
                    ),
                    threading.Thread(
                        target=run,
                        args=(client_b, scenario_b, profile_b, seed_b, frame_sink_b),
                        name="simulate-B",
                    ),
                ]
                for thread in threads:
                    thread.start()
                for thread in threads:
                    thread.join()
                stats = server.session_stats(session_id)
    finally:
        server.stop()
    if failures:
        raise failures[0]
    result_a, result_b = results["A"], results["B"]
    if stats is not None:
        result_a.relay_dropped = stats["dropped"].get("B", 0)
        result_b.relay_dropped = stats["dropped"].get("A", 0)
    return result_a, result_b, stats

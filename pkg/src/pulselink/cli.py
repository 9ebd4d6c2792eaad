"""Command-line entry point: render waveforms, serve the relay, drive sessions.

Every command is scriptable: no prompts, inputs come from flags and
files, and outputs are deterministic given deterministic inputs.  The
default relay address may also be set through the PULSELINK_RELAY
environment variable; an explicit --relay always wins.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from os import environ
from pathlib import Path

from . import audio
from .client import RelayError
from .emotion import (
    DEFAULT_HYSTERESIS,
    EmotionLevels,
    calibrate,
    levels_to_params,
    read_profile,
    write_profile,
)
from .protocol import ProtocolError
from .relay import DEFAULT_PORT, DEFAULT_QUEUE_CAPACITY, DEFAULT_RATE_LIMIT_PER_S, RelayConfig, RelayServer
from .session import emit_frames, offline_pipeline, run_session, simulate_pair
from .simulate import ScenarioSpec, TraceError, generate, load_trace, write_trace
from .synth import DEFAULT_SAMPLE_RATE, HeartbeatParams, render

ENV_RELAY = "PULSELINK_RELAY"
DEFAULT_RELAY = f"127.0.0.1:{DEFAULT_PORT}"

# Level pairs behind the named presets: lowest arousal/valence for sleepy,
# high arousal with pleasant valence for delighted, both maxed for angry.
PRESET_LEVELS = {"sleepy": (1, 1), "delighted": (5, 1), "angry": (5, 5)}


def parse_address(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"expected HOST:PORT, got {text!r}")
    return (host or "127.0.0.1", int(port))


def _base_params(args: argparse.Namespace) -> HeartbeatParams:
    return HeartbeatParams(a=args.a, b=args.b, c=args.c, phi=args.phi)


def _load_scenario(args: argparse.Namespace, attr: str) -> ScenarioSpec:
    """Scenario from inline JSON or a JSON file; default is a constant rest."""
    text = getattr(args, attr)
    duration_ms = None if args.duration is None else round(args.duration * 1000)
    if text is None:
        return ScenarioSpec(kind="constant", total_duration_ms=duration_ms or 10_000)
    stripped = text.strip()
    if stripped.startswith("{"):
        obj = json.loads(stripped)
    else:
        obj = json.loads(Path(stripped).read_text(encoding="utf-8"))
    spec = ScenarioSpec.from_dict(obj)
    if duration_ms is not None:
        spec = replace(spec, total_duration_ms=duration_ms)
    return spec


def _relay_config(args: argparse.Namespace) -> RelayConfig:
    rate = args.rate_limit
    return RelayConfig(
        queue_capacity=args.queue_capacity,
        rate_limit_per_s=None if rate is not None and rate <= 0 else rate,
        send_buffer_bytes=args.send_buffer,
    )


def _frame_sink(path: str | None):
    if path is None:
        return None, None
    if path == "-":
        return sys.stdout, None
    handle = open(path, "w", encoding="utf-8", newline="\n")
    return handle, handle


# -- commands -----------------------------------------------------------


def cmd_render(args: argparse.Namespace) -> int:
    base = _base_params(args)
    if args.preset is not None:
        if args.h_bpm is not None or args.f_hz is not None:
            raise ValueError("--preset conflicts with --h-bpm/--f-hz")
        params = levels_to_params(EmotionLevels(*PRESET_LEVELS[args.preset]), base)
    else:
        params = replace(
            base,
            h_bpm=args.h_bpm if args.h_bpm is not None else 60.0,
            f_hz=args.f_hz if args.f_hz is not None else 100.0,
        )
    buf = render(params, args.duration if args.duration is not None else 3.0, args.sample_rate)
    if args.raw:
        audio.write_raw(sys.stdout.buffer, buf)
    else:
        if args.out is None:
            raise ValueError("--out is required unless --raw is given")
        audio.write_wav(args.out, buf)
        print(f"wrote {args.out}: {len(buf)} samples at {buf.sample_rate} Hz")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    host, port = parse_address(args.bind)
    server = RelayServer(host, port, _relay_config(args))
    server.start()
    print(f"relay listening on {server.address[0]}:{server.address[1]}", flush=True)
    server.serve_forever()
    return 0


def cmd_connect(args: argparse.Namespace) -> int:
    address = parse_address(args.relay)
    scenario = _load_scenario(args, "scenario")
    profile = read_profile(args.profile) if args.profile else None
    sink, to_close = _frame_sink(args.frames_out)
    try:
        result = run_session(
            address,
            args.session,
            args.player,
            scenario,
            profile,
            frame_sink=sink,
            seed=args.seed,
            pace=args.pace,
            sample_rate=args.sample_rate,
            base=_base_params(args),
            margin=args.margin,
        )
    finally:
        if to_close is not None:
            to_close.close()
    if args.out is not None:
        audio.write_wav(args.out, result.audio)
    report = json.dumps(result.report(), indent=2)
    if args.report is not None:
        Path(args.report).write_text(report + "\n", encoding="utf-8")
    else:
        print(report)
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    scenario_a = _load_scenario(args, "scenario_a")
    scenario_b = _load_scenario(args, "scenario_b")
    profile_a = read_profile(args.profile_a) if args.profile_a else None
    profile_b = read_profile(args.profile_b) if args.profile_b else None
    out_dir = Path(args.out_dir) if args.out_dir else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    result_a, result_b, stats = simulate_pair(
        scenario_a,
        scenario_b,
        session_id=args.session,
        profile_a=profile_a,
        profile_b=profile_b,
        seed_a=args.seed_a if args.seed_a is not None else args.seed,
        seed_b=args.seed_b if args.seed_b is not None else args.seed + 1,
        pace=args.pace,
        sample_rate=args.sample_rate,
        base=_base_params(args),
        margin=args.margin,
    )
    if out_dir is not None:
        for result in (result_a, result_b):
            tag = result.player_id.lower()
            audio.write_wav(out_dir / f"{tag}.wav", result.audio)
            with open(out_dir / f"{tag}_frames.csv", "w", encoding="utf-8", newline="\n") as fh:
                emit_frames(fh, result.frames)
    print(
        json.dumps(
            {"a": result_a.report(), "b": result_b.report(), "relay": stats},
            indent=2,
        )
    )
    return 0


def cmd_offline(args: argparse.Namespace) -> int:
    trace = load_trace(args.trace)
    profile = read_profile(args.profile) if args.profile else None
    buf, frames = offline_pipeline(
        trace,
        profile,
        _base_params(args),
        sample_rate=args.sample_rate,
        margin=args.margin,
    )
    if args.out is not None:
        audio.write_wav(args.out, buf)
    if args.frames_out is not None:
        sink, to_close = _frame_sink(args.frames_out)
        try:
            emit_frames(sink, frames)
        finally:
            if to_close is not None:
                to_close.close()
    print(json.dumps({"frames": len(frames), "audio_samples": len(buf)}))
    return 0


def cmd_calibrate(args: argparse.Namespace) -> int:
    profile = calibrate(load_trace(args.rest), load_trace(args.stress))
    write_profile(args.out, profile)
    print(
        json.dumps(
            {
                "hr_rest": profile.hr_rest,
                "hr_stress": profile.hr_stress,
                "eda_rest": profile.eda_rest,
                "eda_stress": profile.eda_stress,
            }
        )
    )
    return 0


def cmd_trace(args: argparse.Namespace) -> int:
    spec = _load_scenario(args, "scenario")
    write_trace(args.out, generate(spec, args.seed))
    return 0


# -- parser ---------------------------------------------------------------


def _add_synth_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("synthesis")
    group.add_argument("--a", type=float, default=1.0, help="initial S1 amplitude")
    group.add_argument("--b", type=float, default=30.0, help="envelope decay rate, 1/s")
    group.add_argument("--c", type=float, default=0.5, help="S2/S1 amplitude ratio")
    group.add_argument("--phi", type=float, default=0.3, help="S1->S2 onset delay, s")
    group.add_argument(
        "--sample-rate", type=int, default=DEFAULT_SAMPLE_RATE, help="output sample rate, Hz"
    )


def _add_session_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0, help="scenario RNG seed")
    parser.add_argument(
        "--pace", type=float, default=1.0, help="wall-clock compression factor (1 = real time)"
    )
    parser.add_argument(
        "--margin",
        type=float,
        default=DEFAULT_HYSTERESIS,
        help="level hysteresis margin as a fraction of one bin width",
    )
    parser.add_argument(
        "--duration", type=float, default=None, help="session length in seconds"
    )


def _add_relay_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--queue-capacity",
        type=int,
        default=DEFAULT_QUEUE_CAPACITY,
        help="bounded forward queue size per player",
    )
    parser.add_argument(
        "--rate-limit",
        type=float,
        default=DEFAULT_RATE_LIMIT_PER_S,
        help="sample rate cap per player per second (0 disables)",
    )
    parser.add_argument(
        "--send-buffer", type=int, default=None, help="SO_SNDBUF for relay sockets, bytes"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pulselink",
        description="Stream biosignals between two players and render the partner's "
        "emotion-mapped heartbeat vibration signal.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="render a waveform to WAV or raw PCM")
    p.add_argument("--preset", choices=sorted(PRESET_LEVELS), help="named emotion preset")
    p.add_argument("--h-bpm", type=float, default=None, help="heart rate, BPM")
    p.add_argument("--f-hz", type=float, default=None, help="carrier frequency, Hz")
    p.add_argument("--duration", type=float, default=3.0, help="length in seconds")
    p.add_argument("--out", help="output WAV path")
    p.add_argument(
        "--raw", action="store_true", help="write raw 16-bit LE PCM to stdout instead"
    )
    _add_synth_flags(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("serve", help="run the relay until interrupted")
    p.add_argument("--bind", default=DEFAULT_RELAY, help="HOST:PORT to listen on")
    _add_relay_flags(p)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("connect", help="run one player's session against a relay")
    p.add_argument("--relay", default=environ.get(ENV_RELAY, DEFAULT_RELAY), help="relay HOST:PORT")
    p.add_argument("--session", required=True, help="session identifier")
    p.add_argument("--player", required=True, choices=("A", "B"), help="player slot")
    p.add_argument("--scenario", default=None, help="scenario JSON (inline or file path)")
    p.add_argument("--profile", default=None, help="own calibration profile file")
    p.add_argument("--out", default=None, help="write received-partner audio to this WAV")
    p.add_argument("--frames-out", default=None, help="level frame CSV path ('-' for stdout)")
    p.add_argument("--report", default=None, help="write the session report JSON here")
    _add_session_flags(p)
    _add_synth_flags(p)
    p.set_defaults(func=cmd_connect)

    p = sub.add_parser("simulate", help="relay plus both players in one process")
    p.add_argument("--session", default="local", help="session identifier")
    p.add_argument("--scenario-a", default=None, help="player A scenario JSON")
    p.add_argument("--scenario-b", default=None, help="player B scenario JSON")
    p.add_argument("--profile-a", default=None, help="player A profile file")
    p.add_argument("--profile-b", default=None, help="player B profile file")
    p.add_argument("--seed-a", type=int, default=None)
    p.add_argument("--seed-b", type=int, default=None)
    p.add_argument("--out-dir", default=None, help="write a/b WAV and frame CSV files here")
    _add_session_flags(p)
    _add_synth_flags(p)
    _add_relay_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("offline", help="map a trace straight to audio and frames")
    p.add_argument("--trace", required=True, help="input trace CSV")
    p.add_argument("--profile", default=None, help="partner calibration profile file")
    p.add_argument("--out", default=None, help="output WAV path")
    p.add_argument("--frames-out", default=None, help="level frame CSV path ('-' for stdout)")
    p.add_argument(
        "--margin", type=float, default=DEFAULT_HYSTERESIS, help="level hysteresis margin"
    )
    _add_synth_flags(p)
    p.set_defaults(func=cmd_offline)

    p = sub.add_parser("calibrate", help="derive a profile from rest and stress traces")
    p.add_argument("--rest", required=True, help="rest-phase trace CSV")
    p.add_argument("--stress", required=True, help="stress-phase trace CSV")
    p.add_argument("--out", required=True, help="profile output path")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("trace", help="write a scenario's samples to a trace CSV")
    p.add_argument("--scenario", default=None, help="scenario JSON (inline or file path)")
    p.add_argument("--duration", type=float, default=None, help="length in seconds")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="trace CSV output path")
    p.set_defaults(func=cmd_trace)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return 130
    except (ValueError, TraceError, ProtocolError, RelayError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line (run with `pytest -s tests/test_acceptance.py` to see them).
"""

import json
import random
import socket
import time

import numpy as np

from pulselink.audio import encode_pcm16
from pulselink.emotion import (
    DEFAULT_PROFILE,
    F_LEVELS,
    H_LEVELS,
    CalibrationProfile,
    EmotionLevels,
    levels_to_params,
    map_sample,
    quantize,
    BiosignalSample,
)
from pulselink.client import RelayClient
from pulselink.relay import RelayConfig, RelayServer
from pulselink.session import offline_pipeline, simulate_pair
from pulselink.simulate import ScenarioSpec, generate
from pulselink.synth import (
    HeartbeatParams,
    beat_sample_count,
    heartbeat_value,
    render,
    render_stream,
    s1,
)
from pulselink.cli import PRESET_LEVELS

from _oracle import reference_for
from _signal_tools import (
    measure_beat_period,
    measure_carrier_fft,
    measure_carrier_zero_crossings,
)


def _check(num: int, desc: str, body) -> None:
    try:
        body()
    except BaseException:
        print(f"[acceptance] criterion {num} FAIL  {desc}")
        raise
    print(f"[acceptance] criterion {num} PASS  {desc}")


def _random_params(rng: random.Random) -> HeartbeatParams:
    h_bpm = rng.uniform(40.0, 200.0)
    return HeartbeatParams(
        a=rng.uniform(0.2, 1.5),
        b=rng.uniform(5.0, 60.0),
        c=rng.uniform(0.0, 1.0),
        phi=rng.uniform(0.005, 0.9 * 60.0 / h_bpm),
        h_bpm=h_bpm,
        f_hz=rng.uniform(50.0, 400.0),
    )


def test_criterion_1_oracle_equivalence_of_render():
    def body():
        rng = random.Random(101)
        start = time.monotonic()
        checked = 0
        while checked < 10_000:
            params = _random_params(rng)
            rate = rng.choice((8000, 22050, 44100))
            duration = rng.uniform(0.3, 1.5)
            buf = render(params, duration, rate)
            for _ in range(100):
                i = rng.randrange(len(buf))
                t = i / rate
                expected = reference_for(t, params)
                assert abs(buf.samples[i] - expected) < 1e-9
                checked += 1
        elapsed = time.monotonic() - start
        assert elapsed < 5.0, f"took {elapsed:.2f} s"

    _check(1, "render matches the extended-precision oracle at 10k points", body)


def test_criterion_2_periodicity():
    def body():
        rng = random.Random(202)
        for _ in range(1000):
            params = _random_params(rng)
            t = rng.uniform(0.0, 500.0)
            period = 60.0 / params.h_bpm
            diff = abs(
                heartbeat_value(t, params) - heartbeat_value(t + period, params)
            )
            assert diff < 1e-9

    _check(2, "waveform repeats beat-for-beat within 1e-9", body)


def test_criterion_3_second_burst_gate_is_exact():
    def body():
        rng = random.Random(303)
        for _ in range(1000):
            params = _random_params(rng)
            t_prime = params.phi * rng.uniform(0.0001, 0.9999)
            gap = heartbeat_value(t_prime, params) - s1(t_prime, params)
            assert gap == 0.0

    _check(3, "before the S2 onset the waveform is S1 alone, exactly", body)


def test_criterion_4_level_tables_are_exact():
    def body():
        h_seen: set[float] = set()
        f_seen: set[float] = set()
        profiles = [
            DEFAULT_PROFILE,
            CalibrationProfile(52.0, 178.0, 0.35, 42.0),
            CalibrationProfile(65.5, 91.25, 2.5, 3.75),
        ]
        for profile in profiles:
            for value in np.linspace(20.0, 240.0, 1500):
                level = quantize(float(value), profile.hr_rest, profile.hr_stress)
                h_seen.add(levels_to_params(EmotionLevels(level, 1)).h_bpm)
            for value in np.linspace(0.005, 110.0, 1500):
                level = quantize(float(value), profile.eda_rest, profile.eda_stress)
                f_seen.add(levels_to_params(EmotionLevels(1, level)).f_hz)
        assert h_seen == set(H_LEVELS) == {60.0, 75.0, 90.0, 105.0, 120.0}
        assert f_seen == set(F_LEVELS) == {100.0, 150.0, 200.0, 250.0, 300.0}
        # the full mapping path emits nothing outside the tables either
        rng = random.Random(404)
        for _ in range(2000):
            sample = BiosignalSample(0, rng.uniform(30.0, 220.0), rng.uniform(0.01, 100.0))
            params = levels_to_params(map_sample(sample, DEFAULT_PROFILE))
            assert params.h_bpm in H_LEVELS
            assert params.f_hz in F_LEVELS

    _check(4, "five-level tables reproduced exactly, no other values emitted", body)


def test_criterion_5_preset_beat_and_carrier_measurements():
    def body():
        expectations = {
            "sleepy": (1.0, 100.0),
            "delighted": (0.5, 100.0),
            "angry": (0.5, 300.0),
        }
        start = time.monotonic()
        for name, (want_period, want_carrier) in expectations.items():
            params = levels_to_params(EmotionLevels(*PRESET_LEVELS[name]))
            samples = render(params, 3.0, 44100).samples
            period = measure_beat_period(samples, 44100)
            carrier_fft = measure_carrier_fft(samples, 44100)
            carrier_zc = measure_carrier_zero_crossings(samples, 44100)
            assert abs(period - want_period) <= 0.01 * want_period, name
            assert abs(carrier_fft - want_carrier) <= 0.01 * want_carrier, name
            assert abs(carrier_zc - want_carrier) <= 0.01 * want_carrier, name
        elapsed = time.monotonic() - start
        assert elapsed < 2.0, f"took {elapsed:.2f} s"

    _check(5, "presets measure at the expected beat period and carrier", body)


def test_criterion_6_three_minute_loopback_session():
    def body():
        ramp = ScenarioSpec(
            kind="ramp",
            total_duration_ms=180_000,
            hr_baseline=60.0,
            hr_target=120.0,
            eda_baseline=1.0,
            eda_target=10.0,
        )
        rest = ScenarioSpec(kind="constant", total_duration_ms=180_000)
        start = time.monotonic()
        result_a, result_b, stats = simulate_pair(
            ramp,
            rest,
            session_id="acceptance-6",
            seed_a=11,
            seed_b=22,
            pace=30.0,
            sample_rate=8000,
            ping_interval_s=0.25,
        )
        elapsed = time.monotonic() - start
        assert elapsed <= 10.0, f"took {elapsed:.2f} s"

        # zero drops
        assert stats["dropped"] == {"A": 0, "B": 0}
        assert result_a.relay_dropped == 0 and result_b.relay_dropped == 0

        # per-sender FIFO: B received exactly what A sent, in order
        sent_a = generate(ramp, 11)
        assert result_a.samples_sent == len(sent_a) == 180
        assert result_b.received == sent_a
        sent_b = generate(rest, 22)
        assert result_a.received == sent_b

        # receiver level trace equals the offline pipeline on the received samples
        _, offline_frames = offline_pipeline(
            result_b.received, DEFAULT_PROFILE, sample_rate=8000
        )
        assert result_b.frames == offline_frames

        # ping RTT p95 on loopback
        for result in (result_a, result_b):
            assert len(result.rtt_ms) >= 10
            p95 = sorted(result.rtt_ms)[int(np.ceil(0.95 * len(result.rtt_ms))) - 1]
            assert p95 < 10.0, f"rtt p95 {p95:.2f} ms"

    _check(6, "compressed 3-minute loopback session: no loss, FIFO, offline-equal, fast pings", body)


def test_criterion_7_backpressure_never_blocks_sender():
    def body():
        total = 1500
        server = RelayServer(
            config=RelayConfig(
                queue_capacity=64, rate_limit_per_s=None, send_buffer_bytes=4096
            )
        )
        server.start()
        stalled = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        try:
            stalled.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, 4096)
            stalled.connect(server.address)
            stalled.sendall(b'{"kind":"join","session_id":"bp","player_id":"B"}\n')
            with RelayClient.connect(server.address, "bp", "A") as sender:
                start = time.monotonic()
                for i in range(total):
                    sender.send_sample(BiosignalSample(i, 70.0, 1.5))
                send_seconds = time.monotonic() - start
                assert send_seconds < 5.0, f"sender blocked for {send_seconds:.2f} s"

                deadline = time.monotonic() + 10.0
                while time.monotonic() < deadline:
                    stats = server.session_stats("bp")
                    if stats and stats["forwarded"]["A"] >= total:
                        break
                    time.sleep(0.02)
                stats = server.session_stats("bp")
                assert stats["forwarded"]["A"] == total
                dropped = stats["dropped"]["A"]
                assert dropped > 0, "stall never overflowed the queue"

                stalled.settimeout(1.0)
                received = bytearray()
                while True:
                    try:
                        chunk = stalled.recv(65536)
                    except socket.timeout:
                        break
                    if not chunk:
                        break
                    received.extend(chunk)
                delivered = [
                    json.loads(line)["t_ms"]
                    for line in received.splitlines()
                    if line and json.loads(line).get("kind") == "sample"
                ]
                assert len(delivered) == total - dropped
                assert delivered == sorted(delivered)
                assert delivered[-64:] == list(range(total - 64, total))
        finally:
            stalled.close()
            server.stop()

    _check(7, "stalled partner: sender unblocked, drops counted, newest 64 delivered in order", body)


def test_criterion_8_offline_pipeline_is_bit_deterministic(tmp_path):
    def body():
        trace = generate(
            ScenarioSpec(
                kind="ramp",
                total_duration_ms=20_000,
                hr_baseline=60.0,
                hr_target=120.0,
                eda_baseline=1.0,
                eda_target=10.0,
                hr_jitter=1.0,
                eda_jitter=0.2,
            ),
            seed=8,
        )
        runs = []
        for _ in range(2):
            audio, frames = offline_pipeline(trace, sample_rate=8000)
            wav = encode_pcm16(audio)
            csv = "\n".join(
                f"{f.t_ms},{f.arousal_level},{f.valence_level},{f.h_bpm},{f.f_hz}"
                for f in frames
            )
            runs.append((wav, csv, audio.samples.tobytes()))
        assert runs[0] == runs[1]

    _check(8, "offline pipeline output is bit-identical across runs", body)


def test_criterion_9_switches_only_at_zero_amplitude_boundaries():
    def body():
        levels = [(1, 1), (2, 2), (3, 3), (4, 4), (5, 5), (3, 1), (1, 5)]
        schedule = []
        for index, pair in enumerate(levels):
            schedule.append((index * 2, levels_to_params(EmotionLevels(*pair))))
        total_beats = len(levels) * 2
        buf = render_stream(schedule, total_beats, 44100)

        # walk the beat lengths to find every boundary sample
        offset = 0
        params = schedule[0][1]
        position = 0
        for beat in range(total_beats):
            if position < len(schedule) and schedule[position][0] == beat:
                params = schedule[position][1]
                position += 1
            if beat > 0:
                assert abs(buf.samples[offset]) < 1e-9
            offset += beat_sample_count(params.h_bpm, 44100)
        assert offset == len(buf)

    _check(9, "every parameter switch lands on a zero-amplitude beat boundary", body)

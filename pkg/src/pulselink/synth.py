"""Heartbeat-like vibrotactile waveform synthesis.

Each beat is a pair of exponentially decaying sine bursts mimicking the
two heart sounds: S1 at the beat onset and S2 following after a fixed
delay.  Absolute time is folded onto a per-beat phase t' in [0, 60/H),
which makes the signal exactly periodic at the beat rate:

    v1(t') = a * exp(-b * t') * sin(2*pi*f * t')
    v2(t') = 0                  for t' < phi
             c * v1(t' - phi)   for t' >= phi
    v(t')  = v1(t') + v2(t')

Samples are computed in double precision and kept unclipped; clipping to
[-1, 1] happens only on PCM encoding (see pulselink.audio).  All
functions here are pure and safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

DEFAULT_SAMPLE_RATE = 44100
MIN_SAMPLE_RATE = 8000


@dataclass(frozen=True)
class HeartbeatParams:
    """Parameter tuple driving the two-burst heartbeat waveform.

    a:      initial amplitude of S1, dimensionless
    b:      envelope decay rate, 1/s
    c:      S2/S1 amplitude ratio
    phi:    S1 -> S2 onset delay, seconds
    h_bpm:  heart rate, beats per minute (beat period is 60 / h_bpm)
    f_hz:   carrier frequency, Hz (shared by both bursts)

    The defaults for a, b, c and phi give an S1 that decays below 5%
    within ~100 ms, a quieter S2, and a typical systolic S1-S2 gap; they
    are engineering choices, not measured values, and every field is
    overridable.
    """

    a: float = 1.0
    b: float = 30.0
    c: float = 0.5
    phi: float = 0.3
    h_bpm: float = 60.0
    f_hz: float = 100.0

    def __post_init__(self) -> None:
        if self.a <= 0.0:
            raise ValueError(f"a must be positive, got {self.a}")
        if self.b <= 0.0:
            raise ValueError(f"b must be positive, got {self.b}")
        if self.c < 0.0:
            raise ValueError(f"c must be non-negative, got {self.c}")
        if self.phi <= 0.0:
            raise ValueError(f"phi must be positive, got {self.phi}")
        if self.h_bpm <= 0.0:
            raise ValueError(f"h_bpm must be positive, got {self.h_bpm}")
        if self.f_hz <= 0.0:
            raise ValueError(f"f_hz must be positive, got {self.f_hz}")
        if self.phi >= 60.0 / self.h_bpm:
            raise ValueError(
                f"phi={self.phi} must fall inside one beat period "
                f"(60/h_bpm = {60.0 / self.h_bpm:.6g} s)"
            )

    @property
    def period(self) -> float:
        """Beat period 60/H in seconds."""
        return 60.0 / self.h_bpm


@dataclass(frozen=True)
class AudioBuffer:
    """Mono float64 samples at a fixed rate, unclipped."""

    sample_rate: int
    samples: np.ndarray

    def __post_init__(self) -> None:
        _check_rate(self.sample_rate)
        object.__setattr__(
            self, "samples", np.asarray(self.samples, dtype=np.float64)
        )

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


def _check_rate(sample_rate: int) -> None:
    if not isinstance(sample_rate, int) or sample_rate < MIN_SAMPLE_RATE:
        raise ValueError(
            f"sample_rate must be an integer >= {MIN_SAMPLE_RATE}, got {sample_rate}"
        )


def phase_fold(t: float, h_bpm: float) -> float:
    """Fold absolute time onto the current beat: result in [0, 60/h_bpm).

    fmod computes t - period*floor(t/period) exactly for non-negative t;
    the clamp absorbs any residual rounding at exact period multiples.
    """
    if h_bpm <= 0.0:
        raise ValueError(f"h_bpm must be positive, got {h_bpm}")
    if t < 0.0:
        raise ValueError(f"t must be non-negative, got {t}")
    period = 60.0 / h_bpm
    t_prime = math.fmod(t, period)
    if t_prime < 0.0 or t_prime >= period:
        t_prime = 0.0
    return t_prime


def s1(t_prime: float, p: HeartbeatParams) -> float:
    """First burst: decaying sine starting at the beat onset."""
    return p.a * math.exp(-p.b * t_prime) * math.sin(2.0 * math.pi * p.f_hz * t_prime)


def s2(t_prime: float, p: HeartbeatParams) -> float:
    """Second burst: copy of s1 scaled by c and delayed by phi.

    Exactly 0.0 before the onset; at t_prime == phi the delayed branch
    applies but evaluates to 0 anyway (sin 0).
    """
    if t_prime < p.phi:
        return 0.0
    return p.c * s1(t_prime - p.phi, p)


def heartbeat_value(t: float, p: HeartbeatParams) -> float:
    """Waveform value at absolute time t >= 0."""
    t_prime = phase_fold(t, p.h_bpm)
    return s1(t_prime, p) + s2(t_prime, p)


def _eval_phase(t_prime: np.ndarray, p: HeartbeatParams) -> np.ndarray:
    """Vectorised v1 + v2 over per-beat phases (no folding applied)."""
    omega = 2.0 * np.pi * p.f_hz
    v = p.a * np.exp(-p.b * t_prime) * np.sin(omega * t_prime)
    shifted = t_prime - p.phi
    live = shifted >= 0.0
    shifted = np.where(live, shifted, 0.0)
    v2 = p.c * p.a * np.exp(-p.b * shifted) * np.sin(omega * shifted)
    return v + np.where(live, v2, 0.0)


def render(
    p: HeartbeatParams, duration: float, sample_rate: int = DEFAULT_SAMPLE_RATE
) -> AudioBuffer:
    """Render the waveform over [0, duration) on a fixed sample grid.

    samples[i] equals heartbeat_value(i / sample_rate, p); the buffer
    holds ceil(duration * sample_rate) samples.
    """
    if duration <= 0.0:
        raise ValueError(f"duration must be positive, got {duration}")
    _check_rate(sample_rate)
    n = math.ceil(duration * sample_rate)
    t = np.arange(n, dtype=np.float64) / sample_rate
    period = 60.0 / p.h_bpm
    t_prime = np.mod(t, period)
    t_prime = np.where(t_prime >= period, 0.0, t_prime)
    return AudioBuffer(sample_rate, _eval_phase(t_prime, p))


def beat_sample_count(h_bpm: float, sample_rate: int) -> int:
    """Samples in one beat; exact whenever 60/h_bpm lands on the grid."""
    return round(60.0 / h_bpm * sample_rate)


def render_beat(p: HeartbeatParams, sample_rate: int = DEFAULT_SAMPLE_RATE) -> np.ndarray:
    """Render exactly one beat starting at phase 0 (amplitude 0)."""
    _check_rate(sample_rate)
    n = beat_sample_count(p.h_bpm, sample_rate)
    t_prime = np.arange(n, dtype=np.float64) / sample_rate
    return _eval_phase(t_prime, p)


def render_stream(
    schedule: Iterable[tuple[int, HeartbeatParams]],
    total_beats: int,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
) -> AudioBuffer:
    """Concatenate beats while parameters switch only at beat boundaries.

    schedule is an ordered sequence of (start_beat_index, params); each
    entry takes effect at the start of its beat, so every beat begins at
    phase 0 / amplitude 0 and a switch never tears the carrier mid-beat.
    Beat lengths are rounded to the nearest sample; for the five mapped
    beat rates at 44100 Hz the rounding is exact.
    """
    entries = _validated_schedule(schedule, total_beats)
    _check_rate(sample_rate)
    if total_beats <= 0:
        return AudioBuffer(sample_rate, np.zeros(0))

    chunks: list[np.ndarray] = []
    cache: dict[HeartbeatParams, np.ndarray] = {}
    params = entries[0][1]
    pos = 0
    for beat in range(total_beats):
        if pos < len(entries) and entries[pos][0] == beat:
            params = entries[pos][1]
            pos += 1
        chunk = cache.get(params)
        if chunk is None:
            chunk = render_beat(params, sample_rate)
            cache[params] = chunk
        chunks.append(chunk)
    return AudioBuffer(sample_rate, np.concatenate(chunks))


def _validated_schedule(
    schedule: Iterable[tuple[int, HeartbeatParams]], total_beats: int
) -> Sequence[tuple[int, HeartbeatParams]]:
    entries = list(schedule)
    if not entries:
        raise ValueError("schedule must not be empty")
    if entries[0][0] != 0:
        raise ValueError(f"schedule must start at beat 0, got {entries[0][0]}")
    for (left, _), (right, _) in zip(entries, entries[1:]):
        if right <= left:
            raise ValueError(
                f"schedule beat indices must be strictly increasing, got {left} -> {right}"
            )
    if total_beats < 0:
        raise ValueError(f"total_beats must be non-negative, got {total_beats}")
    if total_beats > 0 and entries[-1][0] >= total_beats:
        raise ValueError(
            f"schedule entry at beat {entries[-1][0]} is beyond total_beats={total_beats}"
        )
    return entries

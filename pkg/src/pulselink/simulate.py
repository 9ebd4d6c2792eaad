"""Simulated biosignal sources: parametric scenarios and CSV trace replay.

Stands in for a wearable sensor.  Generation is a pure function of
(spec, seed); pacing against the wall clock is the session layer's job.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .emotion import EDA_RANGE, HR_RANGE, BiosignalSample

TRACE_HEADER = "t_ms,hr_bpm,eda_us"
SCENARIO_KINDS = ("constant", "ramp", "sinusoid", "script", "trace")
DEFAULT_EMIT_INTERVAL_MS = 1000  # typical wearable reporting cadence


class TraceError(ValueError):
    """A trace file that fails to parse or violates sample invariants."""


def format_decimal(value: float) -> str:
    """Format with up to 3 fractional digits, trimming trailing zeros."""
    text = f"{value:.3f}".rstrip("0").rstrip(".")
    return text if text else "0"


def _as_ms(value, name: str) -> int:
    if isinstance(value, bool) or value is None:
        raise ValueError(f"{name} must be an integer number of milliseconds")
    if isinstance(value, float):
        if not value.is_integer():
            raise ValueError(f"{name} must be a whole number of milliseconds")
        return int(value)
    if not isinstance(value, int):
        raise ValueError(f"{name} must be an integer number of milliseconds")
    return value


@dataclass(frozen=True)
class ScenarioSegment:
    """One constant piece of a scripted scenario."""

    duration_ms: int
    hr_bpm: float
    eda_us: float


@dataclass(frozen=True)
class ScenarioSpec:
    """Declarative description of a simulated biosignal stream.

    kind selects the value model:
      constant  -- hr_baseline / eda_baseline throughout
      ramp      -- linear from baseline to target over ramp_duration_ms
                   (defaults to the whole run), holding target afterwards
      sinusoid  -- baseline + amplitude * sin(2*pi*t / period_ms)
      script    -- piecewise-constant segments, holding the last one
      trace     -- replay the CSV at trace_path

    Optional gaussian jitter (std dev per sample) is reproducible from
    the seed passed to generate(); emitted values are clamped into the
    accepted sensor ranges.
    """

    kind: str = "constant"
    total_duration_ms: int = 10_000
    emit_interval_ms: int = DEFAULT_EMIT_INTERVAL_MS
    hr_baseline: float = 60.0
    eda_baseline: float = 1.0
    hr_target: float | None = None
    eda_target: float | None = None
    ramp_duration_ms: int | None = None
    hr_amplitude: float = 0.0
    eda_amplitude: float = 0.0
    period_ms: int = 60_000
    segments: tuple[ScenarioSegment, ...] = ()
    trace_path: str | None = None
    hr_jitter: float = 0.0
    eda_jitter: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in SCENARIO_KINDS:
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        for name in ("total_duration_ms", "emit_interval_ms"):
            if not isinstance(getattr(self, name), int):
                raise ValueError(f"{name} must be an integer number of milliseconds")
        if self.emit_interval_ms <= 0:
            raise ValueError("emit_interval_ms must be positive")
        if self.total_duration_ms < 0:
            raise ValueError("total_duration_ms must be non-negative")
        if self.kind == "sinusoid" and self.period_ms <= 0:
            raise ValueError("period_ms must be positive")
        if self.kind == "script" and not self.segments:
            raise ValueError("script scenario needs at least one segment")
        if self.kind == "trace" and not self.trace_path:
            raise ValueError("trace scenario needs trace_path")
        if self.ramp_duration_ms is not None and self.ramp_duration_ms <= 0:
            raise ValueError("ramp_duration_ms must be positive")
        if self.hr_jitter < 0.0 or self.eda_jitter < 0.0:
            raise ValueError("jitter standard deviations must be non-negative")

    @classmethod
    def from_dict(cls, obj: dict) -> "ScenarioSpec":
        """Build a spec from parsed JSON; unknown keys are rejected.

        Millisecond fields written as whole-number floats (a common JSON
        artifact) are coerced to integers.
        """
        data = dict(obj)
        segments = tuple(
            ScenarioSegment(
                duration_ms=_as_ms(segment.get("duration_ms"), "duration_ms"),
                hr_bpm=segment["hr_bpm"],
                eda_us=segment["eda_us"],
            )
            for segment in data.pop("segments", ())
        )
        for name in ("total_duration_ms", "emit_interval_ms", "ramp_duration_ms", "period_ms"):
            if name in data and data[name] is not None:
                data[name] = _as_ms(data[name], name)
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown scenario fields: {sorted(unknown)}")
        return cls(segments=segments, **data)


def _value_at(spec: ScenarioSpec, t_ms: int, channel: str) -> float:
    baseline = getattr(spec, f"{channel}_baseline")
    if spec.kind == "constant":
        return baseline
    if spec.kind == "ramp":
        target = getattr(spec, f"{channel}_target")
        if target is None:
            return baseline
        ramp_ms = spec.ramp_duration_ms or spec.total_duration_ms
        progress = min(t_ms / ramp_ms, 1.0) if ramp_ms else 1.0
        return baseline + (target - baseline) * progress
    if spec.kind == "sinusoid":
        amplitude = getattr(spec, f"{channel}_amplitude")
        return baseline + amplitude * math.sin(2.0 * math.pi * t_ms / spec.period_ms)
    if spec.kind == "script":
        elapsed = 0
        for segment in spec.segments:
            elapsed += segment.duration_ms
            if t_ms < elapsed:
                return getattr(segment, "hr_bpm" if channel == "hr" else "eda_us")
        last = spec.segments[-1]
        return getattr(last, "hr_bpm" if channel == "hr" else "eda_us")
    raise ValueError(f"unsupported scenario kind {spec.kind!r}")


def _clamp(value: float, bounds: tuple[float, float]) -> float:
    return min(max(value, bounds[0]), bounds[1])


def generate(spec: ScenarioSpec, seed: int = 0) -> list[BiosignalSample]:
    """Produce the deterministic sample sequence for a scenario.

    Timestamps start at 0 and step by emit_interval_ms; the same
    (spec, seed) pair always yields the same sequence.
    """
    if spec.kind == "trace":
        return load_trace(spec.trace_path)
    rng = random.Random(seed)
    samples = []
    for t_ms in range(0, spec.total_duration_ms, spec.emit_interval_ms):
        hr = _value_at(spec, t_ms, "hr")
        eda = _value_at(spec, t_ms, "eda")
        if spec.hr_jitter:
            hr += rng.gauss(0.0, spec.hr_jitter)
        if spec.eda_jitter:
            eda += rng.gauss(0.0, spec.eda_jitter)
        samples.append(
            BiosignalSample(
                t_ms=t_ms,
                hr_bpm=round(_clamp(hr, HR_RANGE), 3),
                eda_us=round(_clamp(eda, EDA_RANGE), 3),
            )
        )
    return samples


def load_trace(path: str | Path) -> list[BiosignalSample]:
    """Parse a trace CSV; every rejection names the offending line.

    The header line is written by write_trace but tolerated as absent so
    bare three-column files replay too.
    """
    samples: list[BiosignalSample] = []
    prev_t: int | None = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if lineno == 1 and line == TRACE_HEADER:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise TraceError(
                    f"{path}:{lineno}: expected 3 comma-separated fields, got {len(parts)}"
                )
            try:
                t_ms = int(parts[0])
                hr_bpm = float(parts[1])
                eda_us = float(parts[2])
            except ValueError:
                raise TraceError(f"{path}:{lineno}: malformed row {line!r}") from None
            if prev_t is not None and t_ms < prev_t:
                raise TraceError(
                    f"{path}:{lineno}: timestamp {t_ms} decreases (previous {prev_t})"
                )
            try:
                sample = BiosignalSample(t_ms, hr_bpm, eda_us)
            except ValueError as exc:
                raise TraceError(f"{path}:{lineno}: {exc}") from None
            samples.append(sample)
            prev_t = t_ms
    return samples


def write_trace(path: str | Path, samples: Sequence[BiosignalSample]) -> None:
    """Write samples in the trace CSV format (UTF-8, LF, header line)."""
    lines = [TRACE_HEADER]
    lines += [
        f"{s.t_ms},{format_decimal(s.hr_bpm)},{format_decimal(s.eda_us)}"
        for s in samples
    ]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")

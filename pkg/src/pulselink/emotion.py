"""Biosignal calibration and the five-level arousal/valence mapping.

Heart rate drives the arousal axis and selects the beat rate; EDA drives
the valence axis and selects the carrier frequency (higher EDA reads as
less pleasant, hence a higher carrier).  Raw values are quantised into
five equal-width bins spanning each player's rest..stress range, with
clamping outside it.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable

from .synth import HeartbeatParams

HR_RANGE = (30.0, 220.0)  # plausible wrist-sensor BPM
EDA_RANGE = (0.01, 100.0)  # microsiemens

H_LEVELS = (60.0, 75.0, 90.0, 105.0, 120.0)  # BPM per arousal level
F_LEVELS = (100.0, 150.0, 200.0, 250.0, 300.0)  # Hz per valence level

DEFAULT_HYSTERESIS = 0.1  # fraction of one bin width
PROFILE_VERSION = 1
_PROFILE_FIELDS = ("hr_rest", "hr_stress", "eda_rest", "eda_stress")


@dataclass(frozen=True)
class BiosignalSample:
    """One timestamped HR/EDA measurement from one player."""

    t_ms: int
    hr_bpm: float
    eda_us: float

    def __post_init__(self) -> None:
        if not isinstance(self.t_ms, int) or isinstance(self.t_ms, bool):
            raise ValueError(f"t_ms must be an integer, got {self.t_ms!r}")
        if self.t_ms < 0:
            raise ValueError(f"t_ms must be non-negative, got {self.t_ms}")
        if not HR_RANGE[0] <= self.hr_bpm <= HR_RANGE[1]:
            raise ValueError(
                f"hr_bpm {self.hr_bpm} outside accepted range {HR_RANGE}"
            )
        if not EDA_RANGE[0] <= self.eda_us <= EDA_RANGE[1]:
            raise ValueError(
                f"eda_us {self.eda_us} outside accepted range {EDA_RANGE}"
            )


@dataclass(frozen=True)
class CalibrationProfile:
    """Per-player rest/stress anchors for HR and EDA."""

    hr_rest: float
    hr_stress: float
    eda_rest: float
    eda_stress: float

    def __post_init__(self) -> None:
        if self.hr_rest >= self.hr_stress:
            raise ValueError(
                f"hr_rest ({self.hr_rest}) must be below hr_stress ({self.hr_stress})"
            )
        if self.eda_rest >= self.eda_stress:
            raise ValueError(
                f"eda_rest ({self.eda_rest}) must be below eda_stress ({self.eda_stress})"
            )


# Used when the calibration step is skipped; spans a sedentary-to-agitated
# range rather than anything measured.
DEFAULT_PROFILE = CalibrationProfile(
    hr_rest=60.0, hr_stress=120.0, eda_rest=1.0, eda_stress=10.0
)


@dataclass(frozen=True)
class EmotionLevels:
    """Discrete affect state: arousal drives H, valence drives f."""

    arousal_level: int
    valence_level: int

    def __post_init__(self) -> None:
        for name in ("arousal_level", "valence_level"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or not 1 <= value <= 5:
                raise ValueError(f"{name} must be an integer in 1..5, got {value!r}")


def quantize(value: float, lo: float, hi: float) -> int:
    """Map value into one of five equal-width bins over [lo, hi].

    Values at or below lo give 1, at or above hi give 5; interior bin
    edges belong to the upper bin (lower-edge inclusive).
    """
    if lo >= hi:
        raise ValueError(f"lo ({lo}) must be below hi ({hi})")
    if value <= lo:
        return 1
    if value >= hi:
        return 5
    level = 1 + int((value - lo) * 5.0 / (hi - lo))
    return min(level, 5)


def map_sample(sample: BiosignalSample, profile: CalibrationProfile) -> EmotionLevels:
    """Quantise one sample against a profile; the two axes are independent."""
    return EmotionLevels(
        arousal_level=quantize(sample.hr_bpm, profile.hr_rest, profile.hr_stress),
        valence_level=quantize(sample.eda_us, profile.eda_rest, profile.eda_stress),
    )


def levels_to_params(
    levels: EmotionLevels, base: HeartbeatParams = HeartbeatParams()
) -> HeartbeatParams:
    """Pick the beat rate and carrier for a level pair; a, b, c, phi come from base."""
    return replace(
        base,
        h_bpm=H_LEVELS[levels.arousal_level - 1],
        f_hz=F_LEVELS[levels.valence_level - 1],
    )


def apply_hysteresis(
    prev_level: int,
    value: float,
    lo: float,
    hi: float,
    margin_fraction: float = DEFAULT_HYSTERESIS,
) -> int:
    """Quantise with a sticky band around bin edges to stop level flapping.

    A proposed one-step change is suppressed while value lies strictly
    within margin_fraction of a bin width of the edge shared with the
    previous level; margin_fraction == 0 disables the band.  Jumps of two
    or more levels always go through.
    """
    if not 0.0 <= margin_fraction < 0.5:
        raise ValueError(
            f"margin_fraction must be in [0, 0.5), got {margin_fraction}"
        )
    if not isinstance(prev_level, int) or isinstance(prev_level, bool) or not 1 <= prev_level <= 5:
        raise ValueError(f"prev_level must be an integer in 1..5, got {prev_level!r}")
    level = quantize(value, lo, hi)
    if level == prev_level or abs(level - prev_level) > 1:
        return level
    bin_width = (hi - lo) / 5.0
    edge = lo + (max(level, prev_level) - 1) * bin_width
    if abs(value - edge) < margin_fraction * bin_width:
        return prev_level
    return level


def calibrate(
    rest_samples: Iterable[BiosignalSample],
    stress_samples: Iterable[BiosignalSample],
) -> CalibrationProfile:
    """Build a profile from rest and stress recordings.

    Anchors are medians, so a short spike artifact cannot shift them.
    Raises ValueError when an axis comes out inverted (rest >= stress).
    """
    rest = list(rest_samples)
    stress = list(stress_samples)
    if not rest or not stress:
        raise ValueError("calibration needs at least one sample in each phase")
    return CalibrationProfile(
        hr_rest=statistics.median(s.hr_bpm for s in rest),
        hr_stress=statistics.median(s.hr_bpm for s in stress),
        eda_rest=statistics.median(s.eda_us for s in rest),
        eda_stress=statistics.median(s.eda_us for s in stress),
    )


def write_profile(path: str | Path, profile: CalibrationProfile) -> None:
    """Write a calibration profile as a key=value text document."""
    lines = [f"version={PROFILE_VERSION}"]
    lines += [f"{name}={getattr(profile, name)!r}" for name in _PROFILE_FIELDS]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_profile(path: str | Path) -> CalibrationProfile:
    """Parse a key=value profile document; blank lines and # comments are skipped."""
    values: dict[str, float] = {}
    version: int | None = None
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key = key.strip()
        value = value.strip()
        if key == "version":
            version = int(value)
        elif key in _PROFILE_FIELDS:
            values[key] = float(value)
        else:
            raise ValueError(f"{path}:{lineno}: unknown profile field {key!r}")
    if version != PROFILE_VERSION:
        raise ValueError(f"{path}: unsupported profile version {version!r}")
    missing = [name for name in _PROFILE_FIELDS if name not in values]
    if missing:
        raise ValueError(f"{path}: missing profile fields {missing}")
    return CalibrationProfile(**values)

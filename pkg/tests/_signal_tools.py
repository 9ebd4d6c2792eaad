"""Waveform measurements used to verify rendered audio from the outside:
beat period from onset-threshold crossings, carrier frequency from
zero-crossing spacing and from the FFT peak.
"""

import numpy as np


def beat_onsets(
    samples,
    sample_rate: int,
    threshold_ratio: float = 0.55,
    min_separation_s: float = 0.3,
) -> np.ndarray:
    """Sample indices where a new beat's burst first crosses the threshold.

    Upward crossings of threshold_ratio * peak mark burst activity; a
    crossing opens a new beat only after min_separation_s without one.
    The default ratio sits above the second burst's relative amplitude,
    so only the beat-opening burst registers.
    """
    x = np.asarray(samples, dtype=np.float64)
    threshold = threshold_ratio * np.max(np.abs(x))
    above = x >= threshold
    crossings = np.flatnonzero(~above[:-1] & above[1:]) + 1
    onsets = []
    last = -np.inf
    for idx in crossings:
        if idx - last >= min_separation_s * sample_rate:
            onsets.append(idx)
        last = idx
    return np.asarray(onsets, dtype=np.int64)


def measure_beat_period(samples, sample_rate: int) -> float:
    """Median spacing between beat onsets, in seconds."""
    onsets = beat_onsets(samples, sample_rate)
    if len(onsets) < 2:
        raise ValueError("need at least two beat onsets to measure a period")
    return float(np.median(np.diff(onsets))) / sample_rate


def measure_carrier_zero_crossings(
    samples, sample_rate: int, window_s: float = 0.05
) -> float:
    """Carrier frequency from interpolated zero-crossing spacing.

    Uses the opening window of the signal, where only the first burst is
    active; the sine's zeros are independent of the decay envelope, so
    consecutive crossings sit exactly half a carrier cycle apart.
    """
    x = np.asarray(samples[: int(window_s * sample_rate)], dtype=np.float64)
    signs = x[:-1] * x[1:]
    idx = np.flatnonzero(signs < 0.0)
    if len(idx) < 3:
        raise ValueError("not enough zero crossings in the opening window")
    times = (idx + x[idx] / (x[idx] - x[idx + 1])) / sample_rate
    return (len(times) - 1) / (2.0 * (times[-1] - times[0]))


def measure_carrier_fft(samples, sample_rate: int) -> float:
    """Frequency of the strongest non-DC FFT bin."""
    x = np.asarray(samples, dtype=np.float64)
    spectrum = np.abs(np.fft.rfft(x))
    spectrum[0] = 0.0
    return float(np.argmax(spectrum)) * sample_rate / len(x)

"""PCM encoding and WAV / raw output for rendered buffers."""

from __future__ import annotations

import wave
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .synth import AudioBuffer

PCM_FULL_SCALE = 32767


def encode_pcm16(buf: AudioBuffer) -> bytes:
    """Clip to [-1, 1] and encode as 16-bit little-endian signed PCM."""
    clipped = np.clip(buf.samples, -1.0, 1.0)
    return np.rint(clipped * PCM_FULL_SCALE).astype("<i2").tobytes()


def write_wav(path: str | Path, buf: AudioBuffer) -> None:
    """Write a mono 16-bit PCM RIFF/WAVE file."""
    with wave.open(str(path), "wb") as out:
        out.setnchannels(1)
        out.setsampwidth(2)
        out.setframerate(buf.sample_rate)
        out.writeframes(encode_pcm16(buf))


def write_raw(stream: BinaryIO, buf: AudioBuffer) -> None:
    """Write headerless 16-bit LE PCM to a binary stream (e.g. stdout)."""
    stream.write(encode_pcm16(buf))
    stream.flush()

"""pulselink: mutual biosignal streaming between two players, rendered as
emotion-mapped heartbeat vibration waveforms.

Each player publishes heart rate and electrodermal activity samples to a
small relay service; the partner's stream is quantised into five arousal
and valence levels that select the beat rate and carrier frequency of a
heartbeat-like vibrotactile drive signal.
"""

from .client import RelayClient, RelayError
from .emotion import (
    DEFAULT_PROFILE,
    F_LEVELS,
    H_LEVELS,
    BiosignalSample,
    CalibrationProfile,
    EmotionLevels,
    apply_hysteresis,
    calibrate,
    levels_to_params,
    map_sample,
    quantize,
    read_profile,
    write_profile,
)
from .relay import RelayConfig, RelayServer
from .session import (
    LevelFrame,
    SessionResult,
    emit_frames,
    offline_pipeline,
    run_session,
    simulate_pair,
)
from .simulate import ScenarioSegment, ScenarioSpec, TraceError, generate, load_trace, write_trace
from .synth import (
    DEFAULT_SAMPLE_RATE,
    AudioBuffer,
    HeartbeatParams,
    heartbeat_value,
    phase_fold,
    render,
    render_stream,
    s1,
    s2,
)

__version__ = "0.1.0"

__all__ = [
    "AudioBuffer",
    "BiosignalSample",
    "CalibrationProfile",
    "DEFAULT_PROFILE",
    "DEFAULT_SAMPLE_RATE",
    "EmotionLevels",
    "F_LEVELS",
    "H_LEVELS",
    "HeartbeatParams",
    "LevelFrame",
    "RelayClient",
    "RelayConfig",
    "RelayError",
    "RelayServer",
    "ScenarioSegment",
    "ScenarioSpec",
    "SessionResult",
    "TraceError",
    "apply_hysteresis",
    "calibrate",
    "emit_frames",
    "generate",
    "heartbeat_value",
    "levels_to_params",
    "load_trace",
    "map_sample",
    "offline_pipeline",
    "phase_fold",
    "quantize",
    "read_profile",
    "render",
    "render_stream",
    "run_session",
    "s1",
    "s2",
    "simulate_pair",
    "write_profile",
    "write_trace",
]

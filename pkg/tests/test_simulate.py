import pytest
from hypothesis import given
from hypothesis import strategies as st

from pulselink.emotion import EDA_RANGE, HR_RANGE, BiosignalSample
from pulselink.simulate import (
    ScenarioSegment,
    ScenarioSpec,
    TraceError,
    format_decimal,
    generate,
    load_trace,
    write_trace,
)


# -- generate -----------------------------------------------------------------


def test_constant_scenario():
    spec = ScenarioSpec(kind="constant", total_duration_ms=3000)
    samples = generate(spec, seed=0)
    assert samples == [
        BiosignalSample(0, 60.0, 1.0),
        BiosignalSample(1000, 60.0, 1.0),
        BiosignalSample(2000, 60.0, 1.0),
    ]


def test_ramp_linear_midpoint():
    spec = ScenarioSpec(
        kind="ramp",
        total_duration_ms=60_000,
        hr_baseline=60.0,
        hr_target=120.0,
        eda_baseline=1.0,
        eda_target=9.0,
    )
    samples = generate(spec, seed=0)
    by_t = {s.t_ms: s for s in samples}
    assert by_t[30_000].hr_bpm == 90.0
    assert by_t[30_000].eda_us == 5.0
    assert by_t[0].hr_bpm == 60.0


def test_ramp_holds_target_after_ramp_duration():
    spec = ScenarioSpec(
        kind="ramp",
        total_duration_ms=10_000,
        ramp_duration_ms=4000,
        hr_baseline=60.0,
        hr_target=100.0,
    )
    by_t = {s.t_ms: s for s in generate(spec)}
    assert by_t[4000].hr_bpm == 100.0
    assert by_t[9000].hr_bpm == 100.0


def test_sinusoid_scenario():
    spec = ScenarioSpec(
        kind="sinusoid",
        total_duration_ms=8000,
        emit_interval_ms=1000,
        hr_baseline=80.0,
        hr_amplitude=10.0,
        period_ms=4000,
    )
    by_t = {s.t_ms: s for s in generate(spec)}
    assert by_t[1000].hr_bpm == 90.0  # quarter period: sin == 1
    assert by_t[3000].hr_bpm == 70.0


def test_script_scenario_holds_last_segment():
    spec = ScenarioSpec(
        kind="script",
        total_duration_ms=6000,
        segments=(
            ScenarioSegment(2000, 60.0, 1.0),
            ScenarioSegment(2000, 120.0, 8.0),
        ),
    )
    values = [(s.t_ms, s.hr_bpm, s.eda_us) for s in generate(spec)]
    assert values == [
        (0, 60.0, 1.0),
        (1000, 60.0, 1.0),
        (2000, 120.0, 8.0),
        (3000, 120.0, 8.0),
        (4000, 120.0, 8.0),  # held past the scripted end
        (5000, 120.0, 8.0),
    ]


def test_generation_is_deterministic_for_a_seed():
    spec = ScenarioSpec(
        kind="constant", total_duration_ms=20_000, hr_jitter=3.0, eda_jitter=0.4
    )
    assert generate(spec, seed=42) == generate(spec, seed=42)
    assert generate(spec, seed=42) != generate(spec, seed=43)


def test_jittered_values_stay_in_range():
    spec = ScenarioSpec(
        kind="constant",
        total_duration_ms=60_000,
        hr_baseline=32.0,
        eda_baseline=0.02,
        hr_jitter=20.0,
        eda_jitter=1.0,
    )
    for sample in generate(spec, seed=9):
        assert HR_RANGE[0] <= sample.hr_bpm <= HR_RANGE[1]
        assert EDA_RANGE[0] <= sample.eda_us <= EDA_RANGE[1]


def test_scenario_validation():
    with pytest.raises(ValueError):
        ScenarioSpec(kind="nope")
    with pytest.raises(ValueError):
        ScenarioSpec(emit_interval_ms=0)
    with pytest.raises(ValueError):
        ScenarioSpec(kind="script")
    with pytest.raises(ValueError):
        ScenarioSpec(kind="trace")
    with pytest.raises(ValueError):
        ScenarioSpec(hr_jitter=-1.0)


def test_scenario_from_dict_rejects_unknown_keys():
    with pytest.raises(ValueError, match="bogus"):
        ScenarioSpec.from_dict({"kind": "constant", "bogus": 1})


def test_scenario_from_dict_coerces_whole_number_floats():
    spec = ScenarioSpec.from_dict(
        {"kind": "constant", "total_duration_ms": 3000.0, "emit_interval_ms": 500.0}
    )
    assert spec.total_duration_ms == 3000
    assert len(generate(spec)) == 6
    with pytest.raises(ValueError, match="whole number"):
        ScenarioSpec.from_dict({"kind": "constant", "total_duration_ms": 3000.5})


def test_scenario_from_dict_builds_segments():
    spec = ScenarioSpec.from_dict(
        {
            "kind": "script",
            "total_duration_ms": 4000,
            "segments": [
                {"duration_ms": 2000, "hr_bpm": 60.0, "eda_us": 1.0},
                {"duration_ms": 2000, "hr_bpm": 90.0, "eda_us": 2.0},
            ],
        }
    )
    assert spec.segments[1].hr_bpm == 90.0


# -- traces -------------------------------------------------------------------


def test_trace_round_trip(tmp_path):
    spec = ScenarioSpec(
        kind="ramp",
        total_duration_ms=30_000,
        hr_baseline=62.0,
        hr_target=117.0,
        eda_baseline=1.2,
        eda_target=8.8,
        hr_jitter=2.5,
        eda_jitter=0.3,
    )
    samples = generate(spec, seed=11)
    path = tmp_path / "trace.csv"
    write_trace(path, samples)
    assert load_trace(path) == samples


def test_trace_scenario_kind_replays_file(tmp_path):
    samples = generate(ScenarioSpec(kind="constant", total_duration_ms=3000))
    path = tmp_path / "trace.csv"
    write_trace(path, samples)
    spec = ScenarioSpec(kind="trace", trace_path=str(path))
    assert generate(spec, seed=5) == samples


def test_load_trace_without_header(tmp_path):
    path = tmp_path / "bare.csv"
    path.write_text("0,60,1.0\n1000,62,1.1\n")
    samples = load_trace(path)
    assert samples == [BiosignalSample(0, 60.0, 1.0), BiosignalSample(1000, 62.0, 1.1)]


def test_load_trace_reports_non_monotone_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("t_ms,hr_bpm,eda_us\n0,60,1.0\n1000,62,1.1\n500,61,1.0\n")
    with pytest.raises(TraceError, match=":4"):
        load_trace(path)


def test_load_trace_reports_out_of_range_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("0,60,1.0\n1000,500,1.1\n")
    with pytest.raises(TraceError, match=":2"):
        load_trace(path)


def test_load_trace_reports_malformed_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("0,60,1.0\nnot-a-row\n")
    with pytest.raises(TraceError, match=":2"):
        load_trace(path)
    path.write_text("0,60\n")
    with pytest.raises(TraceError, match="3 comma-separated"):
        load_trace(path)


def test_equal_timestamps_are_accepted(tmp_path):
    path = tmp_path / "dup.csv"
    path.write_text("0,60,1.0\n0,61,1.0\n")
    assert len(load_trace(path)) == 2


@given(
    st.lists(
        st.tuples(
            st.floats(30.0, 220.0),
            st.floats(0.01, 100.0),
        ),
        min_size=1,
        max_size=30,
    )
)
def test_trace_round_trip_property(tmp_path_factory, values):
    samples = [
        BiosignalSample(i * 500, round(hr, 3), round(eda, 3))
        for i, (hr, eda) in enumerate(values)
    ]
    path = tmp_path_factory.mktemp("traces") / "t.csv"
    write_trace(path, samples)
    assert load_trace(path) == samples


def test_format_decimal():
    assert format_decimal(60.0) == "60"
    assert format_decimal(1.1) == "1.1"
    assert format_decimal(0.125) == "0.125"
    assert format_decimal(2.5004) == "2.5"

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qek.embedder import Register, RegisterConstraints
from qek.pulses import (DRIVE_PHASE, PulseSchedule, Segment, ValidationError, WaveformParams,
                        build_schedule, emit_task_document, parse_task_document, smooth_schedule,
                        validate_task)

LAMBDA_BO = WaveformParams(85, 21, 50, 25, 20)


@pytest.fixture
def register():
    return Register([[30.0, 36.0], [36.0, 36.0], [33.0, 40.0]], RegisterConstraints().r_b, graph_id=5)


def test_mixing_angles():
    angles = build_schedule(LAMBDA_BO, 15.8).mixing_angles()
    np.testing.assert_allclose(angles, [1.343, 0.790, 0.316], atol=1e-12)
    np.testing.assert_allclose(np.degrees(angles), [77, 45.3, 18.1], atol=0.1)


def test_segment_layout():
    s = build_schedule(LAMBDA_BO)
    assert [seg.omega for seg in s.segments] == [15.8, 0.0, 15.8, 0.0, 15.8]
    assert all(seg.phase == DRIVE_PHASE and seg.detuning == 0 for seg in s.segments)


@pytest.mark.parametrize("lam, total_us", [
    ((100, 37, 80, 50, 50), 0.317),
    ((10, 10, 10, 10, 10), 0.050),
])
def test_total_duration(lam, total_us):
    assert build_schedule(WaveformParams(*lam)).total_duration == pytest.approx(total_us, abs=1e-15)


def test_equal_segments_angles():
    angles = build_schedule(WaveformParams(10, 10, 10, 10, 10)).mixing_angles()
    np.testing.assert_allclose(angles, [0.158] * 3, atol=1e-12)


@pytest.mark.parametrize("lam, match", [
    ((85, 5, 50, 25, 20), "min_segment: t0"),
    ((300, 21, 150, 25, 20), "total_time"),
    ((200, 100, 100, 50, 50), "total_time"),  # exactly 500 is not < 500
])
def test_build_rejects_infeasible(lam, match):
    with pytest.raises(ValidationError, match=match):
        build_schedule(WaveformParams(*lam))


def test_build_rejects_excess_amplitude():
    with pytest.raises(ValidationError, match="omega"):
        build_schedule(LAMBDA_BO, omega0=20.0)


def test_validate_accepts_default(register):
    assert validate_task(build_schedule(LAMBDA_BO), register) == []


def test_validate_short_segment():
    s = PulseSchedule([Segment(0.085, 15.8), Segment(0.004, 0.0), Segment(0.05, 15.8)])
    assert validate_task(s, None) == ["min_segment: 4 < 5 ns (segment 1)"]


def test_validate_register_outside_area():
    reg = Register([[80.0, 4.0], [74.0, 4.0]], 8.4)
    problems = validate_task(build_schedule(LAMBDA_BO), reg)
    assert len(problems) == 1 and problems[0].startswith("register area: x exceeds 75 um")


def test_document_units_and_shots(register):
    doc = json.loads(emit_task_document(build_schedule(LAMBDA_BO), register, 1000))
    assert doc["n_shots"] == 1000
    assert doc["drive"]["durations_s"][0] == 8.5e-8
    assert doc["drive"]["rabi_rad_per_s"][0] == 1.58e7
    assert doc["register"]["positions_m"][0] == [3e-5, 3.6e-5]


def test_document_refuses_invalid(register):
    bad = Register([[80.0, 4.0], [74.0, 4.0]], 8.4)
    with pytest.raises(ValidationError):
        emit_task_document(build_schedule(LAMBDA_BO), bad, 1000)
    with pytest.raises(ValidationError, match="n_shots"):
        emit_task_document(build_schedule(LAMBDA_BO), register, 0)


durations = st.floats(5.5, 90.0, allow_nan=False)
coords = st.floats(0.0, 75.0, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(st.tuples(durations, durations, durations, durations, durations),
       st.lists(st.tuples(coords, st.integers(0, 19)), min_size=1, max_size=4, unique_by=lambda p: p[1]),
       st.integers(1, 10**6))
def test_emit_parse_emit_is_byte_identical(lam, atoms, shots):
    reg = Register([[x, 4.0 * row] for x, row in atoms], 8.367, graph_id=1)
    text = emit_task_document(build_schedule(WaveformParams(*lam)), reg, shots)
    sched, reg2, n = parse_task_document(text)
    assert n == shots
    assert emit_task_document(sched, reg2, n) == text


def test_parse_rejects_unknown_schema(register):
    doc = json.loads(emit_task_document(build_schedule(LAMBDA_BO), register, 10))
    doc["schema"] = "other/9"
    with pytest.raises(ValueError, match="schema"):
        parse_task_document(json.dumps(doc))


def test_smoothing_preserves_area_and_duration():
    s = build_schedule(LAMBDA_BO)
    sm = smooth_schedule(s, ramp_time=0.004, steps=8)
    area = lambda sch: sum(seg.omega * seg.duration for seg in sch.segments)
    assert sm.total_duration == pytest.approx(s.total_duration, abs=1e-15)
    assert area(sm) == pytest.approx(area(s), rel=1e-12)
    assert max(seg.omega for seg in sm.segments) <= 15.8
    with pytest.raises(ValueError):
        smooth_schedule(s, ramp_time=0.03)

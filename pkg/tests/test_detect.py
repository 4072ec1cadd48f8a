import itertools
import math

import numpy as np
import pytest

from failsafe_quad.detect import (
    CHANNELS,
    DOWN,
    NONE,
    SIGNATURES,
    UP,
    DetectorConfig,
    FailureDetector,
    SpikeSignature,
    classify,
    extract_signature,
    replay,
)
from failsafe_quad.errors import InsufficientDataError
from failsafe_quad.sim import hover_scenario, run


def fs(*m):
    return frozenset(m)


def test_table_rows():
    assert classify(SpikeSignature(p=UP, r=UP, phi=UP)).failed == fs(4)
    assert classify(SpikeSignature(p=DOWN, r=UP, phi=DOWN)).failed == fs(2)
    assert classify(SpikeSignature(r=DOWN)).failed == fs(1, 3)
    assert classify(SpikeSignature(r=UP)).failed == fs(2, 4)
    assert classify(SpikeSignature(q=DOWN, r=UP, theta=DOWN)).failed == fs(2, 3, 4)


def test_quiet_signature_means_no_failure():
    v = classify(SpikeSignature())
    assert v.failed == frozenset()
    assert v.label() == "none"


def test_unmatched_signature_is_unknown():
    v = classify(SpikeSignature(p=UP, q=UP, r=NONE))
    assert v.unknown and v.label() == "unknown"


def test_every_row_is_recovered_from_its_own_pattern():
    for failed, row in SIGNATURES.items():
        assert classify(SpikeSignature(**row)).failed == failed


def test_signature_enumeration_has_no_row_collisions():
    # Reading blank cells as "no change", no two rows share a signature, and
    # every one of the 3^5 signatures yields a definite row, "none", or an
    # explicit unknown/tie verdict.
    exact = {}
    for trends in itertools.product((UP, NONE, DOWN), repeat=5):
        sig = dict(zip(CHANNELS, trends))
        rows = [f for f, row in SIGNATURES.items() if all(sig[ch] == row.get(ch, NONE) for ch in CHANNELS)]
        assert len(rows) <= 1
        if rows:
            exact[rows[0]] = trends
        v = classify(SpikeSignature(*trends))
        if v.unknown and v.ties:
            assert len(v.ties) >= 2
    assert set(exact) == set(SIGNATURES)
    assert len(set(exact.values())) == len(SIGNATURES)


def test_extract_signature():
    flat = np.zeros((10, 5))
    assert extract_signature(flat, (0.1,) * 5) == SpikeSignature()
    ramp = np.outer(np.linspace(0, 1, 10), [1.0, -1.0, 0.0, 0.5, 0.0])
    assert extract_signature(ramp, (0.1,) * 5) == SpikeSignature(p=UP, q=DOWN, phi=UP)
    assert extract_signature(ramp, (math.inf,) * 5) == SpikeSignature()
    with pytest.raises(InsufficientDataError):
        extract_signature(np.zeros((1, 5)), (0.1,) * 5)


def test_angle_wrap_in_signature():
    w = np.zeros((2, 5))
    w[0, 3], w[1, 3] = math.pi - 0.01, -math.pi + 0.01
    assert extract_signature(w, (1.0, 1.0, 1.0, 0.05, 0.05)).phi == NONE


def test_streaming_detector_latches():
    cfg = DetectorConfig(window=0.01, hold=0.01, sample_period=0.001)
    det = FailureDetector(cfg)
    t = 0.0
    verdict = None
    for k in range(200):
        t = k * 0.001
        r = 0.0 if k < 50 else 100.0 * (t - 0.05)
        verdict = det.update(t, 0.0, 0.0, r, 0.0, 0.0) or verdict
    assert verdict.failed == fs(2, 4)
    assert 0.05 < verdict.detection_time < 0.08
    assert det.update(1.0, 0, 0, 0, 0, 0) is verdict


def test_replay_quiet_log():
    rows = [(k * 0.01, 0.0, 0.0, 0.0, 0.0, 0.0) for k in range(100)]
    assert replay(rows, DetectorConfig(sample_period=0.01)) == []


@pytest.mark.parametrize("motors", [(4,), (1, 3)])
def test_detection_in_simulation(motors):
    res = run(hover_scenario(motors))
    assert res.detection is not None
    assert res.detection.failed == frozenset(motors)
    assert res.detection.detection_time - 1.0 <= 0.5


def test_channel_order():
    assert CHANNELS == ("p", "q", "r", "phi", "theta")

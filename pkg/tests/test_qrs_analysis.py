import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cardiotwin.errors import NumericalError, ValidationError
from cardiotwin.pseudo_ecg import LEAD_NAMES, EcgRecord
from cardiotwin.qrs_analysis import (DtwTable, Thresholds, detect_abnormalities, dtw_alignment, dtw_distance,
                                     dtw_record, duration_penalty, fragmented, is_prolonged,
                                     poor_r_progression, q_wave, qrs_duration, reversals)


def _paths(n, m):
    """Every monotone, continuous warping path from (0, 0) to (n-1, m-1)."""
    def rec(i, j):
        if (i, j) == (n - 1, m - 1):
            yield [(i, j)]
            return
        for di, dj in ((1, 0), (0, 1), (1, 1)):
            if i + di < n and j + dj < m:
                for tail in rec(i + di, j + dj):
                    yield [(i, j)] + tail
    return list(rec(0, 0))


def _brute(a, b):
    best = None
    for p in _paths(len(a), len(b)):
        c = sum(abs(a[i] - b[j]) for i, j in p)
        key = (c, len(p))
        best = key if best is None or key < best else best
    return best


def test_dtw_small_lattice():
    a, b = [0.0, 1.0, 0.0], [0.0, 0.0, 1.0, 0.0]
    c, n = _brute(a, b)
    assert dtw_alignment(a, b) == (c, n)
    assert dtw_distance(a, b, 10.0, 10.0) == pytest.approx(c / n, abs=0)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(-3, 3), min_size=1, max_size=5), st.lists(st.integers(-3, 3), min_size=1, max_size=5))
def test_dtw_matches_path_enumeration(a, b):
    a, b = np.array(a, float), np.array(b, float)
    c, n = _brute(a, b)
    cc, nn = dtw_alignment(a, b)
    assert cc == pytest.approx(c, abs=1e-12) and nn == n


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_dtw_symmetric_and_nonnegative(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=rng.integers(1, 40)), rng.normal(size=rng.integers(1, 40))
    d = dtw_distance(a, b, 80.0, 95.0)
    assert d >= 0
    assert d == pytest.approx(dtw_distance(b, a, 95.0, 80.0), abs=1e-12)
    assert dtw_distance(a, a, 80.0, 80.0) == 0.0


def test_duration_penalty_strictly_increasing():
    x = np.sin(np.linspace(0, 3, 50))
    vals = [dtw_distance(x, x, 100.0, 100.0 + d) for d in (0, 5, 10, 20, 40)]
    assert all(np.diff(vals) > 0)
    assert duration_penalty(100, 150, gamma=2) == pytest.approx(2 * 50 / 150)
    assert duration_penalty(0, 0) == 0


def test_dtw_errors():
    with pytest.raises(ValidationError):
        dtw_distance([], [1.0])
    with pytest.raises(ValidationError):
        dtw_alignment(np.zeros((2, 2)), [1.0])


def _record(leads, dt):
    return EcgRecord(np.asarray(leads, float), dt)


def test_dtw_record_uses_durations():
    rng = np.random.default_rng(1)
    leads = rng.normal(size=(8, 64))
    a, b = _record(leads, 1.0), _record(leads, 1.5)
    assert np.allclose(dtw_record(a, b), duration_penalty(a.duration, b.duration))


def test_qrs_duration_synthetic_pulse():
    dt = 0.25
    leads = np.zeros((8, 401))
    rec = EcgRecord(leads + 1e-3, dt, onset=0, offset=400)
    assert qrs_duration(rec) == pytest.approx(100.0, abs=dt)
    with pytest.raises(NumericalError):
        qrs_duration(EcgRecord(leads, dt))


def test_slow_cv_prolongs(model):
    from cardiotwin.scenario import SLOW_SCENARIO, scenario_by_name

    slow = model.run_scenario(scenario_by_name(SLOW_SCENARIO)).record
    std = model.run_scenario(scenario_by_name("lateral-large-transmural")).record
    assert qrs_duration(slow) > qrs_duration(std)


def test_prolongation_rule():
    assert is_prolonged(130, 90)
    assert not is_prolonged(100, 90)
    base = EcgRecord(np.tile(np.sin(np.linspace(0, np.pi, 91)), (8, 1)), 1.0)
    longer = EcgRecord(np.tile(np.sin(np.linspace(0, np.pi, 131)), (8, 1)), 1.0)
    assert detect_abnormalities(longer, base).prolongation
    assert not detect_abnormalities(base, base).any()


def test_prwp_examples():
    assert poor_r_progression([0.8, 0.6, 0.4, 0.2, 0.3, 0.2])
    assert not poor_r_progression([0.1, 0.2, 0.4, 0.6, 0.8, 0.7])
    assert poor_r_progression([0.1, 0.2, 0.4, 0.6, 0.7, 0.8])


def test_q_wave():
    dt = 1.0
    t = np.arange(200)
    wide = np.where(t < 50, -0.1, 1.0) * (t > 0)
    assert q_wave(wide, dt)
    deep = np.concatenate([-0.5 * np.ones(10), np.ones(100)])
    assert q_wave(deep, dt)
    shallow = np.concatenate([-0.1 * np.ones(10), np.ones(100)])
    assert not q_wave(shallow, dt)
    assert not q_wave(np.ones(50), dt)


def test_reversals_and_fqrs():
    assert reversals([0, 1, 0, 1, 0], 0.5) == 3
    assert reversals([0, 1, 0.98, 1, 0], 0.05) == 1
    assert fragmented(np.array([0, 1, 0, 1, 0.0]), Thresholds())
    assert not fragmented(np.sin(np.linspace(0, np.pi, 100)), Thresholds())


def test_self_comparison_has_no_flags(baseline):
    f = detect_abnormalities(baseline.record, baseline.record)
    assert not f.any()


def test_table_csv_roundtrip():
    t = DtwTable(["a", "b"], np.arange(16.0).reshape(2, 8) / 7, [90.0, 120.0], 80.0, list(LEAD_NAMES))
    back = DtwTable.from_csv(t.to_csv({"config_hash": "x"}))
    assert back.scenarios == t.scenarios
    # the table is written with 10 decimals
    assert np.allclose(back.values, t.values, rtol=0, atol=1e-10)
    assert np.allclose(back.dtw_avg, t.dtw_avg, rtol=0, atol=1e-9)
    assert t.representative.shape == (2, 8)

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cardiotwin.cobiveco import (AhaConfig, CobivecoCoord, aha_segment, aha_segments, in_lv, in_lv_mask,
                                 rt_delta)
from cardiotwin.errors import DomainError, ValidationError


@pytest.mark.parametrize("c, expected", [
    ((0.5, 0.5, 0.1, 0), True),
    ((0.5, 0.5, 0.5, 1), False),
    ((0.5, 0.5, 0.8, 1), True),
    ((0.5, 0.5, 2 / 3, 1), False),
])
def test_in_lv(c, expected):
    assert in_lv(CobivecoCoord(*c)) is expected
    assert in_lv(np.array(c)) is expected


def test_coord_ranges():
    with pytest.raises(ValidationError):
        CobivecoCoord(1.3, 0.5, 0.1, 0)
    with pytest.raises(ValidationError):
        CobivecoCoord(0.5, 0.5, 1.0, 0)
    with pytest.raises(ValidationError):
        CobivecoCoord(0.5, 0.5, 0.1, 2)


def test_rt_delta_examples():
    assert rt_delta(0.1, 0.9) == pytest.approx(-0.2)
    assert rt_delta(0.3, 0.3) == 0.0
    assert rt_delta(0.0, 0.5) == 0.5
    assert rt_delta(0.5, 0.0) == 0.5


@given(st.floats(0, 1, exclude_max=True), st.floats(0, 1, exclude_max=True))
def test_rt_delta_bounded_and_antisymmetric(a, b):
    d = rt_delta(a, b)
    assert -0.5 <= d <= 0.5
    assert np.isclose(np.mod(a + d - b + 0.5, 1.0), 0.5)
    if abs(d) < 0.5:
        assert rt_delta(b, a) == pytest.approx(-d)


def test_aha_examples():
    assert aha_segment((0.3, 0.05, 0.4, 0)) == 17
    # basal ring, first sector after the anterior-septal anchor is anterior (segment 1)
    assert aha_segment((0.3, 0.9, 0.5, 0)) == 1
    with pytest.raises(DomainError):
        aha_segment((0.5, 0.5, 0.5, 1))


def test_aha_rings_and_sectors():
    seg = lambda ab, rt: aha_segment((0.0, ab, rt, 0))
    # sectors walk backwards in rt from the anchor: anteroseptal, inferoseptal, inferior, inferolateral, anterolateral, anterior
    assert [seg(0.9, r) for r in (0.75, 0.9, 0.1, 0.25, 0.4, 0.55)] == [2, 3, 4, 5, 6, 1]
    assert [seg(0.5, r) for r in (0.75, 0.9, 0.1, 0.25, 0.4, 0.55)] == [8, 9, 10, 11, 12, 7]
    assert [seg(0.2, r) for r in (0.8, 0.05, 0.3, 0.55)] == [14, 15, 16, 13]
    # septal RV-side coordinate counts as LV
    assert aha_segment((0.2, 0.5, 0.8, 1)) == 8


def test_aha_thresholds_configurable():
    cfg = AhaConfig(apex_cap=0.2)
    assert aha_segment((0, 0.15, 0.4, 0), cfg) == 17
    assert aha_segment((0, 0.15, 0.4, 0)) != 17


def test_segments_partition_lv(phantom):
    lv = in_lv_mask(phantom.cobiveco)
    seg = aha_segments(phantom.cobiveco[lv])
    assert seg.min() >= 1 and seg.max() <= 17
    assert set(seg.tolist()) == set(range(1, 18))
    assert (aha_segments(phantom.cobiveco, strict=False)[~lv] == 0).all()


@given(st.floats(0.11, 0.99), st.floats(0, 1, exclude_max=True))
def test_aha_piecewise_constant(ab, rt):
    edges = np.r_[np.arange(6) / 6, np.arange(4) / 4]
    dist = np.abs(rt_delta(np.mod(edges + 2 / 3, 1.0), rt))
    if dist.min() < 1e-6 or min(abs(ab - 1 / 3), abs(ab - 2 / 3)) < 1e-6:
        return
    s = aha_segment((0.5, ab, rt, 0))
    assert aha_segment((0.5, ab, np.mod(rt + 5e-10, 1.0), 0)) == s
    assert aha_segment((0.5, ab, np.mod(rt - 5e-10, 1.0), 0)) == s

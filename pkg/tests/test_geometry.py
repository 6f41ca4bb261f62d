import math
from decimal import ROUND_HALF_UP, Decimal, localcontext

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from layervsd.errors import DimensionMismatch, InvariantViolation
from layervsd.geometry import delta_map, depth_to_disparity, level_range, round_half_away


def decimal_disparity(d, fB, zn, zf):
    with localcontext() as ctx:
        ctx.prec = 60
        fB, zn, zf = Decimal(fB), Decimal(zn), Decimal(zf)
        v = fB * Decimal(d) / Decimal(255) * (1 / zn - 1 / zf) + fB / zf
        return int(v.quantize(Decimal(1), rounding=ROUND_HALF_UP))


@pytest.mark.parametrize("d,expected", [(0, 10), (255, 100), (128, 55)])
def test_reference_rig_values(d, expected):
    assert depth_to_disparity(np.array([d], np.uint8), 1000, 10, 100)[0] == expected


def test_disparity_is_monotone_in_depth():
    table = depth_to_disparity(np.arange(256, dtype=np.uint8), 731.5, 7.0, 250.0)
    assert np.all(np.diff(table) >= 0)


def test_exact_tie_rounds_up():
    # this rig puts several depth values exactly half way between integers
    depths = np.arange(256, dtype=np.uint8)
    ours = depth_to_disparity(depths, 50, 10, 100)
    ties = [d for d in range(256) if (Decimal(50) * d / 255 * Decimal("0.09") + Decimal("0.5")) % 1 == Decimal("0.5")]
    assert ties, "rig chosen to contain exact half-way values"
    for d in ties:
        assert ours[d] == decimal_disparity(d, 50, 10, 100)


def test_round_half_away():
    assert round_half_away(np.array([0.5, 1.5, 2.5, -0.5, -2.5, 2.4999])).tolist() == [1, 2, 3, -1, -3, 2]


def test_bad_rig_rejected():
    with pytest.raises(InvariantViolation):
        depth_to_disparity(np.zeros(3, np.uint8), 100, 50, 10)
    with pytest.raises(InvariantViolation):
        depth_to_disparity(np.array([300]), 100, 10, 50)


def test_delta_examples():
    assert delta_map(np.array([5]), np.array([7])).tolist() == [2]
    assert delta_map(np.array([10]), np.array([7])).tolist() == [-3]
    a = np.arange(12).reshape(3, 4)
    assert not delta_map(a, a).any()
    with pytest.raises(DimensionMismatch):
        delta_map(np.zeros((2, 2)), np.zeros((2, 3)))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 60), min_size=1, max_size=40), st.lists(st.integers(0, 60), min_size=1, max_size=40))
def test_delta_antisymmetric(a, b):
    n = min(len(a), len(b))
    a, b = np.array(a[:n]), np.array(b[:n])
    assert np.array_equal(delta_map(a, b), -delta_map(b, a))


def test_level_range_examples():
    assert level_range(np.zeros((4, 4), int)) == 0
    # {-1, 0, 1}: sigma ~ 0.816, 3 sigma rounds up to 3, clamped to the peak 1
    assert level_range(np.array([-1, 0, 1] * 10)) == 1
    values = np.array([0] * 99 + [4])
    sigma = math.sqrt(np.mean(values**2) - np.mean(values) ** 2)
    expected = min(math.ceil(3 * sigma), 4)
    assert expected == 2
    assert level_range(values) == expected


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(-20, 20), min_size=1, max_size=60))
def test_level_range_bounds(values):
    r = level_range(np.array(values))
    assert 0 <= r <= max(abs(v) for v in values)

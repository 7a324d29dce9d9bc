"""Tests for metrics.py."""


from decimal import Decimal
from fractions import Fraction

import numpy as np
import pytest

import metrics
import raster
from metrics import AccuracyRow
from raster import BinaryImage


def _plus(side: int = 21) -> BinaryImage:
    arr = np.zeros((side, side), dtype=bool)
    arr[side // 2, 2:side - 2] = True
    arr[2:side - 2, side // 2] = True
    return BinaryImage(arr)


def test_area_identities(rng):
    for _ in range(500):
        shape = tuple(rng.integers(1, 30, size=2))
        a = BinaryImage(rng.random(shape) < rng.uniform(0.05, 0.9))
        m = BinaryImage(rng.random(shape) < rng.uniform(0.05, 0.9))
        counts = metrics._checked_counts(a, m)
        assert counts['area_auto'] == counts['area_intersection'] + counts['area_spill']
        if counts['area_manual']:
            assert metrics.area_recall(m, m) == 100
            assert 0 <= metrics.area_recall(a, m) <= 100
        if counts['area_manual_complement']:
            assert metrics.area_spill(m, m) == 0
            assert 0 <= metrics.area_spill(a, m) <= 100


def test_area_measures_never_drop_as_auto_grows(rng):
    for _ in range(200):
        shape = tuple(rng.integers(2, 24, size=2))
        manual = rng.random(shape) < 0.4
        manual[0, 0], manual[-1, -1] = True, False
        smaller = rng.random(shape) < rng.uniform(0.0, 0.5)
        larger = smaller | (rng.random(shape) < rng.uniform(0.0, 0.5))
        m = BinaryImage(manual)
        assert metrics.area_recall(BinaryImage(larger), m) >= metrics.area_recall(BinaryImage(smaller), m)
        assert metrics.area_spill(BinaryImage(larger), m) >= metrics.area_spill(BinaryImage(smaller), m)


def test_percentages_are_exact():
    manual = BinaryImage.from_points(3, 1, [(0, 0), (1, 0), (2, 0)])
    auto = BinaryImage.from_points(3, 1, [(0, 0)])
    assert metrics.area_recall(auto, manual) == Fraction(100, 3)
    assert metrics.round_percent(Fraction(100, 3)) == Decimal('33.33')


@pytest.mark.parametrize('value,expected', [
    (Fraction(0), '0.00'),
    (Fraction(100), '100.00'),
    (Fraction(200, 3), '66.67'),
    (Fraction(1, 200), '0.01'),         # exactly half a hundredth rounds up
    (Fraction(1, 201), '0.00'),
    (Fraction(419, 100), '4.19'),
])
def test_round_percent(value, expected):
    assert metrics.round_percent(value) == Decimal(expected)
    assert str(metrics.round_percent(value)) == expected


def test_empty_manual_is_undefined():
    empty = BinaryImage.empty(4, 4)
    some = BinaryImage.from_points(4, 4, [(1, 1)])
    with pytest.raises(metrics.UndefinedRatioError, match="undefined ratio"):
        metrics.area_recall(some, empty)
    with pytest.raises(metrics.UndefinedRatioError, match="undefined ratio"):
        metrics.compare_tracings(some, empty)


def test_full_manual_makes_spill_undefined():
    full = BinaryImage(np.ones((3, 3), dtype=bool))
    with pytest.raises(metrics.UndefinedRatioError):
        metrics.area_spill(full, full)


def test_shape_mismatch():
    with pytest.raises(raster.RasterError):
        metrics.area_recall(BinaryImage.empty(3, 2), BinaryImage.empty(2, 3))


def test_plus_has_four_branch_tips():
    assert metrics.count_branches(_plus()) == 4


def test_straight_line_has_two_branch_tips():
    arr = np.zeros((9, 30), dtype=bool)
    arr[4, 2:28] = True
    assert metrics.count_branches(BinaryImage(arr)) == 2


def test_blob_has_few_branch_tips():
    yy, xx = np.mgrid[:31, :31]
    disc = BinaryImage((yy - 15) ** 2 + (xx - 15) ** 2 <= 100)
    assert metrics.count_branches(disc) <= 2
    assert metrics.count_branches(BinaryImage.empty(5, 5)) == 0


def test_small_disc_thins_to_a_short_bar():
    yy, xx = np.mgrid[:9, :9]
    disc = BinaryImage((yy - 4) ** 2 + (xx - 4) ** 2 <= 4)
    assert raster.foreground_count(disc) == 13
    assert metrics.count_branches(disc) == 2


def test_skeleton_endpoints():
    skeleton = BinaryImage.from_points(5, 1, [(0, 0), (1, 0), (2, 0), (3, 0)])
    assert metrics.skeleton_endpoints(skeleton).tolist() == [[True, False, False, True, False]]


def test_compare_identical_tracings():
    comparison = metrics.compare_tracings(_plus(), _plus())
    assert comparison.branch_pct == 100
    assert comparison.area_recall_pct == 100
    assert comparison.area_spill_pct == 0
    assert comparison.raw_counts['auto_branches'] == comparison.raw_counts['manual_branches'] == 4
    assert comparison.as_dict()['area_recall_pct'] == 100.0


def test_compare_partial_tracing():
    manual = _plus()
    arr = np.array(manual.foreground)
    arr[:, 11:] = False                         # drop the right arm
    comparison = metrics.compare_tracings(BinaryImage(arr), manual)
    assert comparison.branch_pct == 75
    assert 0 < comparison.area_recall_pct < 100
    assert comparison.area_spill_pct == 0


def test_mean_row():
    rows = [AccuracyRow('a', Fraction(90), Fraction(80), Fraction(1)),
            AccuracyRow('b', Fraction(100), Fraction(85), Fraction(2))]
    mean = metrics.mean_row(rows)
    assert (mean.label, mean.branch_pct, mean.area_recall_pct, mean.area_spill_pct) == \
           ('mean', Fraction(95), Fraction(165, 2), Fraction(3, 2))
    with pytest.raises(metrics.UndefinedRatioError):
        metrics.mean_row([])


def test_format_table():
    rows = [AccuracyRow('10', Fraction(982, 10), Fraction(933, 10), Fraction(419, 100)),
            AccuracyRow('5', Fraction(100), Fraction(1, 3), Fraction(0))]
    lines = metrics.format_table(rows, first_column='length of filter').splitlines()
    assert lines[0].split(' | ') == ['length of filter', '    (1)', '   (2)', '  (3)']
    assert lines[2].split(' | ') == ['10'.ljust(16), ' 98.20%', '93.30%', '4.19%']
    assert lines[3].split(' | ') == ['5'.ljust(16), '100.00%', ' 0.33%', '0.00%']
    assert len({len(line) for line in lines}) == 1

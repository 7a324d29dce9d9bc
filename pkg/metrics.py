#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""Accuracy measures for comparing an automatic tracing against a manual one:

  (1) branches found automatically, as a percentage of branches in the manual
      tracing;
  (2) the part of the manually traced area that the automatic tracing also
      covers, as a percentage of the manual area;
  (3) the area the automatic tracing adds outside the manual tracing, as a
      percentage of everything outside the manual tracing.

All three are computed exactly, from integer pixel counts, as Fractions; they
are only rounded (half-up, to hundredths of a percent) when they're formatted
for a report. Results over a dataset are aggregated with the arithmetic mean.

"Branch" is not a well-defined notion for a traced mask, so count_branches()
uses a simple proxy: thin the mask to a one-pixel-wide skeleton and count the
skeleton's endpoints, i.e. skeleton pixels with exactly one 8-connected
skeleton neighbor.

This script is copyright 2024 by the persistack authors. It is licensed under
the GNU GPL, either version 3 or (at your option) any later version. See the
file LICENSE.md for details.
"""


import dataclasses

from decimal import Decimal
from fractions import Fraction
from typing import Any, Dict, Iterable, List, Sequence

import numpy as np                          # https://numpy.org/
from scipy import ndimage                   # https://scipy.org/
from skimage.morphology import thin         # https://scikit-image.org/

import raster                               # persistack
from raster import BinaryImage


class UndefinedRatioError(ZeroDivisionError):
    """A percentage whose denominator is zero."""


def percentage(numerator: int,
               denominator: int,
               what: str = "ratio") -> Fraction:
    """100 * NUMERATOR / DENOMINATOR, exactly."""
    if denominator == 0:
        raise UndefinedRatioError(f"undefined ratio: {what} has a zero denominator")
    return Fraction(100 * int(numerator), int(denominator))


def round_percent(value: Fraction) -> Decimal:
    """Round a non-negative percentage half-up to two decimal places."""
    assert value >= 0
    hundredths = value * 100
    n, d = hundredths.numerator, hundredths.denominator
    return Decimal((2 * n + d) // (2 * d)).scaleb(-2)


def branch_percentage(auto_count: int,
                      manual_count: int) -> Fraction:
    return percentage(auto_count, manual_count, "branch percentage (manual tracing has no branches)")


def _checked_counts(auto: BinaryImage,
                    manual: BinaryImage) -> Dict[str, int]:
    raster.check_same_shape(auto, manual, "automatic and manual tracings")
    a, m = auto.foreground, manual.foreground
    return {
        'area_auto': int(np.count_nonzero(a)),
        'area_manual': int(np.count_nonzero(m)),
        'area_intersection': int(np.count_nonzero(a & m)),
        'area_spill': int(np.count_nonzero(a & ~m)),
        'area_manual_complement': int(m.size - np.count_nonzero(m)),
    }


def area_recall(auto: BinaryImage,
                manual: BinaryImage) -> Fraction:
    """Percentage of the manual tracing's area that the automatic tracing covers."""
    counts = _checked_counts(auto, manual)
    return percentage(counts['area_intersection'], counts['area_manual'], "area recall (manual tracing is empty)")


def area_spill(auto: BinaryImage,
               manual: BinaryImage) -> Fraction:
    """Area of the automatic tracing outside the manual tracing, as a percentage of
    the area outside the manual tracing.
    """
    counts = _checked_counts(auto, manual)
    return percentage(counts['area_spill'], counts['area_manual_complement'],
                      "area spill (manual tracing covers the whole image)")


def skeletonize(mask: BinaryImage) -> BinaryImage:
    """Thin MASK to a one-pixel-wide skeleton, preserving connectivity."""
    return BinaryImage(thin(mask.foreground))


def skeleton_endpoints(skeleton: BinaryImage) -> np.ndarray:
    """Boolean array marking skeleton pixels that have exactly one 8-neighbor in the
    skeleton.
    """
    kernel = np.array([[1, 1, 1],
                       [1, 10, 1],
                       [1, 1, 1]], dtype=np.int32)
    filtered = ndimage.convolve(skeleton.foreground.astype(np.int32), kernel, mode='constant', cval=0)
    return filtered == 11


def count_branches(mask: BinaryImage) -> int:
    """Number of branch tips in MASK: endpoints of its skeleton."""
    if not raster.foreground_count(mask):
        return 0
    return int(np.count_nonzero(skeleton_endpoints(skeletonize(mask))))


@dataclasses.dataclass(frozen=True)
class AccuracyRow:
    """One line of an accuracy table: exact percentages for columns (1), (2), (3)."""
    label: str
    branch_pct: Fraction
    area_recall_pct: Fraction
    area_spill_pct: Fraction

    def as_dict(self) -> Dict[str, Any]:
        return {
            'label': self.label,
            'branch_pct': float(round_percent(self.branch_pct)),
            'area_recall_pct': float(round_percent(self.area_recall_pct)),
            'area_spill_pct': float(round_percent(self.area_spill_pct)),
        }


@dataclasses.dataclass(frozen=True)
class TracingComparison:
    branch_pct: Fraction
    area_recall_pct: Fraction
    area_spill_pct: Fraction
    raw_counts: Dict[str, int]

    def row(self, label: str) -> AccuracyRow:
        return AccuracyRow(label, self.branch_pct, self.area_recall_pct, self.area_spill_pct)

    def as_dict(self) -> Dict[str, Any]:
        ret = self.row('').as_dict()
        del ret['label']
        ret['raw_counts'] = dict(self.raw_counts)
        return ret


def compare_tracings(auto: BinaryImage,
                     manual: BinaryImage) -> TracingComparison:
    """All three accuracy measures of AUTO against MANUAL, plus the counts behind them."""
    counts = _checked_counts(auto, manual)
    assert counts['area_auto'] == counts['area_intersection'] + counts['area_spill']
    counts['auto_branches'] = count_branches(auto)
    counts['manual_branches'] = count_branches(manual)
    return TracingComparison(
        branch_pct=branch_percentage(counts['auto_branches'], counts['manual_branches']),
        area_recall_pct=percentage(counts['area_intersection'], counts['area_manual'],
                                   "area recall (manual tracing is empty)"),
        area_spill_pct=percentage(counts['area_spill'], counts['area_manual_complement'],
                                  "area spill (manual tracing covers the whole image)"),
        raw_counts=counts,
    )


def mean_row(rows: Sequence[AccuracyRow],
             label: str = 'mean') -> AccuracyRow:
    """Arithmetic mean, column by column, of ROWS."""
    if not rows:
        raise UndefinedRatioError("undefined ratio: can't average an empty set of comparisons")
    n = len(rows)
    return AccuracyRow(label,
                       sum((r.branch_pct for r in rows), Fraction(0)) / n,
                       sum((r.area_recall_pct for r in rows), Fraction(0)) / n,
                       sum((r.area_spill_pct for r in rows), Fraction(0)) / n)


def format_table(rows: Iterable[AccuracyRow],
                 first_column: str = 'configuration') -> str:
    """Lay ROWS out as an aligned text table with columns (1), (2), (3)."""
    header = [first_column, '(1)', '(2)', '(3)']
    body = [[r.label] + [f"{round_percent(v)}%" for v in (r.branch_pct, r.area_recall_pct, r.area_spill_pct)]
            for r in rows]
    widths = [max(len(line[c]) for line in [header] + body) for c in range(4)]

    def fmt(line: List[str]) -> str:
        return ' | '.join([line[0].ljust(widths[0])] + [cell.rjust(w) for cell, w in zip(line[1:], widths[1:])])

    rule = '-+-'.join('-' * w for w in widths)
    return '\n'.join([fmt(header), rule] + [fmt(line) for line in body]) + '\n'


if __name__ == "__main__":
    print("metrics.py is a library used by persistack; it is not itself a program you can run.")

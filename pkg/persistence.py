#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""The persistent step: build a filtration of the binarized maximum projection
against the binarized slices of its stack, read off the 0-dimensional barcode of
that filtration, and extract the structure that persists through all of it.

The filtration D^0 <= D^1 <= ... <= D^m is built top-down. D^m is the
binarized projection. D^(m-n) keeps those connected components of D^(m-n+1)
that share at least one foreground pixel with the n-th slice mask. Since a
component is only ever kept or dropped whole, never split or merged, the whole
filtration is determined by one labeling of D^m plus, for each component, its
survival depth: the number of consecutive slices, starting from the first, that
it intersects. A component of depth d is present in D^i exactly when
i >= m - d, so it is born at level m - d and (components never disappear on the
way up) lives until level m. Levels are only materialized as images when
somebody asks for them.

The barcode is computed level by level, skipping any level that is equal to
the one below it. Because consecutive levels are nested, that equality test
reduces to comparing foreground counts; a digest comparison is available for
images that aren't known to be nested.

This script is copyright 2024 by the persistack authors. It is licensed under
the GNU GPL, either version 3 or (at your option) any later version. See the
file LICENSE.md for details.
"""


import collections
import dataclasses
import hashlib
import warnings

from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np                          # https://numpy.org/
from joblib import Parallel, delayed        # https://joblib.readthedocs.io/

import labeling                             # persistack
import raster                               # same
from labeling import LabelImage
from raster import BinaryImage
from run_logger import log_it               # same


class FiltrationError(ValueError):
    """Raised for filtrations that can't be built, or levels that don't exist."""


class NoPersistentStructureWarning(RuntimeWarning):
    """No component of the projection intersects every slice, so D^0 is empty."""


@dataclasses.dataclass(frozen=True, eq=False)
class Filtration:
    """A filtration stored compactly: TOP is the labeling of D^m, and SURVIVAL[id] is
    the survival depth of component ID (entry 0, the background, is unused).
    """
    level_count: int
    top: LabelImage
    survival: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.survival, dtype=np.int64, copy=True)
        if arr.shape != (self.top.component_count + 1,):
            raise FiltrationError(f"Need one survival depth per component ({self.top.component_count}), got {arr.shape[0] - 1}!")
        if arr.size and (arr.min() < 0 or arr.max() > self.level_count):
            raise FiltrationError(f"Survival depths must lie in 0..{self.level_count}!")
        arr[0] = 0
        arr.setflags(write=False)
        object.__setattr__(self, 'survival', arr)

    @property
    def born(self) -> np.ndarray:
        """Birth level indexed by component id (entry 0 meaningless)."""
        return self.level_count - self.survival

    @property
    def component_count(self) -> int:
        return self.top.component_count

    @property
    def connectivity(self) -> int:
        return self.top.connectivity

    def born_level(self, id: int) -> int:
        if not (1 <= id <= self.component_count):
            raise labeling.UnknownComponentError(f"No component {id} in this filtration!")
        return int(self.born[id])

    def __repr__(self) -> str:
        return f"< Filtration with {self.level_count} slices over {self.component_count} components >"


@dataclasses.dataclass(frozen=True)
class Interval:
    """The lifetime of one 0-dimensional class, i.e. of one component of D^m."""
    component_id: int
    birth: int
    death: int
    area: int

    @property
    def persistence(self) -> int:
        return self.death - self.birth


@dataclasses.dataclass(frozen=True)
class Barcode:
    level_count: int
    intervals: Tuple[Interval, ...] = ()
    connectivity: int = 8

    def births_histogram(self) -> Dict[int, int]:
        """How many classes are born at each level, for levels where any are."""
        return dict(sorted(collections.Counter(i.birth for i in self.intervals).items()))

    def as_dict(self) -> Dict[str, Any]:
        return {
            'levels': self.level_count,
            'connectivity': self.connectivity,
            'intervals': [{'id': i.component_id, 'birth': i.birth, 'death': i.death,
                           'persistence': i.persistence, 'area': i.area} for i in self.intervals],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> 'Barcode':
        """Rebuild a Barcode from the structure produced by as_dict()."""
        intervals = [][:]
        for rec in data['intervals']:
            interval = Interval(component_id=int(rec['id']), birth=int(rec['birth']),
                                death=int(rec['death']), area=int(rec['area']))
            if 'persistence' in rec and int(rec['persistence']) != interval.persistence:
                raise ValueError(f"Interval for component {interval.component_id} has inconsistent persistence!")
            intervals.append(interval)
        return cls(level_count=int(data['levels']), intervals=tuple(intervals),
                   connectivity=int(data.get('connectivity', 8)))


def build_filtration(projection_mask: BinaryImage,
                     slice_masks: Sequence[BinaryImage],
                     connectivity: int = 8,
                     jobs: int = 1) -> Filtration:
    """Build the filtration of PROJECTION_MASK against SLICE_MASKS, which must be in
    the order in which they are to be consumed (slice 1 produces D^(m-1)).
    """
    if not slice_masks:
        raise FiltrationError("Can't build a filtration from an empty list of slice masks!")
    for i, s in enumerate(slice_masks, start=1):
        if s.shape != projection_mask.shape:
            raise raster.SliceMismatchError(f"Slice mask {i} is {s.width}x{s.height}, but the projection mask is "
                                            f"{projection_mask.width}x{projection_mask.height}!", i)

    top = labeling.label_components(projection_mask, connectivity)
    hits = Parallel(n_jobs=jobs, backend='threading')(delayed(labeling.components_hit)(top, s) for s in slice_masks)

    alive = np.ones(top.component_count + 1, dtype=bool)
    survival = np.zeros(top.component_count + 1, dtype=np.int64)
    for hit in hits:                    # a component survives only as long as it keeps being hit
        alive &= hit
        survival += alive
    log_it(f"    filtration: {top.component_count} components over {len(slice_masks)} slices", 2)
    return Filtration(level_count=len(slice_masks), top=top, survival=survival)


def materialize(filtration: Filtration,
                level: int) -> BinaryImage:
    """The binary image D^LEVEL: the union of the components born at or below LEVEL."""
    if not (0 <= level <= filtration.level_count):
        raise FiltrationError(f"Level {level} is outside this filtration's range 0..{filtration.level_count}!")
    present = filtration.born <= level
    present[0] = False
    return BinaryImage(present[filtration.top.labels])


def level_digest(img: BinaryImage) -> str:
    """A digest of IMG's canonical serialization: its dimensions followed by its
    bit-packed, row-major foreground.
    """
    h = hashlib.blake2b(digest_size=32)
    h.update(np.asarray(img.shape, dtype='>u4').tobytes())
    h.update(np.packbits(img.foreground, axis=None).tobytes())
    return h.hexdigest()


def levels_equal(a: BinaryImage,
                 b: BinaryImage,
                 nested: bool = False) -> bool:
    """True if A and B have the same foreground. If the caller knows that A is a
    subset of B (as with consecutive levels of a filtration), passing NESTED=True
    makes the test a comparison of foreground counts; otherwise digests are compared.
    """
    raster.check_same_shape(a, b, "filtration levels")
    if nested:
        return raster.foreground_count(a) == raster.foreground_count(b)
    return level_digest(a) == level_digest(b)


def compute_barcode(filtration: Filtration,
                    shortcut: bool = True) -> Barcode:
    """The 0-dimensional barcode of FILTRATION. Components appearing in D^i but not in
    D^(i-1) are born at i and live to the end. With SHORTCUT on, levels equal to the
    level below them are skipped without looking at components.
    """
    m = filtration.level_count
    labels = filtration.top.labels
    areas = filtration.top.areas()
    intervals = [][:]

    previous = BinaryImage.empty(filtration.top.width, filtration.top.height)
    skipped = 0
    for i in range(m + 1):
        current = materialize(filtration, i)
        if shortcut and levels_equal(previous, current, nested=True):
            skipped += 1
            previous = current
            continue
        new_ids = np.unique(labels[current.foreground & ~previous.foreground])
        intervals.extend(Interval(component_id=int(c), birth=i, death=m, area=int(areas[c])) for c in new_ids if c)
        previous = current

    log_it(f"    barcode: {len(intervals)} intervals, {skipped} of {m + 1} levels skipped as unchanged", 2)
    intervals.sort(key=lambda iv: iv.component_id)
    return Barcode(level_count=m, intervals=tuple(intervals), connectivity=filtration.connectivity)


def stability_level(filtration: Filtration) -> int:
    """The largest level i such that D^0 = D^1 = ... = D^i."""
    areas = filtration.top.areas()
    level_areas = np.bincount(filtration.born[1:], weights=areas[1:], minlength=filtration.level_count + 1).cumsum()
    return int(np.nonzero(level_areas == level_areas[0])[0].max())


def extract_persistent_structure(filtration: Filtration) -> BinaryImage:
    """D^0: the components of the projection that intersect every slice, which is the
    structure of the neuron. Warns (and returns an empty mask) if there are none.
    """
    ret = materialize(filtration, 0)
    if not raster.foreground_count(ret):
        warnings.warn(NoPersistentStructureWarning(
            f"No component of the projection intersects all {filtration.level_count} slices; D^0 is empty."))
    return ret


# Fixed colors for the shallowest survival depths; the deepest is always blue.
named_depth_colors = {
    1: (0, 200, 0),         # green: lasts one plane
    2: (255, 140, 0),       # orange
    3: (255, 230, 0),       # yellow
    4: (220, 0, 0),         # red
}
full_depth_color = (0, 70, 255)             # blue: present in every plane
projection_only_color = (128, 128, 128)     # misses the first slice entirely
background_color = (0, 0, 0)


def depth_palette(level_count: int) -> Dict[int, Tuple[int, int, int]]:
    """Map every survival depth 0..LEVEL_COUNT to an RGB color."""
    ret = {0: projection_only_color}
    for d in range(1, level_count):
        if d in named_depth_colors:
            ret[d] = named_depth_colors[d]
        else:
            import matplotlib           # Only needed for unusually deep stacks.
            cmap = matplotlib.colormaps['cool']
            r, g, b, _ = cmap((d - 5) / max(1, level_count - 6))
            ret[d] = (int(round(255 * r)), int(round(255 * g)), int(round(255 * b)))
    ret[level_count] = full_depth_color
    return ret


@dataclasses.dataclass(frozen=True, eq=False)
class ColorMap:
    """An indexed image coloring each component by its survival depth. INDEX is 0 on
    background and depth + 1 on foreground; PALETTE maps depth to RGB.
    """
    index: np.ndarray
    palette: Dict[int, Tuple[int, int, int]]
    level_count: int

    def depth_at(self, x: int, y: int) -> Optional[int]:
        """Survival depth of the component covering pixel (x, y), or None on background."""
        v = int(self.index[y, x])
        return v - 1 if v else None

    def rgb(self) -> np.ndarray:
        """Render to a (height, width, 3) uint8 array."""
        table = np.zeros((self.level_count + 2, 3), dtype=np.uint8)
        table[0] = background_color
        for depth, color in self.palette.items():
            table[depth + 1] = color
        return table[self.index]

    def palette_table(self) -> List[Dict[str, Any]]:
        return [{'depth': d, 'index': d + 1, 'rgb': list(c)} for d, c in sorted(self.palette.items())]


def persistence_color_map(filtration: Filtration) -> ColorMap:
    """Color every component of D^m by how many consecutive slices it survives."""
    lut = filtration.survival + 1
    lut[0] = 0
    return ColorMap(index=lut[filtration.top.labels].astype(np.uint16),
                    palette=depth_palette(filtration.level_count),
                    level_count=filtration.level_count)


if __name__ == "__main__":
    print("persistence.py is a library used by persistack; it is not itself a program you can run.")

#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""Connected-component labeling of binary masks, and a few queries about the
components once they're labeled.

Labeling is done by scipy's two-pass, union-find-style labeler; the labels it
produces are then renumbered so that ids follow the raster-scan order of each
component's first pixel. That makes the labeling fully deterministic and
independent of library internals: component 1 is the one whose topmost-then-
leftmost pixel comes first when reading the image row by row.

This script is copyright 2024 by the persistack authors. It is licensed under
the GNU GPL, either version 3 or (at your option) any later version. See the
file LICENSE.md for details.
"""


import dataclasses

from typing import List, Tuple

import numpy as np                  # https://numpy.org/
from scipy import ndimage           # https://scipy.org/

import raster                       # persistack
from raster import BinaryImage


connectivities = (4, 8)


class UnknownComponentError(KeyError):
    """Raised when asked about a component id that isn't in the labeling."""


def structure_for(connectivity: int) -> np.ndarray:
    """The scipy structuring element for 4- or 8-connectivity."""
    if connectivity == 4:
        return ndimage.generate_binary_structure(2, 1)
    elif connectivity == 8:
        return ndimage.generate_binary_structure(2, 2)
    raise ValueError(f"Connectivity must be one of {connectivities}, not {connectivity!r}!")


@dataclasses.dataclass(frozen=True, eq=False)
class LabelImage:
    """Per-pixel component ids: 0 is background, 1..COMPONENT_COUNT are components."""
    labels: np.ndarray
    component_count: int
    connectivity: int = 8

    def __post_init__(self) -> None:
        arr = np.array(self.labels, dtype=np.int32, copy=True, order='C')
        arr.setflags(write=False)
        object.__setattr__(self, 'labels', arr)

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.labels.shape

    def areas(self) -> np.ndarray:
        """Pixel counts indexed by id; entry 0 is the background count."""
        return np.bincount(self.labels.ravel(), minlength=self.component_count + 1)

    def __eq__(self, other) -> bool:
        if not isinstance(other, LabelImage):
            return NotImplemented
        return self.component_count == other.component_count and np.array_equal(self.labels, other.labels)

    def __repr__(self) -> str:
        return f"< LabelImage {self.width}x{self.height}, {self.component_count} components, {self.connectivity}-connected >"


@dataclasses.dataclass(frozen=True)
class ComponentStats:
    """AREA in pixels; BOUNDING_BOX is (x_min, y_min, x_max, y_max), inclusive."""
    id: int
    area: int
    bounding_box: Tuple[int, int, int, int]


def label_components(img: BinaryImage,
                     connectivity: int = 8) -> LabelImage:
    """Label the connected components of IMG's foreground under 4- or 8-connectivity.
    Ids are assigned in raster-scan order of each component's first pixel.
    """
    raw, count = ndimage.label(img.foreground, structure=structure_for(connectivity))
    if count:
        ids, first_seen = np.unique(raw.ravel(), return_index=True)
        keep = ids != 0                                      # an all-foreground mask has no 0
        ids, first_seen = ids[keep], first_seen[keep]
        renumber = np.zeros(count + 1, dtype=np.int32)
        renumber[ids[np.argsort(first_seen, kind='stable')]] = np.arange(1, count + 1, dtype=np.int32)
        raw = renumber[raw]
    return LabelImage(labels=raw, component_count=int(count), connectivity=connectivity)


def _check_id(labels: LabelImage,
              id: int) -> None:
    if not (1 <= id <= labels.component_count):
        raise UnknownComponentError(f"No component {id} here: valid ids are 1..{labels.component_count} (0 is background).")


def component_mask(labels: LabelImage,
                   id: int) -> BinaryImage:
    """A mask holding exactly the pixels of component ID."""
    _check_id(labels, id)
    return BinaryImage(labels.labels == id)


def component_intersects(labels: LabelImage,
                         id: int,
                         probe: BinaryImage) -> bool:
    """True if some pixel of component ID is also foreground in PROBE."""
    _check_id(labels, id)
    raster.check_same_shape(labels, probe, "label image and probe mask")
    return bool(np.any((labels.labels == id) & probe.foreground))


def components_hit(labels: LabelImage,
                   probe: BinaryImage) -> np.ndarray:
    """Boolean array indexed by id (entry 0 unused, always False): True where that
    component shares at least one pixel with PROBE's foreground. This is the
    all-components-at-once form of component_intersects().
    """
    raster.check_same_shape(labels, probe, "label image and probe mask")
    hit = np.bincount(labels.labels[probe.foreground], minlength=labels.component_count + 1) > 0
    hit[0] = False
    return hit


def component_stats(labels: LabelImage) -> List[ComponentStats]:
    """Area and bounding box of every component, in id order."""
    areas = labels.areas()
    ret = [][:]
    for i, box in enumerate(ndimage.find_objects(labels.labels, max_label=labels.component_count), start=1):
        ys, xs = box
        ret.append(ComponentStats(id=i, area=int(areas[i]), bounding_box=(xs.start, ys.start, xs.stop - 1, ys.stop - 1)))
    return ret


if __name__ == "__main__":
    print("labeling.py is a library used by persistack; it is not itself a program you can run.")

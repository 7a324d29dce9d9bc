#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""Core raster types for persistack: grayscale slices, binary masks, and the
z-stack that holds the slices of one acquisition, plus the maximum-intensity
projection of a stack.

Pixels are stored row-major as numpy arrays of shape (height, width). A pixel
is addressed as (x, y) = (column, row), with the origin at the top left, so
pixel (x, y) lives at array[y, x]. Everything here is immutable once it has
been constructed: the underlying arrays are flagged read-only, and operations
return new objects instead of modifying their inputs.

This script is copyright 2024 by the persistack authors. It is licensed under
the GNU GPL, either version 3 or (at your option) any later version. See the
file LICENSE.md for details.
"""


import dataclasses

from typing import Iterable, Optional, Sequence, Tuple

import numpy as np                  # https://numpy.org/


supported_bit_depths = (8, 16)


class RasterError(ValueError):
    """Raised when raster data doesn't satisfy the constraints of the type being
    built, or when two rasters that must share dimensions don't.
    """


class SliceMismatchError(RasterError):
    """A slice of a stack doesn't match the dimensions or bit depth of the first
    slice. SLICE_INDEX is 1-based, in acquisition order.
    """
    def __init__(self, message: str, slice_index: int) -> None:
        RasterError.__init__(self, message)
        self.slice_index = slice_index


def _frozen(arr: np.ndarray) -> np.ndarray:
    """Return a read-only, C-contiguous copy of ARR."""
    ret = np.array(arr, copy=True, order='C')
    ret.setflags(write=False)
    return ret


def dtype_for(bit_depth: int) -> np.dtype:
    """The numpy dtype used to store pixels of BIT_DEPTH bits."""
    if bit_depth == 8:
        return np.dtype(np.uint8)
    elif bit_depth == 16:
        return np.dtype(np.uint16)
    raise RasterError(f"Unsupported bit depth {bit_depth}! Supported depths are {supported_bit_depths}.")


@dataclasses.dataclass(frozen=True, eq=False)
class GrayImage:
    """A 2-D grayscale raster with 8- or 16-bit unsigned pixels."""
    pixels: np.ndarray
    bit_depth: int = 8

    def __post_init__(self) -> None:
        if self.bit_depth not in supported_bit_depths:
            raise RasterError(f"Unsupported bit depth {self.bit_depth}! Supported depths are {supported_bit_depths}.")
        arr = np.asarray(self.pixels)
        if arr.ndim != 2:
            raise RasterError(f"A GrayImage needs a 2-D pixel array, not one with shape {arr.shape}!")
        if arr.size and (arr.min() < 0 or arr.max() >= 2 ** self.bit_depth):
            raise RasterError(f"Pixel values must lie in [0, {2 ** self.bit_depth}) for a {self.bit_depth}-bit image!")
        object.__setattr__(self, 'pixels', _frozen(arr.astype(dtype_for(self.bit_depth), copy=False)))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.pixels.shape

    def __eq__(self, other) -> bool:
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.bit_depth == other.bit_depth and np.array_equal(self.pixels, other.pixels)

    def __repr__(self) -> str:
        return f"< GrayImage {self.width}x{self.height}, {self.bit_depth}-bit >"

    @classmethod
    def from_rows(cls, rows: Iterable[Iterable[int]], bit_depth: int = 8) -> 'GrayImage':
        """Convenience constructor from nested lists of pixel values, one list per row."""
        return cls(np.array([list(r) for r in rows], dtype=np.int64), bit_depth=bit_depth)


@dataclasses.dataclass(frozen=True, eq=False)
class BinaryImage:
    """A foreground/background mask. FOREGROUND is a boolean array; True marks a
    foreground pixel.
    """
    foreground: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.foreground)
        if arr.ndim != 2:
            raise RasterError(f"A BinaryImage needs a 2-D array, not one with shape {arr.shape}!")
        object.__setattr__(self, 'foreground', _frozen(arr.astype(bool, copy=False)))

    @property
    def width(self) -> int:
        return self.foreground.shape[1]

    @property
    def height(self) -> int:
        return self.foreground.shape[0]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.foreground.shape

    def __eq__(self, other) -> bool:
        if not isinstance(other, BinaryImage):
            return NotImplemented
        return np.array_equal(self.foreground, other.foreground)

    def __repr__(self) -> str:
        return f"< BinaryImage {self.width}x{self.height}, {foreground_count(self)} foreground pixels >"

    @classmethod
    def empty(cls, width: int, height: int) -> 'BinaryImage':
        return cls(np.zeros((height, width), dtype=bool))

    @classmethod
    def from_points(cls, width: int, height: int,
                    points: Iterable[Tuple[int, int]]) -> 'BinaryImage':
        """Build a mask of WIDTH x HEIGHT whose foreground is exactly POINTS, a
        collection of (x, y) pairs.
        """
        arr = np.zeros((height, width), dtype=bool)
        for x, y in points:
            arr[y, x] = True
        return cls(arr)

    def points(self) -> Sequence[Tuple[int, int]]:
        """The foreground pixels as (x, y) pairs, in raster-scan order."""
        ys, xs = np.nonzero(self.foreground)
        return list(zip(xs.tolist(), ys.tolist()))


@dataclasses.dataclass(frozen=True, eq=False)
class ZStack:
    """An ordered sequence of slices of one specimen, in acquisition order.

    SPACING is the distance between planes; it is carried along as metadata only,
    since nothing in the method depends on physical units.
    """
    slices: Tuple[GrayImage, ...]
    spacing: Optional[float] = None

    def __post_init__(self) -> None:
        slices = tuple(self.slices)
        if not slices:
            raise RasterError("A z-stack needs at least one slice!")
        check_consistent(slices)
        object.__setattr__(self, 'slices', slices)

    @property
    def slice_count(self) -> int:
        return len(self.slices)

    @property
    def width(self) -> int:
        return self.slices[0].width

    @property
    def height(self) -> int:
        return self.slices[0].height

    @property
    def bit_depth(self) -> int:
        return self.slices[0].bit_depth

    def __len__(self) -> int:
        return len(self.slices)

    def __iter__(self):
        return iter(self.slices)

    def __getitem__(self, item):
        return self.slices[item]

    def __repr__(self) -> str:
        return f"< ZStack of {self.slice_count} slices, {self.width}x{self.height}, {self.bit_depth}-bit >"

    def reversed(self) -> 'ZStack':
        """The same stack with its slices in the opposite order."""
        return ZStack(tuple(reversed(self.slices)), spacing=self.spacing)


def check_consistent(slices: Sequence[GrayImage]) -> None:
    """Make sure every slice in SLICES shares the dimensions and bit depth of the
    first one. Complains about the first offender, naming its 1-based index.
    """
    first = slices[0]
    for i, s in enumerate(slices[1:], start=2):
        if s.shape != first.shape:
            raise SliceMismatchError(f"Slice {i} is {s.width}x{s.height}, but slice 1 is {first.width}x{first.height}!", i)
        if s.bit_depth != first.bit_depth:
            raise SliceMismatchError(f"Slice {i} is {s.bit_depth}-bit, but slice 1 is {first.bit_depth}-bit!", i)


def check_same_shape(a, b, what: str = "images") -> None:
    """Raise RasterError unless rasters A and B have the same dimensions."""
    if a.shape != b.shape:
        raise RasterError(f"Dimension mismatch between {what}: {a.shape[1]}x{a.shape[0]} vs. {b.shape[1]}x{b.shape[0]}!")


def max_projection(stack: ZStack) -> GrayImage:
    """The maximum-intensity projection of STACK: each output pixel is the largest
    value that pixel takes in any slice.
    """
    check_consistent(stack.slices)
    ret = np.array(stack.slices[0].pixels, copy=True)
    for s in stack.slices[1:]:
        np.maximum(ret, s.pixels, out=ret)
    return GrayImage(ret, bit_depth=stack.bit_depth)


def foreground_count(img: BinaryImage) -> int:
    """Number of foreground pixels in IMG."""
    return int(np.count_nonzero(img.foreground))


if __name__ == "__main__":
    print("raster.py is a library used by persistack; it is not itself a program you can run.")

"""Shared fixtures for the persistack tests. The modules under test are flat
top-level files, so the repository root goes on sys.path.
"""


import sys

from pathlib import Path

import numpy as np
import pytest


sys.path.insert(0, str(Path(__file__).resolve().parent.parent))
sys.path.insert(0, str(Path(__file__).resolve().parent))

import helpers                  # noqa: E402
from raster import GrayImage, ZStack        # noqa: E402


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240229)


@pytest.fixture
def planted():
    """A 256x256, 8-slice stack with a persistent cross, transient blobs, and 5%
    salt-and-pepper noise, plus the cross's mask.
    """
    return helpers.planted_cross_stack(np.random.default_rng(7))


@pytest.fixture
def small_stack(rng) -> ZStack:
    """A 64x64, 6-slice 8-bit stack: a persistent bar, a blob missing from the
    third slice, and light noise.
    """
    base = np.full((64, 64), 10, dtype=np.int64)
    base[28:36, 6:58] = 180
    slices = [][:]
    for i in range(6):
        arr = base.copy()
        if i != 2:
            arr[4:14, 4:14] = 160
        noise = rng.random(arr.shape)
        arr[noise < 0.01] = 255
        arr[noise > 0.99] = 0
        slices.append(GrayImage(arr, bit_depth=8))
    return ZStack(tuple(slices))

"""Slow, obviously correct reference implementations that the library's results
are checked against, plus generators for synthetic test data. Nothing here
calls into the code under test.
"""


import collections

from typing import Dict, FrozenSet, List, Set, Tuple

import numpy as np
from scipy import ndimage

from raster import BinaryImage, GrayImage, ZStack


Pixel = Tuple[int, int]

_offsets = {
    4: [(-1, 0), (1, 0), (0, -1), (0, 1)],
    8: [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1) if (dy, dx) != (0, 0)],
}


def flood_fill_components(mask: np.ndarray,
                          connectivity: int) -> Set[FrozenSet[Pixel]]:
    """The foreground components of MASK, each as a frozenset of (y, x) pixels."""
    h, w = mask.shape
    seen = np.zeros_like(mask, dtype=bool)
    ret = set()
    for y in range(h):
        for x in range(w):
            if not mask[y, x] or seen[y, x]:
                continue
            seen[y, x] = True
            queue, members = collections.deque([(y, x)]), [(y, x)]
            while queue:
                cy, cx = queue.popleft()
                for dy, dx in _offsets[connectivity]:
                    ny, nx = cy + dy, cx + dx
                    if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] and not seen[ny, nx]:
                        seen[ny, nx] = True
                        queue.append((ny, nx))
                        members.append((ny, nx))
            ret.add(frozenset(members))
    return ret


def partition_of(labels: np.ndarray) -> Set[FrozenSet[Pixel]]:
    """Group the nonzero pixels of LABELS by label value."""
    groups: Dict[int, List[Pixel]] = collections.defaultdict(list)
    for y, x in zip(*np.nonzero(labels)):
        groups[int(labels[y, x])].append((int(y), int(x)))
    return {frozenset(g) for g in groups.values()}


def brute_median(arr: np.ndarray,
                 radius: int,
                 shape: str) -> np.ndarray:
    """Lower median over the in-image part of each pixel's neighborhood."""
    h, w = arr.shape
    out = np.empty_like(arr)
    for y in range(h):
        for x in range(w):
            values = [][:]
            for dy in range(-radius, radius + 1):
                for dx in range(-radius, radius + 1):
                    if shape == 'disc' and dx * dx + dy * dy > radius * radius:
                        continue
                    if 0 <= y + dy < h and 0 <= x + dx < w:
                        values.append(int(arr[y + dy, x + dx]))
            values.sort()
            out[y, x] = values[(len(values) - 1) // 2]
    return out


def huang_scan(arr: np.ndarray) -> Dict[int, Tuple[float, int]]:
    """For every integer threshold t from the darkest value up to (but excluding) the
    brightest, the fuzziness of splitting ARR at t and the number of background
    pixels that split gives.
    """
    values = arr.ravel().astype(np.float64)
    lo, hi = int(values.min()), int(values.max())
    spread = hi - lo
    ret = dict()
    for t in range(lo, hi):
        bg, fg = values[values <= t], values[values > t]
        mean = np.where(values <= t, bg.mean(), fg.mean())
        mu = 1.0 / (1.0 + np.abs(values - mean) / spread)
        total = 0.0
        for p in (mu, 1.0 - mu):
            p = p[p > 0]
            total -= float(np.sum(p * np.log(p)))
        ret[t] = (total, len(bg))
    return ret


def naive_filtration(projection: np.ndarray,
                     slices: List[np.ndarray],
                     connectivity: int) -> List[np.ndarray]:
    """Every level D^0 .. D^m, built top-down by labeling each level afresh."""
    structure = ndimage.generate_binary_structure(2, 1 if connectivity == 4 else 2)
    m = len(slices)
    levels = [None] * (m + 1)
    levels[m] = projection.copy()
    for n, s in enumerate(slices, start=1):
        above = levels[m - n + 1]
        labels, count = ndimage.label(above, structure=structure)
        keep = np.zeros(count + 1, dtype=bool)
        keep[np.unique(labels[above & s])] = True
        keep[0] = False
        levels[m - n] = keep[labels]
    return levels


def naive_barcode(projection: np.ndarray,
                  slices: List[np.ndarray],
                  connectivity: int) -> Set[Tuple[Pixel, int, int, int]]:
    """The barcode as a set of (first pixel, birth, death, area), found by labeling
    every level and calling a component new when it shares no pixel with the
    level below it.
    """
    structure = ndimage.generate_binary_structure(2, 1 if connectivity == 4 else 2)
    levels = naive_filtration(projection, slices, connectivity)
    m = len(slices)
    ret = set()
    below = np.zeros_like(projection, dtype=bool)
    for i, level in enumerate(levels):
        labels, count = ndimage.label(level, structure=structure)
        for c in range(1, count + 1):
            members = labels == c
            if not np.any(members & below):
                ys, xs = np.nonzero(members)
                ret.add(((int(ys[0]), int(xs[0])), i, m, int(members.sum())))
        below = level
    return ret


def random_masks(rng: np.random.Generator,
                 max_side: int = 64,
                 max_slices: int = 10) -> Tuple[np.ndarray, List[np.ndarray]]:
    """A random projection mask and a random list of slice masks of the same size."""
    h, w = rng.integers(1, max_side + 1, size=2)
    m = int(rng.integers(1, max_slices + 1))
    projection = rng.random((h, w)) < rng.uniform(0.2, 0.7)
    slices = [rng.random((h, w)) < rng.uniform(0.05, 0.8) for _ in range(m)]
    return projection, slices


def cross_mask(side: int = 256) -> np.ndarray:
    mask = np.zeros((side, side), dtype=bool)
    mask[108:148, 16:240] = True
    mask[16:240, 108:148] = True
    return mask


def planted_cross_stack(rng: np.random.Generator) -> Tuple[ZStack, BinaryImage]:
    """Eight 256x256 slices sharing a cross-shaped structure, with twenty 16x16
    blobs that each skip at least one slice, and salt-and-pepper noise over 5% of
    the pixels. The noisy pixels are the same in every slice, as with stuck or dead
    sensor pixels. Returns (stack, mask of the cross).
    """
    side, m = 256, 8
    cross = cross_mask(side)
    # blobs sit in the four quadrants, at least 20 pixels from the cross and each other
    corners = [(y, x) for y in (0, 36, 72, 168, 204, 240) for x in (0, 36, 72, 168, 204, 240)]
    chosen = [corners[i] for i in rng.choice(len(corners), size=20, replace=False)]
    absent = [{j % m} | set(rng.choice(m, size=int(rng.integers(0, 4)), replace=False).tolist())
              for j in range(len(chosen))]

    noise = rng.random((side, side))
    slices = [][:]
    for i in range(m):
        arr = np.full((side, side), 20, dtype=np.int64)
        arr[cross] = 200
        for (y, x), skip in zip(chosen, absent):
            if i not in skip:
                arr[y:y + 16, x:x + 16] = 150
        arr[noise < 0.025] = 255
        arr[noise > 0.975] = 0
        slices.append(GrayImage(arr, bit_depth=8))
    return ZStack(tuple(slices)), BinaryImage(cross)

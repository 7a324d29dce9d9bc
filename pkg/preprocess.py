#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""The salt-and-pepper removal step: a median filter followed by Huang's fuzzy
automatic threshold, applied to the maximum projection of a z-stack and,
independently, to every slice of it.

Median filtering uses a truncated neighborhood at the image borders (pixels
outside the image are simply not part of the neighborhood; nothing is padded or
mirrored), and a neighborhood with an even number of pixels takes its lower
median. The interior of the image, where the whole neighborhood fits, is
handled by skimage's histogram-based rank filter (scipy's when the image has
too many distinct values for a compact histogram); only the border band needs
the slower truncated computation.

Huang's method picks the gray level that minimizes the fuzziness of the
binarized image: every candidate threshold splits the histogram into a
background class (values <= t) and a foreground class (values > t); each gray
level g gets a membership 1 / (1 + |g - mean of its class| / C), where C is the
spread between the darkest and brightest values present, and the fuzziness is
the histogram-weighted Shannon entropy of those memberships. The candidate with
the least fuzziness wins; ties go to the smallest threshold. Images with
more distinct values than huang_level_limit (typical of raw 16-bit data) are
scored over that many equal-width bins of the histogram instead.

This script is copyright 2024 by the persistack authors. It is licensed under
the GNU GPL, either version 3 or (at your option) any later version. See the
file LICENSE.md for details.
"""


import dataclasses

from typing import List, Optional, Sequence, Tuple

import numpy as np                              # https://numpy.org/
from scipy import ndimage                       # https://scipy.org/
from scipy.special import entr
from skimage.filters import rank                # https://scikit-image.org/

from joblib import Parallel, delayed            # https://joblib.readthedocs.io/
import tqdm                                     # https://tqdm.github.io/

import raster                                   # persistack
from raster import BinaryImage, GrayImage, ZStack
from run_logger import log_it                   # same


neighborhood_shapes = ('square', 'disc')

_chunk_elements = 1 << 22           # rough cap on the size of temporary arrays

rank_filter_levels = 1024           # skimage rank filters get slow with larger histograms
huang_level_limit = 2048


class DegenerateHistogramError(ValueError):
    """The image has fewer than two distinct intensity values, so there is no
    meaningful threshold.
    """


class SliceThresholdError(DegenerateHistogramError):
    """Thresholding failed for one or more images of a stack. FAILURES lists the
    1-based indices of the slices that failed; None in that list stands for the
    maximum projection. SLICE_INDEX is the first of them.
    """
    def __init__(self, message: str, failures: Sequence[Optional[int]]) -> None:
        DegenerateHistogramError.__init__(self, message)
        self.failures = list(failures)
        self.slice_index = self.failures[0] if self.failures else None


@dataclasses.dataclass(frozen=True)
class FilterParams:
    """RADIUS is the filter length in pixels (0 means no filtering at all);
    NEIGHBORHOOD_SHAPE is 'square' or 'disc'.
    """
    radius: int = 10
    neighborhood_shape: str = 'square'

    def __post_init__(self) -> None:
        if int(self.radius) != self.radius or self.radius < 0:
            raise ValueError(f"Filter radius must be a non-negative integer, not {self.radius!r}!")
        if self.neighborhood_shape not in neighborhood_shapes:
            raise ValueError(f"Neighborhood shape must be one of {neighborhood_shapes}, not {self.neighborhood_shape!r}!")
        object.__setattr__(self, 'radius', int(self.radius))


@dataclasses.dataclass(frozen=True)
class ThresholdResult:
    """LEVEL is the chosen threshold; pixels strictly above it are foreground.
    FUZZINESS is the mean per-pixel entropy at that level, or None when the level
    was fixed by the user rather than computed.
    """
    level: int
    fuzziness: Optional[float] = None


def footprint(params: FilterParams) -> np.ndarray:
    """Boolean (2r+1) x (2r+1) array marking the neighborhood described by PARAMS."""
    r = params.radius
    if params.neighborhood_shape == 'square':
        return np.ones((2*r + 1, 2*r + 1), dtype=bool)
    dy, dx = np.mgrid[-r:r + 1, -r:r + 1]
    return (dx * dx + dy * dy) <= r * r


def _truncated_medians(src: np.ndarray,
                       ys: np.ndarray,
                       xs: np.ndarray,
                       fp: np.ndarray) -> np.ndarray:
    """Lower median of the in-bounds part of the FP-shaped neighborhood around each
    pixel (xs[i], ys[i]) of SRC.
    """
    r = fp.shape[0] // 2
    h, w = src.shape
    sentinel = np.iinfo(np.int32).max           # sorts after every real pixel value
    padded = np.full((h + 2*r, w + 2*r), sentinel, dtype=np.int32)
    padded[r:r + h, r:r + w] = src
    dy, dx = np.nonzero(fp)                     # offsets are relative to the padded origin

    ret = np.empty(len(ys), dtype=src.dtype)
    chunk = max(1, _chunk_elements // len(dy))
    for start in range(0, len(ys), chunk):
        yy = ys[start:start + chunk, None] + dy[None, :]
        xx = xs[start:start + chunk, None] + dx[None, :]
        vals = np.sort(padded[yy, xx], axis=1)
        n = np.count_nonzero(vals != sentinel, axis=1)
        ret[start:start + chunk] = vals[np.arange(len(vals)), (n - 1) // 2]
    return ret


def _interior_median(src: np.ndarray,
                     fp: np.ndarray) -> np.ndarray:
    """Median of SRC over the FP-shaped neighborhood, valid wherever the whole
    neighborhood fits inside the image.

    The median only depends on the order of the values, so the image is replaced
    by the ranks of its distinct values and, when there are few enough of them,
    handed to skimage's histogram-based rank filter.
    """
    values, ranks = np.unique(src, return_inverse=True)
    if len(values) > rank_filter_levels:
        return ndimage.median_filter(src, footprint=fp, mode='constant', cval=0)
    ranks = ranks.reshape(src.shape).astype(np.uint8 if len(values) <= 256 else np.uint16)
    return values[rank.median(ranks, footprint=fp)]


def median_filter(img: GrayImage,
                  params: FilterParams) -> GrayImage:
    """Median-filter IMG with the neighborhood described by PARAMS. Border pixels use
    the part of their neighborhood that lies inside the image.
    """
    r = params.radius
    if r == 0:
        return img

    src = img.pixels
    h, w = src.shape
    fp = footprint(params)
    out = np.empty_like(src)

    band = np.ones((h, w), dtype=bool)
    if h > 2*r and w > 2*r:
        # Full, odd-sized neighborhoods here, so there is only one median.
        interior = _interior_median(src, fp)
        out[r:h - r, r:w - r] = interior[r:h - r, r:w - r]
        band[r:h - r, r:w - r] = False

    ys, xs = np.nonzero(band)
    out[ys, xs] = _truncated_medians(src, ys, xs, fp)
    return GrayImage(out, bit_depth=img.bit_depth)


def _binned_histogram(values: np.ndarray,
                      counts: np.ndarray,
                      max_levels: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Merge the distinct VALUES (with pixel COUNTS) into at most MAX_LEVELS
    equal-width bins spanning the darkest to the brightest value.

    Returns (representatives, pixel counts, pixel sums, candidates): one entry per
    nonempty bin, where the representative gray level is the mean of the bin's
    pixels and the candidate is the brightest value in the bin.
    """
    v = values.astype(np.float64)
    which = np.minimum(((v - v[0]) * max_levels / (v[-1] - v[0] + 1)).astype(np.int64), max_levels - 1)
    n = np.bincount(which, weights=counts, minlength=max_levels)
    s = np.bincount(which, weights=counts * v, minlength=max_levels)
    last = np.zeros(max_levels, dtype=np.int64)
    np.maximum.at(last, which, np.arange(len(values)))
    used = n > 0
    return s[used] / n[used], n[used], s[used], values[last[used]]


def fuzziness_scores(img: GrayImage,
                     max_levels: Optional[int] = huang_level_limit) -> Tuple[np.ndarray, np.ndarray]:
    """Huang fuzziness for every candidate threshold of IMG.

    Any threshold between two adjacent distinct values v[j] <= t < v[j+1] splits
    the pixels the same way, so only the distinct values (except the brightest)
    are candidates. Returns (candidates, scores), where scores[j] is the summed
    pixel entropy when thresholding at candidates[j].

    The cost grows with the square of the number of distinct values. When there
    are more than MAX_LEVELS of them (None means no limit), neighboring values are
    merged into MAX_LEVELS equal-width bins first; each bin's brightest value is
    then the candidate, and class means stay exact.
    """
    values, counts = np.unique(img.pixels, return_counts=True)
    if len(values) < 2:
        raise DegenerateHistogramError(f"degenerate histogram: every pixel of {img!r} has the value {values[0] if len(values) else None}")

    spread = float(values[-1]) - float(values[0])
    if max_levels is not None and len(values) > max_levels:
        g, hist, sums, tops = _binned_histogram(values, counts, max_levels)
        log_it(f"    {len(values)} distinct values in {img!r}; scoring {len(g)} binned levels", 3)
    else:
        g, hist = values.astype(np.float64), counts.astype(np.float64)
        sums, tops = hist * g, values

    cum_n, cum_s = np.cumsum(hist), np.cumsum(sums)
    total_n, total_s = cum_n[-1], cum_s[-1]
    k = len(g)
    mean_bg = cum_s[:-1] / cum_n[:-1]
    mean_fg = (total_s - cum_s[:-1]) / (total_n - cum_n[:-1])

    scores = np.empty(k - 1, dtype=np.float64)
    chunk = max(1, _chunk_elements // k)
    bins = np.arange(k)
    for start in range(0, k - 1, chunk):
        cand = np.arange(start, min(start + chunk, k - 1))
        in_bg = bins[None, :] <= cand[:, None]
        class_mean = np.where(in_bg, mean_bg[cand, None], mean_fg[cand, None])
        membership = 1.0 / (1.0 + np.abs(g[None, :] - class_mean) / spread)
        entropy = entr(membership) + entr(1.0 - membership)     # entr(0) == 0
        scores[cand] = entropy @ hist
    return tops[:-1], scores


def huang_threshold(img: GrayImage,
                    max_levels: Optional[int] = huang_level_limit) -> ThresholdResult:
    """Find the threshold of IMG that minimizes Huang's fuzziness measure."""
    candidates, scores = fuzziness_scores(img, max_levels=max_levels)
    best = int(np.argmin(scores))                       # first minimum, i.e. smallest t
    return ThresholdResult(level=int(candidates[best]), fuzziness=float(scores[best] / img.pixels.size))


def binarize(img: GrayImage,
             level: int) -> BinaryImage:
    """Pixels of IMG strictly brighter than LEVEL become foreground."""
    return BinaryImage(img.pixels > level)


@dataclasses.dataclass(frozen=True)
class ImageResult:
    """Everything the salt-and-pepper removal step produces for one image."""
    filtered: GrayImage
    threshold: ThresholdResult
    mask: BinaryImage


def preprocess_image(img: GrayImage,
                     params: FilterParams,
                     fixed_level: Optional[int] = None) -> ImageResult:
    """Filter IMG, threshold it (with Huang's method unless FIXED_LEVEL is given),
    and binarize it.
    """
    filtered = median_filter(img, params)
    threshold = ThresholdResult(level=fixed_level) if fixed_level is not None else huang_threshold(filtered)
    return ImageResult(filtered=filtered, threshold=threshold, mask=binarize(filtered, threshold.level))


@dataclasses.dataclass(frozen=True)
class PreprocessedStack:
    """The outcome of preprocessing a whole stack, intermediate images included."""
    projection: GrayImage
    projection_result: ImageResult
    slice_results: Tuple[ImageResult, ...]

    @property
    def projection_mask(self) -> BinaryImage:
        return self.projection_result.mask

    @property
    def slice_masks(self) -> List[BinaryImage]:
        return [r.mask for r in self.slice_results]

    @property
    def slice_levels(self) -> List[int]:
        return [r.threshold.level for r in self.slice_results]


def _guarded(img: GrayImage,
             params: FilterParams,
             fixed_level: Optional[int]):
    """Run preprocess_image(), handing back a degenerate-histogram error instead of
    raising it so that every failing slice can be reported at once.
    """
    try:
        return preprocess_image(img, params, fixed_level)
    except DegenerateHistogramError as errrr:
        return errrr


def preprocess_stack_detailed(stack: ZStack,
                              params: FilterParams,
                              fixed_level: Optional[int] = None,
                              jobs: int = 1,
                              progress: bool = False,
                              projection: Optional[GrayImage] = None) -> PreprocessedStack:
    """Apply the salt-and-pepper removal step to the maximum projection of STACK
    and to each of its slices, each image getting its own threshold. Slices may be
    processed by up to JOBS worker threads; results come back in stack order
    regardless. PROJECTION, if the caller already has it, saves recomputing it.
    """
    if projection is None:
        projection = raster.max_projection(stack)
    images = [projection] + list(stack.slices)
    results = Parallel(n_jobs=jobs, backend='threading')(
        delayed(_guarded)(img, params, fixed_level)
        for img in tqdm.tqdm(images, desc="preprocessing", unit="image", disable=not progress)
    )

    failures = [None if i == 0 else i for i, r in enumerate(results) if isinstance(r, Exception)]
    if failures:
        names = ', '.join('projection' if f is None else f"slice {f}" for f in failures)
        raise SliceThresholdError(f"Unable to threshold {names}: degenerate histogram (constant image).", failures)

    for i, r in enumerate(results[1:], start=1):
        log_it(f"    slice {i}: threshold {r.threshold.level}, {raster.foreground_count(r.mask)} foreground pixels", 2)

    return PreprocessedStack(projection=projection, projection_result=results[0], slice_results=tuple(results[1:]))


def preprocess_stack(stack: ZStack,
                     params: FilterParams,
                     fixed_level: Optional[int] = None,
                     jobs: int = 1) -> Tuple[BinaryImage, List[BinaryImage]]:
    """Just a convenience wrapper around preprocess_stack_detailed() that returns only
    (projection_mask, slice_masks).
    """
    done = preprocess_stack_detailed(stack, params, fixed_level=fixed_level, jobs=jobs)
    return done.projection_mask, done.slice_masks


if __name__ == "__main__":
    print("preprocess.py is a library used by persistack; it is not itself a program you can run.")

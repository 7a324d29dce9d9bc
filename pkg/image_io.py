#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""Reading z-stacks and masks from disk, and writing the artifacts persistack
produces.

Supported inputs are multi-page TIFF files (8- or 16-bit grayscale,
uncompressed or deflate-compressed), read with tifffile, and PNG or PGM (P2 and
P5, 8- or 16-bit) slice files, read with Pillow. A stack is either one
multi-page file or an ordered list of files; slices are taken in page order,
then in file order. Masks are written as single-page 8-bit images with
foreground = 255 and background = 0; color maps as palette PNGs with a JSON
sidecar describing the palette.

This script is copyright 2024 by the persistack authors. It is licensed under
the GNU GPL, either version 3 or (at your option) any later version. See the
file LICENSE.md for details.
"""


import glob
import json

from pathlib import Path
from typing import Iterable, List, Optional, Union

import numpy as np                  # https://numpy.org/
import tifffile                     # https://github.com/cgohlke/tifffile
from PIL import Image               # https://python-pillow.org/

import persistence                  # persistack
from raster import BinaryImage, GrayImage, ZStack


tiff_suffixes = ('.tif', '.tiff')
pillow_suffixes = ('.png', '.pgm', '.pnm')
supported_suffixes = tiff_suffixes + pillow_suffixes


class StackReadError(RuntimeError):
    """A stack or mask couldn't be read. PATH and PAGE (0-based, or None) say where."""
    def __init__(self, message: str,
                 path: Optional[Path] = None,
                 page: Optional[int] = None) -> None:
        where = f"{path}" + (f", page {page}" if page is not None else "") if path else ""
        RuntimeError.__init__(self, f"{where}: {message}" if where else message)
        self.path = path
        self.page = page


def jsonify(what, **kwargs) -> str:
    """Serialize WHAT as indented, key-sorted JSON; paths become plain strings."""
    return json.dumps(what, indent=2, ensure_ascii=False, sort_keys=True, default=_json_default, **kwargs)


def _json_default(obj):
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


def expand_inputs(source: Union[str, Path, Iterable[Union[str, Path]]]) -> List[Path]:
    """Turn SOURCE into an ordered list of files. SOURCE may be a file, a directory
    (every supported file in it, sorted by name), a glob pattern (matches sorted by
    name), or an iterable of any of those, which are expanded in the given order.
    """
    if not isinstance(source, (str, Path)):
        ret = [][:]
        for item in source:
            ret.extend(expand_inputs(item))
        if not ret:
            raise StackReadError("No input files given!")
        return ret

    p = Path(source)
    if p.is_dir():
        found = sorted(f for f in p.iterdir() if f.is_file() and f.suffix.casefold() in supported_suffixes)
    elif p.is_file():
        found = [p]
    else:
        found = sorted(Path(f) for f in glob.glob(str(source)) if Path(f).is_file())
    if not found:
        raise StackReadError("No readable input files found!", path=p)
    return found


def _gray_from_array(arr: np.ndarray,
                     path: Path,
                     page: Optional[int]) -> GrayImage:
    if arr.ndim != 2:
        raise StackReadError(f"unsupported pixel layout (array shape {arr.shape}); need single-channel grayscale",
                             path=path, page=page)
    if arr.dtype == np.uint8 or arr.dtype == bool:
        return GrayImage(arr.astype(np.uint8), bit_depth=8)
    if arr.dtype == np.uint16:
        return GrayImage(arr, bit_depth=16)
    if np.issubdtype(arr.dtype, np.integer) and arr.size and arr.min() >= 0 and arr.max() < 2 ** 16:
        return GrayImage(arr.astype(np.uint16), bit_depth=16)
    raise StackReadError(f"unsupported pixel type {arr.dtype}; need 8- or 16-bit unsigned grayscale",
                         path=path, page=page)


def _read_tiff_pages(path: Path) -> List[GrayImage]:
    try:
        with tifffile.TiffFile(path) as tif:
            ret = [][:]
            for i, page in enumerate(tif.pages):
                ret.append(_gray_from_array(page.asarray(), path, i))
            return ret
    except StackReadError:
        raise
    except Exception as errrr:
        raise StackReadError(f"unable to decode TIFF. The system said: {errrr}", path=path) from errrr


def _read_pillow(path: Path) -> GrayImage:
    try:
        with Image.open(path) as im:
            mode = im.mode
            if mode in ('1', 'L'):
                arr = np.asarray(im.convert('L'))
            elif mode in ('I', 'I;16', 'I;16B', 'I;16L', 'I;16N'):
                arr = np.asarray(im).astype(np.int64)
                if arr.size and (arr.min() < 0 or arr.max() >= 2 ** 16):
                    raise StackReadError("pixel values outside the 16-bit range", path=path)
                arr = arr.astype(np.uint16)
            else:
                raise StackReadError(f"unsupported pixel layout (mode {mode}); need grayscale", path=path)
    except StackReadError:
        raise
    except Exception as errrr:
        raise StackReadError(f"unable to read image. The system said: {errrr}", path=path) from errrr
    return _gray_from_array(arr, path, None)


def read_pages(path: Path) -> List[GrayImage]:
    """Every page of the image file at PATH, as GrayImages."""
    if not path.is_file():
        raise StackReadError("no such file", path=path)
    suffix = path.suffix.casefold()
    if suffix in tiff_suffixes:
        return _read_tiff_pages(path)
    elif suffix in pillow_suffixes:
        return [_read_pillow(path)]
    raise StackReadError(f"unsupported file type {suffix!r}; supported types are {', '.join(supported_suffixes)}",
                         path=path)


def load_stack(source: Union[str, Path, Iterable[Union[str, Path]]],
               spacing: Optional[float] = None) -> ZStack:
    """Read the z-stack described by SOURCE (see expand_inputs()). Every slice must
    share the first slice's dimensions and bit depth.
    """
    slices, origins = [][:], [][:]
    for path in expand_inputs(source):
        pages = read_pages(path)
        slices.extend(pages)
        origins.extend((path, i if len(pages) > 1 else None) for i in range(len(pages)))
    if not slices:
        raise StackReadError("No slices found in input!")

    first = slices[0]
    for s, (path, page) in zip(slices[1:], origins[1:]):
        if s.shape != first.shape:
            raise StackReadError(f"slice is {s.width}x{s.height}, but the first slice ({origins[0][0]}) is "
                                 f"{first.width}x{first.height}", path=path, page=page)
        if s.bit_depth != first.bit_depth:
            raise StackReadError(f"slice is {s.bit_depth}-bit, but the first slice is {first.bit_depth}-bit",
                                 path=path, page=page)
    return ZStack(tuple(slices), spacing=spacing)


def load_mask(path: Union[str, Path]) -> BinaryImage:
    """Read a single-page mask; any nonzero pixel is foreground."""
    pages = read_pages(Path(path))
    if len(pages) != 1:
        raise StackReadError(f"a mask must have exactly one page, not {len(pages)}", path=Path(path))
    return BinaryImage(pages[0].pixels > 0)


def _write_array(arr: np.ndarray,
                 path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    suffix = path.suffix.casefold()
    if suffix in tiff_suffixes:
        tifffile.imwrite(path, arr)
    elif suffix in pillow_suffixes:
        Image.fromarray(arr).save(path)
    else:
        raise ValueError(f"Can't write images of type {suffix!r}; use one of {', '.join(supported_suffixes)}.")


def save_mask(mask: BinaryImage,
              path: Union[str, Path]) -> Path:
    """Write MASK as an 8-bit image: foreground 255, background 0."""
    path = Path(path)
    _write_array(np.where(mask.foreground, 255, 0).astype(np.uint8), path)
    return path


def save_gray(img: GrayImage,
              path: Union[str, Path]) -> Path:
    """Write IMG at its own bit depth."""
    path = Path(path)
    _write_array(img.pixels, path)
    return path


def save_color_map(color_map: 'persistence.ColorMap',
                   path: Union[str, Path]) -> Path:
    """Write COLOR_MAP as a palette PNG, plus a sidecar JSON file (same stem,
    .palette.json) listing which palette index and color each survival depth got.
    """
    path = Path(path).with_suffix('.png')
    path.parent.mkdir(parents=True, exist_ok=True)
    if color_map.level_count + 2 > 256:
        raise ValueError(f"A palette image can't hold {color_map.level_count + 2} colors!")

    index = np.ascontiguousarray(color_map.index, dtype=np.uint8)
    im = Image.frombytes('P', (index.shape[1], index.shape[0]), index.tobytes())
    flat = [0, 0, 0] * 256
    flat[0:3] = list(persistence.background_color)
    for depth, color in color_map.palette.items():
        flat[3 * (depth + 1): 3 * (depth + 2)] = list(color)
    im.putpalette(flat)
    im.save(path)

    sidecar = path.with_name(path.stem + '.palette.json')
    sidecar.write_text(jsonify({'levels': color_map.level_count, 'background_index': 0,
                                'palette': color_map.palette_table()}), encoding='utf-8')
    return path


if __name__ == "__main__":
    print("image_io.py is a library used by persistack; it is not itself a program you can run.")

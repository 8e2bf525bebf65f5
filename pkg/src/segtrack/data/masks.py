"""Mask codecs: uncompressed run-length counts and polygon rasterization.

RLE follows the COCO convention. Pixels are read in column-major order (down
the first column, then the next) and ``counts`` alternates run lengths of
unset and set pixels, always starting with the unset run (possibly 0).
``size`` is ``[height, width]``.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from ..errors import DimensionMismatch, ParseError
from ..geometry import BinaryMask


def rle_encode(mask: BinaryMask) -> dict:
    flat = mask.bits.ravel(order="F")
    if flat.size == 0:
        return {"size": [mask.height, mask.width], "counts": []}
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return {"size": [mask.height, mask.width], "counts": runs}


def parse_counts(counts) -> list[int]:
    """Counts given as a list of ints or a whitespace-separated string."""
    if isinstance(counts, str):
        try:
            counts = [int(tok) for tok in counts.split()]
        except ValueError as exc:
            raise ParseError(f"bad RLE counts string: {exc}", "counts") from None
    if not isinstance(counts, list) or not all(isinstance(c, int) and not isinstance(c, bool) for c in counts):
        raise ParseError("RLE counts must be integers", "counts")
    if any(c < 0 for c in counts):
        raise ParseError("RLE counts must be non-negative", "counts")
    return counts


def rle_decode(rle: dict) -> BinaryMask:
    try:
        h, w = (int(v) for v in rle["size"])
    except (KeyError, TypeError, ValueError):
        raise ParseError("RLE needs size [height, width]", "size") from None
    counts = parse_counts(rle.get("counts"))
    if sum(counts) != h * w:
        raise DimensionMismatch(f"RLE counts sum to {sum(counts)}, expected {h}*{w}={h * w}")
    values = np.zeros(len(counts), dtype=bool)
    values[1::2] = True
    flat = np.repeat(values, counts)
    return BinaryMask(flat.reshape((h, w), order="F"))


def polygon_to_mask(polygons: Sequence[Sequence[float]], width: int, height: int) -> BinaryMask:
    """Rasterize COCO flat ``[x0, y0, x1, y1, ...]`` polygons.

    A pixel is set when its center ``(x + 0.5, y + 0.5)`` is inside a
    polygon by the even-odd rule; several polygons are OR-ed together.
    """
    bits = np.zeros((height, width), dtype=bool)
    px = np.arange(width) + 0.5
    for poly in polygons:
        pts = np.asarray(poly, dtype=np.float64)
        if pts.size < 6 or pts.size % 2:
            raise ParseError("a polygon needs at least 3 (x, y) vertices", "polygon")
        pts = pts.reshape(-1, 2)
        x0, y0 = pts[:, 0], pts[:, 1]
        x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
        inside = np.zeros((height, width), dtype=bool)
        for row in range(height):
            yc = row + 0.5
            crosses = (y0 > yc) != (y1 > yc)
            if not crosses.any():
                continue
            xs = x0[crosses] + (yc - y0[crosses]) * (x1[crosses] - x0[crosses]) / (y1[crosses] - y0[crosses])
            # parity of crossings to the right of each pixel center
            inside[row] = (np.sum(xs[None, :] > px[:, None], axis=1) % 2).astype(bool)
        bits |= inside
    return BinaryMask(bits)

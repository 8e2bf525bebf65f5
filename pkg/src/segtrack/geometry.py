"""Binary-mask primitives and the inner center of an instance mask.

Coordinates are integer pixel indices: ``x`` is the column, ``y`` the row.
Boxes are half-open, ``[x_min, x_max) x [y_min, y_max)``.
"""
from __future__ import annotations

from typing import NamedTuple, Sequence

import math

import numpy as np

from .errors import BothEmpty, DimensionMismatch, EmptyInput, EmptyMask, InvalidDims

DEFAULT_EDGE_SAMPLES = 64


class Point(NamedTuple):
    x: int
    y: int


class BoundingBox(NamedTuple):
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return max(self.width, 0) * max(self.height, 0)

    def center(self) -> tuple[float, float]:
        """Center in pixel-index space.

        For a box covering pixels ``x_min .. x_max-1`` this is the midpoint of
        the first and last pixel, so a solid 5x5 mask at the origin has center
        ``(2, 2)`` just like its centroid.
        """
        return ((self.x_min + self.x_max - 1) / 2.0, (self.y_min + self.y_max - 1) / 2.0)

    def is_valid(self) -> bool:
        return bool(np.all(np.isfinite(self))) and self.x_min < self.x_max and self.y_min < self.y_max


class BinaryMask:
    """Immutable dense occupancy grid of shape ``(height, width)``."""

    __slots__ = ("_bits", "_area", "_bbox")

    def __init__(self, bits):
        arr = np.array(bits, dtype=bool, copy=True)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InvalidDims(f"mask must be a non-empty 2D grid, got shape {arr.shape}")
        arr.setflags(write=False)
        self._bits = arr
        self._area = None
        self._bbox = None

    @classmethod
    def _own(cls, arr: np.ndarray) -> "BinaryMask":
        # adopt a freshly built bool array without copying it
        mask = cls.__new__(cls)
        arr.setflags(write=False)
        mask._bits, mask._area, mask._bbox = arr, None, None
        return mask

    @classmethod
    def zeros(cls, width: int, height: int) -> "BinaryMask":
        return cls(np.zeros((height, width), dtype=bool))

    @classmethod
    def from_box(cls, width: int, height: int, box: BoundingBox) -> "BinaryMask":
        bits = np.zeros((height, width), dtype=bool)
        x0, y0 = max(math.floor(box.x_min), 0), max(math.floor(box.y_min), 0)
        x1, y1 = min(math.ceil(box.x_max), width), min(math.ceil(box.y_max), height)
        if x1 > x0 and y1 > y0:
            bits[y0:y1, x0:x1] = True
        return cls._own(bits)

    @classmethod
    def from_boxes(cls, width: int, height: int, boxes: Sequence[BoundingBox]) -> list["BinaryMask"]:
        """Several box rasters sharing one allocation."""
        block = np.zeros((len(boxes), height, width), dtype=bool)
        out = []
        for bits, box in zip(block, boxes):
            x0, y0 = max(math.floor(box.x_min), 0), max(math.floor(box.y_min), 0)
            x1, y1 = min(math.ceil(box.x_max), width), min(math.ceil(box.y_max), height)
            if x1 > x0 and y1 > y0:
                bits[y0:y1, x0:x1] = True
            out.append(cls._own(bits))
        return out

    @property
    def bits(self) -> np.ndarray:
        return self._bits

    @property
    def width(self) -> int:
        return self._bits.shape[1]

    @property
    def height(self) -> int:
        return self._bits.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self._bits.shape

    @property
    def area(self) -> int:
        if self._area is None:
            self._area = int(np.count_nonzero(self._bits))
        return self._area

    def __getitem__(self, point) -> bool:
        x, y = point
        return bool(self._bits[y, x])

    def contains(self, x, y) -> bool:
        """True when ``(x, y)`` is a set pixel; off-grid points are not."""
        x, y = int(x), int(y)
        return 0 <= x < self.width and 0 <= y < self.height and bool(self._bits[y, x])

    def __eq__(self, other) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self._bits, other._bits))

    def __hash__(self) -> int:
        return hash((self.shape, np.packbits(self._bits).tobytes()))

    def __repr__(self) -> str:
        return f"BinaryMask(width={self.width}, height={self.height}, area={self.area})"


def _require_nonempty(mask: BinaryMask) -> None:
    if mask.area == 0:
        raise EmptyMask("mask has no set pixel")


def mask_bbox(mask: BinaryMask) -> BoundingBox:
    """Tight half-open box around the set pixels."""
    if mask._bbox is None:
        _require_nonempty(mask)
        rows = np.flatnonzero(mask.bits.any(axis=1))
        cols = np.flatnonzero(mask.bits.any(axis=0))
        mask._bbox = BoundingBox(int(cols[0]), int(rows[0]), int(cols[-1]) + 1, int(rows[-1]) + 1)
    return mask._bbox


def _nearest_int(total: int, n: int) -> int:
    # integer c minimizing |n*c - total|, ties to the smaller c
    lo = total // n
    return lo if 2 * total <= (2 * lo + 1) * n else lo + 1


def mask_centroid(mask: BinaryMask) -> Point:
    """Integer point nearest to the mean set-pixel coordinate.

    The result is not restricted to the mask; for concave shapes it can be an
    unset pixel. Distances are separable, so rounding each axis with ties to
    the smaller value realizes the (y, x) tie rule exactly.
    """
    _require_nonempty(mask)
    ys, xs = np.nonzero(mask.bits)
    n = len(xs)
    return Point(_nearest_int(int(xs.sum()), n), _nearest_int(int(ys.sum()), n))


def _edge_map(bits: np.ndarray) -> np.ndarray:
    padded = np.pad(bits, 1, constant_values=False)
    interior = padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    return bits & ~interior


def mask_edge_points(mask: BinaryMask) -> list[Point]:
    """Set pixels with at least one unset or off-grid 4-neighbour, row-major."""
    _require_nonempty(mask)
    ys, xs = np.nonzero(_edge_map(mask.bits))
    return [Point(int(x), int(y)) for x, y in zip(xs, ys)]


def sample_edge_points(edges: Sequence[Point], k: int, seed) -> list[Point]:
    """Uniform sample of ``k`` edge points without replacement.

    The sample keeps the input order, so a given seed always yields the same
    list. ``k >= len(edges)`` returns every edge point.
    """
    if len(edges) == 0:
        raise EmptyInput("no edge points to sample")
    if k < 1:
        raise EmptyInput(f"sample size must be >= 1, got {k}")
    if k >= len(edges):
        return list(edges)
    rng = np.random.default_rng(seed)
    picked = np.sort(rng.choice(len(edges), size=k, replace=False))
    return [edges[i] for i in picked]


def _argmin_to_mean(mask: BinaryMask, xs_e: np.ndarray, ys_e: np.ndarray) -> Point:
    # sum_i |p - e_i|^2 = n|p - mean|^2 + const, and n^2|p - mean|^2 = |n p - S|^2
    # is an integer, so comparing it is exact and matches the literal sum's ties.
    n = len(xs_e)
    sx, sy = int(xs_e.sum()), int(ys_e.sum())
    ys, xs = np.nonzero(mask.bits)
    dx = n * xs.astype(np.int64) - sx
    dy = n * ys.astype(np.int64) - sy
    i = int(np.argmin(dx * dx + dy * dy))
    return Point(int(xs[i]), int(ys[i]))


def _argmin_sum_sq(mask: BinaryMask, xs_e: np.ndarray, ys_e: np.ndarray) -> Point:
    ys, xs = np.nonzero(mask.bits)
    xs = xs.astype(np.int64)
    ys = ys.astype(np.int64)
    cost = np.zeros(len(xs), dtype=np.int64)
    for ex, ey in zip(xs_e.tolist(), ys_e.tolist()):
        cost += (xs - ex) ** 2 + (ys - ey) ** 2
    i = int(np.argmin(cost))
    return Point(int(xs[i]), int(ys[i]))


def inner_center(mask: BinaryMask, k: int = DEFAULT_EDGE_SAMPLES, seed=0, method: str = "mean") -> Point:
    """Set pixel minimizing the summed squared distance to sampled edge points.

    ``method="mean"`` uses the nearest-set-pixel-to-edge-mean identity,
    ``method="sum"`` evaluates the sum literally; both give the same pixel,
    with ties going to the smaller ``y`` and then the smaller ``x``.
    """
    edges = mask_edge_points(mask)
    sample = sample_edge_points(edges, k, seed)
    xs_e = np.fromiter((p.x for p in sample), dtype=np.int64, count=len(sample))
    ys_e = np.fromiter((p.y for p in sample), dtype=np.int64, count=len(sample))
    if method == "mean":
        return _argmin_to_mean(mask, xs_e, ys_e)
    if method == "sum":
        return _argmin_sum_sq(mask, xs_e, ys_e)
    raise ValueError(f"unknown method {method!r}")


def mask_iou(a: BinaryMask, b: BinaryMask) -> float:
    if a.shape != b.shape:
        raise DimensionMismatch(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = int(np.count_nonzero(a.bits | b.bits))
    if union == 0:
        raise BothEmpty("IoU undefined for two empty masks")
    return int(np.count_nonzero(a.bits & b.bits)) / union


def box_iou(a: BoundingBox, b: BoundingBox) -> float:
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)

"""Colored identity overlays as binary PPM (P6) images.

Each id gets a color drawn from ``default_rng([palette_seed, id])``, so an
id keeps its color across frames and runs. Items are drawn in ascending id
order: where masks overlap, the larger id ends up on top.
"""
from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

from ..errors import DimensionMismatch, InvalidDims
from ..geometry import BinaryMask, BoundingBox


def id_color(instance_id: int, palette_seed: int = 0) -> tuple[int, int, int]:
    rgb = np.random.default_rng([palette_seed, instance_id]).integers(64, 256, size=3)
    return tuple(int(c) for c in rgb)


def _outline(img: np.ndarray, box: BoundingBox, color) -> None:
    h, w = img.shape[:2]
    x0 = max(int(math.floor(box.x_min)), 0)
    y0 = max(int(math.floor(box.y_min)), 0)
    x1 = min(int(math.ceil(box.x_max)) - 1, w - 1)
    y1 = min(int(math.ceil(box.y_max)) - 1, h - 1)
    if x0 > x1 or y0 > y1:
        return
    img[y0, x0:x1 + 1] = color
    img[y1, x0:x1 + 1] = color
    img[y0:y1 + 1, x0] = color
    img[y0:y1 + 1, x1] = color


def render_overlay(
    width: int,
    height: int,
    items: Sequence[tuple[int, BinaryMask, Optional[BoundingBox]]],
    palette_seed: int = 0,
    alpha: float = 0.5,
    background: Optional[np.ndarray] = None,
) -> bytes:
    """PPM bytes with masks alpha-blended over ``background`` (black by default)."""
    if width < 1 or height < 1:
        raise InvalidDims(f"image must be at least 1x1, got {width}x{height}")
    if background is None:
        img = np.zeros((height, width, 3), dtype=np.float64)
    else:
        img = np.asarray(background, dtype=np.float64).copy()
        if img.shape != (height, width, 3):
            raise DimensionMismatch(f"background shape {img.shape} is not ({height}, {width}, 3)")
    ordered = sorted(items, key=lambda it: it[0])
    for iid, mask, _ in ordered:
        if mask.shape != (height, width):
            raise DimensionMismatch(f"mask of id {iid} is {mask.width}x{mask.height}, image is {width}x{height}")
        color = np.array(id_color(iid, palette_seed), dtype=np.float64)
        sel = mask.bits
        img[sel] = (1.0 - alpha) * img[sel] + alpha * color
    for iid, _, box in ordered:
        if box is not None:
            _outline(img, box, np.array(id_color(iid, palette_seed), dtype=np.float64))
    pixels = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    return f"P6\n{width} {height}\n255\n".encode("ascii") + pixels.tobytes()


def read_ppm(data: bytes) -> np.ndarray:
    """Decode P6 bytes written by :func:`render_overlay` to ``(h, w, 3)`` uint8."""
    parts = data.split(b"\n", 3)
    if len(parts) != 4 or parts[0] != b"P6" or parts[2] != b"255":
        raise ValueError("not a P6 image with maxval 255")
    w, h = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w, 3)

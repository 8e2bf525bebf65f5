"""Positive-sample assignment of instance masks onto multi-level feature grids.

Every instance is routed to one pyramid level by its size. On that level a
grid cell becomes a positive for the instance when its image-space center
satisfies the strategy rule:

* ``inside-box``: the cell center lies inside the instance box;
* ``center-box`` / ``centroid-mask`` / ``inner-center``: the cell center is
  within half a stride (Chebyshev) of the box center, the mask centroid or
  the inner center respectively.

A cell claimed by two or more instances is ambiguous. Before resolution its
label is :data:`AMBIGUOUS` and the claimants are kept in
``SampleAssignment.claims``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import GridMismatch, InvalidDims, MaskOutOfBounds, NoPositives, OutOfRange
from .geometry import DEFAULT_EDGE_SAMPLES, BinaryMask, BoundingBox, Point, inner_center, mask_bbox, mask_centroid

NEGATIVE = 0
AMBIGUOUS = -1
LEVELS = (3, 4, 5)
DEFAULT_BASE_STRIDE = 8
DEFAULT_LEVEL_RANGES = ((0.0, 64.0), (64.0, 128.0), (128.0, math.inf))


class Strategy(str, Enum):
    INSIDE_BOX = "inside-box"
    CENTER_BOX = "center-box"
    CENTROID_MASK = "centroid-mask"
    INNER_CENTER = "inner-center"


class Policy(str, Enum):
    TO_NEGATIVE = "to-negative"
    SMALLEST_AREA = "smallest-area"


@dataclass(frozen=True)
class FeatureGrid:
    level: int
    stride: int
    width: int
    height: int
    image_width: int
    image_height: int

    def cell_center(self, cx: int, cy: int) -> Point:
        if not (0 <= cx < self.width and 0 <= cy < self.height):
            raise OutOfRange(f"cell ({cx}, {cy}) outside {self.width}x{self.height} grid")
        return Point(cx * self.stride + self.stride // 2, cy * self.stride + self.stride // 2)

    def center_coords(self) -> tuple[np.ndarray, np.ndarray]:
        half = self.stride // 2
        return (
            np.arange(self.width) * self.stride + half,
            np.arange(self.height) * self.stride + half,
        )


def cell_center(grid: FeatureGrid, cx: int, cy: int) -> Point:
    return grid.cell_center(cx, cy)


def build_grids(image_width: int, image_height: int, base_stride: int = DEFAULT_BASE_STRIDE) -> list[FeatureGrid]:
    if base_stride < 1:
        raise InvalidDims(f"base stride must be >= 1, got {base_stride}")
    if image_width < base_stride or image_height < base_stride:
        raise InvalidDims(f"image {image_width}x{image_height} smaller than base stride {base_stride}")
    grids = []
    for i, level in enumerate(LEVELS):
        s = base_stride << i
        grids.append(FeatureGrid(level, s, -(-image_width // s), -(-image_height // s), image_width, image_height))
    return grids


@dataclass(frozen=True)
class InstanceAnnotation:
    instance_id: int
    mask: BinaryMask
    frame: int = 0
    box: BoundingBox = field(init=False, compare=False)

    def __post_init__(self):
        if self.instance_id < 1:
            raise ValueError(f"instance ids start at 1, got {self.instance_id}")
        object.__setattr__(self, "box", mask_bbox(self.mask))


def level_for_instance(instance: InstanceAnnotation, ranges: Sequence[tuple[float, float]] = DEFAULT_LEVEL_RANGES) -> int:
    size = max(instance.box.width, instance.box.height)
    for i, (lo, hi) in enumerate(ranges):
        if lo < size <= hi:
            return LEVELS[0] + i
    raise ValueError(f"size {size} not covered by level ranges {ranges}")


@dataclass
class SampleAssignment:
    grid: FeatureGrid
    labels: np.ndarray
    strategy: Strategy
    claims: dict = field(default_factory=dict)  # (cx, cy) -> claiming ids, ambiguous cells only
    areas: dict = field(default_factory=dict)  # instance id -> mask area
    resolved: bool = False

    def positives(self) -> list[tuple[tuple[int, int], int]]:
        ys, xs = np.nonzero(self.labels > 0)
        return [((int(x), int(y)), int(self.labels[y, x])) for x, y in zip(xs, ys)]

    @property
    def num_positives(self) -> int:
        return int(np.count_nonzero(self.labels > 0))

    def copy(self) -> "SampleAssignment":
        return replace(self, labels=self.labels.copy(), claims=dict(self.claims), areas=dict(self.areas))


def strategy_center(instance: InstanceAnnotation, strategy: Strategy, k: int = DEFAULT_EDGE_SAMPLES, seed=0) -> tuple[float, float]:
    """Image point the center-based strategies sample around."""
    strategy = Strategy(strategy)
    if strategy is Strategy.CENTER_BOX:
        return instance.box.center()
    if strategy is Strategy.CENTROID_MASK:
        return tuple(map(float, mask_centroid(instance.mask)))
    if strategy is Strategy.INNER_CENTER:
        return tuple(map(float, inner_center(instance.mask, k, [seed, instance.instance_id, instance.frame])))
    raise ValueError(f"{strategy.value} has no sampling center")


def _claimed_cells(grid: FeatureGrid, instance: InstanceAnnotation, strategy: Strategy, k, seed) -> np.ndarray:
    xs, ys = grid.center_coords()
    if strategy is Strategy.INSIDE_BOX:
        b = instance.box
        col = (xs >= b.x_min) & (xs < b.x_max)
        row = (ys >= b.y_min) & (ys < b.y_max)
    else:
        cx, cy = strategy_center(instance, strategy, k, seed)
        half = grid.stride / 2.0
        # half-open on the low side: exactly one cell per axis for any center
        col = (xs > cx - half) & (xs <= cx + half)
        row = (ys > cy - half) & (ys <= cy + half)
    return np.outer(row, col)


def assign(
    instances: Sequence[InstanceAnnotation],
    grids: Sequence[FeatureGrid],
    strategy: Strategy | str,
    k: int = DEFAULT_EDGE_SAMPLES,
    seed=0,
    level_ranges: Sequence[tuple[float, float]] = DEFAULT_LEVEL_RANGES,
) -> list[SampleAssignment]:
    """Label every grid; one :class:`SampleAssignment` per grid, same order."""
    strategy = Strategy(strategy)
    by_level = {g.level: g for g in grids}
    ids = [inst.instance_id for inst in instances]
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate instance ids in {ids}")
    claim_count = {g.level: np.zeros((g.height, g.width), dtype=np.int32) for g in grids}
    owner = {g.level: np.zeros((g.height, g.width), dtype=np.int32) for g in grids}
    claimants: dict[int, dict[tuple[int, int], list[int]]] = {g.level: {} for g in grids}
    for inst in instances:
        g0 = grids[0]
        if inst.mask.shape != (g0.image_height, g0.image_width):
            raise MaskOutOfBounds(
                f"instance {inst.instance_id}: mask {inst.mask.width}x{inst.mask.height} "
                f"does not match image {g0.image_width}x{g0.image_height}"
            )
        level = level_for_instance(inst, level_ranges)
        if level not in by_level:
            raise GridMismatch(f"instance {inst.instance_id} routed to missing level {level}")
        grid = by_level[level]
        cells = _claimed_cells(grid, inst, strategy, k, seed)
        counts = claim_count[level]
        # cells already claimed once become ambiguous: remember both claimants
        for y, x in zip(*np.nonzero(cells & (counts > 0))):
            key = (int(x), int(y))
            lst = claimants[level].setdefault(key, [int(owner[level][y, x])])
            lst.append(inst.instance_id)
        owner[level][cells & (counts == 0)] = inst.instance_id
        counts += cells
    areas = {inst.instance_id: inst.mask.area for inst in instances}
    out = []
    for g in grids:
        labels = owner[g.level].copy()
        labels[claim_count[g.level] > 1] = AMBIGUOUS
        claims = {cell: tuple(sorted(v)) for cell, v in claimants[g.level].items()}
        out.append(SampleAssignment(g, labels, strategy, claims, dict(areas)))
    return out


def detect_ambiguous(assignment: SampleAssignment) -> list[tuple[tuple[int, int], tuple[int, ...]]]:
    """Cells with two or more claimants, ordered by row then column."""
    return sorted(assignment.claims.items(), key=lambda kv: (kv[0][1], kv[0][0]))


def resolve_ambiguous(
    assignment: SampleAssignment, policy: Policy | str = Policy.TO_NEGATIVE, as_background: bool = False
) -> SampleAssignment:
    """Give every ambiguous cell a single label.

    ``to-negative`` marks the cell :data:`AMBIGUOUS` so losses can skip it, or
    background (0) with ``as_background=True``. ``smallest-area`` hands it to
    the claimant with the smallest mask, smaller id on ties.
    """
    policy = Policy(policy)
    out = assignment.copy()
    for (x, y), ids in assignment.claims.items():
        if policy is Policy.TO_NEGATIVE:
            out.labels[y, x] = NEGATIVE if as_background else AMBIGUOUS
        else:
            out.labels[y, x] = min(ids, key=lambda i: (assignment.areas[i], i))
    out.resolved = True
    return out


@dataclass
class InsideMaskStats:
    inside: int
    total: int
    outside: list  # (level, (cx, cy), instance id) of positives off their mask

    @property
    def fraction(self) -> float:
        if self.total == 0:
            raise NoPositives("no positive cells")
        return self.inside / self.total

    def __add__(self, other: "InsideMaskStats") -> "InsideMaskStats":
        return InsideMaskStats(self.inside + other.inside, self.total + other.total, self.outside + other.outside)


def inside_mask_counts(
    assignments: SampleAssignment | Iterable[SampleAssignment], instances: Sequence[InstanceAnnotation]
) -> InsideMaskStats:
    if isinstance(assignments, SampleAssignment):
        assignments = [assignments]
    masks = {inst.instance_id: inst.mask for inst in instances}
    stats = InsideMaskStats(0, 0, [])
    for a in assignments:
        for (cx, cy), owner in a.positives():
            p = a.grid.cell_center(cx, cy)
            stats.total += 1
            if masks[owner].contains(p.x, p.y):
                stats.inside += 1
            else:
                stats.outside.append((a.grid.level, (cx, cy), owner))
    return stats


def inside_mask_fraction(
    assignments: SampleAssignment | Iterable[SampleAssignment], instances: Sequence[InstanceAnnotation]
) -> tuple[float, list]:
    """Fraction of positive cells whose center pixel lies on the owner's mask.

    Also returns the positives that miss their mask (inside the box but off
    the mask, the cells that hurt training).
    """
    stats = inside_mask_counts(assignments, instances)
    return stats.fraction, stats.outside


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def mix_positive_sets(base: SampleAssignment, other: SampleAssignment, percent: int, seed=0) -> SampleAssignment:
    """Add a seeded ``percent``% subset of ``other``'s positives into ``base``.

    A cell where the added label disagrees with the base label is marked
    :data:`AMBIGUOUS`.
    """
    if base.grid != other.grid:
        raise GridMismatch("positive sets live on different grids")
    if not 0 <= percent <= 100:
        raise ValueError(f"percent must be in [0, 100], got {percent}")
    out = base.copy()
    pos = other.positives()
    n_add = _round_half_up(percent / 100.0 * len(pos))
    if n_add == 0:
        return out
    rng = np.random.default_rng(seed)
    for i in sorted(rng.choice(len(pos), size=n_add, replace=False).tolist()):
        (x, y), label = pos[i]
        current = int(out.labels[y, x])
        if current == NEGATIVE:
            out.labels[y, x] = label
        elif current != label:
            claim = set(out.claims.get((x, y), ())) | {label}
            if current > 0:
                claim.add(current)
            out.claims[(x, y)] = tuple(sorted(claim))
            out.labels[y, x] = AMBIGUOUS
    out.areas.update(other.areas)
    out.resolved = True
    return out

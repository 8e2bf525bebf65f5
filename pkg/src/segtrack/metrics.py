"""MOTS evaluation (sMOTSA, MOTSA, MOTSP) and dataset complexity statistics.

Per frame, predictions are matched one-to-one to ground truth at mask IoU
strictly above the threshold, greedily by descending IoU. With that matching:

* ``MOTSA  = (TP - FP - IDS) / |GT|``
* ``sMOTSA = (soft_TP - FP - IDS) / |GT|`` where ``soft_TP`` sums matched IoUs
* ``MOTSP  = soft_TP / TP``

An id switch is counted when a ground-truth track is matched to a predicted
id different from the one it was last matched to.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyDataset, EmptyGroundTruth
from .geometry import BinaryMask, BoundingBox, box_iou

TINY_AREA = 32 * 32
LARGE_AREA = 96 * 96


@dataclass
class FrameResult:
    frame: int
    items: list = field(default_factory=list)  # (id, BinaryMask)
    boxes: dict = field(default_factory=dict)  # id -> BoundingBox, optional
    scores: dict = field(default_factory=dict)  # id -> float, optional

    def ids(self) -> list[int]:
        return [i for i, _ in self.items]


@dataclass
class MotsReport:
    smotsa: float
    motsa: float
    motsp: float
    tp: int
    fp: int
    fn: int
    ids: int
    soft_tp: float
    num_gt: int

    def to_dict(self) -> dict:
        return asdict(self)


def iou_matrix(a: Sequence[BinaryMask], b: Sequence[BinaryMask]) -> np.ndarray:
    if not a or not b:
        return np.zeros((len(a), len(b)))
    shape = a[0].shape
    if any(m.shape != shape for m in list(a) + list(b)):
        raise DimensionMismatch("masks in a frame must share the image size")
    fa = np.stack([m.bits.ravel() for m in a]).astype(np.float64)
    fb = np.stack([m.bits.ravel() for m in b]).astype(np.float64)
    inter = fa @ fb.T
    union = fa.sum(1)[:, None] + fb.sum(1)[None, :] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(union > 0, inter / union, 0.0)


def match_frame_masks(pred: FrameResult, gt: FrameResult, iou_thresh: float = 0.5) -> list[tuple[int, int, float]]:
    """One-to-one ``(pred id, gt id, iou)`` matches with IoU above ``iou_thresh``."""
    ious = iou_matrix([m for _, m in pred.items], [m for _, m in gt.items])
    cand = [(-ious[i, j], i, j) for i, j in zip(*np.nonzero(ious > iou_thresh))]
    cand.sort()
    used_p, used_g, out = set(), set(), []
    for neg, i, j in cand:
        if i in used_p or j in used_g:
            continue
        used_p.add(i)
        used_g.add(j)
        out.append((pred.items[i][0], gt.items[j][0], float(-neg)))
    return out


@dataclass
class _Counts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    ids: int = 0
    soft_tp: float = 0.0
    num_gt: int = 0

    def report(self) -> MotsReport:
        if self.num_gt == 0:
            raise EmptyGroundTruth("no ground-truth masks to evaluate against")
        motsp = self.soft_tp / self.tp if self.tp else 0.0
        return MotsReport(
            smotsa=(self.soft_tp - self.fp - self.ids) / self.num_gt,
            motsa=(self.tp - self.fp - self.ids) / self.num_gt,
            motsp=motsp,
            tp=self.tp,
            fp=self.fp,
            fn=self.fn,
            ids=self.ids,
            soft_tp=self.soft_tp,
            num_gt=self.num_gt,
        )


def _count_sequence(pred: Sequence[FrameResult], gt: Sequence[FrameResult], iou_thresh: float, acc: _Counts) -> None:
    pred_by = {f.frame: f for f in pred}
    gt_by = {f.frame: f for f in gt}
    last_match: dict[int, int] = {}
    for frame in sorted(set(pred_by) | set(gt_by)):
        p = pred_by.get(frame, FrameResult(frame))
        g = gt_by.get(frame, FrameResult(frame))
        matches = match_frame_masks(p, g, iou_thresh)
        acc.num_gt += len(g.items)
        acc.tp += len(matches)
        acc.fp += len(p.items) - len(matches)
        acc.fn += len(g.items) - len(matches)
        for pid, gid, iou in matches:
            acc.soft_tp += iou
            prev = last_match.get(gid)
            if prev is not None and prev != pid:
                acc.ids += 1
            last_match[gid] = pid


def compute_mots(pred: Sequence[FrameResult], gt: Sequence[FrameResult], iou_thresh: float = 0.5) -> MotsReport:
    """Metrics for one sequence; frames are aligned by their ``frame`` index."""
    acc = _Counts()
    _count_sequence(pred, gt, iou_thresh, acc)
    return acc.report()


def compute_mots_multi(
    pred: Mapping[str, Sequence[FrameResult]], gt: Mapping[str, Sequence[FrameResult]], iou_thresh: float = 0.5
) -> MotsReport:
    """Counts summed over sequences (sorted by id); a missing prediction is empty."""
    acc = _Counts()
    for seq in sorted(gt):
        _count_sequence(pred.get(seq, []), gt[seq], iou_thresh, acc)
    return acc.report()


@dataclass
class ComplexityStats:
    small_target_fraction: float
    instance_count: int
    overlapping_count: int
    tiny: int = 0
    medium: int = 0
    large: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def size_category(area: int, tiny_thresh: int = TINY_AREA, large_thresh: int = LARGE_AREA) -> str:
    if area < tiny_thresh:
        return "tiny"
    if area > large_thresh:
        return "large"
    return "medium"


def _box_of(mask: BinaryMask):
    ys = np.flatnonzero(mask.bits.any(axis=1))
    xs = np.flatnonzero(mask.bits.any(axis=0))
    if len(xs) == 0:
        return None
    return BoundingBox(int(xs[0]), int(ys[0]), int(xs[-1]) + 1, int(ys[-1]) + 1)


def dataset_stats(
    sequences: Iterable[Sequence[FrameResult]],
    tiny_thresh: int = TINY_AREA,
    large_thresh: int = LARGE_AREA,
    overlap_iou_min: float = 0.0,
    overlap_by: str = "mask",
) -> ComplexityStats:
    """Small-target fraction, distinct instances and overlapping instance pairs.

    ``small_target_fraction`` counts tiny and medium instance-frames. A pair
    of instances of one sequence overlaps when, in some frame, their masks
    (or boxes with ``overlap_by="box"``) have IoU above ``overlap_iou_min``.
    """
    if overlap_by not in ("mask", "box"):
        raise ValueError(f"overlap_by must be 'mask' or 'box', got {overlap_by!r}")
    counts = {"tiny": 0, "medium": 0, "large": 0}
    instances = 0
    overlapping = 0
    for seq in sequences:
        ids: set[int] = set()
        pairs: set[tuple[int, int]] = set()
        for fr in seq:
            for iid, m in fr.items:
                ids.add(iid)
                counts[size_category(m.area, tiny_thresh, large_thresh)] += 1
            if len(fr.items) < 2:
                continue
            if overlap_by == "mask":
                ious = iou_matrix([m for _, m in fr.items], [m for _, m in fr.items])
            else:
                boxes = [_box_of(m) for _, m in fr.items]
                n = len(boxes)
                ious = np.zeros((n, n))
                for i in range(n):
                    for j in range(i + 1, n):
                        if boxes[i] and boxes[j]:
                            ious[i, j] = box_iou(boxes[i], boxes[j])
            for i, j in zip(*np.nonzero(np.triu(ious > overlap_iou_min, k=1))):
                a, b = fr.items[i][0], fr.items[j][0]
                pairs.add((min(a, b), max(a, b)))
        instances += len(ids)
        overlapping += len(pairs)
    total = sum(counts.values())
    if total == 0:
        raise EmptyDataset("dataset has no annotated masks")
    return ComplexityStats(
        small_target_fraction=(counts["tiny"] + counts["medium"]) / total,
        instance_count=instances,
        overlapping_count=overlapping,
        **counts,
    )

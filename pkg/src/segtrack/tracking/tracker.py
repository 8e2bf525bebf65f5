"""Frame-to-frame association: Kalman motion + appearance + Hungarian matching.

The first frame numbers every detection; afterwards each frame predicts all
live tracks, scores them against the new detections and solves the
assignment. Unmatched tracks are kept as ``LOST`` for ``max_age`` frames so an
identity survives occlusion; ids are never reused.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from ..errors import NotInitialized
from ..geometry import BinaryMask, BoundingBox
from .kalman import CHI2_4DOF_95, KalmanConfig, KalmanFilter, KalmanState, boxes_to_xyah, xyah_to_boxes
from .lap import FORBIDDEN, hungarian

log = logging.getLogger(__name__)


class TrackStatus(str, Enum):
    ACTIVE = "active"
    LOST = "lost"
    REMOVED = "removed"


@dataclass
class Detection:
    box: BoundingBox
    score: float
    embedding: np.ndarray
    mask: Optional[BinaryMask] = None
    frame: int = 0


@dataclass
class Track:
    id: int
    state: KalmanState
    last_embedding: np.ndarray
    status: TrackStatus = TrackStatus.ACTIVE
    age: int = 0
    hits: int = 1


@dataclass
class TrackerConfig:
    w_emb: float = 0.7
    w_iou: float = 0.3
    gate: float = 0.9
    max_age: int = 30
    top_k: int = 100
    score_thresh: float = 0.1
    spawn_thresh: float = 0.5
    embedding_momentum: float = 0.9
    # squared Mahalanobis bound on motion; None disables motion gating
    motion_gate: Optional[float] = None
    kalman: KalmanConfig = field(default_factory=KalmanConfig)

    def __post_init__(self):
        if self.w_emb < 0 or self.w_iou < 0 or self.w_emb + self.w_iou <= 0:
            raise ValueError("cost weights must be >= 0 with a positive sum")
        if self.max_age < 0:
            raise ValueError("max_age must be >= 0")


@dataclass
class Tracker:
    config: TrackerConfig = field(default_factory=TrackerConfig)
    tracks: list = field(default_factory=list)
    next_id: int = 1
    initialized: bool = False
    removed: int = 0

    def __post_init__(self):
        self.kf = KalmanFilter(self.config.kalman)
        self._cache = None  # stacked (states, embeddings, means, covs, embs) of self.tracks

    def live_tracks(self) -> list[Track]:
        return [t for t in self.tracks if t.status is not TrackStatus.REMOVED]

    def _spawn(self, det: Detection) -> Track:
        track = Track(self.next_id, self.kf.initiate(det.box), np.asarray(det.embedding, dtype=np.float64).copy())
        self.next_id += 1
        self.tracks.append(track)
        return track

    def _stacked(self, tracks: list[Track]):
        """Means, covariances and embeddings of ``tracks`` as arrays.

        Reuses the arrays written by the previous frame when every track
        still holds the very objects stored then.
        """
        c = self._cache
        if (
            c is not None
            and len(c[0]) == len(tracks)
            and all(t.state is st and t.last_embedding is e for t, st, e in zip(tracks, c[0], c[1]))
        ):
            return c[2], c[3], c[4]
        return (
            np.stack([t.state.mean for t in tracks]),
            np.stack([t.state.covariance for t in tracks]),
            np.stack([t.last_embedding for t in tracks]),
        )

    def _store(self, tracks: list[Track], means, covs, embs) -> None:
        states, emb_rows = [], []
        for i, t in enumerate(tracks):
            t.state = KalmanState(means[i], covs[i])
            t.last_embedding = embs[i]
            states.append(t.state)
            emb_rows.append(t.last_embedding)
        self._cache = (states, emb_rows, means, covs, embs)


def select_top_k(detections: Sequence[Detection], k: int, score_threshold: float = 0.0) -> list[Detection]:
    """Up to ``k`` detections scoring at least ``score_threshold``, best first.

    Equal scores keep their input order.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    kept = [d for d in detections if d.score >= score_threshold]
    return sorted(kept, key=lambda d: -d.score)[:k]


def init_tracks(detections: Sequence[Detection], config: TrackerConfig | None = None) -> Tracker:
    """Start a tracker with one active track per detection, ids ``1..n``."""
    tracker = Tracker(config or TrackerConfig())
    for det in detections:
        tracker._spawn(det)
    tracker.initialized = True
    return tracker


def normalized_embedding_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise ``clip(1 - cos, 0, 1)`` between rows of ``a`` and ``b``.

    Orthogonal or opposed embeddings get the maximum distance 1; a zero
    vector is treated as unrelated to everything.
    """
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    na = np.sqrt(np.einsum("ij,ij->i", a, a))
    nb = np.sqrt(np.einsum("ij,ij->i", b, b))
    denom = np.outer(na, nb)
    cos = np.divide(a @ b.T, denom, out=np.zeros_like(denom), where=denom > 0)
    return np.clip(1.0 - cos, 0.0, 1.0)


def box_iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    iw = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    return np.divide(inter, union, out=np.zeros_like(union), where=union > 0)


def cost_matrix(
    tracks: Sequence[Track],
    detections: Sequence[Detection],
    w_emb: float = 0.7,
    w_iou: float = 0.3,
    gate: float = 0.9,
) -> np.ndarray:
    """``w_emb * embedding distance + w_iou * (1 - IoU)``; above ``gate`` is forbidden.

    IoU is taken between each track's current (predicted) box and the
    detection box.
    """
    if w_emb < 0 or w_iou < 0 or w_emb + w_iou <= 0:
        raise ValueError("cost weights must be >= 0 with a positive sum")
    if not tracks or not detections:
        return np.zeros((len(tracks), len(detections)))
    track_boxes = xyah_to_boxes(np.stack([t.state.mean[:4] for t in tracks]))
    return _cost(
        track_boxes,
        np.stack([t.last_embedding for t in tracks]),
        np.array([tuple(d.box) for d in detections], dtype=np.float64),
        np.stack([np.asarray(d.embedding, dtype=np.float64) for d in detections]),
        w_emb,
        w_iou,
        gate,
    )


def _cost(track_boxes, track_emb, det_boxes, det_emb, w_emb, w_iou, gate):
    cost = w_emb * normalized_embedding_distance(track_emb, det_emb)
    cost += w_iou * (1.0 - box_iou_matrix(track_boxes, det_boxes))
    cost[cost > gate] = FORBIDDEN
    return cost


def match_frame(tracker: Tracker, detections: Sequence[Detection]) -> tuple[Tracker, list[tuple[int, int]]]:
    """Advance ``tracker`` by one frame (in place) and label ``detections``.

    Returns the tracker and ``(detection index, track id)`` pairs sorted by
    detection index. Unmatched detections scoring below ``spawn_thresh`` get
    no id.
    """
    if not tracker.initialized:
        raise NotInitialized("call init_tracks on the first frame")
    cfg = tracker.config
    kf = tracker.kf
    live = tracker.live_tracks()
    tracker.tracks = live

    pairs: list[tuple[int, int]] = []
    if live:
        means, covs, embs = tracker._stacked(live)
        means, covs = kf.predict_many(means, covs)
        embs = embs.copy()
        if detections:
            det_boxes = np.array([d.box for d in detections], dtype=np.float64)
            det_emb = np.array([d.embedding for d in detections], dtype=np.float64)
            det_xyah = boxes_to_xyah(det_boxes)
            cost = _cost(xyah_to_boxes(means[:, :4]), embs, det_boxes, det_emb, cfg.w_emb, cfg.w_iou, cfg.gate)
            if cfg.motion_gate is not None:
                for i in range(len(live)):
                    d2 = kf.gating_distance(means[i], covs[i], det_xyah)
                    cost[i, d2 > cfg.motion_gate] = FORBIDDEN
            pairs = hungarian(cost)
        if pairs:
            rows = [i for i, _ in pairs]
            cols = [j for _, j in pairs]
            means[rows], covs[rows] = kf.update_many(means[rows], covs[rows], det_xyah[cols])
            mom = cfg.embedding_momentum
            embs[rows] = mom * embs[rows] + (1.0 - mom) * det_emb[cols]
        tracker._store(live, means, covs, embs)

    matched_tracks = set()
    assigned: list[tuple[int, int]] = []
    for i, j in pairs:
        t = live[i]
        t.status = TrackStatus.ACTIVE
        t.age = 0
        t.hits += 1
        matched_tracks.add(i)
        assigned.append((j, t.id))

    for i, t in enumerate(live):
        if i in matched_tracks:
            continue
        t.status = TrackStatus.LOST
        t.age += 1
        if t.age > cfg.max_age:
            t.status = TrackStatus.REMOVED
            tracker.removed += 1

    taken = {j for _, j in pairs}
    for j, det in enumerate(detections):
        if j not in taken and det.score >= cfg.spawn_thresh:
            assigned.append((j, tracker._spawn(det).id))
    tracker.tracks = [t for t in tracker.tracks if t.status is not TrackStatus.REMOVED]
    assigned.sort()
    return tracker, assigned


@dataclass
class TrackedObject:
    id: int
    box: BoundingBox
    mask: Optional[BinaryMask]
    score: float


def track_sequence(frames: Sequence[Sequence[Detection]], config: TrackerConfig | None = None) -> list[list[TrackedObject]]:
    """Run the tracker over per-frame detection lists in chronological order."""
    config = config or TrackerConfig()
    tracker = None
    out = []
    for dets in frames:
        dets = select_top_k(dets, config.top_k, config.score_thresh)
        if tracker is None:
            tracker = init_tracks([d for d in dets if d.score >= config.spawn_thresh], config)
            assigned = [(j, t.id) for j, t in enumerate(tracker.tracks)]
            dets = [d for d in dets if d.score >= config.spawn_thresh]
        else:
            tracker, assigned = match_frame(tracker, dets)
        out.append([TrackedObject(tid, dets[j].box, dets[j].mask, dets[j].score) for j, tid in assigned])
    if tracker is not None:
        log.debug("sequence done: %d ids issued, %d removed", tracker.next_id - 1, tracker.removed)
    return out

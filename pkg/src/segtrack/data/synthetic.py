"""Seeded synthetic scenes: moving shapes, scripted occlusions, fake detections.

Objects move at constant velocity and bounce off the image border. Each
instance has a unit base embedding; detections carry that embedding plus
Gaussian noise, a box from the instance mask plus Gaussian noise, and a
uniform score. During an occlusion window ``(id, start, end)`` (inclusive)
the instance gets no detection; the ground truth either drops it
(``occlusion_gt="hidden"``) or keeps it (``"present"``).

With ``visible_only`` the masks are carved by depth: a larger id is closer to
the camera and hides what lies behind it.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidConfig
from ..geometry import BinaryMask, BoundingBox, mask_bbox
from ..losses import EMBEDDING_DIM
from ..metrics import FrameResult
from ..tracking import Detection
from .files import DetectionFile, DetectionVideo, SequenceFile

SHAPES = ("rect", "ellipse", "person")


@dataclass(frozen=True)
class SynthConfig:
    num_videos: int = 1
    num_instances: int = 3
    num_frames: int = 30
    width: int = 128
    height: int = 96
    speed_min: float = 0.5
    speed_max: float = 2.0
    size_min: int = 12
    size_max: int = 28
    shapes: tuple = ("rect", "ellipse")
    occlusions: tuple = ()  # (instance id, first frame, last frame)
    occlusion_gt: str = "hidden"
    embedding_dim: int = EMBEDDING_DIM
    embedding_separation: float = 0.5
    embedding_noise: float = 0.0
    detection_noise: float = 0.0
    score_min: float = 0.6
    score_max: float = 1.0
    visible_only: bool = False
    with_masks: bool = True
    seed: int = 0

    def validate(self) -> None:
        if self.width < 32 or self.height < 32:
            raise InvalidConfig(f"image must be at least 32x32, got {self.width}x{self.height}")
        if self.num_instances < 1 or self.num_videos < 1 or self.num_frames < 1:
            raise InvalidConfig("need at least one video, one frame and one instance")
        if not 0 <= self.speed_min <= self.speed_max:
            raise InvalidConfig("need 0 <= speed_min <= speed_max")
        if not 2 <= self.size_min <= self.size_max <= min(self.width, self.height):
            raise InvalidConfig("need 2 <= size_min <= size_max <= image side")
        if not self.shapes or any(s not in SHAPES for s in self.shapes):
            raise InvalidConfig(f"shapes must be drawn from {SHAPES}")
        if self.occlusion_gt not in ("hidden", "present"):
            raise InvalidConfig("occlusion_gt must be 'hidden' or 'present'")
        for occ in self.occlusions:
            if len(occ) != 3:
                raise InvalidConfig(f"occlusion {occ} is not (id, start, end)")
            iid, start, end = occ
            if not 1 <= iid <= self.num_instances or not 0 <= start <= end:
                raise InvalidConfig(f"bad occlusion window {occ}")
        if self.embedding_dim < 2 or not 0 <= self.embedding_separation < 2:
            raise InvalidConfig("embedding_separation must lie in [0, 2) for unit embeddings")
        if self.embedding_noise < 0 or self.detection_noise < 0:
            raise InvalidConfig("noise levels must be >= 0")
        if not 0 <= self.score_min <= self.score_max <= 1:
            raise InvalidConfig("need 0 <= score_min <= score_max <= 1")


@dataclass
class _Mover:
    instance_id: int
    shape: str
    w: int
    h: int
    x: float
    y: float
    vx: float
    vy: float
    pose: dict = field(default_factory=dict)

    def step(self, width: int, height: int) -> None:
        self.x += self.vx
        self.y += self.vy
        # reflect off the borders so the object stays fully visible
        if self.x < 0 or self.x > width - self.w:
            self.vx = -self.vx
            self.x = min(max(self.x, 0.0), float(width - self.w))
        if self.y < 0 or self.y > height - self.h:
            self.vy = -self.vy
            self.y = min(max(self.y, 0.0), float(height - self.h))


def person_pose(rng: np.random.Generator) -> dict:
    return {
        "arms": float(rng.uniform(0.0, 1.0)),  # 0 arms down, 1 arms stretched out
        "stride": float(rng.uniform(0.0, 0.45)),  # leg spread as a fraction of width
    }


def shape_bits(shape: str, x0: int, y0: int, w: int, h: int, width: int, height: int, pose: dict | None = None) -> np.ndarray:
    """Raster one shape whose bounding box is ``(x0, y0, w, h)``."""
    bits = np.zeros((height, width), dtype=bool)
    if shape == "rect":
        bits[max(y0, 0):y0 + h, max(x0, 0):x0 + w] = True
        return bits
    yy, xx = np.mgrid[:height, :width]
    px, py = xx + 0.5 - x0, yy + 0.5 - y0  # pixel centers relative to the box
    if shape == "ellipse":
        return ((px - w / 2) / (w / 2)) ** 2 + ((py - h / 2) / (h / 2)) ** 2 <= 1.0
    pose = pose or {"arms": 0.0, "stride": 0.2}
    cx = w / 2
    head_r = 0.11 * h
    bits |= (px - cx) ** 2 + (py - head_r) ** 2 <= head_r**2
    torso_w = 0.34 * w
    bits |= (np.abs(px - cx) <= torso_w / 2) & (py >= 1.8 * head_r) & (py <= 0.6 * h)
    # arms hang from the shoulders; stretched arms rotate up toward horizontal
    arm_t = max(0.07 * w, 1.0)
    reach = (w / 2 - arm_t) * pose["arms"] + arm_t * (1 - pose["arms"])
    shoulder = 2.0 * head_r
    drop = (0.55 * h - shoulder) * (1.0 - pose["arms"])
    for side in (-1, 1):
        sx = cx + side * torso_w / 2
        ex = sx + side * reach
        ey = shoulder + drop + arm_t
        bits |= _segment(px, py, sx, shoulder + arm_t / 2, ex, ey, arm_t / 2)
    # legs from the hips to the feet, spread by the stride
    leg_t = max(0.12 * w, 1.0)
    hip_y = 0.58 * h
    for side in (-1, 1):
        hx = cx + side * torso_w / 4
        fx = cx + side * (torso_w / 4 + pose["stride"] * w)
        fx = min(max(fx, leg_t / 2), w - leg_t / 2)
        bits |= _segment(px, py, hx, hip_y, fx, h - leg_t / 2, leg_t / 2)
    bits &= (px > 0) & (px < w) & (py > 0) & (py < h)
    return bits


def _segment(px, py, ax, ay, bx, by, r):
    dx, dy = bx - ax, by - ay
    n = dx * dx + dy * dy
    t = np.clip(((px - ax) * dx + (py - ay) * dy) / n, 0.0, 1.0) if n > 0 else 0.0
    return (px - ax - t * dx) ** 2 + (py - ay - t * dy) ** 2 <= r * r


def base_embeddings(rng: np.random.Generator, n: int, dim: int, separation: float, tries: int = 100) -> np.ndarray:
    """``n`` unit vectors with pairwise L2 distance at least ``separation``."""
    for _ in range(tries):
        e = rng.standard_normal((n, dim))
        e /= np.linalg.norm(e, axis=1, keepdims=True)
        if n < 2:
            return e
        d = np.linalg.norm(e[:, None, :] - e[None, :, :], axis=2)
        if d[np.triu_indices(n, 1)].min() >= separation:
            return e
    raise InvalidConfig(f"could not draw {n} embeddings {separation} apart in {dim} dims")


def _shifted(bits: np.ndarray, dx: int, dy: int) -> np.ndarray:
    out = np.zeros_like(bits)
    h, w = bits.shape
    src = bits[max(-dy, 0):h - max(dy, 0), max(-dx, 0):w - max(dx, 0)]
    out[max(dy, 0):max(dy, 0) + src.shape[0], max(dx, 0):max(dx, 0) + src.shape[1]] = src
    return out


def _movers(cfg: SynthConfig, rng: np.random.Generator) -> list[_Mover]:
    out = []
    for i in range(cfg.num_instances):
        shape = cfg.shapes[i % len(cfg.shapes)]
        h = int(rng.integers(cfg.size_min, cfg.size_max + 1))
        if shape == "person":
            w = max(cfg.size_min // 2, int(round(h * rng.uniform(0.45, 0.65))), 2)
        else:
            w = int(rng.integers(cfg.size_min, cfg.size_max + 1))
        speed = rng.uniform(cfg.speed_min, cfg.speed_max)
        angle = rng.uniform(0, 2 * np.pi)
        out.append(
            _Mover(
                i + 1,
                shape,
                w,
                h,
                float(rng.uniform(0, cfg.width - w)),
                float(rng.uniform(0, cfg.height - h)),
                float(speed * np.cos(angle)),
                float(speed * np.sin(angle)),
                person_pose(rng) if shape == "person" else {},
            )
        )
    return out


def carve_visible(masks: list[np.ndarray]) -> list[np.ndarray]:
    """Remove from each mask what later (closer) masks cover."""
    out = []
    cover = np.zeros_like(masks[0]) if masks else None
    for bits in reversed(masks):
        out.append(bits & ~cover)
        cover = cover | bits
    return out[::-1]


def _generate_video(cfg: SynthConfig, video_index: int) -> tuple[SequenceFile, DetectionVideo]:
    rng = np.random.default_rng([cfg.seed, video_index])
    movers = _movers(cfg, rng)
    emb = base_embeddings(rng, cfg.num_instances, cfg.embedding_dim, cfg.embedding_separation)
    vid = f"synth-{video_index:03d}"
    gt = SequenceFile(vid, cfg.width, cfg.height)
    det = DetectionVideo(vid, cfg.width, cfg.height)
    occluded = {}
    for iid, start, end in cfg.occlusions:
        occluded.setdefault(iid, []).append((start, end))
    for f in range(cfg.num_frames):
        if f:
            for m in movers:
                m.step(cfg.width, cfg.height)
        raw = [shape_bits(m.shape, int(round(m.x)), int(round(m.y)), m.w, m.h, cfg.width, cfg.height, m.pose) for m in movers]
        if cfg.visible_only:
            raw = carve_visible(raw)
        frame_gt = FrameResult(f)
        frame_det = []
        for m, bits in zip(movers, raw):
            if not bits.any():
                continue
            mask = BinaryMask(bits)
            box = mask_bbox(mask)
            hidden = any(s <= f <= e for s, e in occluded.get(m.instance_id, ()))
            if not hidden or cfg.occlusion_gt == "present":
                frame_gt.items.append((m.instance_id, mask))
                frame_gt.boxes[m.instance_id] = box
            if hidden:
                continue
            e = emb[m.instance_id - 1]
            if cfg.embedding_noise > 0:
                e = e + rng.normal(0.0, cfg.embedding_noise, size=e.shape)
            dbox, dmask = box, mask
            if cfg.detection_noise > 0:
                jitter = rng.normal(0.0, cfg.detection_noise, size=4)
                x0, y0 = box.x_min + jitter[0], box.y_min + jitter[1]
                x1 = max(box.x_max + jitter[2], x0 + 1.0)
                y1 = max(box.y_max + jitter[3], y0 + 1.0)
                dbox = BoundingBox(float(x0), float(y0), float(x1), float(y1))
                dx = int(round((jitter[0] + jitter[2]) / 2))
                dy = int(round((jitter[1] + jitter[3]) / 2))
                shifted = _shifted(bits, dx, dy)
                dmask = BinaryMask(shifted) if shifted.any() else mask
            score = float(rng.uniform(cfg.score_min, cfg.score_max))
            frame_det.append(Detection(dbox, score, np.array(e, dtype=np.float64), dmask if cfg.with_masks else None, f))
        gt.frames.append(frame_gt)
        det.frames.append(frame_det)
    return gt, det


def generate_synthetic(config: SynthConfig) -> tuple[list[SequenceFile], DetectionFile]:
    """Ground-truth sequences and matching detections, deterministic in ``seed``."""
    config.validate()
    gts, dets = [], DetectionFile()
    for v in range(config.num_videos):
        gt, det = _generate_video(config, v)
        gts.append(gt)
        dets.videos.append(det)
    return gts, dets


def occlusion_corpus(num_scenes: int = 50, seed: int = 0, width: int = 256, height: int = 256) -> list[SequenceFile]:
    """Single-frame scenes of 2-4 people standing in heavily overlapping groups.

    Masks are the visible parts after depth carving, the situation where a
    box center or a centroid easily falls on someone else.
    """
    if num_scenes < 1:
        raise InvalidConfig("need at least one scene")
    if width < 32 or height < 32:
        raise InvalidConfig("image must be at least 32x32")
    rng = np.random.default_rng([seed, 7])
    scenes = []
    for s in range(num_scenes):
        n = int(rng.integers(2, 5))
        raw = []
        anchor_x = rng.uniform(0.25, 0.55) * width
        for i in range(n):
            h = int(rng.integers(int(0.3 * height), int(0.8 * height)))
            w = max(int(round(h * rng.uniform(0.45, 0.65))), 4)
            # neighbours stand a fraction of a body width apart
            x0 = int(round(anchor_x + (i - (n - 1) / 2) * w * rng.uniform(0.2, 0.6) - w / 2))
            x0 = min(max(x0, 0), width - w)
            y0 = int(rng.integers(0, height - h + 1))
            raw.append(shape_bits("person", x0, y0, w, h, width, height, person_pose(rng)))
        visible = carve_visible(raw)
        seq = SequenceFile(f"occ-{s:03d}", width, height)
        frame = FrameResult(0)
        for iid, bits in enumerate(visible, start=1):
            if bits.any():
                frame.items.append((iid, BinaryMask(bits)))
        seq.frames.append(frame)
        scenes.append(seq)
    return scenes

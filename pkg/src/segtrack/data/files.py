"""Annotation, result and detection files.

Annotations and tracking results share one JSON document layout::

    {"format_version": 1, "kind": "annotations" | "results",
     "videos": [{"id": str, "width": int, "height": int,
                 "frames": [{"frame": int,
                             "instances": [{"id": int,
                                            "rle": {"size": [h, w], "counts": [...]},
                                            "box": [x0, y0, x1, y1],   # optional
                                            "score": float}]}]}]}  # optional

An instance may carry ``"polygon": [[x0, y0, ...], ...]`` instead of ``rle``.
Detections are JSON lines: a header ``{"format_version": 1, "kind":
"detections", "videos": [{"id", "width", "height", "num_frames"}]}``
followed by one record per detection ``{"video", "frame", "box", "score",
"embedding", "mask"?}``, sorted by frame within each video. Embedding
components are written with 9 significant digits.

Writers go through a temporary file and ``os.replace`` so a failed save never
leaves a half-written file behind.
"""
from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..assignment import InstanceAnnotation
from ..errors import DimensionMismatch, InconsistentIds, IoError, ParseError, SchemaError
from ..geometry import BinaryMask, BoundingBox
from ..losses import EMBEDDING_DIM
from ..metrics import FrameResult
from ..tracking import Detection
from .masks import polygon_to_mask, rle_decode, rle_encode

FORMAT_VERSION = 1


@dataclass
class SequenceFile:
    video_id: str
    width: int
    height: int
    frames: list = field(default_factory=list)  # FrameResult, ascending frame index

    def instances(self, frame: int) -> list[InstanceAnnotation]:
        for fr in self.frames:
            if fr.frame == frame:
                return [InstanceAnnotation(i, m, frame) for i, m in fr.items if m.area > 0]
        return []


@dataclass
class DetectionVideo:
    video_id: str
    width: int
    height: int
    frames: list = field(default_factory=list)  # list[list[Detection]], index = frame

    @property
    def num_frames(self) -> int:
        return len(self.frames)


@dataclass
class DetectionFile:
    videos: list = field(default_factory=list)


# ---------------------------------------------------------------- io helpers


def _read_text(path) -> str:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc.strerror or exc}") from None


def _write_atomic(path, text: str) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    try:
        fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc.strerror or exc}") from None
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        # mkstemp creates 0600; give the file the usual umask-based mode
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _loads(text: str, where: str = ""):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, f"{where}line {exc.lineno} col {exc.colno}") from None


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def _get(obj, key, kind, where):
    if not isinstance(obj, dict):
        raise SchemaError("expected an object", where)
    if key not in obj:
        raise SchemaError(f"missing field '{key}'", where)
    val = obj[key]
    ok = isinstance(val, kind) and not (kind in (int, (int, float)) and isinstance(val, bool))
    if not ok:
        raise SchemaError(f"field '{key}' has the wrong type ({type(val).__name__})", where)
    return val


def _check_header(doc, kinds, where=""):
    version = _get(doc, "format_version", int, where or "document")
    if version != FORMAT_VERSION:
        raise SchemaError(f"unsupported format_version {version}", where or "document")
    kind = _get(doc, "kind", str, where or "document")
    if kind not in kinds:
        raise SchemaError(f"kind '{kind}' not one of {sorted(kinds)}", where or "document")
    return kind


def _box(val, where) -> BoundingBox:
    if not (isinstance(val, list) and len(val) == 4 and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in val)):
        raise SchemaError("box must be [x_min, y_min, x_max, y_max]", where)
    return BoundingBox(*(float(v) for v in val))


def _decode_mask(inst, width, height, where) -> BinaryMask:
    if "rle" in inst:
        rle = inst["rle"]
        if not isinstance(rle, dict):
            raise SchemaError("rle must be an object", f"{where}.rle")
        try:
            mask = rle_decode(rle)
        except ParseError as exc:
            raise ParseError(str(exc), f"{where}.rle") from None
        except DimensionMismatch as exc:
            raise SchemaError(str(exc), f"{where}.rle") from None
        if mask.shape != (height, width):
            raise SchemaError(f"mask size {mask.height}x{mask.width} differs from video {height}x{width}", f"{where}.rle")
        return mask
    if "polygon" in inst:
        polys = inst["polygon"]
        if not isinstance(polys, list) or not all(isinstance(p, list) for p in polys):
            raise SchemaError("polygon must be a list of flat coordinate lists", f"{where}.polygon")
        try:
            return polygon_to_mask(polys, width, height)
        except (ParseError, TypeError, ValueError) as exc:
            raise ParseError(str(exc), f"{where}.polygon") from None
    raise SchemaError("instance needs 'rle' or 'polygon'", where)


# ------------------------------------------------------- annotations / results


def _parse_sequences(doc, kinds) -> list[SequenceFile]:
    _check_header(doc, kinds)
    videos = _get(doc, "videos", list, "document")
    out = []
    seen_videos = set()
    for vi, v in enumerate(videos):
        vw = f"videos[{vi}]"
        vid = _get(v, "id", str, vw)
        if vid in seen_videos:
            raise SchemaError(f"duplicate video id '{vid}'", vw)
        seen_videos.add(vid)
        width = _get(v, "width", int, vw)
        height = _get(v, "height", int, vw)
        if width < 1 or height < 1:
            raise SchemaError("video dims must be positive", vw)
        seq = SequenceFile(vid, width, height)
        last = None
        for fi, fr in enumerate(_get(v, "frames", list, vw)):
            fw = f"{vw}.frames[{fi}]"
            idx = _get(fr, "frame", int, fw)
            if idx < 0 or (last is not None and idx <= last):
                raise SchemaError("frame indices must be non-negative and strictly increasing", fw)
            last = idx
            result = FrameResult(idx)
            for ii, inst in enumerate(_get(fr, "instances", list, fw)):
                iw = f"{fw}.instances[{ii}]"
                iid = _get(inst, "id", int, iw)
                if iid < 1:
                    raise InconsistentIds(f"instance id must be >= 1, got {iid}", iw)
                if iid in result.boxes or any(i == iid for i, _ in result.items):
                    raise InconsistentIds(f"duplicate instance id {iid} in frame {idx}", iw)
                result.items.append((iid, _decode_mask(inst, width, height, iw)))
                if "box" in inst:
                    result.boxes[iid] = _box(inst["box"], f"{iw}.box")
                if "score" in inst:
                    result.scores[iid] = float(_get(inst, "score", (int, float), iw))
            seq.frames.append(result)
        out.append(seq)
    return out


def _sequences_doc(seqs: Sequence[SequenceFile], kind: str) -> dict:
    videos = []
    if len({seq.video_id for seq in seqs}) != len(seqs):
        raise SchemaError("video ids must be unique", "videos")
    for seq in seqs:
        frames = []
        for fr in seq.frames:
            if len(set(fr.ids())) != len(fr.items):
                raise InconsistentIds(f"duplicate instance id in video {seq.video_id} frame {fr.frame}")
            insts = []
            for iid, mask in fr.items:
                if mask.shape != (seq.height, seq.width):
                    raise DimensionMismatch(f"video {seq.video_id} frame {fr.frame}: mask does not fit {seq.width}x{seq.height}")
                rec = {"id": int(iid), "rle": rle_encode(mask)}
                if iid in fr.boxes:
                    rec["box"] = [float(v) for v in fr.boxes[iid]]
                if iid in fr.scores:
                    rec["score"] = float(fr.scores[iid])
                insts.append(rec)
            frames.append({"frame": int(fr.frame), "instances": insts})
        videos.append({"id": seq.video_id, "width": int(seq.width), "height": int(seq.height), "frames": frames})
    return {"format_version": FORMAT_VERSION, "kind": kind, "videos": videos}


def load_annotations(path) -> list[SequenceFile]:
    return _parse_sequences(_loads(_read_text(path)), {"annotations", "results"})


def save_annotations(path, seqs: Sequence[SequenceFile]) -> None:
    _write_atomic(path, _dumps(_sequences_doc(seqs, "annotations")) + "\n")


def load_results(path) -> list[SequenceFile]:
    return _parse_sequences(_loads(_read_text(path)), {"results"})


def save_results(path, seqs: Sequence[SequenceFile]) -> None:
    _write_atomic(path, _dumps(_sequences_doc(seqs, "results")) + "\n")


# ----------------------------------------------------------------- detections


def _round9(values) -> list[float]:
    return [float(f"{v:.9g}") for v in np.asarray(values, dtype=np.float64).tolist()]


def detections_text(dets: DetectionFile) -> str:
    header = {
        "format_version": FORMAT_VERSION,
        "kind": "detections",
        "videos": [{"id": v.video_id, "width": v.width, "height": v.height, "num_frames": v.num_frames} for v in dets.videos],
    }
    lines = [_dumps(header)]
    for v in dets.videos:
        for f, frame in enumerate(v.frames):
            for d in frame:
                rec = {
                    "video": v.video_id,
                    "frame": f,
                    "box": [float(x) for x in d.box],
                    "score": float(d.score),
                    "embedding": _round9(d.embedding),
                }
                if d.mask is not None:
                    if d.mask.shape != (v.height, v.width):
                        raise DimensionMismatch(f"video {v.video_id} frame {f}: detection mask does not fit")
                    rec["mask"] = rle_encode(d.mask)
                lines.append(_dumps(rec))
    return "\n".join(lines) + "\n"


def save_detections(path, dets: DetectionFile) -> None:
    _write_atomic(path, detections_text(dets))


def parse_detections(text: str, embedding_dim: int = EMBEDDING_DIM) -> DetectionFile:
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise ParseError("missing header", "line 1")
    header = _loads(lines[0], "line 1 ")
    _check_header(header, {"detections"}, "line 1")
    videos: dict[str, DetectionVideo] = {}
    last_frame: dict[str, int] = {}
    out = DetectionFile()
    for vi, v in enumerate(_get(header, "videos", list, "line 1")):
        vw = f"line 1: videos[{vi}]"
        vid = _get(v, "id", str, vw)
        if vid in videos:
            raise SchemaError(f"duplicate video id '{vid}'", vw)
        width, height = _get(v, "width", int, vw), _get(v, "height", int, vw)
        n = _get(v, "num_frames", int, vw)
        if width < 1 or height < 1 or n < 0:
            raise SchemaError("bad video dims or frame count", vw)
        videos[vid] = DetectionVideo(vid, width, height, [[] for _ in range(n)])
        out.videos.append(videos[vid])
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        where = f"line {lineno}"
        rec = _loads(line, f"{where} ")
        vid = _get(rec, "video", str, where)
        if vid not in videos:
            raise SchemaError(f"unknown video '{vid}'", f"{where}.video")
        v = videos[vid]
        frame = _get(rec, "frame", int, where)
        if not 0 <= frame < v.num_frames:
            raise SchemaError(f"frame {frame} outside [0, {v.num_frames})", f"{where}.frame")
        if frame < last_frame.get(vid, 0):
            raise SchemaError("records must be sorted by frame", f"{where}.frame")
        last_frame[vid] = frame
        box = _box(rec.get("box"), f"{where}.box")
        score = float(_get(rec, "score", (int, float), where))
        if not 0.0 <= score <= 1.0:
            raise SchemaError(f"score {score} outside [0, 1]", f"{where}.score")
        emb = _get(rec, "embedding", list, where)
        if len(emb) != embedding_dim:
            raise SchemaError(f"embedding has {len(emb)} components, expected {embedding_dim}", f"{where}.embedding")
        try:
            emb_arr = np.array(emb, dtype=np.float64)
        except (TypeError, ValueError):
            raise SchemaError("embedding must hold numbers", f"{where}.embedding") from None
        if emb_arr.ndim != 1 or not np.all(np.isfinite(emb_arr)):
            raise SchemaError("embedding must hold finite numbers", f"{where}.embedding")
        mask: Optional[BinaryMask] = None
        if "mask" in rec:
            mask = _decode_mask({"rle": rec["mask"]}, v.width, v.height, where)
        v.frames[frame].append(Detection(box, score, emb_arr, mask, frame))
    return out


def load_detections(path, embedding_dim: int = EMBEDDING_DIM) -> DetectionFile:
    return parse_detections(_read_text(path), embedding_dim)

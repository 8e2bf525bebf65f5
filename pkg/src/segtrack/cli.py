"""``segtrack`` command line: centers, assignment, tracking, evaluation, stats, synthesis.

Every run is determined by its flags and inputs. Numeric settings may also
come from ``--config FILE.json`` (keys are the long flag names, dashes or
underscores); a flag given on the command line always wins over the file,
and the file wins over the built-in default.

Failures print one JSON object ``{"error", "message", "where"}`` on stderr
and exit with status 1. Set ``NO_COLOR`` to disable colored text output.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Sequence

from .assignment import (
    DEFAULT_BASE_STRIDE,
    Policy,
    Strategy,
    assign,
    build_grids,
    detect_ambiguous,
    inside_mask_counts,
    InsideMaskStats,
    mix_positive_sets,
    resolve_ambiguous,
)
from .data import (
    SequenceFile,
    SynthConfig,
    generate_synthetic,
    load_annotations,
    load_detections,
    load_results,
    occlusion_corpus,
    render_overlay,
    save_annotations,
    save_detections,
    save_results,
)
from .errors import DimensionMismatch, InvalidConfig, SchemaError, SegTrackError
from .geometry import DEFAULT_EDGE_SAMPLES, BinaryMask, BoundingBox, inner_center, mask_centroid
from .metrics import FrameResult, LARGE_AREA, TINY_AREA, compute_mots, compute_mots_multi, dataset_stats
from .tracking import TrackerConfig, track_sequence

log = logging.getLogger("segtrack")

DEFAULT_SEED = 0

# built-in defaults for every flag that --config may set
DEFAULTS = {
    "k": DEFAULT_EDGE_SAMPLES,
    "seed": DEFAULT_SEED,
    "strategy": Strategy.INNER_CENTER.value,
    "policy": Policy.TO_NEGATIVE.value,
    "base_stride": DEFAULT_BASE_STRIDE,
    "level_ranges": "64,128",
    "mix": None,
    "w_emb": 0.7,
    "w_iou": 0.3,
    "gate": 0.9,
    "max_age": 30,
    "top_k": 100,
    "score_thresh": 0.1,
    "spawn_thresh": 0.5,
    "iou_thresh": 0.5,
    "jobs": 1,
    "tiny_area": TINY_AREA,
    "large_area": LARGE_AREA,
    "overlap_by": "mask",
    "palette_seed": 0,
    "videos": 1,
    "instances": 3,
    "frames": 30,
    "width": 128,
    "height": 96,
    "speed_min": 0.5,
    "speed_max": 2.0,
    "size_min": 12,
    "size_max": 28,
    "shapes": "rect,ellipse",
    "occlusion": [],
    "occlusion_gt": "hidden",
    "embedding_separation": 0.5,
    "embedding_noise": 0.0,
    "detection_noise": 0.0,
    "score_min": 0.6,
    "score_max": 1.0,
    "visible_only": False,
    "no_masks": False,
    "corpus": None,
    "scenes": 50,
}


# ------------------------------------------------------------------ helpers


def _color(text: str, code: str, stream) -> str:
    if os.environ.get("NO_COLOR") or not getattr(stream, "isatty", lambda: False)():
        return text
    return f"\033[{code}m{text}\033[0m"


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _pmap(fn, items, jobs: int):
    """Ordered map; sequences run on up to ``jobs`` threads."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def parse_level_ranges(text: str) -> tuple[tuple[float, float], ...]:
    """``"64,128"`` -> ``((0, 64), (64, 128), (128, inf))``."""
    try:
        cuts = [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise InvalidConfig(f"--level-ranges wants two increasing numbers, got {text!r}") from None
    if len(cuts) != 2 or not 0 < cuts[0] < cuts[1]:
        raise InvalidConfig(f"--level-ranges wants two increasing positive numbers, got {text!r}")
    return ((0.0, cuts[0]), (cuts[0], cuts[1]), (cuts[1], math.inf))


def parse_mix(text: str | None) -> int | None:
    if text is None:
        return None
    key, _, val = str(text).partition("=")
    if key != "a" or not val.isdigit() or int(val) % 10 or int(val) > 100:
        raise InvalidConfig(f"--mix wants a=<0,10,...,100>, got {text!r}")
    return int(val)


def parse_occlusion(text: str) -> tuple[int, int, int]:
    try:
        iid, start, end = (int(t) for t in text.split(":"))
    except ValueError:
        raise InvalidConfig(f"--occlusion wants ID:START:END, got {text!r}") from None
    return iid, start, end


def _all_instances(seqs: Sequence[SequenceFile]):
    for seq in seqs:
        for fr in seq.frames:
            yield seq, fr.frame, seq.instances(fr.frame)


# ---------------------------------------------------------------- commands


def cmd_inner_center(seqs: Sequence[SequenceFile], k: int = DEFAULT_EDGE_SAMPLES, seed: int = DEFAULT_SEED) -> list[dict]:
    """One row per instance-frame with the three candidate centers."""
    rows = []
    for seq, frame, insts in _all_instances(seqs):
        for inst in insts:
            m = inst.mask
            bx, by = inst.box.center()
            c = mask_centroid(m)
            ic = inner_center(m, k, [seed, inst.instance_id, frame])
            rows.append(
                {
                    "video": seq.video_id,
                    "frame": frame,
                    "id": inst.instance_id,
                    "bbox_center": [bx, by],
                    "centroid": [c.x, c.y],
                    "inner_center": [ic.x, ic.y],
                    "bbox_center_inside": m.contains(math.floor(bx), math.floor(by)),
                    "centroid_inside": m.contains(c.x, c.y),
                    "inner_center_inside": m.contains(ic.x, ic.y),
                }
            )
    return rows


def _assign_frame(insts, seq, strategy, policy, k, seed, base_stride, ranges, mix):
    grids = build_grids(seq.width, seq.height, base_stride)
    raw = assign(insts, grids, strategy, k, seed, ranges)
    if mix is not None:
        other = Strategy.INNER_CENTER if strategy is Strategy.CENTER_BOX else Strategy.CENTER_BOX
        extra = assign(insts, grids, other, k, seed, ranges)
        raw = [mix_positive_sets(a, b, mix, [seed, i]) for i, (a, b) in enumerate(zip(raw, extra))]
    ambiguous = [amb for a in raw for amb in ((a.grid.level, cell, ids) for cell, ids in detect_ambiguous(a))]
    resolved = [resolve_ambiguous(a, policy) for a in raw]
    return resolved, ambiguous


def cmd_assign(
    seqs: Sequence[SequenceFile],
    strategy: str = DEFAULTS["strategy"],
    policy: str = DEFAULTS["policy"],
    k: int = DEFAULT_EDGE_SAMPLES,
    seed: int = DEFAULT_SEED,
    base_stride: int = DEFAULT_BASE_STRIDE,
    level_ranges: str = DEFAULTS["level_ranges"],
    mix: str | None = None,
    jobs: int = 1,
) -> dict:
    """Positives, ambiguous cells and inside-mask fractions, per frame and overall.

    ``comparison`` repeats the counts for every strategy so runs can be set
    side by side.
    """
    strategy = Strategy(strategy)
    policy = Policy(policy)
    ranges = parse_level_ranges(level_ranges)
    mix_a = parse_mix(mix)
    if mix_a is not None and strategy not in (Strategy.CENTER_BOX, Strategy.INNER_CENTER):
        raise InvalidConfig("--mix mixes center-box and inner-center positives; pick one of those strategies")

    work = [(seq, frame, insts) for seq, frame, insts in _all_instances(seqs) if insts]

    def summarize(strat, with_frames, mix_value):
        def one(item):
            seq, frame, insts = item
            resolved, amb = _assign_frame(insts, seq, strat, policy, k, seed, base_stride, ranges, mix_value)
            return item, resolved, amb, inside_mask_counts(resolved, insts)

        frames, total, n_amb = [], InsideMaskStats(0, 0, []), 0
        for (seq, frame, insts), resolved, amb, stats in _pmap(one, work, jobs):
            total = total + stats
            n_amb += len(amb)
            if with_frames:
                frames.append(
                    {
                        "video": seq.video_id,
                        "frame": frame,
                        "positives": [
                            {"level": a.grid.level, "cell": list(cell), "id": owner} for a in resolved for cell, owner in a.positives()
                        ],
                        "ambiguous": [{"level": lv, "cell": list(cell), "ids": list(ids)} for lv, cell, ids in amb],
                        "inside": stats.inside,
                        "positive_count": stats.total,
                    }
                )
        summary = {
            "positives": total.total,
            "inside": total.inside,
            "ambiguous_cells": n_amb,
            "inside_mask_fraction": total.inside / total.total if total.total else None,
        }
        return frames, summary

    frames, summary = summarize(strategy, True, mix_a)
    comparison = {s.value: summarize(s, False, None)[1] for s in Strategy}
    return {
        "strategy": strategy.value,
        "policy": policy.value,
        "k": k,
        "seed": seed,
        "mix": mix_a,
        "frames": frames,
        "summary": summary,
        "comparison": comparison,
    }


def _results_for_video(video, config: TrackerConfig) -> SequenceFile:
    tracked = track_sequence(video.frames, config)
    seq = SequenceFile(video.video_id, video.width, video.height)
    for f, objs in enumerate(tracked):
        fr = FrameResult(f)
        rasters = iter(BinaryMask.from_boxes(video.width, video.height, [o.box for o in objs if o.mask is None]))
        for obj in objs:
            mask = obj.mask if obj.mask is not None else next(rasters)
            fr.items.append((obj.id, mask))
            fr.boxes[obj.id] = BoundingBox(*(float(v) for v in obj.box))
            fr.scores[obj.id] = float(obj.score)
        seq.frames.append(fr)
    return seq


def cmd_track(detections, config: TrackerConfig | None = None, jobs: int = 1) -> list[SequenceFile]:
    """Track every video of a detection file; frames are visited in order."""
    config = config or TrackerConfig()
    return _pmap(lambda v: _results_for_video(v, config), detections.videos, jobs)


def write_overlays(results: Sequence[SequenceFile], directory, palette_seed: int = 0) -> None:
    root = Path(directory)
    for seq in results:
        d = root / seq.video_id
        d.mkdir(parents=True, exist_ok=True)
        for fr in seq.frames:
            items = [(i, m, fr.boxes.get(i)) for i, m in fr.items]
            (d / f"{fr.frame:06d}.ppm").write_bytes(render_overlay(seq.width, seq.height, items, palette_seed))


def cmd_eval(results: Sequence[SequenceFile], annotations: Sequence[SequenceFile], iou_thresh: float = 0.5, jobs: int = 1) -> dict:
    gt = {s.video_id: s for s in annotations}
    pred = {s.video_id: s for s in results}
    for vid, s in pred.items():
        if vid not in gt:
            raise SchemaError(f"results video '{vid}' has no annotations", "videos")
        if (s.width, s.height) != (gt[vid].width, gt[vid].height):
            raise DimensionMismatch(
                f"video '{vid}': results are {s.width}x{s.height}, annotations {gt[vid].width}x{gt[vid].height}"
            )
    ids = sorted(gt)

    def one(vid):
        p = pred[vid].frames if vid in pred else []
        if not any(f.items for f in gt[vid].frames):
            return vid, None
        return vid, compute_mots(p, gt[vid].frames, iou_thresh).to_dict()

    per_video = dict(_pmap(one, ids, jobs))
    overall = compute_mots_multi({v: s.frames for v, s in pred.items()}, {v: gt[v].frames for v in ids}, iou_thresh)
    return {"iou_thresh": iou_thresh, "videos": per_video, "overall": overall.to_dict()}


def cmd_stats(annotations: Sequence[SequenceFile], tiny_area=TINY_AREA, large_area=LARGE_AREA, overlap_by="mask") -> dict:
    st = dataset_stats([s.frames for s in annotations], tiny_area, large_area, overlap_by=overlap_by)
    return st.to_dict()


def cmd_synth(config: SynthConfig):
    return generate_synthetic(config)


# --------------------------------------------------------------- rendering


def _fmt(v) -> str:
    return "-" if v is None else f"{v:.4f}"


def format_eval(report: dict, stream=sys.stdout) -> str:
    head = f"{'video':<16}{'sMOTSA':>9}{'MOTSA':>9}{'MOTSP':>9}{'TP':>7}{'FP':>7}{'FN':>7}{'IDS':>6}"
    lines = [_color(head, "1", stream)]

    def row(name, r):
        if r is None:
            return f"{name:<16}{'(no ground truth)':>36}"
        return (
            f"{name:<16}{_fmt(r['smotsa']):>9}{_fmt(r['motsa']):>9}{_fmt(r['motsp']):>9}"
            f"{r['tp']:>7}{r['fp']:>7}{r['fn']:>7}{r['ids']:>6}"
        )

    for vid, r in report["videos"].items():
        lines.append(row(vid, r))
    lines.append(_color(row("ALL", report["overall"]), "1;32", stream))
    return "\n".join(lines) + "\n"


def format_table(rows: list[dict], columns: Sequence[str]) -> str:
    def cell(v):
        if isinstance(v, list):
            return "(" + ", ".join(f"{x:g}" for x in v) + ")"
        if isinstance(v, bool):
            return "yes" if v else "no"
        return str(v)

    lines = ["\t".join(columns)]
    lines += ["\t".join(cell(r[c]) for c in columns) for r in rows]
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------------ parser


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file of flag values; explicit flags win")
    p.add_argument("--seed", type=int, help=f"random seed (default {DEFAULT_SEED})")
    p.add_argument("--jobs", type=int, help="worker threads across sequences (default 1)")
    p.add_argument("--out", help="write the main output here instead of stdout")
    p.add_argument("--format", choices=("text", "json"), default="json")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_grid(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k", type=int, help=f"edge samples for the inner center (default {DEFAULT_EDGE_SAMPLES})")
    p.add_argument("--strategy", choices=[s.value for s in Strategy])
    p.add_argument("--policy", choices=[s.value for s in Policy])
    p.add_argument("--base-stride", type=int, dest="base_stride")
    p.add_argument("--level-ranges", dest="level_ranges", help="two size cuts in pixels, e.g. 64,128")
    p.add_argument("--mix", help="a=<percent>: add that share of the other center-based positive set")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="segtrack", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("inner-center", help="box center, mask centroid and inner center per instance")
    p.add_argument("annotations")
    _add_common(p)
    p.add_argument("--k", type=int)

    p = sub.add_parser("assign", help="positive-sample assignment and ambiguity report")
    p.add_argument("annotations")
    _add_common(p)
    _add_grid(p)

    p = sub.add_parser("track", help="track detections into a results file")
    p.add_argument("detections")
    _add_common(p)
    p.add_argument("--w-emb", type=float, dest="w_emb")
    p.add_argument("--w-iou", type=float, dest="w_iou")
    p.add_argument("--gate", type=float)
    p.add_argument("--max-age", type=int, dest="max_age")
    p.add_argument("--top-k", type=int, dest="top_k")
    p.add_argument("--score-thresh", type=float, dest="score_thresh")
    p.add_argument("--spawn-thresh", type=float, dest="spawn_thresh")
    p.add_argument("--overlay-dir", dest="overlay_dir", help="also write one PPM overlay per frame")
    p.add_argument("--palette-seed", type=int, dest="palette_seed")

    p = sub.add_parser("eval", help="sMOTSA / MOTSA / MOTSP of results against annotations")
    p.add_argument("results")
    p.add_argument("annotations")
    _add_common(p)
    p.add_argument("--iou-thresh", type=float, dest="iou_thresh")

    p = sub.add_parser("stats", help="dataset complexity statistics")
    p.add_argument("annotations")
    _add_common(p)
    p.add_argument("--tiny-area", type=int, dest="tiny_area")
    p.add_argument("--large-area", type=int, dest="large_area")
    p.add_argument("--overlap-by", choices=("mask", "box"), dest="overlap_by")

    p = sub.add_parser("synth", help="write a synthetic ground truth and detection file")
    p.add_argument("--gt", required=True, help="annotation output path")
    p.add_argument("--det", help="detection output path (omitted for --corpus occlusion)")
    _add_common(p)
    p.add_argument("--corpus", choices=("occlusion",), help="write the fixed occlusion corpus instead")
    p.add_argument("--scenes", type=int)
    for name, kind in (
        ("videos", int),
        ("instances", int),
        ("frames", int),
        ("width", int),
        ("height", int),
        ("speed-min", float),
        ("speed-max", float),
        ("size-min", int),
        ("size-max", int),
        ("embedding-separation", float),
        ("embedding-noise", float),
        ("detection-noise", float),
        ("score-min", float),
        ("score-max", float),
    ):
        p.add_argument(f"--{name}", type=kind, dest=name.replace("-", "_"))
    p.add_argument("--shapes", help="comma list of rect, ellipse, person")
    p.add_argument("--occlusion", action="append", help="ID:START:END, repeatable")
    p.add_argument("--occlusion-gt", choices=("hidden", "present"), dest="occlusion_gt")
    p.add_argument("--visible-only", action="store_const", const=True, dest="visible_only")
    p.add_argument("--no-masks", action="store_const", const=True, dest="no_masks")
    return parser


def resolve_args(args: argparse.Namespace) -> argparse.Namespace:
    """Fill unset flags from ``--config`` and then from :data:`DEFAULTS`."""
    cfg = {}
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except OSError as exc:
            raise InvalidConfig(f"cannot read config {args.config}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise InvalidConfig(f"config {args.config} line {exc.lineno}: {exc.msg}") from None
        if not isinstance(cfg, dict):
            raise InvalidConfig("config file must hold a JSON object")
        cfg = {key.replace("-", "_"): val for key, val in cfg.items()}
    for key, default in DEFAULTS.items():
        if hasattr(args, key) and getattr(args, key) is None:
            setattr(args, key, cfg.get(key, default))
    unknown = sorted(set(cfg) - set(DEFAULTS))
    if unknown:
        raise InvalidConfig(f"unknown config keys: {', '.join(unknown)}")
    return args


def _synth_config(a) -> SynthConfig:
    shapes = a.shapes if isinstance(a.shapes, (list, tuple)) else [s for s in str(a.shapes).split(",") if s]
    occl = [o if isinstance(o, (list, tuple)) else parse_occlusion(o) for o in a.occlusion]
    return SynthConfig(
        num_videos=a.videos,
        num_instances=a.instances,
        num_frames=a.frames,
        width=a.width,
        height=a.height,
        speed_min=a.speed_min,
        speed_max=a.speed_max,
        size_min=a.size_min,
        size_max=a.size_max,
        shapes=tuple(shapes),
        occlusions=tuple(tuple(int(v) for v in o) for o in occl),
        occlusion_gt=a.occlusion_gt,
        embedding_separation=a.embedding_separation,
        embedding_noise=a.embedding_noise,
        detection_noise=a.detection_noise,
        score_min=a.score_min,
        score_max=a.score_max,
        visible_only=bool(a.visible_only),
        with_masks=not a.no_masks,
        seed=a.seed,
    )


def run(args: argparse.Namespace) -> int:
    a = resolve_args(args)
    if a.jobs < 1:
        raise InvalidConfig("--jobs must be >= 1")
    if a.command == "inner-center":
        rows = cmd_inner_center(load_annotations(a.annotations), a.k, a.seed)
        if a.format == "text":
            cols = ["video", "frame", "id", "bbox_center", "centroid", "inner_center",
                    "bbox_center_inside", "centroid_inside", "inner_center_inside"]
            _emit(format_table(rows, cols), a.out)
        else:
            _emit(_json(rows), a.out)
    elif a.command == "assign":
        rep = cmd_assign(
            load_annotations(a.annotations), a.strategy, a.policy, a.k, a.seed, a.base_stride, a.level_ranges, a.mix, a.jobs
        )
        if a.format == "text":
            rows = [{"strategy": s, **v} for s, v in rep["comparison"].items()]
            _emit(format_table(rows, ["strategy", "positives", "inside", "ambiguous_cells", "inside_mask_fraction"]), a.out)
        else:
            _emit(_json(rep), a.out)
    elif a.command == "track":
        if not a.out:
            raise InvalidConfig("track needs --out for the results file")
        config = TrackerConfig(
            w_emb=a.w_emb,
            w_iou=a.w_iou,
            gate=a.gate,
            max_age=a.max_age,
            top_k=a.top_k,
            score_thresh=a.score_thresh,
            spawn_thresh=a.spawn_thresh,
        )
        results = cmd_track(load_detections(a.detections), config, a.jobs)
        save_results(a.out, results)
        if a.overlay_dir:
            write_overlays(results, a.overlay_dir, a.palette_seed)
    elif a.command == "eval":
        rep = cmd_eval(load_results(a.results), load_annotations(a.annotations), a.iou_thresh, a.jobs)
        if a.format == "text":
            _emit(format_eval(rep, sys.stdout if not a.out else None), a.out)
        else:
            _emit(_json(rep), a.out)
    elif a.command == "stats":
        rep = cmd_stats(load_annotations(a.annotations), a.tiny_area, a.large_area, a.overlap_by)
        if a.format == "text":
            _emit("".join(f"{k}\t{v}\n" for k, v in rep.items()), a.out)
        else:
            _emit(_json(rep), a.out)
    elif a.command == "synth":
        if a.corpus == "occlusion":
            save_annotations(a.gt, occlusion_corpus(a.scenes, a.seed))
        else:
            if not a.det:
                raise InvalidConfig("synth needs --det for the detection file")
            gts, dets = cmd_synth(_synth_config(a))
            save_annotations(a.gt, gts)
            save_detections(a.det, dets)
    return 0


def _error_payload(exc: BaseException) -> str:
    return json.dumps(
        {"error": type(exc).__name__, "message": str(exc), "where": getattr(exc, "where", None)}, sort_keys=True
    )


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except BrokenPipeError:
        # reader went away (e.g. piped into head); silence the flush at exit
        devnull = os.open(os.devnull, os.O_WRONLY)
        os.dup2(devnull, sys.stdout.fileno())
        return 1
    except (SegTrackError, ValueError, OSError) as exc:
        log.debug("command failed", exc_info=True)
        sys.stderr.write(_error_payload(exc) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from segtrack.data import (
    DetectionFile,
    SequenceFile,
    SynthConfig,
    detections_text,
    generate_synthetic,
    id_color,
    load_annotations,
    load_detections,
    load_results,
    occlusion_corpus,
    parse_detections,
    polygon_to_mask,
    read_ppm,
    render_overlay,
    rle_decode,
    rle_encode,
    save_annotations,
    save_detections,
    save_results,
)
from segtrack.errors import (
    DimensionMismatch,
    InconsistentIds,
    InvalidConfig,
    IoError,
    ParseError,
    SchemaError,
)
from segtrack.geometry import BinaryMask, BoundingBox, mask_bbox
from segtrack.metrics import FrameResult

from helpers import random_mask_corpus


def doc(instances, width=2, height=2, kind="annotations"):
    return {
        "format_version": 1,
        "kind": kind,
        "videos": [{"id": "v", "width": width, "height": height, "frames": [{"frame": 0, "instances": instances}]}],
    }


def write(tmp_path, obj, name="a.json"):
    p = tmp_path / name
    p.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return p


# ---------------------------------------------------------------- RLE / polygon


def test_rle_full_2x2():
    m = rle_decode({"size": [2, 2], "counts": "0 4"})
    assert m.bits.all()


def test_rle_column_major_known():
    bits = np.array([[1, 0, 0], [1, 1, 0]], dtype=bool)
    # columns: (1,1), (0,1), (0,0) -> 0 zeros, 2 ones, 1 zero, 1 one, 2 zeros
    assert rle_encode(BinaryMask(bits))["counts"] == [0, 2, 1, 1, 2]
    assert rle_decode({"size": [2, 3], "counts": [0, 2, 1, 1, 2]}) == BinaryMask(bits)


def test_rle_round_trip_corpus():
    for m in random_mask_corpus(150, seed=11):
        assert rle_decode(rle_encode(m)) == m


@settings(max_examples=200, deadline=None)
@given(arrays(bool, st.tuples(st.integers(1, 12), st.integers(1, 12))))
def test_rle_round_trip_property(bits):
    m = BinaryMask(bits)
    enc = rle_encode(m)
    assert sum(enc["counts"]) == bits.size
    assert rle_decode(enc) == m


def test_rle_bad_sum():
    with pytest.raises(DimensionMismatch):
        rle_decode({"size": [2, 2], "counts": [0, 3]})


def test_polygon_square_pixel_centers():
    m = polygon_to_mask([[1, 1, 5, 1, 5, 4, 1, 4]], 7, 6)
    expected = np.zeros((6, 7), dtype=bool)
    expected[1:4, 1:5] = True
    assert np.array_equal(m.bits, expected)


def test_polygon_even_odd_self_overlap():
    # a pentagram: the inner pentagon has winding number 2, so even-odd leaves it empty
    cx, cy, r = 20, 20, 18
    ang = np.pi / 2 + np.arange(5) * 4 * np.pi / 5
    pts = np.stack([cx + r * np.cos(ang), cy - r * np.sin(ang)], axis=1).ravel().tolist()
    m = polygon_to_mask([pts], 40, 40)
    assert not m.bits[20, 20]
    assert m.bits[5, 20]  # top spike


def test_polygon_union():
    m = polygon_to_mask([[0, 0, 2, 0, 2, 2, 0, 2], [3, 3, 5, 3, 5, 5, 3, 5]], 6, 6)
    assert m.area == 8


# ---------------------------------------------------------------- annotations


def test_minimal_annotation(tmp_path):
    p = write(tmp_path, doc([{"id": 1, "rle": {"size": [2, 2], "counts": "0 4"}}]))
    seqs = load_annotations(p)
    assert len(seqs) == 1 and seqs[0].video_id == "v"
    insts = seqs[0].instances(0)
    assert len(insts) == 1 and insts[0].mask.area == 4


def test_polygon_annotation(tmp_path):
    p = write(tmp_path, doc([{"id": 3, "polygon": [[0, 0, 4, 0, 4, 4, 0, 4]]}], 6, 6))
    assert load_annotations(p)[0].instances(0)[0].mask.area == 16


def test_duplicate_id(tmp_path):
    inst = {"id": 1, "rle": {"size": [2, 2], "counts": [4]}}
    with pytest.raises(InconsistentIds):
        load_annotations(write(tmp_path, doc([inst, inst])))


@pytest.mark.parametrize(
    "mutate, err",
    [
        (lambda d: d.pop("format_version"), SchemaError),
        (lambda d: d.update(format_version=2), SchemaError),
        (lambda d: d["videos"][0].update(width="2"), SchemaError),
        (lambda d: d["videos"][0]["frames"][0]["instances"][0].pop("rle"), SchemaError),
        (lambda d: d["videos"][0]["frames"][0]["instances"][0]["rle"].update(size=[3, 2], counts=[6]), SchemaError),
        (lambda d: d["videos"][0]["frames"][0]["instances"][0]["rle"].update(counts=[1, 1]), SchemaError),
        (lambda d: d["videos"][0]["frames"][0]["instances"][0]["rle"].update(counts="0 x"), ParseError),
        (lambda d: d["videos"][0]["frames"][0]["instances"][0].update(id=0), InconsistentIds),
        (lambda d: d["videos"][0]["frames"].append({"frame": 0, "instances": []}), SchemaError),
    ],
)
def test_schema_errors(tmp_path, mutate, err):
    d = doc([{"id": 1, "rle": {"size": [2, 2], "counts": [4]}}])
    mutate(d)
    with pytest.raises(err) as exc:
        load_annotations(write(tmp_path, d))
    assert exc.value.where


def test_parse_error_has_line(tmp_path):
    with pytest.raises(ParseError) as exc:
        load_annotations(write(tmp_path, '{"format_version": 1,\n "kind": }'))
    assert exc.value.where.startswith("line 2")


def test_missing_file(tmp_path):
    with pytest.raises(IoError):
        load_annotations(tmp_path / "nope.json")


# ---------------------------------------------------------------- results


def _result_seq(rng, n_frames=2, w=20, h=15, vid="r"):
    seq = SequenceFile(vid, w, h)
    for f in range(n_frames):
        fr = FrameResult(f)
        for iid in rng.choice(np.arange(1, 9), size=int(rng.integers(0, 4)), replace=False):
            bits = rng.random((h, w)) < 0.3
            fr.items.append((int(iid), BinaryMask(bits)))
            fr.boxes[int(iid)] = BoundingBox(*rng.uniform(0, 10, 4).tolist())
            fr.scores[int(iid)] = float(rng.random())
        seq.frames.append(fr)
    return seq


def _same(a, b):
    assert len(a) == len(b)
    for sa, sb in zip(a, b):
        assert (sa.video_id, sa.width, sa.height) == (sb.video_id, sb.width, sb.height)
        assert [f.frame for f in sa.frames] == [f.frame for f in sb.frames]
        for fa, fb in zip(sa.frames, sb.frames):
            assert fa.items == fb.items
            assert fa.boxes == fb.boxes and fa.scores == fb.scores


def test_results_round_trip(tmp_path):
    p = tmp_path / "r.json"
    save_results(p, [])
    assert load_results(p) == []
    rng = np.random.default_rng(3)
    for _ in range(20):
        seqs = [_result_seq(rng), _result_seq(rng, 3, vid="s")]
        save_results(p, seqs)
        _same(load_results(p), seqs)
        first = p.read_bytes()
        save_results(p, load_results(p))
        assert p.read_bytes() == first


def test_annotations_round_trip(tmp_path):
    gts, _ = generate_synthetic(SynthConfig(num_frames=5, seed=2))
    p = tmp_path / "gt.json"
    save_annotations(p, gts)
    _same(load_annotations(p), gts)


def test_results_reject_annotations_kind(tmp_path):
    p = tmp_path / "gt.json"
    save_annotations(p, [_result_seq(np.random.default_rng(0))])
    with pytest.raises(SchemaError):
        load_results(p)


def test_save_rejects_duplicates(tmp_path):
    rng = np.random.default_rng(0)
    with pytest.raises(SchemaError):
        save_results(tmp_path / "x.json", [_result_seq(rng), _result_seq(rng)])
    m = BinaryMask.zeros(4, 4)
    with pytest.raises(InconsistentIds):
        save_results(tmp_path / "x.json", [SequenceFile("v", 4, 4, [FrameResult(0, [(1, m), (1, m)])])])


def test_save_rejects_misfit_mask(tmp_path):
    seq = SequenceFile("v", 4, 4, [FrameResult(0, [(1, BinaryMask.zeros(5, 4))])])
    with pytest.raises(DimensionMismatch):
        save_results(tmp_path / "x.json", [seq])


def test_corrupted_file_no_partial_state(tmp_path):
    p = tmp_path / "r.json"
    save_results(p, [_result_seq(np.random.default_rng(1))])
    text = p.read_text()
    p.write_text(text[: len(text) // 2])
    with pytest.raises(ParseError):
        load_results(p)
    # a failed save leaves the previous file untouched and no temp files behind
    save_results(p, [_result_seq(np.random.default_rng(1))])
    before = p.read_bytes()
    bad = SequenceFile("v", 4, 4, [FrameResult(0, [(1, BinaryMask.zeros(5, 4))])])
    with pytest.raises(DimensionMismatch):
        save_results(p, [bad])
    assert p.read_bytes() == before
    assert sorted(x.name for x in tmp_path.iterdir()) == ["r.json"]


# ---------------------------------------------------------------- detections


def test_detections_round_trip(tmp_path):
    _, dets = generate_synthetic(SynthConfig(num_videos=2, num_frames=6, embedding_noise=0.05, detection_noise=0.7, seed=4))
    p = tmp_path / "d.jsonl"
    save_detections(p, dets)
    back = load_detections(p)
    for va, vb in zip(dets.videos, back.videos):
        assert va.num_frames == vb.num_frames
        for fa, fb in zip(va.frames, vb.frames):
            assert len(fa) == len(fb)
            for a, b in zip(fa, fb):
                assert tuple(a.box) == tuple(b.box) and a.score == b.score and a.mask == b.mask
                assert np.max(np.abs(a.embedding - b.embedding) / np.maximum(np.abs(a.embedding), 1e-30)) < 1e-7
    # once rounded, text round-trips byte for byte
    assert detections_text(back) == p.read_text()


def _det_lines(**rec):
    header = {"format_version": 1, "kind": "detections", "videos": [{"id": "v", "width": 4, "height": 4, "num_frames": 2}]}
    base = {"video": "v", "frame": 0, "box": [0, 0, 2, 2], "score": 0.9, "embedding": [0.0] * 256}
    base.update(rec)
    return json.dumps(header) + "\n" + json.dumps(base) + "\n"


@pytest.mark.parametrize(
    "rec",
    [
        {"embedding": [0.0] * 255},
        {"score": 1.5},
        {"frame": 2},
        {"video": "w"},
        {"box": [0, 0, 1]},
        {"mask": {"size": [3, 4], "counts": [12]}},
    ],
)
def test_detection_schema_errors(rec):
    with pytest.raises(SchemaError) as exc:
        parse_detections(_det_lines(**rec))
    assert exc.value.where.startswith("line 2")


def test_detection_parse_line_number():
    text = _det_lines() + "{not json\n"
    with pytest.raises(ParseError) as exc:
        parse_detections(text)
    assert exc.value.where.startswith("line 3")


def test_detection_unsorted_frames():
    header, rec = _det_lines(frame=1).splitlines()
    early = rec.replace('"frame": 1', '"frame": 0')
    with pytest.raises(SchemaError):
        parse_detections("\n".join([header, rec, early]))


def test_empty_detection_file_round_trip(tmp_path):
    p = tmp_path / "d.jsonl"
    save_detections(p, DetectionFile())
    assert load_detections(p).videos == []


# ---------------------------------------------------------------- overlay


def test_overlay_empty_is_background():
    data = render_overlay(5, 3, [])
    assert data.startswith(b"P6\n5 3\n255\n")
    assert not read_ppm(data).any()


def test_overlay_color_stable_and_blended():
    m = BinaryMask.from_box(6, 6, BoundingBox(1, 1, 3, 3))
    a = read_ppm(render_overlay(6, 6, [(7, m, None)], palette_seed=3))
    b = read_ppm(render_overlay(6, 6, [(2, BinaryMask.zeros(6, 6), None), (7, m, None)], palette_seed=3))
    assert np.array_equal(a, b)
    c = np.array(id_color(7, 3))
    assert np.array_equal(a[1, 1], np.rint(0.5 * c).astype(np.uint8))
    assert not a[0, 0].any()


def test_overlay_z_order_larger_id_on_top():
    m1 = BinaryMask.from_box(4, 4, BoundingBox(0, 0, 3, 3))
    m2 = BinaryMask.from_box(4, 4, BoundingBox(1, 1, 4, 4))
    img1 = read_ppm(render_overlay(4, 4, [(9, m2, None), (1, m1, None)]))
    img2 = read_ppm(render_overlay(4, 4, [(1, m1, None), (9, m2, None)]))
    assert np.array_equal(img1, img2)
    c1, c9 = np.array(id_color(1)), np.array(id_color(9))
    expected = np.rint(0.5 * (0.5 * c1) + 0.5 * c9).astype(np.uint8)
    assert np.array_equal(img1[2, 2], expected)


def test_overlay_box_outline():
    img = read_ppm(render_overlay(8, 8, [(1, BinaryMask.zeros(8, 8), BoundingBox(1, 2, 5, 6))]))
    c = np.array(id_color(1), dtype=np.uint8)
    assert (img[2, 1:5] == c).all() and (img[5, 1:5] == c).all()
    assert (img[2:6, 1] == c).all() and (img[2:6, 4] == c).all()
    assert not img[3, 2].any()


def test_overlay_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        render_overlay(4, 4, [(1, BinaryMask.zeros(5, 4), None)])


# ---------------------------------------------------------------- synthetic


def test_synth_zero_noise_boxes_match_gt():
    gts, dets = generate_synthetic(SynthConfig(num_instances=1, num_frames=20, seed=5))
    for fr, frame_dets in zip(gts[0].frames, dets.videos[0].frames):
        assert len(frame_dets) == 1
        assert frame_dets[0].box == mask_bbox(fr.items[0][1]) == fr.boxes[1]
        assert frame_dets[0].mask == fr.items[0][1]


@pytest.mark.parametrize("occlusion_gt", ["hidden", "present"])
def test_synth_occlusion_window(occlusion_gt):
    cfg = SynthConfig(num_instances=2, num_frames=20, occlusions=((2, 10, 12),), occlusion_gt=occlusion_gt, seed=1)
    gts, dets = generate_synthetic(cfg)
    emb2 = dets.videos[0].frames[0][1].embedding
    for f, frame_dets in enumerate(dets.videos[0].frames):
        has2 = any(np.array_equal(d.embedding, emb2) for d in frame_dets)
        gt_has2 = 2 in gts[0].frames[f].ids()
        if 10 <= f <= 12:
            assert not has2
            assert gt_has2 == (occlusion_gt == "present")
        else:
            assert has2 and gt_has2


def test_synth_deterministic(tmp_path):
    cfg = SynthConfig(num_videos=2, num_frames=8, embedding_noise=0.1, detection_noise=1.0, seed=9)
    texts = []
    for run in range(2):
        gts, dets = generate_synthetic(cfg)
        save_annotations(tmp_path / f"g{run}.json", gts)
        texts.append(((tmp_path / f"g{run}.json").read_bytes(), detections_text(dets)))
    assert texts[0] == texts[1]
    gts, dets = generate_synthetic(SynthConfig(num_videos=2, num_frames=8, embedding_noise=0.1, detection_noise=1.0, seed=10))
    assert detections_text(dets) != texts[0][1]


def test_synth_consistency_and_fit():
    cfg = SynthConfig(num_instances=4, num_frames=40, shapes=("person", "rect", "ellipse"), visible_only=True, speed_max=4, seed=3)
    gts, dets = generate_synthetic(cfg)
    for fr in gts[0].frames:
        ids = fr.ids()
        assert len(ids) == len(set(ids)) and set(ids) <= {1, 2, 3, 4}
        for _, m in fr.items:
            assert m.shape == (cfg.height, cfg.width) and m.area > 0
        # carving leaves visible masks disjoint
        if len(fr.items) > 1:
            stack = np.stack([m.bits for _, m in fr.items])
            assert stack.sum(0).max() <= 1


def test_synth_embedding_separation():
    from segtrack.data.synthetic import base_embeddings

    e = base_embeddings(np.random.default_rng(0), 10, 256, 1.3)
    d = np.linalg.norm(e[:, None] - e[None], axis=2)
    assert d[np.triu_indices(10, 1)].min() >= 1.3
    with pytest.raises(InvalidConfig):
        base_embeddings(np.random.default_rng(0), 10, 256, 1.99, tries=3)


@pytest.mark.parametrize(
    "kw",
    [
        {"width": 31},
        {"num_instances": 0},
        {"occlusions": ((5, 1, 2),)},
        {"occlusions": ((1, 4, 2),)},
        {"shapes": ("triangle",)},
        {"embedding_separation": 2.5},
        {"score_max": 1.2},
        {"occlusion_gt": "maybe"},
    ],
)
def test_synth_invalid(kw):
    with pytest.raises(InvalidConfig):
        generate_synthetic(SynthConfig(**kw))


def test_occlusion_corpus_shape():
    scenes = occlusion_corpus(num_scenes=5, seed=1)
    assert len(scenes) == 5
    for s in scenes:
        fr = s.frames[0]
        assert 2 <= len(fr.items) <= 4
        boxes = [mask_bbox(m) for _, m in fr.items]
        # people stand in groups: every box overlaps another one
        for i, a in enumerate(boxes):
            assert any(min(a.x_max, b.x_max) > max(a.x_min, b.x_min) for j, b in enumerate(boxes) if j != i)

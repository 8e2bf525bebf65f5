"""Independent oracles and mask corpora shared by the test modules.

Everything here works on plain Python sets/lists so it shares no code path
with the library implementations it checks.
"""
import itertools
import math
import random

import numpy as np

from segtrack.geometry import BinaryMask


def mask_from_pixels(width, height, pixels):
    bits = np.zeros((height, width), dtype=bool)
    for x, y in pixels:
        bits[y, x] = True
    return BinaryMask(bits)


def pixels_of(mask):
    return [(x, y) for y in range(mask.height) for x in range(mask.width) if mask.bits[y, x]]


def brute_edges(mask):
    pix = set(pixels_of(mask))
    out = []
    for x, y in sorted(pix, key=lambda p: (p[1], p[0])):
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            if (x + dx, y + dy) not in pix:
                out.append((x, y))
                break
    return out


def brute_inner_center(mask, edge_points):
    """Literal argmin over set pixels of the summed squared edge distance."""
    best = None
    for x, y in pixels_of(mask):  # row-major, so strict < keeps the (y, x) tie rule
        cost = sum((x - ex) ** 2 + (y - ey) ** 2 for ex, ey in edge_points)
        if best is None or cost < best[0]:
            best = (cost, x, y)
    return best[1], best[2]


def u_shape(width, height, thickness=1, x0=0, y0=0, w=None, h=None, opening="up"):
    w = w or width
    h = h or height
    bits = np.zeros((height, width), dtype=bool)
    t = thickness
    bits[y0:y0 + h, x0:x0 + t] = True
    bits[y0:y0 + h, x0 + w - t:x0 + w] = True
    if opening == "up":
        bits[y0 + h - t:y0 + h, x0:x0 + w] = True
    else:
        bits[y0:y0 + t, x0:x0 + w] = True
    return BinaryMask(bits)


def concave_masks():
    """Shapes whose centroid pixel is unset (checked by the tests, not assumed)."""
    out = []
    out.append(u_shape(5, 5))
    out.append(u_shape(12, 10, thickness=2))
    out.append(u_shape(20, 16, thickness=3, opening="down"))
    out.append(u_shape(30, 30, thickness=4, x0=3, y0=2, w=24, h=25))
    # rings
    for size, t in ((9, 2), (15, 3), (25, 5)):
        bits = np.zeros((size, size), dtype=bool)
        bits[:t, :] = bits[-t:, :] = bits[:, :t] = bits[:, -t:] = True
        out.append(BinaryMask(bits))
    # L shapes
    for n, t in ((10, 2), (20, 3), (40, 6)):
        bits = np.zeros((n, n), dtype=bool)
        bits[:, :t] = True
        bits[-t:, :] = True
        out.append(BinaryMask(bits))
    # C shape and two blobs
    bits = np.zeros((20, 20), dtype=bool)
    bits[2:18, 2:6] = True
    bits[2:6, 2:18] = True
    bits[14:18, 2:18] = True
    out.append(BinaryMask(bits))
    bits = np.zeros((16, 24), dtype=bool)
    bits[4:12, 1:7] = True
    bits[4:12, 17:23] = True
    out.append(BinaryMask(bits))
    # crescent
    yy, xx = np.mgrid[:32, :32]
    outer = (xx - 16) ** 2 + (yy - 16) ** 2 <= 14 ** 2
    inner = (xx - 22) ** 2 + (yy - 16) ** 2 <= 11 ** 2
    out.append(BinaryMask(outer & ~inner))
    return out


def random_mask_corpus(n, seed, max_side=64):
    """Random blobs, unions of rectangles/ellipses and carved concave shapes."""
    rng = np.random.default_rng(seed)
    masks = []
    while len(masks) < n:
        w = int(rng.integers(1, max_side + 1))
        h = int(rng.integers(1, max_side + 1))
        kind = len(masks) % 4
        yy, xx = np.mgrid[:h, :w]
        bits = np.zeros((h, w), dtype=bool)
        if kind == 0:
            bits = rng.random((h, w)) < rng.uniform(0.05, 0.9)
        elif kind == 1:
            for _ in range(int(rng.integers(1, 4))):
                x0, x1 = sorted(rng.integers(0, w + 1, size=2))
                y0, y1 = sorted(rng.integers(0, h + 1, size=2))
                bits[y0:y1 + 1, x0:x1 + 1] = True
        elif kind == 2:
            for _ in range(int(rng.integers(1, 3))):
                cx, cy = rng.uniform(0, w), rng.uniform(0, h)
                rx, ry = rng.uniform(1, max(w, 2)), rng.uniform(1, max(h, 2))
                bits |= ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1
        else:
            bits[:, :] = True
            t = int(rng.integers(1, max(2, min(w, h) // 3 + 1)))
            if w > 2 * t and h > t:
                bits[: h - t, t: w - t] = False  # U shape
            elif h > 2 * t:
                bits[t: h - t, t:] = False  # C shape
        if bits.any():
            masks.append(BinaryMask(bits))
    return masks


def brute_hungarian(cost):
    """Exhaustive min over injections; forbidden (inf) pairs are left unmatched.

    Returns (number of allowed pairs, total cost) of the best assignment under
    the ordering "more allowed pairs first, then lower cost".
    """
    cost = [list(map(float, r)) for r in cost]
    n = len(cost)
    m = len(cost[0]) if n else 0
    best = None
    if n <= m:
        for cols in itertools.permutations(range(m), n):
            pairs = [(i, cols[i]) for i in range(n) if math.isfinite(cost[i][cols[i]])]
            key = (-len(pairs), sum(cost[i][j] for i, j in pairs))
            best = key if best is None or key < best else best
    else:
        for rows in itertools.permutations(range(n), m):
            pairs = [(rows[j], j) for j in range(m) if math.isfinite(cost[rows[j]][j])]
            key = (-len(pairs), sum(cost[i][j] for i, j in pairs))
            best = key if best is None or key < best else best
    if best is None:
        return 0, 0.0
    return -best[0], best[1]


def central_difference(f, x, h=1e-4):
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f(x)
        flat[i] = old - h
        fm = f(x)
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * h)
    return g


def rel_err(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def seeded(seed):
    return random.Random(seed)


def brute_mots(pred, gt, thresh=0.5):
    """Recount TP/FP/FN/IDS/soft TP from scratch with optimal per-frame matching."""
    pred_by = {f.frame: f for f in pred}
    gt_by = {f.frame: f for f in gt}
    tp = fp = fn = ids = n_gt = 0
    soft = 0.0
    last = {}
    for frame in sorted(set(pred_by) | set(gt_by)):
        p = [(i, set(pixels_of(m))) for i, m in (pred_by[frame].items if frame in pred_by else [])]
        g = [(i, set(pixels_of(m))) for i, m in (gt_by[frame].items if frame in gt_by else [])]
        iou = {}
        for a, (_, pa) in enumerate(p):
            for b, (_, gb) in enumerate(g):
                u = len(pa | gb)
                iou[a, b] = len(pa & gb) / u if u else 0.0
        best = ((0, 0.0), [])
        k = min(len(p), len(g))
        for r in range(k, -1, -1):
            for ps in itertools.permutations(range(len(p)), r):
                for gs in itertools.combinations(range(len(g)), r):
                    pairs = list(zip(ps, gs))
                    if all(iou[a, b] > thresh for a, b in pairs):
                        key = (len(pairs), sum(iou[a, b] for a, b in pairs))
                        if key > best[0]:
                            best = (key, pairs)
        pairs = best[1]
        n_gt += len(g)
        tp += len(pairs)
        fp += len(p) - len(pairs)
        fn += len(g) - len(pairs)
        for a, b in pairs:
            soft += iou[a, b]
            pid, gid = p[a][0], g[b][0]
            if gid in last and last[gid] != pid:
                ids += 1
            last[gid] = pid
    return dict(tp=tp, fp=fp, fn=fn, ids=ids, soft_tp=soft, num_gt=n_gt)


def random_mots_pair(rng, width=24, height=18):
    """GT with disjoint rectangles plus a perturbed, id-shuffled prediction."""
    from segtrack.metrics import FrameResult

    n_frames = int(rng.integers(2, 7))
    n_obj = int(rng.integers(1, 4))
    slots = [(x, 0) for x in range(0, width - 7, 8)][:n_obj]
    gt, pred = [], []
    id_map = {k + 1: int(v) for k, v in enumerate(rng.permutation(np.arange(10, 10 + n_obj)))}
    for f in range(n_frames):
        g_items, p_items = [], []
        for k, (sx, _) in enumerate(slots, start=1):
            if rng.random() < 0.15:
                continue
            y0 = int(rng.integers(0, height - 6))
            w, h = int(rng.integers(3, 8)), int(rng.integers(3, 7))
            bits = np.zeros((height, width), dtype=bool)
            bits[y0:y0 + h, sx:sx + w] = True
            g_items.append((k, BinaryMask(bits)))
            if rng.random() < 0.85:
                dx, dy = rng.integers(-2, 3, size=2)
                pb = np.roll(np.roll(bits, int(dx), axis=1), int(dy), axis=0)
                pid = id_map[k] if rng.random() < 0.8 else int(rng.integers(50, 53))
                if pb.any() and pid not in [i for i, _ in p_items]:
                    p_items.append((pid, BinaryMask(pb)))
        if rng.random() < 0.4:
            bits = np.zeros((height, width), dtype=bool)
            x0, y0 = int(rng.integers(0, width - 4)), int(rng.integers(0, height - 4))
            bits[y0:y0 + 4, x0:x0 + 4] = True
            p_items.append((99, BinaryMask(bits)))
        gt.append(FrameResult(f, g_items))
        pred.append(FrameResult(f, p_items))
    return pred, gt


def cross_l_masks(size=64):
    """Two overlapping L shapes with one shared bounding box and far-apart inner centers."""
    a = np.zeros((size, size), dtype=bool)
    b = np.zeros((size, size), dtype=bool)
    a[10:50, 10:20] = True
    a[40:50, 10:50] = True
    b[10:50, 40:50] = True
    b[10:20, 10:50] = True
    return BinaryMask(a), BinaryMask(b)

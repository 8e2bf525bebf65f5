"""Identification-branch losses with analytic gradients.

All functions take plain NumPy vectors. Triplet distances are squared L2;
classification is a linear softmax over ``num_ids + 1`` classes where class
0 is background.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyBatch, LabelOutOfRange, NonFinite

EMBEDDING_DIM = 256


@dataclass(frozen=True)
class TripletConfig:
    margin_alpha: float = 0.3
    normalize: bool = False

    def __post_init__(self):
        if not self.margin_alpha >= 0:
            raise ValueError(f"margin must be >= 0, got {self.margin_alpha}")


def _vec(x, name) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionMismatch(f"{name} must be a vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise NonFinite(f"{name} has non-finite components")
    return v


def _normalize(v):
    n = np.linalg.norm(v)
    if n == 0:
        raise NonFinite("cannot normalize a zero embedding")
    return v / n, n


def _normalize_backward(u, n, g):
    # d(v/|v|)/dv applied to g
    return (g - u * (u @ g)) / n


def embedding_distance(a, b) -> float:
    a, b = _vec(a, "a"), _vec(b, "b")
    if a.shape != b.shape:
        raise DimensionMismatch(f"dimensions differ: {a.shape} vs {b.shape}")
    d = a - b
    return float(d @ d)


def triplet_loss(anchor, positive, negative, cfg: TripletConfig = TripletConfig()):
    """``max(|a-p|^2 - |a-n|^2 + alpha, 0)`` and its gradients ``(ga, gp, gn)``."""
    a, p, n = _vec(anchor, "anchor"), _vec(positive, "positive"), _vec(negative, "negative")
    if not (a.shape == p.shape == n.shape):
        raise DimensionMismatch(f"dimensions differ: {a.shape}, {p.shape}, {n.shape}")
    if cfg.normalize:
        (a, na), (p, np_), (n, nn) = _normalize(a), _normalize(p), _normalize(n)
    dp = a - p
    dn = a - n
    value = dp @ dp - dn @ dn + cfg.margin_alpha
    if value <= 0:
        z = np.zeros_like(a)
        return 0.0, (z, z.copy(), z.copy())
    ga = 2 * (dp - dn)
    gp = -2 * dp
    gn = 2 * dn
    if cfg.normalize:
        ga = _normalize_backward(a, na, ga)
        gp = _normalize_backward(p, np_, gp)
        gn = _normalize_backward(n, nn, gn)
    return float(value), (ga, gp, gn)


def classification_loss(embedding, classifier_weights, label: int):
    """Softmax cross-entropy of ``W @ e`` against ``label``.

    Returns ``(loss, grad_embedding, grad_weights)``.
    """
    e = _vec(embedding, "embedding")
    w = np.asarray(classifier_weights, dtype=np.float64)
    if w.ndim != 2 or w.shape[1] != e.shape[0]:
        raise DimensionMismatch(f"weights {w.shape} incompatible with embedding {e.shape}")
    if not 0 <= label < w.shape[0]:
        raise LabelOutOfRange(f"label {label} outside 0..{w.shape[0] - 1}")
    scores = w @ e
    shifted = scores - scores.max()
    log_z = np.log(np.exp(shifted).sum())
    loss = log_z - shifted[label]
    probs = np.exp(shifted - log_z)
    probs[label] -= 1.0
    return float(loss), w.T @ probs, np.outer(probs, e)


def mine_triplets(labels: Sequence[int]) -> list[tuple[int, int, int]]:
    """Every valid (anchor, positive, negative) index triple over ``labels``.

    Background (label <= 0) entries are skipped.
    """
    idx = [i for i, l in enumerate(labels) if l > 0]
    out = []
    for a in idx:
        for p in idx:
            if p == a or labels[p] != labels[a]:
                continue
            out.extend((a, p, n) for n in idx if labels[n] != labels[a])
    return out


def id_loss(triplets, classifications, classifier_weights, cfg: TripletConfig = TripletConfig()) -> float:
    """Mean triplet loss plus mean classification loss.

    ``triplets`` holds ``(anchor, positive, negative)`` vectors,
    ``classifications`` holds ``(embedding, label)`` pairs.
    """
    if len(triplets) == 0 or len(classifications) == 0:
        raise EmptyBatch("both batches must be non-empty")
    # fsum is exactly rounded, so the result does not depend on batch order
    tri = math.fsum(triplet_loss(a, p, n, cfg)[0] for a, p, n in triplets) / len(triplets)
    cls = math.fsum(classification_loss(e, classifier_weights, l)[0] for e, l in classifications) / len(classifications)
    return tri + cls

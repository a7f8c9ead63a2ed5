"""Slow, literal reference implementations.

Everything here is written loop-by-loop from the defining formulas, using
only ``math`` on Python floats, and shares no code with the fast paths it is
used to check.
"""

from __future__ import annotations

import math


def _rows(x):
    return [[float(v) for v in row] for row in x]


def similarity(kind: str, a, b, w=10.0, bias=-5.0, eps=1e-6) -> float:
    """``S(a, b)`` itself (not its log)."""
    if kind == "cosine":
        dot = sum(p * q for p, q in zip(a, b))
        na = math.sqrt(sum(p * p for p in a))
        nb = math.sqrt(sum(q * q for q in b))
        return math.exp(w * dot / (na * nb) + bias)
    dist = math.sqrt(sum((p - q) ** 2 for p, q in zip(a, b)))
    return math.exp(1.0 / (dist + eps))


def loss_av(kind, xa, xv, **kw) -> float:
    xa, xv = _rows(xa), _rows(xv)
    n = len(xa)
    total = 0.0
    for j in range(n):
        num = similarity(kind, xa[j], xv[j], **kw)
        den = sum(similarity(kind, xa[j], xv[k], **kw) for k in range(n))
        total += math.log(num / den)
    return -total / n


def loss_va(kind, xa, xv, **kw) -> float:
    xa, xv = _rows(xa), _rows(xv)
    n = len(xa)
    total = 0.0
    for j in range(n):
        num = similarity(kind, xv[j], xa[j], **kw)
        den = sum(similarity(kind, xv[j], xa[k], **kw) for k in range(n))
        total += math.log(num / den)
    return -total / n


def loss_aav(kind, xa, xv, **kw) -> float:
    xa, xv = _rows(xa), _rows(xv)
    n = len(xa)
    total = 0.0
    for j in range(n):
        pos = similarity(kind, xa[j], xv[j], **kw)
        neg = sum(similarity(kind, xa[k], xa[j], **kw) for k in range(n) if k != j)
        total += math.log(pos / (pos + neg))
    return -total / n


def loss_vva(kind, xa, xv, **kw) -> float:
    xa, xv = _rows(xa), _rows(xv)
    n = len(xa)
    total = 0.0
    for j in range(n):
        pos = similarity(kind, xv[j], xa[j], **kw)
        neg = sum(similarity(kind, xv[k], xv[j], **kw) for k in range(n) if k != j)
        total += math.log(pos / (pos + neg))
    return -total / n


def loss_mwm(kind, xa, xv, **kw) -> float:
    return loss_av(kind, xa, xv, **kw) + loss_va(kind, xa, xv, **kw)


def loss_cddl(kind, xa, xv, **kw) -> float:
    return (loss_av(kind, xa, xv, **kw) + loss_va(kind, xa, xv, **kw)
            + loss_aav(kind, xa, xv, **kw) + loss_vva(kind, xa, xv, **kw))


def contrastive(xa, xv, same, margin) -> float:
    total = 0.0
    for a, v, s in zip(_rows(xa), _rows(xv), same):
        d = math.sqrt(sum((p - q) ** 2 for p, q in zip(a, v)))
        total += d * d if s else max(0.0, margin - d) ** 2
    return total / len(same)


def binary(xa, xv, same, slope, bias) -> float:
    total = 0.0
    for a, v, s in zip(_rows(xa), _rows(xv), same):
        d = math.sqrt(sum((p - q) ** 2 for p, q in zip(a, v)))
        prob_same = 1.0 / (1.0 + math.exp(-(bias - slope * d)))
        total += -math.log(prob_same if s else 1.0 - prob_same)
    return total / len(same)


def eer_sweep(scores, labels) -> float:
    """EER by brute force: every threshold counted from scratch, O(n^2).

    Accept when ``score >= t``; candidate thresholds are the distinct scores
    and ``+inf``. Linear interpolation between the last point with
    ``FRR < FAR`` and the first with ``FRR >= FAR``.
    """
    scores = [float(s) for s in scores]
    labels = [bool(l) for l in labels]
    n_pos = sum(labels)
    n_neg = len(labels) - n_pos
    points = []
    for t in sorted(set(scores)) + [math.inf]:
        false_reject = sum(1 for s, l in zip(scores, labels) if l and s < t)
        false_accept = sum(1 for s, l in zip(scores, labels) if not l and s >= t)
        points.append((false_accept / n_neg, false_reject / n_pos))
    prev = None
    for far, frr in points:
        if frr >= far:
            if prev is None or frr == far:
                return far
            pfar, pfrr = prev
            d0, d1 = pfrr - pfar, frr - far
            alpha = -d0 / (d1 - d0)
            return pfar + alpha * (far - pfar)
        prev = (far, frr)
    raise AssertionError("unreachable: the reject-all point has FRR = 1 >= FAR = 0")


def recall_at_k(queries, gallery, k) -> float:
    """Ranks each query's gallery by sorting ``(-cosine, index)`` tuples."""
    q, g = _rows(queries), _rows(gallery)

    def cos(a, b):
        dot = sum(p * r for p, r in zip(a, b))
        return dot / (math.sqrt(sum(p * p for p in a)) * math.sqrt(sum(r * r for r in b)))

    hits = 0
    for j, query in enumerate(q):
        ranking = sorted(range(len(g)), key=lambda i: (-cos(query, g[i]), i))
        hits += j in ranking[:k]
    return hits / len(q)

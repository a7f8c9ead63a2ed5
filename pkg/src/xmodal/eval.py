"""Verification, retrieval and linear-probe evaluation."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .numerics import Rng, as_matrix, pairwise_cosine, softmax


@dataclass
class TrialSet:
    scores: np.ndarray  # higher = more likely same
    labels: np.ndarray  # bool, True = same
    pairs: np.ndarray | None = None  # optional (num_trials x 2) row indices

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64).ravel()
        lab = np.asarray(self.labels)
        if lab.dtype.kind in "US":
            lab = lab == "same"
        self.labels = lab.astype(bool).ravel()
        if self.scores.shape != self.labels.shape:
            raise ValueError("scores and labels differ in length")

    @property
    def num_same(self) -> int:
        return int(self.labels.sum())

    @property
    def num_different(self) -> int:
        return int((~self.labels).sum())

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["score", "label"])
            for s, l in zip(self.scores, self.labels):
                w.writerow([repr(float(s)), "same" if l else "different"])

    @classmethod
    def from_csv(cls, path) -> "TrialSet":
        scores, labels = [], []
        with open(path, newline="") as f:
            reader = csv.DictReader(f)
            if reader.fieldnames is None or set(reader.fieldnames) != {"score", "label"}:
                raise ValueError(f"{path}: expected header 'score,label'")
            for row in reader:
                lab = row["label"].strip().lower()
                if lab not in ("same", "different", "1", "0"):
                    raise ValueError(f"{path}: bad label {row['label']!r}")
                scores.append(float(row["score"]))
                labels.append(lab in ("same", "1"))
        return cls(np.array(scores), np.array(labels, dtype=bool))


def eer(trials: TrialSet) -> tuple[float, float]:
    """Equal error rate and its threshold.

    A trial is accepted when ``score >= threshold``. Operating points are
    taken at every distinct score plus ``+inf`` (reject all); the EER is read
    off where ``FRR - FAR`` changes sign, interpolating linearly between the
    two bracketing points.
    """
    s, y = trials.scores, trials.labels
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("EER needs both same and different trials")
    order = np.argsort(s, kind="stable")
    s_sorted, y_sorted = s[order], y[order]
    thresholds, first = np.unique(s_sorted, return_index=True)
    # trials strictly below each threshold are rejected
    pos_below = np.concatenate([[0], np.cumsum(y_sorted)])[first]
    neg_below = np.concatenate([[0], np.cumsum(~y_sorted)])[first]
    frr = np.append(pos_below / n_pos, 1.0)
    far = np.append(1.0 - neg_below / n_neg, 0.0)
    thresholds = np.append(thresholds, np.inf)
    return _crossing(far, frr, thresholds)


def _crossing(far, frr, thresholds) -> tuple[float, float]:
    diff = frr - far
    i = int(np.argmax(diff >= 0))  # diff[-1] == 1, so a crossing exists
    if diff[i] == 0 or i == 0:
        return float(far[i]), float(thresholds[i])
    alpha = -diff[i - 1] / (diff[i] - diff[i - 1])
    rate = far[i - 1] + alpha * (far[i] - far[i - 1])
    t0, t1 = thresholds[i - 1], thresholds[i]
    thr = t0 if not np.isfinite(t1) else t0 + alpha * (t1 - t0)
    return float(rate), float(thr)


def score_pairs(emb_x, emb_y, pairs) -> np.ndarray:
    """Cosine similarity of ``emb_x[pairs[:, 0]]`` with ``emb_y[pairs[:, 1]]``."""
    x = as_matrix(emb_x)
    y = as_matrix(emb_y)
    xn = x / np.linalg.norm(x, axis=1, keepdims=True)
    yn = y / np.linalg.norm(y, axis=1, keepdims=True)
    return np.einsum("ij,ij->i", xn[pairs[:, 0]], yn[pairs[:, 1]])


def _rows_by_identity(ids: np.ndarray, idents: np.ndarray):
    """Padded table of row indices per identity plus the per-identity counts."""
    rows = [np.flatnonzero(ids == i) for i in idents]
    counts = np.array([len(r) for r in rows], dtype=np.int64)
    table = np.zeros((len(idents), max(counts.max(initial=0), 1)), dtype=np.int64)
    for j, r in enumerate(rows):
        table[j, : len(r)] = r
    return table, counts


def _sample_pairs(ids_x, ids_y, num_pairs: int, positive_fraction: float, rng: Rng,
                  exclude_self: bool) -> tuple[np.ndarray, np.ndarray]:
    """Row-index pairs: the positives first, then the negatives.

    ``exclude_self`` means both sides index the same rows and a row may not
    pair with itself.
    """
    if not 0 < positive_fraction < 1:
        raise ValueError("positive_fraction must lie in (0, 1)")
    ids_x, ids_y = np.asarray(ids_x), np.asarray(ids_y)
    if len(np.union1d(ids_x, ids_y)) < 2:
        raise ValueError("trials need at least two identities")
    n_pos = int(round(num_pairs * positive_fraction))
    n_neg = num_pairs - n_pos

    shared = np.intersect1d(ids_x, ids_y)
    tx, cx = _rows_by_identity(ids_x, shared)
    ty, cy = _rows_by_identity(ids_y, shared)
    if exclude_self:
        keep = cx >= 2
        shared, tx, cx, ty, cy = shared[keep], tx[keep], cx[keep], ty[keep], cy[keep]
    if n_pos and len(shared) == 0:
        raise ValueError("no identity can form a positive pair")

    # positives: uniform identity, then a uniform row on each side
    ident = rng.integers(0, max(len(shared), 1), size=n_pos)
    px = np.floor(rng.uniform(size=n_pos) * cx[ident]).astype(np.int64)
    if exclude_self:
        py = np.floor(rng.uniform(size=n_pos) * (cy[ident] - 1)).astype(np.int64)
        py += py >= px
    else:
        py = np.floor(rng.uniform(size=n_pos) * cy[ident]).astype(np.int64)
    pos = np.stack([tx[ident, px], ty[ident, py]], axis=1)

    # negatives: uniform rows on each side, rejecting same-identity draws
    chunks, have = [], 0
    while have < n_neg:
        m = 2 * (n_neg - have) + 16
        p = rng.integers(0, len(ids_x), size=m)
        q = rng.integers(0, len(ids_y), size=m)
        ok = ids_x[p] != ids_y[q]
        chunks.append(np.stack([p[ok], q[ok]], axis=1))
        have += int(ok.sum())
    neg = np.concatenate(chunks)[:n_neg] if n_neg else np.empty((0, 2), np.int64)

    pairs = np.concatenate([pos, neg]).astype(np.int64)
    labels = np.concatenate([np.ones(n_pos, bool), np.zeros(n_neg, bool)])
    return pairs, labels


def cross_modal_trials(emb_a, emb_b, num_pairs: int, positive_fraction: float, rng: Rng,
                       ids_a=None, ids_b=None) -> TrialSet:
    """Random A-B pairs scored by cosine similarity.

    Row identities default to the row index (row ``i`` of both sides is
    identity ``i``). Exactly ``round(num_pairs * positive_fraction)`` trials
    are same-identity; pairs are drawn with replacement.
    """
    emb_a, emb_b = as_matrix(emb_a), as_matrix(emb_b)
    ids_a = np.arange(len(emb_a)) if ids_a is None else np.asarray(ids_a)
    ids_b = np.arange(len(emb_b)) if ids_b is None else np.asarray(ids_b)
    pairs, labels = _sample_pairs(ids_a, ids_b, num_pairs, positive_fraction, rng, exclude_self=False)
    return TrialSet(score_pairs(emb_a, emb_b, pairs), labels, pairs)


def verification_trials(emb, identities, num_pairs: int, rng: Rng,
                        positive_fraction: float = 0.5) -> TrialSet:
    """Within-modality pairs of distinct rows scored by cosine similarity."""
    emb = as_matrix(emb)
    ids = np.asarray(identities)
    if len(ids) != len(emb):
        raise ValueError("one identity per embedding row")
    pairs, labels = _sample_pairs(ids, ids, num_pairs, positive_fraction, rng, exclude_self=True)
    return TrialSet(score_pairs(emb, emb, pairs), labels, pairs)


def recall_at_k(queries, gallery, k: int) -> float:
    """Fraction of queries whose match (same row index) is in the top ``k``.

    Ranked by cosine similarity; ties go to the lower gallery index.
    """
    sim = pairwise_cosine(queries, gallery)
    n, m = sim.shape
    if n > m:
        raise ValueError("every query needs its gallery row")
    if not 1 <= k <= m:
        raise ValueError(f"k must lie in [1, {m}]")
    true = sim[np.arange(n), np.arange(n)][:, None]
    cols = np.arange(m)[None, :]
    rank = np.sum(sim > true, axis=1) + np.sum((sim == true) & (cols < np.arange(n)[:, None]), axis=1)
    return float(np.mean(rank < k))


@dataclass
class ProbeResult:
    top1: float
    topk: float
    k: int
    num_classes: int


def linear_probe(train_feats, train_labels, test_feats, test_labels, classes: int,
                 epochs: int = 300, lr: float = 0.5, k: int = 5, l2: float = 1e-4) -> ProbeResult:
    """Multinomial logistic regression on frozen features.

    Full-batch gradient descent from zero weights on standardized features
    (train-set statistics), so the result is deterministic.
    """
    Xtr = as_matrix(train_feats)
    Xte = as_matrix(test_feats)
    ytr = np.asarray(train_labels, dtype=np.int64)
    yte = np.asarray(test_labels, dtype=np.int64)
    if classes < 2:
        raise ValueError("probe needs at least two classes")
    missing = sorted(set(range(classes)) - set(ytr.tolist()))
    if missing:
        raise ValueError(f"classes absent from training set: {missing}")
    mu = Xtr.mean(axis=0)
    sd = Xtr.std(axis=0)
    sd[sd == 0] = 1.0
    Xtr = (Xtr - mu) / sd
    Xte = (Xte - mu) / sd

    n, d = Xtr.shape
    W = np.zeros((d, classes))
    b = np.zeros(classes)
    onehot = np.eye(classes)[ytr]
    for _ in range(epochs):
        p = softmax(Xtr @ W + b, axis=1)
        g = (p - onehot) / n
        W -= lr * (Xtr.T @ g + l2 * W)
        b -= lr * g.sum(axis=0)

    logits = Xte @ W + b
    k = min(k, classes)
    # stable argsort keeps the lower class index ahead on ties
    order = np.argsort(-logits, axis=1, kind="stable")
    top1 = float(np.mean(order[:, 0] == yte))
    topk = float(np.mean(np.any(order[:, :k] == yte[:, None], axis=1)))
    return ProbeResult(top1, topk, k, classes)


def write_metrics_json(path, metrics: dict) -> None:
    import json

    Path(path).write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")

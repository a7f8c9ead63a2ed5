"""Cross-modal training objectives with exact gradients.

Softmax-family objectives (row ``j`` of ``xa`` corresponds to row ``j`` of
``xv``; every other row is a negative):

* ``AV``  - each audio row picks its video row among all video rows
* ``VA``  - the same with the modalities swapped
* ``AAV`` - each audio row's cross-modal positive competes against the other
  *audio* rows
* ``VVA`` - the same with the modalities swapped

``mwm = AV + VA`` and ``cddl = AV + VA + AAV + VVA``. All are evaluated in
log space.

Pairwise baselines (contrastive hinge and logistic-on-distance) act on
labelled row pairs.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .numerics import as_matrix, log_sum_exp, softmax
from .similarity import KernelKind, SimilarityKernel, score, score_grad


class LossKind(str, enum.Enum):
    PAIRWISE_CONTRASTIVE = "contrastive"
    PAIRWISE_BINARY = "binary"
    MWM = "mwm"
    CDDL = "cddl"


@dataclass(frozen=True)
class LossSpec:
    kind: LossKind = LossKind.CDDL
    kernel: KernelKind = KernelKind.SCALED_COSINE
    margin: float = 1.0
    eps: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "kind", LossKind(self.kind))
        object.__setattr__(self, "kernel", KernelKind(self.kernel))
        if self.margin < 0:
            raise ValueError("margin must be non-negative")

    @classmethod
    def from_name(cls, name: str) -> "LossSpec":
        """Parse preset names such as ``mwm-angular`` or ``cddl-euclidean``."""
        try:
            return PRESETS[name]
        except KeyError:
            raise ValueError(f"unknown loss preset {name!r}; known: {sorted(PRESETS)}") from None

    @property
    def name(self) -> str:
        if self.kind in (LossKind.MWM, LossKind.CDDL):
            suffix = "angular" if self.kernel is KernelKind.SCALED_COSINE else "euclidean"
            return f"{self.kind.value}-{suffix}"
        return self.kind.value

    @property
    def has_scalars(self) -> bool:
        """Whether the objective owns two trainable scalars ``(w, b)``."""
        if self.kind is LossKind.PAIRWISE_BINARY:
            return True
        if self.kind is LossKind.PAIRWISE_CONTRASTIVE:
            return False
        return self.kernel is KernelKind.SCALED_COSINE

    def kernel_for(self, w: float, b: float) -> SimilarityKernel:
        if self.kernel is KernelKind.SCALED_COSINE:
            return SimilarityKernel.cosine(w, b)
        return SimilarityKernel.euclidean(self.eps)


PRESETS = {
    "mwm-angular": LossSpec(LossKind.MWM, KernelKind.SCALED_COSINE),
    "mwm-euclidean": LossSpec(LossKind.MWM, KernelKind.INVERSE_EUCLIDEAN),
    "cddl-angular": LossSpec(LossKind.CDDL, KernelKind.SCALED_COSINE),
    "cddl-euclidean": LossSpec(LossKind.CDDL, KernelKind.INVERSE_EUCLIDEAN),
    "contrastive": LossSpec(LossKind.PAIRWISE_CONTRASTIVE),
    "binary": LossSpec(LossKind.PAIRWISE_BINARY),
}


@dataclass
class LossResult:
    """Loss value with gradients.

    ``grad_w``/``grad_b`` refer to the objective's two trainable scalars:
    the kernel scale and offset for softmax losses, the logistic slope and
    bias for the binary baseline.
    """

    value: float
    grad_a: np.ndarray
    grad_v: np.ndarray
    grad_w: float = 0.0
    grad_b: float = 0.0
    components: dict[str, float] = field(default_factory=dict)

    def __add__(self, other: "LossResult") -> "LossResult":
        comps = dict(self.components)
        for k, v in other.components.items():
            comps[k] = comps.get(k, 0.0) + v
        return LossResult(
            self.value + other.value,
            self.grad_a + other.grad_a,
            self.grad_v + other.grad_v,
            self.grad_w + other.grad_w,
            self.grad_b + other.grad_b,
            comps,
        )


def _pair_inputs(xa, xv):
    xa = as_matrix(xa, "xa")
    xv = as_matrix(xv, "xv")
    if xa.shape[0] == 0:
        raise ValueError("empty batch")
    if xa.shape != xv.shape:
        raise ValueError(f"batch shape mismatch: {xa.shape} vs {xv.shape}")
    return xa, xv


def _diagonal_nll(logits: np.ndarray):
    """Mean of ``-(logits[j, j] - lse_k logits[j, k])`` and its logit gradient."""
    n = logits.shape[0]
    value = float(np.mean(log_sum_exp(logits, axis=1) - np.diag(logits)))
    upstream = (softmax(logits, axis=1) - np.eye(n)) / n
    # each row's lse includes its own diagonal term, so the exact value is
    # >= 0; clip only the last-ulp rounding below zero
    return max(value, 0.0), upstream


def softmax_family(kernel: SimilarityKernel, xa, xv, parts=("AV", "VA", "AAV", "VVA"),
                   grad: bool = True) -> LossResult:
    """Sum of the requested softmax components, sharing score matrices.

    Each component is a mean negative log-softmax whose target logit is the
    cross-modal positive ``log S(xa_j, xv_j)``. AV/VA take negatives from the
    other modality; AAV/VVA take them from the same modality (``k != j``).
    With ``grad=False`` the gradient fields are left as zeros.
    """
    xa, xv = _pair_inputs(xa, xv)
    n = xa.shape[0]
    unknown = set(parts) - {"AV", "VA", "AAV", "VVA"}
    if unknown:
        raise ValueError(f"unknown loss components {sorted(unknown)}")

    cross = score(kernel, xa, xv)  # [j, k] = log S(xa_j, xv_k)
    up_cross = np.zeros_like(cross)
    comps: dict[str, float] = {}
    if "AV" in parts:
        comps["AV"], up = _diagonal_nll(cross)
        up_cross += up
    if "VA" in parts:
        comps["VA"], up = _diagonal_nll(cross.T)
        up_cross += up.T

    off = ~np.eye(n, dtype=bool)
    within_up = {}
    for name, x in (("AAV", xa), ("VVA", xv)):
        if name not in parts:
            continue
        if n == 1:
            comps[name] = 0.0
            continue
        within = score(kernel, x, x)  # [k, j] = log S(x_k, x_j)
        logits = np.where(off, within.T, cross)
        comps[name], up = _diagonal_nll(logits)
        up_cross += np.diag(np.diag(up))
        within_up[name] = (x, np.where(off, up, 0.0).T)

    value = float(sum(comps.values()))
    if not grad:
        return LossResult(value, np.zeros_like(xa), np.zeros_like(xv), 0.0, 0.0, comps)
    ga, gv, gw, gb = score_grad(kernel, xa, xv, up_cross)
    for name, (x, up) in within_up.items():
        g1, g2, dw, db = score_grad(kernel, x, x, up)
        if name == "AAV":
            ga = ga + g1 + g2
        else:
            gv = gv + g1 + g2
        gw += dw
        gb += db
    return LossResult(value, ga, gv, gw, gb, comps)


def loss_av(kernel: SimilarityKernel, xa, xv) -> LossResult:
    return softmax_family(kernel, xa, xv, ("AV",))


def loss_va(kernel: SimilarityKernel, xa, xv) -> LossResult:
    return softmax_family(kernel, xa, xv, ("VA",))


def loss_aav(kernel: SimilarityKernel, xa, xv) -> LossResult:
    """Cross-modal positive against the other *audio* rows as negatives.

    Row ``j`` of the logit matrix holds ``log S(xa_j, xv_j)`` on the diagonal
    and ``log S(xa_k, xa_j)`` for ``k != j`` elsewhere. Zero for ``N = 1``.
    """
    return softmax_family(kernel, xa, xv, ("AAV",))


def loss_vva(kernel: SimilarityKernel, xa, xv) -> LossResult:
    return softmax_family(kernel, xa, xv, ("VVA",))


def loss_mwm(kernel: SimilarityKernel, xa, xv) -> LossResult:
    return softmax_family(kernel, xa, xv, ("AV", "VA"))


def loss_cddl(kernel: SimilarityKernel, xa, xv) -> LossResult:
    return softmax_family(kernel, xa, xv, ("AV", "VA", "AAV", "VVA"))


def _pair_labels(labels, n: int) -> np.ndarray:
    lab = np.asarray(labels)
    if lab.dtype.kind in "US":
        lab = lab == "same"
    lab = lab.astype(bool)
    if lab.shape != (n,):
        raise ValueError(f"need one label per pair: {lab.shape} vs ({n},)")
    return lab


def loss_pairwise_contrastive(xa, xv, labels, margin: float = 1.0) -> LossResult:
    """Mean of ``d^2`` over same pairs and ``max(0, margin - d)^2`` over different."""
    xa, xv = _pair_inputs(xa, xv)
    if margin <= 0:
        raise ValueError("margin must be positive")
    same = _pair_labels(labels, xa.shape[0])
    n = xa.shape[0]
    diff = xa - xv
    d = np.sqrt(np.sum(diff * diff, axis=1))
    hinge = np.maximum(0.0, margin - d)
    per_pair = np.where(same, d**2, hinge**2)
    # d(d^2)/dxa = 2 diff;  d(hinge^2)/dxa = -2 hinge diff / d
    safe = np.where(d > 0, d, 1.0)
    coef = np.where(same, 2.0, np.where(d > 0, -2.0 * hinge / safe, 0.0)) / n
    ga = coef[:, None] * diff
    value = float(np.mean(per_pair))
    return LossResult(value, ga, -ga, 0.0, 0.0, {"pair": value})


def loss_pairwise_binary(xa, xv, labels, slope: float = 1.0, bias: float = 0.0) -> LossResult:
    """Logistic loss on the logit ``bias - slope * d`` for the "same" class.

    ``grad_w``/``grad_b`` of the result are the slope and bias gradients.
    """
    xa, xv = _pair_inputs(xa, xv)
    same = _pair_labels(labels, xa.shape[0])
    n = xa.shape[0]
    diff = xa - xv
    d = np.sqrt(np.sum(diff * diff, axis=1))
    z = bias - slope * d
    y = np.where(same, 1.0, -1.0)
    # softplus(-y z), stable for large |z|
    m = -y * z
    per_pair = np.logaddexp(0.0, m)
    value = float(np.mean(per_pair))
    # d softplus(m)/dz = -y * sigmoid(m)
    dz = -y * np.exp(m - np.logaddexp(0.0, m)) / n
    dd = -slope * dz
    safe = np.where(d > 0, d, 1.0)
    ga = np.where(d > 0, dd / safe, 0.0)[:, None] * diff
    return LossResult(value, ga, -ga, float(np.sum(-d * dz)), float(np.sum(dz)), {"pair": value})


def in_batch_pairs(n: int):
    """Index pairs for pairwise baselines on a matched batch.

    Every diagonal pair is a positive; each row is also paired with the next
    row's partner (cyclic shift) as a negative. Returns ``(rows_a, rows_v,
    same)``.
    """
    idx = np.arange(n)
    if n == 1:
        return idx, idx, np.ones(1, dtype=bool)
    rows_a = np.concatenate([idx, idx])
    rows_v = np.concatenate([idx, np.roll(idx, -1)])
    same = np.concatenate([np.ones(n, bool), np.zeros(n, bool)])
    return rows_a, rows_v, same


def compute_loss(spec: LossSpec, xa, xv, w: float = 10.0, b: float = -5.0,
                 grad: bool = True) -> LossResult:
    """Evaluate ``spec`` on a matched batch.

    For the pairwise baselines the batch is expanded into positive and
    negative pairs with :func:`in_batch_pairs`, and gradients are scattered
    back onto the batch rows. ``(w, b)`` are the objective's scalars (see
    :class:`LossResult`); ignored where the objective has none.
    """
    xa, xv = _pair_inputs(xa, xv)
    if spec.kind is LossKind.MWM:
        return softmax_family(spec.kernel_for(w, b), xa, xv, ("AV", "VA"), grad=grad)
    if spec.kind is LossKind.CDDL:
        return softmax_family(spec.kernel_for(w, b), xa, xv, grad=grad)

    ra, rv, same = in_batch_pairs(xa.shape[0])
    if spec.kind is LossKind.PAIRWISE_CONTRASTIVE:
        res = loss_pairwise_contrastive(xa[ra], xv[rv], same, spec.margin)
    else:
        res = loss_pairwise_binary(xa[ra], xv[rv], same, w, b)
    ga = np.zeros_like(xa)
    gv = np.zeros_like(xv)
    np.add.at(ga, ra, res.grad_a)
    np.add.at(gv, rv, res.grad_v)
    return LossResult(res.value, ga, gv, res.grad_w, res.grad_b, res.components)


def default_scalars(spec: LossSpec, w: float = 10.0, b: float = -5.0) -> tuple[float, float]:
    """Initial trainable scalars for ``spec``."""
    if spec.kind is LossKind.PAIRWISE_BINARY:
        return 1.0, 0.0
    if spec.has_scalars:
        return w, b
    return 0.0, 0.0


# --------------------------------------------------------------------------
# gradient checking
# --------------------------------------------------------------------------

FD_STEP = 1e-6
# denominators below this are treated as this; keeps groups whose exact
# gradient is zero (e.g. the offset b under a softmax) from dividing
# finite-difference rounding noise by ~0
REL_ERR_FLOOR = 1e-3


def relative_error(analytic, numeric, floor: float = REL_ERR_FLOOR) -> float:
    a = np.ravel(np.asarray(analytic, dtype=np.float64))
    n = np.ravel(np.asarray(numeric, dtype=np.float64))
    denom = max(np.linalg.norm(a), np.linalg.norm(n), floor)
    return float(np.linalg.norm(a - n) / denom)


def numeric_grad(f, x: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Central differences of the scalar function ``f`` w.r.t. array ``x`` (perturbed in place)."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * h)
    return g


def random_loss_problem(spec: LossSpec, n: int, d: int, rng):
    """Random batch, labels and scalars for checking ``spec``."""
    xa = rng.normal(size=(n, d))
    xv = rng.normal(size=(n, d))
    if spec.kind is LossKind.PAIRWISE_BINARY:
        w, b = rng.uniform(0.5, 2.0), rng.uniform(-1.0, 1.0)
    else:
        w, b = rng.uniform(1.0, 8.0), rng.uniform(-3.0, 3.0)
    labels = rng.integers(0, 2, size=n).astype(bool)
    return xa, xv, float(w), float(b), labels


def _eval_spec(spec: LossSpec, xa, xv, w, b, labels, grad=True) -> LossResult:
    if spec.kind is LossKind.PAIRWISE_CONTRASTIVE:
        return loss_pairwise_contrastive(xa, xv, labels, spec.margin)
    if spec.kind is LossKind.PAIRWISE_BINARY:
        return loss_pairwise_binary(xa, xv, labels, w, b)
    return compute_loss(spec, xa, xv, w, b, grad=grad)


def _batched_softmax_values(spec: LossSpec, XA, XV, W, B) -> np.ndarray:
    """Loss values for a stack of problems ``XA[p], XV[p], W[p], B[p]``.

    Value-only twin of :func:`softmax_family` used to evaluate every
    finite-difference perturbation in one vectorized pass.
    """
    n = XA.shape[1]
    eye = np.eye(n, dtype=bool)

    def sim(X, Y):
        if spec.kernel is KernelKind.SCALED_COSINE:
            Xn = X / np.linalg.norm(X, axis=-1, keepdims=True)
            Yn = Y / np.linalg.norm(Y, axis=-1, keepdims=True)
            return W[:, None, None] * np.einsum("pjd,pkd->pjk", Xn, Yn) + B[:, None, None]
        diff = X[:, :, None, :] - Y[:, None, :, :]
        return 1.0 / (np.sqrt(np.sum(diff * diff, axis=-1)) + spec.eps)

    def nll(logits):
        m = logits.max(axis=-1, keepdims=True)
        lse = m[..., 0] + np.log(np.exp(logits - m).sum(axis=-1))
        return np.mean(lse - np.diagonal(logits, axis1=1, axis2=2), axis=-1)

    cross = sim(XA, XV)
    total = nll(cross) + nll(np.swapaxes(cross, 1, 2))
    if spec.kind is LossKind.CDDL and n > 1:
        for X in (XA, XV):
            within = np.swapaxes(sim(X, X), 1, 2)
            total = total + nll(np.where(eye, cross, within))
    return total


def _batched_pairwise_values(spec: LossSpec, XA, XV, W, B, same) -> np.ndarray:
    """Value-only pairwise losses for stacked labelled pairs ``XA[p], XV[p]``."""
    diff = XA - XV
    d = np.sqrt(np.sum(diff * diff, axis=-1))
    if spec.kind is LossKind.PAIRWISE_CONTRASTIVE:
        per = np.where(same, d**2, np.maximum(0.0, spec.margin - d) ** 2)
    else:
        y = np.where(same, 1.0, -1.0)
        per = np.logaddexp(0.0, -y * (B[:, None] - W[:, None] * d))
    return per.mean(axis=-1)


def batched_values(spec: LossSpec, XA, XV, W, B) -> np.ndarray:
    """:func:`compute_loss` values for a stack of matched batches."""
    if spec.kind in (LossKind.MWM, LossKind.CDDL):
        return _batched_softmax_values(spec, XA, XV, W, B)
    ra, rv, same = in_batch_pairs(XA.shape[1])
    return _batched_pairwise_values(spec, XA[:, ra], XV[:, rv], W, B, same)


def _perturbation_stack(x: np.ndarray, h: float) -> np.ndarray:
    """``2 * x.size`` copies of ``x``: each coordinate moved by ``+h`` then ``-h``."""
    k = x.size
    stack = np.repeat(x.reshape(1, -1), 2 * k, axis=0)
    idx = np.arange(k)
    stack[2 * idx, idx] += h
    stack[2 * idx + 1, idx] -= h
    return stack


def loss_grad_check(spec: LossSpec, n: int, d: int, seed: int) -> float:
    """Worst relative error between analytic and central-difference gradients.

    Covers both embedding batches and, where the objective has them, the two
    trainable scalars. Pairwise baselines are checked on random labelled
    pairs rather than in-batch pairs.
    """
    from .numerics import Rng

    if n < 2 or d < 2:
        raise ValueError("need n >= 2 and d >= 2")
    rng = Rng(seed)
    xa, xv, w, b, labels = random_loss_problem(spec, n, d, rng)
    if spec.kind is LossKind.PAIRWISE_CONTRASTIVE:
        # put the hinge boundary inside the distance range
        spec = LossSpec(spec.kind, spec.kernel, margin=float(np.sqrt(2.0 * d)))
    res = _eval_spec(spec, xa, xv, w, b, labels)

    # flat parameter vector [xa, xv, w, b]
    theta = np.concatenate([xa.ravel(), xv.ravel(), [w, b]])
    h = FD_STEP
    stack = _perturbation_stack(theta, h)
    nd = n * d
    XA = stack[:, :nd].reshape(-1, n, d)
    XV = stack[:, nd:2 * nd].reshape(-1, n, d)
    if spec.kind in (LossKind.MWM, LossKind.CDDL):
        vals = _batched_softmax_values(spec, XA, XV, stack[:, -2], stack[:, -1])
    else:
        vals = _batched_pairwise_values(spec, XA, XV, stack[:, -2], stack[:, -1], labels)
    num = (vals[0::2] - vals[1::2]) / (2 * h)

    errs = [
        relative_error(res.grad_a, num[:nd]),
        relative_error(res.grad_v, num[nd:2 * nd]),
    ]
    if spec.has_scalars:
        errs.append(relative_error(res.grad_w, num[-2]))
        errs.append(relative_error(res.grad_b, num[-1]))
    return max(errs)

"""Similarity kernels and their exact backward pass.

Both kernels return *log*-similarities; losses exponentiate implicitly
through ``log_sum_exp``.

* ``InverseEuclidean``: ``log S = 1 / (||a - b|| + eps)``
* ``ScaledCosine``: ``log S = w * cos(a, b) + b``
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .numerics import _check_cols, as_matrix, row_norms


class KernelKind(str, enum.Enum):
    INVERSE_EUCLIDEAN = "euclidean"
    SCALED_COSINE = "cosine"


@dataclass
class SimilarityKernel:
    kind: KernelKind = KernelKind.SCALED_COSINE
    w: float = 10.0
    b: float = -5.0
    eps: float = 1e-6

    def __post_init__(self):
        self.kind = KernelKind(self.kind)
        if self.kind is KernelKind.INVERSE_EUCLIDEAN and not self.eps > 0:
            raise ValueError("eps must be positive for the inverse-Euclidean kernel")
        if not (np.isfinite(self.w) and np.isfinite(self.b)):
            raise ValueError("kernel scale parameters must be finite")

    @classmethod
    def cosine(cls, w: float = 10.0, b: float = -5.0) -> "SimilarityKernel":
        return cls(KernelKind.SCALED_COSINE, w=w, b=b)

    @classmethod
    def euclidean(cls, eps: float = 1e-6) -> "SimilarityKernel":
        return cls(KernelKind.INVERSE_EUCLIDEAN, w=0.0, b=0.0, eps=eps)

    @property
    def learnable(self) -> bool:
        return self.kind is KernelKind.SCALED_COSINE


def _unit_rows(x: np.ndarray):
    n = row_norms(x)
    return x / n[:, None], n


def score(kernel: SimilarityKernel, a, b) -> np.ndarray:
    """N x M matrix of log-similarities between rows of ``a`` and ``b``."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    _check_cols(a, b)
    if kernel.kind is KernelKind.SCALED_COSINE:
        an, _ = _unit_rows(a)
        bn, _ = _unit_rows(b)
        return kernel.w * (an @ bn.T) + kernel.b
    diff = a[:, None, :] - b[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return 1.0 / (dist + kernel.eps)


def score_grad(kernel: SimilarityKernel, a, b, upstream):
    """Gradients of ``sum(upstream * score(kernel, a, b))``.

    Returns ``(dA, dB, dw, db)``. ``dw`` and ``db`` are zero for the
    inverse-Euclidean kernel, which has no learnable parameters. ``a`` and
    ``b`` may be the same array; the two gradients are then partials with
    respect to each argument slot and the caller sums them.
    """
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    _check_cols(a, b)
    up = np.asarray(upstream, dtype=np.float64)
    if up.shape != (a.shape[0], b.shape[0]):
        raise ValueError(f"upstream shape {up.shape} != {(a.shape[0], b.shape[0])}")

    if kernel.kind is KernelKind.SCALED_COSINE:
        an, na = _unit_rows(a)
        bn, nb = _unit_rows(b)
        cos = an @ bn.T
        g = kernel.w * up
        # d cos(a,b)/da = (b_hat - cos * a_hat) / |a|
        ga = g @ bn
        ga = (ga - np.sum(g * cos, axis=1)[:, None] * an) / na[:, None]
        gb = g.T @ an
        gb = (gb - np.sum(g * cos, axis=0)[:, None] * bn) / nb[:, None]
        return ga, gb, float(np.sum(up * cos)), float(np.sum(up))

    diff = a[:, None, :] - b[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    # d/dd (d + eps)^-1 = -(d + eps)^-2; the direction (a - b)/d is taken as
    # zero at coincident rows, where the distance is not differentiable
    safe = np.where(dist > 0, dist, 1.0)
    coef = np.where(dist > 0, -up / ((dist + kernel.eps) ** 2 * safe), 0.0)
    ga = np.einsum("ij,ijk->ik", coef, diff)
    gb = -np.einsum("ij,ijk->jk", coef, diff)
    return ga, gb, 0.0, 0.0

"""Dense float64 helpers and the seeded generator shared by every module.

Matrices are plain ``numpy.ndarray`` objects of dtype float64; ``as_matrix``
is the single validation gate.
"""

from __future__ import annotations

import hashlib

import numpy as np

COSINE_GUARD = 1e-12


class DegenerateEmbedding(ValueError):
    """A zero-norm row reached an operation that needs a direction."""


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    """Return ``x`` as a finite 2-D float64 array or raise ``ValueError``."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ValueError(f"{name}: expected 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: non-finite entries")
    return arr


def log_sum_exp(values, axis=None):
    """Stable ``log(sum(exp(values)))``.

    With ``axis=None`` the input is treated as a flat vector and a float is
    returned; otherwise the reduction runs along ``axis``.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0 or (axis is not None and v.shape[axis] == 0):
        raise ValueError("empty reduction")
    if axis is None:
        m = np.max(v)
        return float(m + np.log(np.sum(np.exp(v - m))))
    m = np.max(v, axis=axis, keepdims=True)
    out = m + np.log(np.sum(np.exp(v - m), axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis)


def softmax(values: np.ndarray, axis: int = -1) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    m = np.max(v, axis=axis, keepdims=True)
    e = np.exp(v - m)
    return e / np.sum(e, axis=axis, keepdims=True)


def _check_cols(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")


def pairwise_euclidean(a, b) -> np.ndarray:
    """Matrix of l2 distances between the rows of ``a`` and ``b``."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    _check_cols(a, b)
    # explicit differences rather than the |a|^2 + |b|^2 - 2ab expansion:
    # the expansion loses all precision for nearby rows
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def row_norms(a: np.ndarray) -> np.ndarray:
    norms = np.sqrt(np.einsum("ij,ij->i", a, a))
    # the guard only decides degeneracy; it never enters the returned norms
    if np.any(norms**2 <= COSINE_GUARD):
        raise DegenerateEmbedding("degenerate embedding")
    return norms


def pairwise_cosine(a, b) -> np.ndarray:
    """Cosine similarity between every row of ``a`` and every row of ``b``."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    _check_cols(a, b)
    an = a / row_norms(a)[:, None]
    bn = b / row_norms(b)[:, None]
    return an @ bn.T


class Rng:
    """Seeded generator backed by the counter-based Philox bit generator.

    Separate named streams (``spawn``) let independent consumers (world
    construction, weight init, batch sampling, evaluation) draw without
    perturbing one another.
    """

    def __init__(self, seed: int, stream: tuple[int, ...] = ()):
        if seed < 0 or seed >= 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.seed = int(seed)
        self.stream = tuple(stream)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.stream)
        self._gen = np.random.Generator(np.random.Philox(ss))

    def spawn(self, name: str) -> "Rng":
        # stable across processes, unlike hash()
        tag = int.from_bytes(hashlib.sha256(name.encode()).digest()[:4], "little")
        return Rng(self.seed, self.stream + (tag,))

    def raw(self, n: int) -> np.ndarray:
        return self._gen.bit_generator.random_raw(n)

    def normal(self, size=None, scale: float = 1.0) -> np.ndarray:
        return self._gen.normal(0.0, scale, size)

    def uniform(self, low=0.0, high=1.0, size=None) -> np.ndarray:
        return self._gen.uniform(low, high, size)

    def integers(self, low: int, high: int | None = None, size=None):
        return self._gen.integers(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, n: int, k: int) -> np.ndarray:
        """``k`` distinct indices from ``range(n)`` in random order."""
        if k > n:
            raise ValueError(f"cannot draw {k} distinct items from {n}")
        return self._gen.permutation(n)[:k]

"""Toy two-stream encoders with hand-rolled backprop, pooling and optimizers.

Each modality gets a shared *trunk* (activated dense layers) feeding one or
more linear *heads* (``identity``, ``content``). With a one-layer trunk this
is a 2-layer perceptron per head.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numerics import Rng, as_matrix

CHECKPOINT_VERSION = 1


class StaleTapeError(RuntimeError):
    pass


class Activation(str, enum.Enum):
    TANH = "tanh"
    RELU = "relu"


def _act(kind: Activation, z: np.ndarray) -> np.ndarray:
    return np.tanh(z) if kind is Activation.TANH else np.maximum(z, 0.0)


def _act_grad(kind: Activation, z: np.ndarray, out: np.ndarray) -> np.ndarray:
    if kind is Activation.TANH:
        return 1.0 - out * out
    return (z > 0).astype(np.float64)


@dataclass
class Dense:
    weight: np.ndarray  # out x in
    bias: np.ndarray  # out

    @classmethod
    def init(cls, fan_in: int, fan_out: int, rng: Rng) -> "Dense":
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return cls(rng.uniform(-limit, limit, size=(fan_out, fan_in)), np.zeros(fan_out))


@dataclass
class EncoderParams:
    trunk: list[Dense]
    heads: dict[str, Dense]
    activation: Activation = Activation.TANH
    # bumped on every in-place update; tapes from older versions are stale
    version: int = 0

    def __post_init__(self):
        self.activation = Activation(self.activation)
        dim = self.input_dim
        for i, layer in enumerate(self.trunk):
            if layer.weight.shape[1] != dim or layer.bias.shape != (layer.weight.shape[0],):
                raise ValueError(f"trunk layer {i} does not chain: {layer.weight.shape}")
            dim = layer.weight.shape[0]
        for name, head in self.heads.items():
            if head.weight.shape[1] != dim or head.bias.shape != (head.weight.shape[0],):
                raise ValueError(f"head {name!r} does not chain: {head.weight.shape}")

    @classmethod
    def create(cls, input_dim: int, hidden: list[int], output_dim: int = 16,
               heads=("identity",), activation="tanh", rng: Rng | None = None) -> "EncoderParams":
        rng = rng or Rng(0)
        trunk = []
        dim = input_dim
        for width in hidden:
            trunk.append(Dense.init(dim, width, rng))
            dim = width
        return cls(trunk, {h: Dense.init(dim, output_dim, rng) for h in heads}, activation)

    @property
    def input_dim(self) -> int:
        if self.trunk:
            return self.trunk[0].weight.shape[1]
        return next(iter(self.heads.values())).weight.shape[1]

    @property
    def output_dim(self) -> int:
        return next(iter(self.heads.values())).weight.shape[0]

    def parameters(self, prefix: str = "") -> dict[str, np.ndarray]:
        """Name -> array views; updating the arrays updates the encoder."""
        out = {}
        for i, layer in enumerate(self.trunk):
            out[f"{prefix}trunk.{i}.weight"] = layer.weight
            out[f"{prefix}trunk.{i}.bias"] = layer.bias
        for name, head in self.heads.items():
            out[f"{prefix}heads.{name}.weight"] = head.weight
            out[f"{prefix}heads.{name}.bias"] = head.bias
        return out

    def touch(self) -> None:
        self.version += 1

    def copy(self) -> "EncoderParams":
        return EncoderParams(
            [Dense(l.weight.copy(), l.bias.copy()) for l in self.trunk],
            {k: Dense(h.weight.copy(), h.bias.copy()) for k, h in self.heads.items()},
            self.activation,
        )


@dataclass
class Tape:
    params: EncoderParams
    version: int
    head: str
    inputs: list[np.ndarray] = field(default_factory=list)
    pre: list[np.ndarray] = field(default_factory=list)
    post: list[np.ndarray] = field(default_factory=list)


def forward(params: EncoderParams, x, head: str = "identity"):
    """Per-frame embeddings ``(T x out)`` and the tape for :func:`backward`."""
    x = as_matrix(x, "x")
    if x.shape[1] != params.input_dim:
        raise ValueError(f"input dim {x.shape[1]} != encoder input dim {params.input_dim}")
    if head not in params.heads:
        raise KeyError(f"no head {head!r}; have {sorted(params.heads)}")
    tape = Tape(params, params.version, head)
    h = x
    for layer in params.trunk:
        tape.inputs.append(h)
        z = h @ layer.weight.T + layer.bias
        h = _act(params.activation, z)
        tape.pre.append(z)
        tape.post.append(h)
    out_layer = params.heads[head]
    tape.inputs.append(h)
    return h @ out_layer.weight.T + out_layer.bias, tape


def backward(tape: Tape, upstream):
    """Exact gradients for a tape. Returns ``(param_grads, dx)``.

    ``param_grads`` uses the same names as ``EncoderParams.parameters()``;
    heads not used by the tape get no entry.
    """
    params = tape.params
    if params.version != tape.version:
        raise StaleTapeError("tape predates the latest parameter update")
    g = np.asarray(upstream, dtype=np.float64)
    head = params.heads[tape.head]
    h = tape.inputs[-1]
    if g.shape != (h.shape[0], head.weight.shape[0]):
        raise ValueError(f"upstream shape {g.shape} does not match forward output")
    grads = {
        f"heads.{tape.head}.weight": g.T @ h,
        f"heads.{tape.head}.bias": g.sum(axis=0),
    }
    g = g @ head.weight
    for i in range(len(params.trunk) - 1, -1, -1):
        layer = params.trunk[i]
        g = g * _act_grad(params.activation, tape.pre[i], tape.post[i])
        grads[f"trunk.{i}.weight"] = g.T @ tape.inputs[i]
        grads[f"trunk.{i}.bias"] = g.sum(axis=0)
        g = g @ layer.weight
    return grads, g


# --------------------------------------------------------------------------
# temporal pooling
# --------------------------------------------------------------------------

class PoolingRule(str, enum.Enum):
    MEAN_OVER_TIME = "mean"
    RANDOM_SELECT_ONE = "select"


def pool(rule: PoolingRule, y, rng: Rng | None = None):
    """Collapse ``T`` frame embeddings into one vector.

    Returns ``(vector, index)``; ``index`` is the chosen frame for
    ``RANDOM_SELECT_ONE`` and ``None`` for the mean.
    """
    rule = PoolingRule(rule)
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 2 or y.shape[0] == 0:
        raise ValueError("pooling needs at least one frame")
    if rule is PoolingRule.MEAN_OVER_TIME:
        return y.mean(axis=0), None
    if rng is None:
        raise ValueError("random selection needs an rng")
    idx = int(rng.integers(0, y.shape[0]))
    return y[idx].copy(), idx


def pool_backward(rule: PoolingRule, frames: int, index, g) -> np.ndarray:
    """Frame-level gradient ``(T x out)`` for a pooled gradient ``g``."""
    rule = PoolingRule(rule)
    g = np.asarray(g, dtype=np.float64)
    if rule is PoolingRule.MEAN_OVER_TIME:
        return np.repeat(g[None, :] / frames, frames, axis=0)
    out = np.zeros((frames, g.shape[0]))
    out[index] = g
    return out


def pool_clips(rule: PoolingRule, y: np.ndarray, frames: int, rng: Rng | None = None):
    """Pool a stack of ``n`` clips, ``y`` being ``(n * frames) x out``.

    Returns ``(pooled n x out, indices or None)``.
    """
    rule = PoolingRule(rule)
    n = y.shape[0] // frames
    y3 = y.reshape(n, frames, -1)
    if rule is PoolingRule.MEAN_OVER_TIME:
        return y3.mean(axis=1), None
    idx = rng.integers(0, frames, size=n)
    return y3[np.arange(n), idx], idx


def pool_clips_backward(rule: PoolingRule, g: np.ndarray, frames: int, indices) -> np.ndarray:
    rule = PoolingRule(rule)
    n, dim = g.shape
    if rule is PoolingRule.MEAN_OVER_TIME:
        out = np.repeat(g[:, None, :] / frames, frames, axis=1)
    else:
        out = np.zeros((n, frames, dim))
        out[np.arange(n), indices] = g
    return out.reshape(n * frames, dim)


# --------------------------------------------------------------------------
# optimizers
# --------------------------------------------------------------------------

class OptimizerKind(str, enum.Enum):
    SGD = "sgd"
    ADAM = "adam"


@dataclass
class OptimizerState:
    kind: OptimizerKind = OptimizerKind.ADAM
    lr: float = 1e-3
    momentum: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.kind = OptimizerKind(self.kind)


def step(opt: OptimizerState, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
    """Update ``params`` in place. Names missing from ``grads`` are left alone.

    Iteration follows the sorted parameter names so the update order, and so
    every rounding, is fixed.
    """
    opt.t += 1
    for name in sorted(grads):
        p = params[name]
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != p.shape:
            raise ValueError(f"shape mismatch for {name}: {g.shape} vs {p.shape}")
        if opt.kind is OptimizerKind.SGD:
            if opt.momentum:
                buf = opt.m.get(name)
                buf = g.copy() if buf is None else opt.momentum * buf + g
                opt.m[name] = buf
                g = buf
            p -= opt.lr * g
            continue
        m = opt.m.get(name, np.zeros_like(p))
        v = opt.v.get(name, np.zeros_like(p))
        m = opt.beta1 * m + (1 - opt.beta1) * g
        v = opt.beta2 * v + (1 - opt.beta2) * g * g
        opt.m[name], opt.v[name] = m, v
        mhat = m / (1 - opt.beta1**opt.t)
        vhat = v / (1 - opt.beta2**opt.t)
        p -= opt.lr * mhat / (np.sqrt(vhat) + opt.eps)


# --------------------------------------------------------------------------
# checkpoints
# --------------------------------------------------------------------------

def save_checkpoint(path, encoders: dict[str, EncoderParams], scalars: dict[str, float] | None = None,
                    seed: int | None = None) -> None:
    """JSON checkpoint: header (dims, activation, seed) then row-major weights."""
    doc = {"format": "xmodal-checkpoint", "version": CHECKPOINT_VERSION, "seed": seed,
           "encoders": {}, "scalars": dict(sorted((scalars or {}).items()))}
    for name, enc in encoders.items():
        doc["encoders"][name] = {
            "activation": enc.activation.value,
            "input_dim": enc.input_dim,
            "trunk": [{"shape": list(l.weight.shape), "weight": l.weight.ravel().tolist(),
                       "bias": l.bias.tolist()} for l in enc.trunk],
            "heads": {k: {"shape": list(h.weight.shape), "weight": h.weight.ravel().tolist(),
                          "bias": h.bias.tolist()} for k, h in sorted(enc.heads.items())},
        }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`: ``(encoders, scalars, seed)``."""
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != "xmodal-checkpoint" or doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: not a version-{CHECKPOINT_VERSION} checkpoint")

    def dense(d):
        return Dense(np.array(d["weight"], dtype=np.float64).reshape(d["shape"]),
                     np.array(d["bias"], dtype=np.float64))

    encoders = {
        name: EncoderParams([dense(l) for l in e["trunk"]],
                            {k: dense(h) for k, h in e["heads"].items()}, e["activation"])
        for name, e in doc["encoders"].items()
    }
    return encoders, doc["scalars"], doc["seed"]

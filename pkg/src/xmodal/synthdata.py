"""A synthetic cross-modal world.

Every clip belongs to one identity and carries a per-frame content class.
Both modalities render the same latent ``[identity ; content]`` through their
own fixed affine map followed by ``tanh``, then add independent noise:

    frame_m = tanh(R_m @ [g * z_id ; z_content_t] + c_m) + sigma * noise

The identity gain ``g`` sets how strongly identity shows through each frame
relative to content.

``z_content_t`` is a class prototype plus jitter, so content is both
continuous (for matching) and discrete (for the downstream probe).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .numerics import Rng

WORLD_FORMAT_VERSION = 1


@dataclass(frozen=True)
class WorldConfig:
    num_identities: int = 500
    identity_dim: int = 8
    content_dim: int = 4
    content_classes: int = 20
    content_jitter: float = 0.3
    identity_gain: float = 0.1
    frames: int = 10
    noise_sigma: float = 0.1
    dim_a: int = 32
    dim_b: int = 48
    train_fraction: float = 0.8

    def validate(self) -> None:
        if self.num_identities < 1:
            raise ValueError("world needs at least one identity")
        for name in ("identity_dim", "content_dim", "content_classes", "frames", "dim_a", "dim_b"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.noise_sigma < 0 or self.content_jitter < 0 or self.identity_gain < 0:
            raise ValueError("noise levels must be non-negative")
        if not 0 < self.train_fraction <= 1:
            raise ValueError("train_fraction must lie in (0, 1]")


@dataclass
class SyntheticWorld:
    config: WorldConfig
    seed: int
    identities: np.ndarray  # num_identities x identity_dim
    prototypes: np.ndarray  # content_classes x content_dim
    render_a: tuple[np.ndarray, np.ndarray]  # (dim_a x latent, dim_a)
    render_b: tuple[np.ndarray, np.ndarray]
    train_ids: np.ndarray
    test_ids: np.ndarray

    @property
    def frames(self) -> int:
        return self.config.frames

    def to_json(self) -> dict:
        def arr(x):
            return {"shape": list(x.shape), "data": x.ravel().tolist()}

        return {
            "format": "xmodal-world",
            "version": WORLD_FORMAT_VERSION,
            "seed": self.seed,
            "config": asdict(self.config),
            "identities": arr(self.identities),
            "prototypes": arr(self.prototypes),
            "render_a": [arr(self.render_a[0]), arr(self.render_a[1])],
            "render_b": [arr(self.render_b[0]), arr(self.render_b[1])],
            "train_ids": self.train_ids.tolist(),
            "test_ids": self.test_ids.tolist(),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "SyntheticWorld":
        if doc.get("format") != "xmodal-world" or doc.get("version") != WORLD_FORMAT_VERSION:
            raise ValueError("not a version-1 world dump")

        def arr(d):
            return np.array(d["data"], dtype=np.float64).reshape(d["shape"])

        return cls(
            WorldConfig(**doc["config"]), doc["seed"], arr(doc["identities"]), arr(doc["prototypes"]),
            (arr(doc["render_a"][0]), arr(doc["render_a"][1])),
            (arr(doc["render_b"][0]), arr(doc["render_b"][1])),
            np.array(doc["train_ids"], dtype=np.int64), np.array(doc["test_ids"], dtype=np.int64),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()) + "\n")

    @classmethod
    def load(cls, path) -> "SyntheticWorld":
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass
class Clip:
    identity_id: int
    frames_a: np.ndarray  # T x dim_a
    frames_b: np.ndarray  # T x dim_b
    content: np.ndarray  # T x content_dim
    content_labels: np.ndarray  # T


def make_world(config: WorldConfig = WorldConfig(), seed: int = 0) -> SyntheticWorld:
    config.validate()
    rng = Rng(seed).spawn("world")
    latent = config.identity_dim + config.content_dim
    identities = rng.normal(size=(config.num_identities, config.identity_dim))
    prototypes = rng.normal(size=(config.content_classes, config.content_dim))

    def render(dim):
        # scaled so pre-activations are O(1) and tanh stays out of saturation
        return rng.normal(size=(dim, latent)) / np.sqrt(latent), 0.1 * rng.normal(size=dim)

    render_a = render(config.dim_a)
    render_b = render(config.dim_b)
    perm = rng.permutation(config.num_identities)
    n_train = int(round(config.train_fraction * config.num_identities))
    return SyntheticWorld(config, seed, identities, prototypes, render_a, render_b,
                          np.sort(perm[:n_train]), np.sort(perm[n_train:]))


def _render(world: SyntheticWorld, which: str, latents: np.ndarray, rng: Rng) -> np.ndarray:
    mat, off = world.render_a if which == "a" else world.render_b
    clean = np.tanh(latents @ mat.T + off)
    if world.config.noise_sigma == 0:
        return clean
    return clean + rng.normal(size=clean.shape, scale=world.config.noise_sigma)


def make_clip(world: SyntheticWorld, identity: int, rng: Rng, content_labels=None) -> Clip:
    """Render one clip. ``content_labels`` (length ``T``) fixes the classes."""
    cfg = world.config
    if content_labels is None:
        content_labels = rng.integers(0, cfg.content_classes, size=cfg.frames)
    content_labels = np.asarray(content_labels, dtype=np.int64)
    content = world.prototypes[content_labels]
    if cfg.content_jitter:
        content = content + rng.normal(size=content.shape, scale=cfg.content_jitter)
    ident = cfg.identity_gain * np.repeat(world.identities[identity][None, :], len(content_labels), axis=0)
    latents = np.hstack([ident, content])
    return Clip(int(identity), _render(world, "a", latents, rng), _render(world, "b", latents, rng),
                content, content_labels)


def sample_biometric_batch(world: SyntheticWorld, n: int, rng: Rng, ids=None) -> list[Clip]:
    """``n`` clips from ``n`` distinct identities drawn from ``ids``.

    ``ids`` defaults to the training split. Clip ``j`` supplies the positive
    pair (its A frames, its B frames); every cross-clip pairing is a negative.
    """
    pool = world.train_ids if ids is None else np.asarray(ids)
    if n > len(pool):
        raise ValueError(f"batch of {n} needs {n} distinct identities; only {len(pool)} available")
    chosen = pool[rng.choice(len(pool), n)]
    return [make_clip(world, int(i), rng) for i in chosen]


@dataclass
class SyncBatch:
    clip: Clip
    timesteps: np.ndarray  # n distinct frame indices

    @property
    def frames_a(self) -> np.ndarray:
        return self.clip.frames_a[self.timesteps]

    @property
    def frames_b(self) -> np.ndarray:
        return self.clip.frames_b[self.timesteps]

    @property
    def labels(self) -> np.ndarray:
        return self.clip.content_labels[self.timesteps]


def sync_batch_from_clip(clip: Clip, n: int, rng: Rng) -> SyncBatch:
    frames = clip.frames_a.shape[0]
    if n > frames:
        raise ValueError(f"sync batch of {n} needs {n} timesteps; clip has {frames}")
    return SyncBatch(clip, np.sort(rng.choice(frames, n)))


def sample_sync_batch(world: SyntheticWorld, n: int, rng: Rng, ids=None) -> SyncBatch:
    """``n`` distinct timesteps of a single fresh clip.

    Positives share a timestep; negatives are other timesteps of the same
    clip, so identity is constant and only content separates the pairs.
    """
    if n > world.frames:
        raise ValueError(f"sync batch of {n} needs {n} timesteps; clips have {world.frames}")
    pool = world.train_ids if ids is None else np.asarray(ids)
    identity = int(pool[rng.integers(0, len(pool))])
    return sync_batch_from_clip(make_clip(world, identity, rng), n, rng)

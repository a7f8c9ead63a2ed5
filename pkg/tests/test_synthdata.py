import math

import numpy as np
import pytest

from xmodal.losses import PRESETS, compute_loss
from xmodal.numerics import Rng
from xmodal.synthdata import (SyntheticWorld, WorldConfig, make_clip, make_world, sample_biometric_batch,
                              sample_sync_batch)

SMALL = WorldConfig(num_identities=50, frames=6, dim_a=5, dim_b=7)


def test_same_seed_same_world():
    a, b = make_world(SMALL, 4), make_world(SMALL, 4)
    np.testing.assert_array_equal(a.identities, b.identities)
    np.testing.assert_array_equal(a.render_b[0], b.render_b[0])
    assert not np.array_equal(a.identities, make_world(SMALL, 5).identities)


def test_zero_identities_rejected():
    with pytest.raises(ValueError):
        make_world(WorldConfig(num_identities=0))
    with pytest.raises(ValueError):
        make_world(WorldConfig(noise_sigma=-1.0))


def test_split_disjoint_and_complete():
    w = make_world(WorldConfig(), 0)
    assert len(w.train_ids) == 400 and len(w.test_ids) == 100
    assert not set(w.train_ids) & set(w.test_ids)
    assert sorted([*w.train_ids, *w.test_ids]) == list(range(500))


def test_identity_latents_centered():
    w = make_world(WorldConfig(), 1)
    n = w.identities.shape[0]
    assert np.all(np.abs(w.identities.mean(axis=0)) < 3 / math.sqrt(n))


def test_noiseless_identity_signal():
    cfg = WorldConfig(num_identities=10, frames=3, noise_sigma=0.0, content_jitter=0.0, dim_a=5, dim_b=6)
    w = make_world(cfg, 2)
    labels = [1, 4, 2]
    c1 = make_clip(w, 3, Rng(1), labels)
    c2 = make_clip(w, 3, Rng(2), labels)
    c3 = make_clip(w, 4, Rng(3), labels)
    assert np.linalg.norm(c1.frames_a - c2.frames_a) == 0.0
    assert np.linalg.norm(c1.frames_a - c3.frames_a) > 0.0


def test_clip_shapes_and_shared_latents():
    w = make_world(SMALL, 0)
    c = make_clip(w, 7, Rng(0))
    assert c.frames_a.shape == (6, 5) and c.frames_b.shape == (6, 7)
    assert c.content.shape == (6, SMALL.content_dim) and c.identity_id == 7


def test_biometric_batch_distinct_and_errors():
    w = make_world(SMALL, 0)
    pool = np.arange(SMALL.num_identities)
    full = sample_biometric_batch(w, SMALL.num_identities, Rng(0), ids=pool)
    assert sorted(c.identity_id for c in full) == list(range(SMALL.num_identities))
    for seed in range(20):
        ids = [c.identity_id for c in sample_biometric_batch(w, 30, Rng(seed))]
        assert len(set(ids)) == 30
        assert set(ids) <= set(w.train_ids.tolist())
    with pytest.raises(ValueError):
        sample_biometric_batch(w, len(w.train_ids) + 1, Rng(0))


def test_single_clip_batch_has_zero_loss():
    w = make_world(SMALL, 0)
    (c,) = sample_biometric_batch(w, 1, Rng(0))
    xa, xv = c.frames_a.mean(axis=0, keepdims=True), c.frames_b[:1, :5]
    assert compute_loss(PRESETS["cddl-angular"], xa, xv).value == 0.0


def test_biometric_sampling_uniform():
    w = make_world(WorldConfig(num_identities=25, train_fraction=1.0, frames=2, dim_a=2, dim_b=2), 0)
    counts = np.zeros(25)
    r = Rng(11)
    for _ in range(400):
        for c in sample_biometric_batch(w, 5, r):
            counts[c.identity_id] += 1
    expected = counts.sum() / 25
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    assert chi2 < 52.6  # 0.999 quantile of chi-square with 24 dof


def test_sync_batch_uses_all_timesteps_once():
    w = make_world(SMALL, 0)
    sb = sample_sync_batch(w, SMALL.frames, Rng(0))
    assert sorted(sb.timesteps.tolist()) == list(range(SMALL.frames))
    with pytest.raises(ValueError):
        sample_sync_batch(w, SMALL.frames + 1, Rng(0))


def test_sync_batch_replayable_and_single_identity():
    w = make_world(SMALL, 0)
    a, b = sample_sync_batch(w, 4, Rng(8)), sample_sync_batch(w, 4, Rng(8))
    np.testing.assert_array_equal(a.timesteps, b.timesteps)
    np.testing.assert_array_equal(a.frames_a, b.frames_a)
    assert a.frames_a.shape == (4, SMALL.dim_a) and a.labels.shape == (4,)


def test_constant_content_sync_batch_is_at_chance():
    cfg = WorldConfig(num_identities=5, frames=6, noise_sigma=0.0, content_jitter=0.0, content_classes=1,
                      dim_a=4, dim_b=4)
    w = make_world(cfg, 0)
    sb = sample_sync_batch(w, 6, Rng(1))
    res = compute_loss(PRESETS["mwm-angular"], sb.frames_a, sb.frames_b)
    assert res.components["AV"] == pytest.approx(math.log(6), abs=1e-12)


def test_world_json_roundtrip(tmp_path):
    w = make_world(SMALL, 3)
    w.save(tmp_path / "w.json")
    back = SyntheticWorld.load(tmp_path / "w.json")
    assert back.config == w.config and back.seed == 3
    np.testing.assert_array_equal(back.render_a[0], w.render_a[0])
    np.testing.assert_array_equal(back.test_ids, w.test_ids)
    with pytest.raises(ValueError):
        SyntheticWorld.from_json({"format": "xmodal-world", "version": 99})

import numpy as np
import pytest

from xmodal import encoders as enc
from xmodal.encoders import Dense, EncoderParams, OptimizerState, PoolingRule
from xmodal.losses import PRESETS, numeric_grad, relative_error
from xmodal.numerics import Rng
from xmodal.trainer import pipeline_grad_check


def test_identity_linear_layer():
    p = EncoderParams([], {"identity": Dense(np.eye(3), np.zeros(3))})
    x = np.arange(6.0).reshape(2, 3)
    np.testing.assert_array_equal(enc.forward(p, x)[0], x)


def test_zero_weights_output_bias():
    p = EncoderParams([Dense(np.zeros((4, 3)), np.zeros(4))], {"identity": Dense(np.zeros((2, 4)), np.array([1.5, -2.0]))})
    y, _ = enc.forward(p, np.ones((5, 3)))
    np.testing.assert_array_equal(y, np.tile([1.5, -2.0], (5, 1)))


def test_layers_must_chain():
    with pytest.raises(ValueError):
        EncoderParams([Dense(np.zeros((4, 3)), np.zeros(4))], {"identity": Dense(np.zeros((2, 5)), np.zeros(2))})


def test_forward_dimension_mismatch():
    p = EncoderParams.create(3, [4], 2)
    with pytest.raises(ValueError):
        enc.forward(p, np.ones((2, 5)))


def test_glorot_limits():
    p = EncoderParams.create(30, [50], 20, rng=Rng(1))
    assert np.abs(p.trunk[0].weight).max() <= np.sqrt(6 / 80)
    assert np.abs(p.heads["identity"].weight).max() <= np.sqrt(6 / 70)
    assert not p.trunk[0].bias.any()


@pytest.mark.parametrize("activation", ["tanh", "relu"])
def test_backward_matches_finite_differences(activation):
    r = Rng(5)
    p = EncoderParams.create(3, [4, 5], 2, heads=("identity", "content"), activation=activation, rng=r)
    x = r.normal(size=(6, 3))
    up = r.normal(size=(6, 2))

    def f():
        return float(np.sum(up * enc.forward(p, x, "content")[0]))

    y, tape = enc.forward(p, x, "content")
    grads, dx = enc.backward(tape, up)
    params = p.parameters()
    assert "heads.identity.weight" not in grads
    for name, g in grads.items():
        assert relative_error(g, numeric_grad(f, params[name])) < 1e-5, name
    assert relative_error(dx, numeric_grad(f, x)) < 1e-5


def test_zero_upstream_zero_grads():
    p = EncoderParams.create(3, [4], 2, rng=Rng(0))
    _, tape = enc.forward(p, np.ones((2, 3)))
    grads, dx = enc.backward(tape, np.zeros((2, 2)))
    assert all(not g.any() for g in grads.values()) and not dx.any()


def test_stale_tape():
    p = EncoderParams.create(3, [4], 2, rng=Rng(0))
    _, tape = enc.forward(p, np.ones((2, 3)))
    p.touch()
    with pytest.raises(enc.StaleTapeError):
        enc.backward(tape, np.ones((2, 2)))


def test_pool_examples():
    one = np.array([[3.0, 4.0]])
    assert enc.pool("mean", one)[0].tolist() == [3.0, 4.0]
    assert enc.pool("select", one, Rng(0))[0].tolist() == [3.0, 4.0]
    assert enc.pool("mean", [[0.0, 0.0], [2.0, 2.0]])[0].tolist() == [1.0, 1.0]
    with pytest.raises(ValueError):
        enc.pool("mean", np.zeros((0, 2)))


def test_select_replayable_and_identical_frames_match_mean():
    y = Rng(1).normal(size=(7, 3))
    assert enc.pool("select", y, Rng(9))[1] == enc.pool("select", y, Rng(9))[1]
    same = np.tile([0.5, -1.0, 2.0], (7, 1))
    np.testing.assert_array_equal(enc.pool("select", same, Rng(3))[0], enc.pool("mean", same)[0])


def test_pool_backward():
    g = np.array([2.0, -4.0])
    np.testing.assert_array_equal(enc.pool_backward("mean", 2, None, g), [[1.0, -2.0], [1.0, -2.0]])
    np.testing.assert_array_equal(enc.pool_backward("select", 3, 1, g), [[0, 0], g, [0, 0]])


def test_pool_clips_roundtrip():
    y = Rng(2).normal(size=(6, 2))  # 3 clips of 2 frames
    pooled, _ = enc.pool_clips(PoolingRule.MEAN_OVER_TIME, y, 2)
    np.testing.assert_allclose(pooled, y.reshape(3, 2, 2).mean(axis=1))
    sel, idx = enc.pool_clips(PoolingRule.RANDOM_SELECT_ONE, y, 2, Rng(4))
    np.testing.assert_array_equal(sel, y.reshape(3, 2, 2)[np.arange(3), idx])
    back = enc.pool_clips_backward(PoolingRule.RANDOM_SELECT_ONE, np.ones((3, 2)), 2, idx)
    assert back.sum() == 6 and back.shape == (6, 2)


def test_sgd_and_momentum():
    p = {"x": np.zeros(1)}
    enc.step(OptimizerState("sgd", lr=1.0), p, {"x": np.zeros(1)})
    assert p["x"][0] == 0.0
    enc.step(OptimizerState("sgd", lr=1.0), p, {"x": np.ones(1)})
    assert p["x"][0] == -1.0
    opt = OptimizerState("sgd", lr=1.0, momentum=0.5)
    q = {"x": np.zeros(1)}
    enc.step(opt, q, {"x": np.ones(1)})
    enc.step(opt, q, {"x": np.ones(1)})
    assert q["x"][0] == -2.5


@pytest.mark.parametrize("scale", [1e-4, 1.0, 1e4])
def test_adam_first_step_is_lr(scale):
    p = {"x": np.array([1.0, -1.0])}
    enc.step(OptimizerState("adam", lr=1e-3), p, {"x": np.array([scale, -scale])})
    # closed form: mhat = g, vhat = g^2, so the step is lr * |g| / (|g| + eps)
    step = 1e-3 * scale / (scale + 1e-8)
    np.testing.assert_allclose(p["x"], [1 - step, -1 + step], rtol=0, atol=1e-15)
    assert step == pytest.approx(1e-3, rel=1e-3)


def test_step_shape_mismatch():
    with pytest.raises(ValueError):
        enc.step(OptimizerState(), {"x": np.zeros(2)}, {"x": np.zeros(3)})


def test_checkpoint_roundtrip(tmp_path):
    a = EncoderParams.create(3, [4], 2, heads=("identity", "content"), rng=Rng(1))
    v = EncoderParams.create(5, [4], 2, activation="relu", rng=Rng(2))
    enc.save_checkpoint(tmp_path / "c.json", {"a": a, "v": v}, {"w": 9.5}, seed=3)
    loaded, scalars, seed = enc.load_checkpoint(tmp_path / "c.json")
    assert scalars == {"w": 9.5} and seed == 3
    for orig, new in ((a, loaded["a"]), (v, loaded["v"])):
        assert new.activation == orig.activation
        for k, arr in orig.parameters().items():
            np.testing.assert_array_equal(new.parameters()[k], arr)
    (tmp_path / "bad.json").write_text('{"format": "other"}')
    with pytest.raises(ValueError):
        enc.load_checkpoint(tmp_path / "bad.json")


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_end_to_end_pipeline_gradients(name):
    worst = max(max(pipeline_grad_check(PRESETS[name], s).values()) for s in range(20))
    assert worst < 1e-5


def test_pipeline_check_covers_every_parameter():
    errs = pipeline_grad_check(PRESETS["cddl-angular"], 0)
    for key in ("a.trunk.0.weight", "v.heads.identity.bias", "a.heads.content.weight",
                "identity.w", "identity.b", "content.w", "content.b"):
        assert key in errs

"""Self-supervised training runs on the synthetic world.

Two tasks:

``biometric``
    identity objective on batches of distinct identities (A frames mean-pooled,
    one random B frame per clip) plus ``lambda_content`` times the content
    objective on single-clip sync batches, through separate heads on a
    shared trunk.
``sync``
    content objective only; the downstream measure is a linear probe of the
    frozen B content embeddings.
"""

from __future__ import annotations

import dataclasses
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import encoders as enc
from .eval import _sample_pairs, eer, linear_probe, recall_at_k, score_pairs, TrialSet
from .losses import LossResult, LossSpec, compute_loss, default_scalars
from .numerics import Rng
from .synthdata import (SyntheticWorld, WorldConfig, make_clip, make_world,
                        sample_biometric_batch, sample_sync_batch)

REPORT_SCHEMA_VERSION = 1
CURVE_COLUMNS = ("step", "loss_total", "loss_AV", "loss_VA", "loss_AAV", "loss_VVA")
METRIC_KEYS = ("cbm_eer", "sv_eer", "vv_eer", "r_at_1", "r_at_k", "probe_top1", "probe_topk")


class ConfigError(ValueError):
    pass


class NumericalFailure(RuntimeError):
    pass


@dataclass
class EncoderConfig:
    hidden: list[int] = field(default_factory=lambda: [64])
    output_dim: int = 16
    activation: str = "tanh"


@dataclass
class OptimizerConfig:
    kind: str = "adam"
    lr: float = 1e-3
    momentum: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class EvalConfig:
    every: int = 250
    clips_per_identity: int = 4
    cbm_pairs: int = 3000
    cbm_positive_fraction: float = 1 / 30
    sv_pairs: int = 10000
    sv_positive_fraction: float = 0.5
    recall_k: int = 10
    probe_train_clips: int = 200
    probe_epochs: int = 300
    probe_k: int = 5


@dataclass
class ExperimentConfig:
    task: str = "biometric"
    loss: str = "cddl-angular"
    content_loss: str | None = None  # defaults to ``loss``
    lambda_content: float = 1.0
    margin: float = 1.0
    init_w: float = 10.0
    init_b: float = -5.0
    batch_size: int = 40
    sync_batch_size: int = 10
    sync_clips_per_step: int = 1
    steps: int = 2000
    seed: int = 0
    world: WorldConfig = field(default_factory=WorldConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def loss_spec(self) -> LossSpec:
        return dataclasses.replace(LossSpec.from_name(self.loss), margin=self.margin)

    def content_spec(self) -> LossSpec:
        return dataclasses.replace(LossSpec.from_name(self.content_loss or self.loss), margin=self.margin)

    def validate(self) -> None:
        try:
            self.world.validate()
            self.loss_spec()
            self.content_spec()
            enc.Activation(self.encoder.activation)
            enc.OptimizerKind(self.optimizer.kind)
        except ValueError as e:
            raise ConfigError(str(e)) from None
        n_train = int(round(self.world.train_fraction * self.world.num_identities))
        n_test = self.world.num_identities - n_train
        checks = [
            (self.task in ("biometric", "sync"), f"unknown task {self.task!r}"),
            (self.steps >= 0, "steps must be >= 0"),
            (self.lambda_content >= 0, "lambda_content must be >= 0"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (self.task == "sync" or self.batch_size <= n_train,
             f"batch_size {self.batch_size} exceeds the {n_train} training identities"),
            (1 <= self.sync_batch_size <= self.world.frames,
             f"sync_batch_size must lie in [1, frames={self.world.frames}]"),
            (self.sync_clips_per_step >= 1, "sync_clips_per_step must be >= 1"),
            (self.encoder.output_dim >= 1 and all(h >= 1 for h in self.encoder.hidden),
             "encoder widths must be >= 1"),
            (self.optimizer.lr > 0, "learning rate must be positive"),
            (self.eval.every >= 1, "eval.every must be >= 1"),
            (n_test >= 2, "need at least two held-out identities"),
            (self.eval.clips_per_identity >= 2, "eval.clips_per_identity must be >= 2"),
            (1 <= self.eval.recall_k <= n_test, f"eval.recall_k must lie in [1, {n_test}]"),
            (0 < self.eval.cbm_positive_fraction < 1 and 0 < self.eval.sv_positive_fraction < 1,
             "positive fractions must lie in (0, 1)"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        """Build from nested dicts; unknown keys are an error."""
        return _from_dict(cls, doc, "config")


def _from_dict(cls, doc, where: str):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected an object")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(doc) - set(known))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    kwargs = {}
    for name, value in doc.items():
        default = known[name].default_factory() if known[name].default_factory is not dataclasses.MISSING \
            else known[name].default
        if dataclasses.is_dataclass(default):
            kwargs[name] = _from_dict(type(default), value, f"{where}.{name}")
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where}: {e}") from None


def config_schema() -> dict:
    """JSON Schema for :class:`ExperimentConfig` documents."""
    def schema_for(cls):
        props = {}
        inst = cls()
        for f in dataclasses.fields(cls):
            value = getattr(inst, f.name)
            if dataclasses.is_dataclass(value):
                props[f.name] = schema_for(type(value))
            elif isinstance(value, bool):
                props[f.name] = {"type": "boolean"}
            elif isinstance(value, int):
                props[f.name] = {"type": "integer"}
            elif isinstance(value, float):
                props[f.name] = {"type": "number"}
            elif isinstance(value, list):
                props[f.name] = {"type": "array", "items": {"type": "integer"}}
            elif value is None:
                props[f.name] = {"type": ["string", "null"]}
            else:
                props[f.name] = {"type": "string"}
        return {"type": "object", "additionalProperties": False, "properties": props}

    doc = schema_for(ExperimentConfig)
    doc["$schema"] = "https://json-schema.org/draft/2020-12/schema"
    doc["title"] = "xmodal experiment config"
    doc["properties"]["task"]["enum"] = ["biometric", "sync"]
    return doc


@dataclass
class RunReport:
    config: dict
    seed: int
    curve: list[dict] = field(default_factory=list)
    metrics: list[dict] = field(default_factory=list)
    scalars: dict[str, float] = field(default_factory=dict)
    checkpoint: str | None = None
    # excluded from serialized reports so they stay byte-reproducible
    wall_clock: float = 0.0
    model: "Model | None" = None

    @property
    def final(self) -> dict:
        return self.metrics[-1] if self.metrics else {}

    def to_json(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "seed": self.seed,
            "config": self.config,
            "scalars": dict(sorted(self.scalars.items())),
            "checkpoint": self.checkpoint,
            "metrics": self.metrics,
            "curve": self.curve,
        }


@dataclass
class Model:
    enc_a: enc.EncoderParams
    enc_v: enc.EncoderParams
    # trainable scalars per objective, 0-d arrays so optimizers update in place
    scalars: dict[str, np.ndarray]

    def parameters(self) -> dict[str, np.ndarray]:
        out = self.enc_a.parameters("a.")
        out.update(self.enc_v.parameters("v."))
        out.update(self.scalars)
        return out

    def touch(self) -> None:
        self.enc_a.touch()
        self.enc_v.touch()


def build_model(config: ExperimentConfig, rng: Rng) -> Model:
    heads = ("content",) if config.task == "sync" else ("identity", "content")
    e = config.encoder
    enc_a = enc.EncoderParams.create(config.world.dim_a, e.hidden, e.output_dim, heads, e.activation,
                                     rng.spawn("enc_a"))
    enc_v = enc.EncoderParams.create(config.world.dim_b, e.hidden, e.output_dim, heads, e.activation,
                                     rng.spawn("enc_v"))
    scalars = {}
    for head, spec in (("identity", config.loss_spec()), ("content", config.content_spec())):
        if head in heads and spec.has_scalars:
            w, b = default_scalars(spec, config.init_w, config.init_b)
            scalars[f"{head}.w"] = np.array(w)
            scalars[f"{head}.b"] = np.array(b)
    return Model(enc_a, enc_v, scalars)


# --------------------------------------------------------------------------
# objective
# --------------------------------------------------------------------------

def _scalars_for(model: Model, head: str) -> tuple[float, float]:
    if f"{head}.w" in model.scalars:
        return float(model.scalars[f"{head}.w"]), float(model.scalars[f"{head}.b"])
    return 0.0, 0.0


def _accumulate(grads: dict, new: dict, prefix: str, scale: float = 1.0) -> None:
    for k, g in new.items():
        key = prefix + k
        grads[key] = grads[key] + scale * g if key in grads else scale * g


def identity_objective(model: Model, spec: LossSpec, frames_a, frames_v, frames: int, select_idx):
    """Identity loss for stacked clips; A mean-pooled, V frame ``select_idx[j]`` of clip ``j``.

    Returns ``(LossResult, grads)`` with grads keyed like ``Model.parameters``.
    """
    ya, tape_a = enc.forward(model.enc_a, frames_a, "identity")
    yv, tape_v = enc.forward(model.enc_v, frames_v, "identity")
    n = ya.shape[0] // frames
    xa = ya.reshape(n, frames, -1).mean(axis=1)
    xv = yv.reshape(n, frames, -1)[np.arange(n), select_idx]
    w, b = _scalars_for(model, "identity")
    res = compute_loss(spec, xa, xv, w, b)
    grads: dict[str, np.ndarray] = {}
    ga, _ = enc.backward(tape_a, enc.pool_clips_backward(enc.PoolingRule.MEAN_OVER_TIME, res.grad_a, frames, None))
    gv, _ = enc.backward(tape_v, enc.pool_clips_backward(enc.PoolingRule.RANDOM_SELECT_ONE, res.grad_v, frames,
                                                         select_idx))
    _accumulate(grads, ga, "a.")
    _accumulate(grads, gv, "v.")
    if "identity.w" in model.scalars:
        grads["identity.w"] = np.array(res.grad_w)
        grads["identity.b"] = np.array(res.grad_b)
    return res, grads


def content_objective(model: Model, spec: LossSpec, frames_a, frames_v):
    """Content loss on one sync batch: row ``t`` of each side is timestep ``t``."""
    xa, tape_a = enc.forward(model.enc_a, frames_a, "content")
    xv, tape_v = enc.forward(model.enc_v, frames_v, "content")
    w, b = _scalars_for(model, "content")
    res = compute_loss(spec, xa, xv, w, b)
    grads: dict[str, np.ndarray] = {}
    _accumulate(grads, enc.backward(tape_a, res.grad_a)[0], "a.")
    _accumulate(grads, enc.backward(tape_v, res.grad_v)[0], "v.")
    if "content.w" in model.scalars:
        grads["content.w"] = np.array(res.grad_w)
        grads["content.b"] = np.array(res.grad_b)
    return res, grads


def _scaled(res: LossResult, s: float) -> LossResult:
    return LossResult(s * res.value, s * res.grad_a, s * res.grad_v, s * res.grad_w, s * res.grad_b,
                      {k: s * v for k, v in res.components.items()})


def training_step_objective(model: Model, config: ExperimentConfig, world: SyntheticWorld, rng: Rng):
    """Draw one step's batches and return ``(value, components, grads)``."""
    total = 0.0
    comps: dict[str, float] = {}
    grads: dict[str, np.ndarray] = {}

    def add(res, g, scale):
        nonlocal total
        total += scale * res.value
        for k, v in res.components.items():
            comps[k] = comps.get(k, 0.0) + scale * v
        _accumulate(grads, g, "", scale)

    T = world.frames
    if config.task == "biometric":
        clips = sample_biometric_batch(world, config.batch_size, rng)
        fa = np.vstack([c.frames_a for c in clips])
        fv = np.vstack([c.frames_b for c in clips])
        select = rng.integers(0, T, size=len(clips))
        res, g = identity_objective(model, config.loss_spec(), fa, fv, T, select)
        add(res, g, 1.0)
        content_weight = config.lambda_content
    else:
        content_weight = 1.0

    if content_weight > 0:
        spec = config.content_spec()
        per = content_weight / config.sync_clips_per_step
        for _ in range(config.sync_clips_per_step):
            sb = sample_sync_batch(world, config.sync_batch_size, rng)
            res, g = content_objective(model, spec, sb.frames_a, sb.frames_b)
            add(res, g, per)
    return total, comps, grads


# --------------------------------------------------------------------------
# evaluation
# --------------------------------------------------------------------------

@dataclass
class EvalSet:
    """Held-out clips and fixed trial lists, built once per run."""

    ids: np.ndarray  # identity per clip row
    frames_a: np.ndarray  # (clips * T) x dim_a
    frames_b: np.ndarray
    select: np.ndarray  # B frame used per clip
    first_clip: np.ndarray  # row of each identity's first clip
    cbm_pairs: np.ndarray
    cbm_labels: np.ndarray
    sv_pairs: np.ndarray
    sv_labels: np.ndarray
    probe_train: tuple[np.ndarray, np.ndarray]  # (B frames, content labels)
    probe_test: tuple[np.ndarray, np.ndarray]


def build_eval_set(world: SyntheticWorld, config: ExperimentConfig, rng: Rng) -> EvalSet:
    ec = config.eval
    T = world.frames
    clips = [make_clip(world, int(i), rng) for i in world.test_ids for _ in range(ec.clips_per_identity)]
    ids = np.array([c.identity_id for c in clips])
    select = rng.integers(0, T, size=len(clips))
    first = np.arange(0, len(clips), ec.clips_per_identity)
    cbm_pairs, cbm_labels = _sample_pairs(ids, ids, ec.cbm_pairs, ec.cbm_positive_fraction, rng, False)
    sv_pairs, sv_labels = _sample_pairs(ids, ids, ec.sv_pairs, ec.sv_positive_fraction, rng, True)

    train_pool = world.train_ids
    ptrain = [make_clip(world, int(train_pool[i]), rng)
              for i in rng.integers(0, len(train_pool), size=ec.probe_train_clips)]
    ptest = [clips[i] for i in first]
    return EvalSet(
        ids, np.vstack([c.frames_a for c in clips]), np.vstack([c.frames_b for c in clips]), select, first,
        cbm_pairs, cbm_labels, sv_pairs, sv_labels,
        (np.vstack([c.frames_b for c in ptrain]), np.concatenate([c.content_labels for c in ptrain])),
        (np.vstack([c.frames_b for c in ptest]), np.concatenate([c.content_labels for c in ptest])),
    )


def evaluate(model: Model, es: EvalSet, config: ExperimentConfig, T: int) -> dict:
    out: dict[str, float] = {}
    if "identity" in model.enc_a.heads:
        ya, _ = enc.forward(model.enc_a, es.frames_a, "identity")
        yv, _ = enc.forward(model.enc_v, es.frames_b, "identity")
        n = ya.shape[0] // T
        emb_a = ya.reshape(n, T, -1).mean(axis=1)
        emb_v = yv.reshape(n, T, -1)[np.arange(n), es.select]
        out["cbm_eer"] = eer(TrialSet(score_pairs(emb_a, emb_v, es.cbm_pairs), es.cbm_labels))[0]
        out["sv_eer"] = eer(TrialSet(score_pairs(emb_a, emb_a, es.sv_pairs), es.sv_labels))[0]
        out["vv_eer"] = eer(TrialSet(score_pairs(emb_v, emb_v, es.sv_pairs), es.sv_labels))[0]
        q, g = emb_a[es.first_clip], emb_v[es.first_clip]
        out["r_at_1"] = recall_at_k(q, g, 1)
        out["r_at_k"] = recall_at_k(q, g, config.eval.recall_k)
    if "content" in model.enc_v.heads:
        ftr, _ = enc.forward(model.enc_v, es.probe_train[0], "content")
        fte, _ = enc.forward(model.enc_v, es.probe_test[0], "content")
        pr = linear_probe(ftr, es.probe_train[1], fte, es.probe_test[1], config.world.content_classes,
                          epochs=config.eval.probe_epochs, k=config.eval.probe_k)
        out["probe_top1"] = pr.top1
        out["probe_topk"] = pr.topk
    return out


# --------------------------------------------------------------------------
# runs
# --------------------------------------------------------------------------

def run_experiment(config: ExperimentConfig, world: SyntheticWorld | None = None) -> RunReport:
    """Train and evaluate one configuration; deterministic given ``config.seed``."""
    config.validate()
    start = time.perf_counter()
    root = Rng(config.seed)
    if world is None:
        world = make_world(config.world, config.seed)
    elif world.config != config.world:
        raise ConfigError("supplied world does not match config.world")
    model = build_model(config, root.spawn("init"))
    opt = enc.OptimizerState(**asdict(config.optimizer))
    train_rng = root.spawn("train")
    es = build_eval_set(world, config, root.spawn("eval"))
    T = world.frames

    report = RunReport(config.to_dict(), config.seed)

    def log_metrics(step):
        m = evaluate(model, es, config, T)
        report.metrics.append({"step": step, "seed": config.seed, **{k: m[k] for k in METRIC_KEYS if k in m}})

    log_metrics(0)
    params = model.parameters()
    for step in range(1, config.steps + 1):
        value, comps, grads = training_step_objective(model, config, world, train_rng)
        bad = not np.isfinite(value) or any(not np.all(np.isfinite(g)) for g in grads.values())
        if bad:
            raise NumericalFailure(f"non-finite loss or gradient at step {step} (loss={value!r})")
        enc.step(opt, params, grads)
        model.touch()
        report.curve.append({"step": step, "loss_total": value,
                             **{f"loss_{k}": comps.get(k) for k in ("AV", "VA", "AAV", "VVA")}})
        if step % config.eval.every == 0 or step == config.steps:
            log_metrics(step)

    report.scalars = {k: float(v) for k, v in model.scalars.items()}
    report.model = model
    report.wall_clock = time.perf_counter() - start
    return report


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("XMODAL_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class Comparison:
    """Per-seed and mean final metrics for each loss, plus deltas vs. the first row."""

    names: list[str]
    seeds: list[int]
    per_seed: dict[str, list[dict]]
    means: dict[str, dict]
    deltas: dict[str, dict]
    # seconds per run, same layout as per_seed; not serialized
    wall_clock: dict[str, list[float]] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"schema_version": REPORT_SCHEMA_VERSION, "losses": self.names, "seeds": self.seeds,
                "per_seed": self.per_seed, "means": self.means, "deltas": self.deltas}


def _non_loss_fields(cfg: ExperimentConfig) -> dict:
    d = cfg.to_dict()
    for k in ("loss", "content_loss", "seed"):
        d.pop(k)
    return d


def _final_and_clock(config: ExperimentConfig) -> tuple[dict, float]:
    rep = run_experiment(config)
    return rep.final, rep.wall_clock


def compare_losses(configs: list[ExperimentConfig], seeds: list[int]) -> Comparison:
    """Run every config under every seed; configs may differ only in their loss."""
    if not configs or not seeds:
        raise ConfigError("need at least one config and one seed")
    base = _non_loss_fields(configs[0])
    for c in configs[1:]:
        if _non_loss_fields(c) != base:
            raise ConfigError("compared configs differ in more than the loss")
    names = []
    for c in configs:
        name = c.loss if c.content_loss in (None, c.loss) else f"{c.loss}+{c.content_loss}"
        names.append(name)
    jobs = [dataclasses.replace(c, seed=s) for c in configs for s in seeds]
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        runs = list(pool.map(_final_and_clock, jobs))
    finals = [f for f, _ in runs]

    per_seed, means, clocks = {}, {}, {}
    for i, name in enumerate(names):
        key = name if name not in per_seed else f"{name}#{i}"
        block = slice(i * len(seeds), (i + 1) * len(seeds))
        rows = finals[block]
        per_seed[key] = rows
        clocks[key] = [t for _, t in runs[block]]
        means[key] = {k: float(np.mean([r[k] for r in rows])) for k in METRIC_KEYS if k in rows[0]}
    keys = list(per_seed)
    deltas = {k: {m: means[k][m] - means[keys[0]][m] for m in means[k]} for k in keys}
    return Comparison(keys, list(seeds), per_seed, means, deltas, clocks)


# --------------------------------------------------------------------------
# end-to-end gradient check
# --------------------------------------------------------------------------

def _batched_encode(stack: dict[str, np.ndarray], prefix: str, trunk: int, head: str, x: np.ndarray,
                    activation: enc.Activation) -> np.ndarray:
    """Forward ``x`` through every perturbed copy of one encoder: ``(P, rows, out)``."""
    h = np.broadcast_to(x, (stack[f"{prefix}heads.{head}.bias"].shape[0],) + x.shape)
    for i in range(trunk):
        z = np.einsum("pti,poi->pto", h, stack[f"{prefix}trunk.{i}.weight"]) \
            + stack[f"{prefix}trunk.{i}.bias"][:, None, :]
        h = np.tanh(z) if activation is enc.Activation.TANH else np.maximum(z, 0.0)
    return np.einsum("pti,poi->pto", h, stack[f"{prefix}heads.{head}.weight"]) \
        + stack[f"{prefix}heads.{head}.bias"][:, None, :]


def pipeline_grad_check(spec: LossSpec, seed: int, n: int = 3, frames: int = 2,
                        dims=(3, 4), hidden: int = 3, out: int = 3, lambda_content: float = 0.5,
                        activation: str = "tanh") -> dict[str, float]:
    """Relative error per parameter for encoders -> pooling -> loss.

    The objective is an identity loss on ``n`` pooled clips (A mean over
    ``frames``, one selected V frame) plus ``lambda_content`` times a content
    loss on ``n`` unpooled frames, so both heads, the shared trunks and both
    objectives' scalars are covered. Returns ``{parameter name: error}``.
    """
    from .losses import FD_STEP, batched_values, relative_error

    rng = Rng(seed)
    act = enc.Activation(activation)

    def encoder(d):
        e = enc.EncoderParams.create(d, [hidden], out, ("identity", "content"), act, rng)
        for p in e.parameters().values():
            p[...] = rng.normal(size=p.shape, scale=0.8)
        return e

    scalars = {}
    if spec.has_scalars:
        lo, hi = ((0.5, 2.0), (-1.0, 1.0)) if spec.kind.value == "binary" else ((1.0, 8.0), (-3.0, 3.0))
        for head in ("identity", "content"):
            scalars[f"{head}.w"] = np.array(rng.uniform(*lo))
            scalars[f"{head}.b"] = np.array(rng.uniform(*hi))
    model = Model(encoder(dims[0]), encoder(dims[1]), scalars)
    fa = rng.normal(size=(n * frames, dims[0]))
    fv = rng.normal(size=(n * frames, dims[1]))
    sa = rng.normal(size=(n, dims[0]))
    sv = rng.normal(size=(n, dims[1]))
    select = rng.integers(0, frames, size=n)

    _, g_id = identity_objective(model, spec, fa, fv, frames, select)
    _, g_ct = content_objective(model, spec, sa, sv)
    analytic: dict[str, np.ndarray] = {}
    _accumulate(analytic, g_id, "")
    _accumulate(analytic, g_ct, "", lambda_content)

    params = model.parameters()
    names = sorted(params)
    sizes = [params[k].size for k in names]
    theta = np.concatenate([params[k].ravel() for k in names])
    k = theta.size
    stack = np.repeat(theta[None, :], 2 * k, axis=0)
    idx = np.arange(k)
    stack[2 * idx, idx] += FD_STEP
    stack[2 * idx + 1, idx] -= FD_STEP
    offsets = np.cumsum([0] + sizes)
    named = {nm: stack[:, offsets[i]:offsets[i + 1]].reshape((2 * k,) + params[nm].shape)
             for i, nm in enumerate(names)}

    def scal(head):
        if f"{head}.w" in named:
            return named[f"{head}.w"], named[f"{head}.b"]
        return np.zeros(2 * k), np.zeros(2 * k)

    ntr = len(model.enc_a.trunk)
    ya = _batched_encode(named, "a.", ntr, "identity", fa, act)
    yv = _batched_encode(named, "v.", ntr, "identity", fv, act)
    xa = ya.reshape(2 * k, n, frames, -1).mean(axis=2)
    xv = yv.reshape(2 * k, n, frames, -1)[:, np.arange(n), select]
    vals = batched_values(spec, xa, xv, *scal("identity"))
    ca = _batched_encode(named, "a.", ntr, "content", sa, act)
    cv = _batched_encode(named, "v.", ntr, "content", sv, act)
    vals = vals + lambda_content * batched_values(spec, ca, cv, *scal("content"))
    num = (vals[0::2] - vals[1::2]) / (2 * FD_STEP)

    return {nm: relative_error(analytic.get(nm, np.zeros_like(params[nm])), num[offsets[i]:offsets[i + 1]])
            for i, nm in enumerate(names)}

"""``xmodal`` command line.

Exit codes: 0 success, 1 usage error, 2 config or input/output error,
3 numerical failure. Failures print one line
``xmodal: error[<category>]: <message>`` to stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import losses, oracles
from .encoders import save_checkpoint
from .eval import TrialSet, eer, write_metrics_json
from .losses import PRESETS, LossSpec, loss_grad_check
from .numerics import Rng
from .report import FORMATS, dumps_json, emit_comparison, emit_report
from .synthdata import make_world
from .trainer import (ConfigError, ExperimentConfig, NumericalFailure, compare_losses, config_schema,
                      pipeline_grad_check, run_experiment)

log = logging.getLogger("xmodal")

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
GRAD_TOL = 1e-5


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _load_config(args) -> ExperimentConfig:
    doc = {}
    if getattr(args, "config", None):
        try:
            doc = json.loads(Path(args.config).read_text())
        except OSError as e:
            raise ConfigError(f"cannot read config: {e}") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"{args.config}: invalid JSON ({e})") from None
    cfg = ExperimentConfig.from_dict(doc)
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if getattr(args, "steps", None) is not None:
        cfg = dataclasses.replace(cfg, steps=args.steps)
    cfg.validate()
    return cfg


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_config(out: Path, cfg: ExperimentConfig) -> None:
    (out / "config.json").write_text(dumps_json(cfg.to_dict()))


def cmd_gen_world(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    make_world(cfg.world, cfg.seed).save(out / "world.json")
    _write_config(out, cfg)
    log.info("wrote %s", out / "world.json")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    _write_config(out, cfg)
    report = run_experiment(cfg)
    save_checkpoint(out / "checkpoint.json", {"a": report.model.enc_a, "v": report.model.enc_v},
                    report.scalars, cfg.seed)
    report.checkpoint = "checkpoint.json"
    for fmt in args.format:
        emit_report(report, fmt, out)
    log.info("final metrics %s", report.final)
    log.info("wall clock %.1fs", report.wall_clock)
    return EXIT_OK


def cmd_compare(args) -> int:
    base = _load_config(args)
    names = [n.strip() for n in args.losses.split(",") if n.strip()]
    for n in names:
        if n not in PRESETS:
            raise ConfigError(f"unknown loss preset {n!r}; known: {sorted(PRESETS)}")
    configs = [dataclasses.replace(base, loss=n, content_loss=None) for n in names]
    seeds = [base.seed + i for i in range(args.seeds)]
    comp = compare_losses(configs, seeds)
    out = _out_dir(args)
    _write_config(out, base)
    files = emit_comparison(comp, base.task, out, base.eval.probe_k)
    sys.stdout.write(files[1].read_text())
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        trials = TrialSet.from_csv(args.trials)
        rate, threshold = eer(trials)
    except OSError as e:
        raise ConfigError(f"cannot read trials: {e}") from None
    except ValueError as e:
        raise ConfigError(str(e)) from None
    metrics = {"eer": rate, "threshold": threshold, "num_same": trials.num_same,
               "num_different": trials.num_different, "schema_version": 1}
    if args.out:
        out = _out_dir(args)
        write_metrics_json(out / "metrics.json", metrics)
    print(json.dumps(metrics, sort_keys=True))
    return EXIT_OK


def run_gradcheck(instances: int) -> dict[str, float]:
    worst = {}
    for name, spec in PRESETS.items():
        emb = max(loss_grad_check(spec, 4, 3, s) for s in range(instances))
        pipe = max(max(pipeline_grad_check(spec, s).values()) for s in range(instances))
        worst[name] = max(emb, pipe)
    return worst


def cmd_gradcheck(args) -> int:
    worst = run_gradcheck(args.instances)
    failed = False
    for name, err in worst.items():
        ok = err < GRAD_TOL
        failed |= not ok
        print(f"{'PASS' if ok else 'FAIL'} gradcheck {name}: max relative error {err:.3e}")
    if failed:
        raise NumericalFailure("gradient check exceeded tolerance")
    return EXIT_OK


def _oracle_suite(trials: int = 20) -> list[tuple[str, bool]]:
    rng = Rng(12345)
    results = []
    loss_ok = True
    for _ in range(trials):
        n, d = int(rng.integers(1, 9)), int(rng.integers(2, 6))
        xa, xv = rng.normal(size=(n, d)), rng.normal(size=(n, d))
        for kind in ("cosine", "euclidean"):
            spec = LossSpec("cddl", kind)
            kw = {"w": 4.0, "bias": -1.0} if kind == "cosine" else {}
            res = losses.compute_loss(spec, xa, xv, 4.0, -1.0)
            loss_ok &= abs(res.value - oracles.loss_cddl(kind, xa, xv, **kw)) < 1e-10
    results.append(("softmax losses match enumeration", loss_ok))
    eer_ok = True
    for _ in range(trials):
        m = int(rng.integers(4, 60))
        scores = np.round(rng.normal(size=m), 1)
        labels = rng.integers(0, 2, size=m).astype(bool)
        labels[0], labels[1] = True, False
        eer_ok &= abs(eer(TrialSet(scores, labels))[0] - oracles.eer_sweep(scores, labels)) < 1e-9
    results.append(("eer matches threshold sweep", eer_ok))
    return results


def cmd_selftest(args) -> int:
    worst = run_gradcheck(args.instances)
    checks = [(f"gradcheck {k} < {GRAD_TOL:g}", v < GRAD_TOL) for k, v in worst.items()]
    checks += _oracle_suite()
    for name, ok in checks:
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    if not all(ok for _, ok in checks):
        raise NumericalFailure("selftest failed")
    return EXIT_OK


def cmd_schema(args) -> int:
    print(dumps_json(config_schema()), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="xmodal", description="Cross-modal self-supervised losses on a synthetic world.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, out_required=True):
        sp.add_argument("--config", help="JSON experiment config (see `xmodal schema`)")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--out", required=out_required, help="output directory")

    sp = sub.add_parser("gen-world", help="generate and dump a synthetic world")
    common(sp)
    sp.set_defaults(func=cmd_gen_world)

    sp = sub.add_parser("train", help="run one experiment")
    common(sp)
    sp.add_argument("--steps", type=int, help="override the number of training steps")
    sp.add_argument("--format", nargs="+", choices=FORMATS, default=list(FORMATS),
                    help="report formats to write (default: all)")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("compare", help="compare losses over several seeds")
    common(sp)
    sp.add_argument("--steps", type=int, help="override the number of training steps")
    sp.add_argument("--losses", required=True, help=f"comma-separated presets from {sorted(PRESETS)}")
    sp.add_argument("--seeds", type=int, default=5, help="number of consecutive seeds (default 5)")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("eval", help="EER of a `score,label` trial CSV")
    sp.add_argument("--trials", required=True, help="CSV with header score,label")
    sp.add_argument("--out", help="directory for metrics.json")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("gradcheck", help="finite-difference check of every loss and the full pipeline")
    sp.add_argument("--instances", type=int, default=100, help="random instances per loss (default 100)")
    sp.set_defaults(func=cmd_gradcheck)

    sp = sub.add_parser("selftest", help="gradient checks plus oracle-equivalence suites")
    sp.add_argument("--instances", type=int, default=20, help="random gradcheck instances per loss")
    sp.set_defaults(func=cmd_selftest)

    sp = sub.add_parser("schema", help="print the JSON schema of experiment configs")
    sp.set_defaults(func=cmd_schema)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"xmodal: error[usage]: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:  # --help
        return int(e.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as e:
        print(f"xmodal: error[usage]: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as e:
        print(f"xmodal: error[config]: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as e:
        print(f"xmodal: error[numerical]: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as e:
        print(f"xmodal: error[io]: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

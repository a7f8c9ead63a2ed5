"""Sync pretraining: MWM-angular vs CDDL-angular content features, scored by a linear probe."""

import argparse
import sys

import numpy as np

from xmodal.report import emit_comparison
from xmodal.trainer import ExperimentConfig, compare_losses

LOSSES = ("mwm-angular", "cddl-angular")


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", default="runs/sync_probe")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--steps", type=int, default=ExperimentConfig().steps)
    args = p.parse_args(argv)

    seeds = list(range(args.seeds))
    comp = compare_losses([ExperimentConfig(task="sync", loss=n, steps=args.steps) for n in LOSSES], seeds)
    emit_comparison(comp, "sync", args.out)

    top1 = {n: np.array([r["probe_top1"] for r in comp.per_seed[n]]) for n in LOSSES}
    for n in LOSSES:
        print(f"{n:13s} probe top-1 per seed {top1[n].tolist()} mean {top1[n].mean():.4f}")
    print(f"cddl >= mwm: {top1['cddl-angular'].mean() >= top1['mwm-angular'].mean()}")
    print(f"slowest run {max(max(t) for t in comp.wall_clock.values()):.1f}s", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())

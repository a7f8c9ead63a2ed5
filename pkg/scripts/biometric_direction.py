"""Biometric comparison: MWM-Euclidean vs MWM-angular vs CDDL-angular over five seeds.

Writes comparison.json / comparison.md under --out and prints the direction
checks on held-out SV EER.
"""

import argparse
import sys

import numpy as np

from xmodal.report import emit_comparison
from xmodal.trainer import ExperimentConfig, compare_losses

LOSSES = ("mwm-euclidean", "mwm-angular", "cddl-angular")


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", default="runs/biometric")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--steps", type=int, default=ExperimentConfig().steps)
    args = p.parse_args(argv)

    seeds = list(range(args.seeds))
    comp = compare_losses([ExperimentConfig(loss=n, steps=args.steps) for n in LOSSES], seeds)
    emit_comparison(comp, "biometric", args.out)

    sv = {n: np.array([r["sv_eer"] for r in comp.per_seed[n]]) for n in LOSSES}
    for n in LOSSES:
        print(f"{n:15s} SV EER per seed {np.round(sv[n], 4).tolist()} mean {sv[n].mean():.4f}"
              f"  CBM EER mean {comp.means[n]['cbm_eer']:.4f}")
    wins = int(np.sum(sv["mwm-angular"] > sv["cddl-angular"]))
    print(f"angular <= euclidean: {sv['mwm-angular'].mean() <= sv['mwm-euclidean'].mean()}")
    print(f"cddl <= mwm (angular): {sv['cddl-angular'].mean() <= sv['mwm-angular'].mean()}"
          f"  (cddl better in {wins}/{len(seeds)} seeds)")
    print(f"slowest run {max(max(t) for t in comp.wall_clock.values()):.1f}s", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())

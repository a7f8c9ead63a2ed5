"""Sweep the world's identity gain using the MWM-angular baseline only.

This is how the default gain was chosen: chance-level EERs before training,
and a final cross-modal EER that leaves room between the baseline and the
learnability floor. No other loss is run here, so the choice cannot favour one.
"""

import argparse
import dataclasses
import sys

from xmodal.synthdata import WorldConfig
from xmodal.trainer import ExperimentConfig, run_experiment


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--gains", type=float, nargs="+", default=[0.05, 0.1, 0.2, 0.5, 1.0])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=ExperimentConfig().steps)
    args = p.parse_args(argv)
    print("gain   init_cbm init_sv  final_cbm final_sv")
    for g in args.gains:
        cfg = ExperimentConfig(loss="mwm-angular", seed=args.seed, steps=args.steps,
                               world=dataclasses.replace(WorldConfig(), identity_gain=g))
        rep = run_experiment(cfg)
        first, last = rep.metrics[0], rep.final
        print(f"{g:<6g} {first['cbm_eer']:.4f}   {first['sv_eer']:.4f}   {last['cbm_eer']:.4f}    {last['sv_eer']:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

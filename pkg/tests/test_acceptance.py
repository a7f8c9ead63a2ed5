"""Acceptance suite: one test and one printed PASS/FAIL line per criterion.

The two directional comparisons train 25 default-size models and take
several minutes on one core.
"""

import dataclasses
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, tiny_config
from xmodal import oracles
from xmodal.eval import TrialSet, eer, recall_at_k
from xmodal.losses import (PRESETS, loss_aav, loss_av, loss_cddl, loss_grad_check, loss_mwm, loss_va,
                           loss_vva)
from xmodal.numerics import Rng
from xmodal.report import curve_csv, dumps_json, metrics_csv
from xmodal.similarity import SimilarityKernel
from xmodal.trainer import ExperimentConfig, compare_losses, pipeline_grad_check, run_experiment

SEEDS = [0, 1, 2, 3, 4]
# cbm_eer of the default MWM-angular biometric run at seed 0, pinned after the first verified run
GOLDEN_MWM_ANGULAR_CBM_EER = 0.10


def verdict(capsys, name: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} [{name}] {detail}"
    ACCEPTANCE_LINES.append(line)
    with capsys.disabled():
        print("\n" + line)


@pytest.fixture(scope="module")
def biometric_comparison():
    cfgs = [ExperimentConfig(loss=n) for n in ("mwm-euclidean", "mwm-angular", "cddl-angular")]
    return compare_losses(cfgs, SEEDS)


@pytest.fixture(scope="module")
def sync_comparison():
    cfgs = [ExperimentConfig(task="sync", loss=n) for n in ("mwm-angular", "cddl-angular")]
    return compare_losses(cfgs, SEEDS)


def test_gradient_correctness(capsys):
    start = time.perf_counter()
    worst = {}
    for name, spec in PRESETS.items():
        emb = max(loss_grad_check(spec, 4, 3, s) for s in range(100))
        e2e = max(max(pipeline_grad_check(spec, s).values()) for s in range(100))
        worst[name] = max(emb, e2e)
    elapsed = time.perf_counter() - start
    ok = max(worst.values()) < 1e-5 and elapsed < 10
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    verdict(capsys, "gradient correctness", ok,
            f"max rel. error per loss over 100 instances (embeddings, w, b, encoders): {detail}; {elapsed:.1f}s")
    assert ok


def test_oracle_equivalence(capsys):
    worst_loss = 0.0
    pairs = [(loss_av, oracles.loss_av), (loss_va, oracles.loss_va), (loss_aav, oracles.loss_aav),
             (loss_vva, oracles.loss_vva), (loss_mwm, oracles.loss_mwm), (loss_cddl, oracles.loss_cddl)]
    for seed in range(40):
        r = Rng(seed)
        n, d = int(r.integers(1, 9)), int(r.integers(2, 6))
        xa, xv = r.normal(size=(n, d)), r.normal(size=(n, d))
        w, b = float(r.uniform(0.5, 10)), float(r.uniform(-5, 5))
        for kind, kernel, kw in (("cosine", SimilarityKernel.cosine(w, b), {"w": w, "bias": b}),
                                 ("euclidean", SimilarityKernel.euclidean(), {})):
            for fast, slow in pairs:
                worst_loss = max(worst_loss, abs(fast(kernel, xa, xv).value - slow(kind, xa, xv, **kw)))

    worst_eer = 0.0
    sizes = [int(Rng(i).integers(2, 400)) for i in range(30)] + [10_000]
    for i, m in enumerate(sizes):
        r = Rng(1000 + i)
        labels = r.integers(0, 2, size=m).astype(bool)
        labels[0], labels[1] = True, False
        # coarse scores keep the brute-force sweep tractable at 10^4 trials and exercise ties
        scores = np.round(labels * 0.8 + r.normal(size=m), 2)
        worst_eer = max(worst_eer, abs(eer(TrialSet(scores, labels))[0] - oracles.eer_sweep(scores, labels)))

    recall_exact = True
    for seed in range(20):
        r = Rng(seed)
        q, g = r.normal(size=(10, 4)), r.normal(size=(12, 4))
        if seed % 2:
            g[3] = g[5]  # ties
            q[5] = g[5]
        recall_exact &= all(recall_at_k(q, g, k) == oracles.recall_at_k(q, g, k) for k in range(1, 13))

    ok = worst_loss < 1e-10 and worst_eer < 1e-9 and recall_exact
    verdict(capsys, "oracle equivalence", ok,
            f"softmax losses max |diff| {worst_loss:.1e} (N<=8); eer max |diff| {worst_eer:.1e} "
            f"(up to 10^4 trials); recall_at_k exact: {recall_exact}")
    assert ok


def test_structural_invariants(capsys):
    fns = [loss_av, loss_va, loss_aav, loss_vva, loss_mwm, loss_cddl]
    nonneg = single_zero = True
    perm_err = scale_err = decomp_err = 0.0
    for seed in range(50):
        r = Rng(seed)
        n, d = int(r.integers(2, 9)), int(r.integers(2, 6))
        xa, xv = r.normal(size=(n, d)), r.normal(size=(n, d))
        perm = r.permutation(n)
        for kernel in (SimilarityKernel.cosine(float(r.uniform(1, 10)), -5.0), SimilarityKernel.euclidean()):
            for fn in fns:
                v = fn(kernel, xa, xv).value
                nonneg &= v >= 0
                perm_err = max(perm_err, abs(fn(kernel, xa[perm], xv[perm]).value - v))
                single_zero &= fn(kernel, xa[:1], xv[:1]).value == 0.0
            decomp = (loss_mwm(kernel, xa, xv).value + loss_aav(kernel, xa, xv).value
                      + loss_vva(kernel, xa, xv).value)
            decomp_err = max(decomp_err, abs(loss_cddl(kernel, xa, xv).value - decomp))
        ang = SimilarityKernel.cosine()
        sa, sv = r.uniform(0.01, 100, size=(n, 1)), r.uniform(0.01, 100, size=(n, 1))
        for fn in (loss_mwm, loss_cddl):
            scale_err = max(scale_err, abs(fn(ang, sa * xa, sv * xv).value - fn(ang, xa, xv).value))
    ok = (nonneg and single_zero and perm_err < 1e-12 and scale_err < 1e-10 and decomp_err < 1e-12)
    verdict(capsys, "structural invariants", ok,
            f"nonneg {nonneg}; N=1 exactly 0 {single_zero}; permutation {perm_err:.1e}; "
            f"angular scale {scale_err:.1e}; CDDL decomposition {decomp_err:.1e}")
    assert ok


def test_biometric_direction(capsys, biometric_comparison):
    comp = biometric_comparison
    sv = {n: np.array([r["sv_eer"] for r in comp.per_seed[n]]) for n in comp.names}
    mean = {n: float(v.mean()) for n, v in sv.items()}
    gaps = sv["mwm-angular"] - sv["cddl-angular"]
    wins = int(np.sum(gaps > 0))
    slowest = max(max(t) for t in comp.wall_clock.values())
    checks = {
        "cddl<=mwm": mean["cddl-angular"] <= mean["mwm-angular"],
        "angular<=euclidean": mean["mwm-angular"] <= mean["mwm-euclidean"],
        "cddl gap>0 in >=4/5": wins >= 4,
        "run<=120s": slowest <= 120,
    }
    ok = all(checks.values())
    verdict(capsys, "biometric direction", ok,
            "mean SV EER " + ", ".join(f"{n} {m:.4f}" for n, m in mean.items())
            + f"; CDDL better in {wins}/5 seeds; slowest run {slowest:.0f}s; "
            + ", ".join(f"{k}: {v}" for k, v in checks.items()))
    assert ok


def test_sync_probe_direction(capsys, sync_comparison):
    comp = sync_comparison
    top1 = {n: float(np.mean([r["probe_top1"] for r in comp.per_seed[n]])) for n in comp.names}
    slowest = max(max(t) for t in comp.wall_clock.values())
    ok = top1["cddl-angular"] >= top1["mwm-angular"] and slowest <= 180
    verdict(capsys, "sync probe direction", ok,
            f"mean probe top-1 cddl-angular {top1['cddl-angular']:.4f} vs mwm-angular {top1['mwm-angular']:.4f} "
            f"over {len(SEEDS)} seeds; slowest run {slowest:.0f}s")
    assert ok


def test_learnability_floor(capsys, biometric_comparison):
    rows = biometric_comparison.per_seed["mwm-angular"]
    cbm = rows[0]["cbm_eer"]
    assert rows[0]["seed"] == 0 and rows[0]["step"] == ExperimentConfig().steps
    ok = cbm < 0.15
    verdict(capsys, "learnability floor", ok,
            f"default MWM-angular run, seed 0, step 2000: CBM EER {cbm:.4f} "
            f"(golden {GOLDEN_MWM_ANGULAR_CBM_EER:.4f}); seeds 0-4: "
            + ", ".join(f"{r['cbm_eer']:.3f}" for r in rows))
    assert ok
    # regression guard for the pinned baseline; loose enough for other BLAS builds
    assert abs(cbm - GOLDEN_MWM_ANGULAR_CBM_EER) < 0.02


def test_determinism(capsys):
    configs = [tiny_config(seed=5), tiny_config(task="sync", seed=9),
               dataclasses.replace(ExperimentConfig(loss="mwm-angular"), steps=60, seed=11)]
    identical = True
    for cfg in configs:
        blobs = []
        for _ in range(2):
            rep = run_experiment(cfg)
            blobs.append((dumps_json(rep.to_json()), curve_csv(rep.curve), metrics_csv(rep.metrics)))
        identical &= blobs[0] == blobs[1]
    verdict(capsys, "determinism", identical,
            f"{len(configs)} (config, seed) pairs run twice: JSON/CSV reports byte-identical {identical}")
    assert identical

"""Acceptance gate: one test per criterion, each printing a pass/fail line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines.  The full-scale digit experiment requires the four standard IDX
files in the directory named by ROCKRELAX_MNIST_DIR and is skipped
otherwise; the synthetic-blob variant is the always-on CI gate.
"""

import os
import time
from pathlib import Path

import numpy as np
import pytest

from rockrelax.data import (
    ContaminatedDataset,
    inject_ncar,
    load_idx,
    make_synthetic_blobs,
    split,
    subset_classes,
)
from rockrelax.models import Architecture, LossKind, MNIST3_WIDTHS, fgsm_perturb, init_params
from rockrelax.reweight import ReweightConfig, WeightShift, auto_tune_gamma, partition_losses
from rockrelax.trainer import TrainConfig, gradient_step, reweight_step, run
from rockrelax.verify import (
    pruning_identity_suite,
    gradient_check_suite,
    oracle_equivalence_suite,
    relaxation_ordering_suite,
)


def report(criterion, ok, detail=""):
    line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}" + (f" ({detail})" if detail else "")
    print(line)
    assert ok, line


def pristine(ds):
    return ContaminatedDataset(ds.features, ds.clean_labels, ds.clean_labels,
                               np.empty(0, dtype=int), ds.num_classes)


def contaminated_splits(seed, rate, per_class=1000, dim=10, separation=6.0):
    """Blobs -> NCAR on the training pool -> train/val carve-out + pristine test."""
    ds = make_synthetic_blobs(3, per_class, dim, separation, seed=seed)
    observed, chosen = inject_ncar(ds.clean_labels, rate, 3, seed=seed + 100)
    ds = ContaminatedDataset(ds.features, observed, ds.clean_labels, chosen, 3)
    train, val, test = split(ds, (0.64, 0.16, 0.2), seed=seed + 200)
    return train, val, pristine(test)


BLOB_ARCH = Architecture((10, 64, 64, 3))


def blob_config(mode, seed, estimate=0.6, iters=10):
    return TrainConfig(
        mode=mode, loss_kind=LossKind.CCE, epochs_per_iteration=10, batch_size=32,
        learning_rate=0.1,
        reweight=ReweightConfig(gamma=0.4, mu=0.5, contamination_estimate=estimate),
        max_iterations=iters, seed=seed)


def test_criterion_1_oracle_equivalence():
    start = time.time()
    suite = oracle_equivalence_suite(trials=1000, seed=0, tol=1e-9)
    elapsed = time.time() - start
    report("1 oracle equivalence", suite.ok and elapsed <= 30,
           f"{suite.passed}/1000 in {elapsed:.1f}s")


def test_criterion_2_pruning_identities():
    suite = pruning_identity_suite(trials=1000, seed=1)
    report("2 pruning identities", suite.ok, f"{suite.passed}/1000")


def test_criterion_3_relaxation_ordering():
    suite = relaxation_ordering_suite(trials=1000, seed=2)
    report("3 relaxation ordering", suite.ok, f"{suite.passed}/1000, 0 violations required")


def test_criterion_4_gradient_correctness():
    start = time.time()
    # 300 trials cycle CCE/MAE/MSE, i.e. 100 random small models per loss kind
    suite = gradient_check_suite(trials=300, seed=3, step=1e-5, rel_tol=1e-4)
    elapsed = time.time() - start
    report("4 gradient correctness", suite.ok and elapsed <= 60,
           f"{suite.passed}/300 in {elapsed:.1f}s")


def test_criterion_5_blob_ci_gate():
    start = time.time()
    gaps = []
    for seed in (0, 1, 2):
        train, val, test = contaminated_splits(seed, rate=0.6)
        _, erm = run(train, val, test, blob_config("erm", seed), BLOB_ARCH)
        _, rrm = run(train, val, test, blob_config("rrm", seed), BLOB_ARCH)
        gaps.append(rrm.test_at_peak_validation - erm.test_at_peak_validation)
    elapsed = time.time() - start
    gap = float(np.mean(gaps))
    report("5 (CI gate) blob reweighting benefit", gap >= 0.05 and elapsed <= 120,
           f"mean gap {100 * gap:.1f} points in {elapsed:.0f}s")


MNIST_DIR = os.environ.get("ROCKRELAX_MNIST_DIR")


@pytest.mark.skipif(
    not MNIST_DIR,
    reason="set ROCKRELAX_MNIST_DIR to a directory with the four standard IDX files")
def test_criterion_5_mnist3_full_scale():
    root = Path(MNIST_DIR)
    features, labels = load_idx(root / "train-images-idx3-ubyte",
                                root / "train-labels-idx1-ubyte")
    tfeat, tlab = load_idx(root / "t10k-images-idx3-ubyte", root / "t10k-labels-idx1-ubyte")
    pool = subset_classes(ContaminatedDataset.clean(features, labels, 10), {0, 1, 2})
    test = subset_classes(ContaminatedDataset.clean(tfeat, tlab, 10), {0, 1, 2})
    assert pool.n == 18623 and test.n == 3147

    start = time.time()
    gaps = []
    for seed in (0, 1, 2):
        observed, chosen = inject_ncar(pool.clean_labels, 0.6, 3, seed=seed)
        cont = ContaminatedDataset(pool.features, observed, pool.clean_labels, chosen, 3)
        train, val = split(cont, (0.8, 0.2), seed=seed)
        cfg = dict(loss_kind=LossKind.CCE, epochs_per_iteration=10, batch_size=32,
                   learning_rate=0.1, reweight=ReweightConfig(gamma=0.4, mu=0.5),
                   max_iterations=10, seed=seed)
        _, erm = run(train, val, test, TrainConfig(mode="erm", **cfg),
                     Architecture(MNIST3_WIDTHS))
        _, rrm = run(train, val, test, TrainConfig(mode="rrm", **cfg),
                     Architecture(MNIST3_WIDTHS))
        gaps.append(rrm.test_at_peak_validation - erm.test_at_peak_validation)
    elapsed = time.time() - start
    gap = float(np.mean(gaps))
    report("5 full-scale 3-digit reweighting benefit", gap >= 0.10 and elapsed <= 1800,
           f"mean gap {100 * gap:.1f} points in {elapsed:.0f}s")


def test_criterion_6_auto_tune_pruning():
    rng = np.random.default_rng(6)
    trials = ok = 0
    for c_prime in (0.1, 0.25, 0.5):
        done = 0
        while done < 100:
            c = rng.uniform(0, 10, size=int(rng.integers(4, 50)))
            if np.unique(c).size < c.size:
                continue
            done += 1
            trials += 1
            gamma = auto_tune_gamma(c, c_prime)
            if partition_losses(c, gamma).pruned_fraction >= c_prime:
                ok += 1
    report("6 auto-tune pruning", ok == trials == 300, f"{ok}/{trials}")


def test_criterion_7_weight_evolution_selectivity():
    passed = []
    for seed in (0, 1, 2):
        train, val, test = contaminated_splits(seed, rate=0.2, per_class=800)
        cfg = blob_config("rrm", seed, estimate=0.2)
        _, rec = run(train, val, test, cfg, BLOB_ARCH)
        last = rec.iterations[-1]
        n_cont = train.contaminated_set.size
        n_clean = train.n - n_cont
        frac_cont = last.hist_contaminated[-1] / n_cont
        frac_clean = last.hist_clean[-1] / n_clean
        passed.append(frac_cont >= 3 * frac_clean and frac_cont > 0)
    report("7 weight-evolution selectivity", all(passed), f"3 seeds: {passed}")


def test_criterion_8_erm_trajectory_equivalence():
    train, val, test = contaminated_splits(8, rate=0.2, per_class=200, dim=6)
    arch = Architecture((6, 16, 3))
    base = dict(loss_kind=LossKind.CCE, epochs_per_iteration=1, batch_size=16,
                learning_rate=0.1, max_iterations=1, seed=8)
    cfg_erm = TrainConfig(mode="erm", reweight=ReweightConfig(), **base)
    # gamma too large to prune: the reweighting step returns u = 0 every time
    cfg_rrm = TrainConfig(mode="rrm", reweight=ReweightConfig(gamma=1e12, mu=0.5), **base)

    m_erm = m_rrm = init_params(arch, 8)
    rng_erm, rng_rrm = np.random.default_rng(8), np.random.default_rng(8)
    u = WeightShift.zero(train.n)
    deviation = 0.0
    for _ in range(5):  # five epochs, compared after each one
        m_erm = gradient_step(m_erm, train, WeightShift.zero(train.n), cfg_erm, rng_erm)
        m_rrm = gradient_step(m_rrm, train, u, cfg_rrm, rng_rrm)
        u, _ = reweight_step(m_rrm, train, u, cfg_rrm)
        deviation = max(deviation, float(np.max(np.abs(m_erm.theta - m_rrm.theta))))
    report("8 ERM trajectory equivalence", deviation <= 1e-12,
           f"max |dtheta| = {deviation:.2e}")


def test_criterion_9_fgsm_contract():
    rng = np.random.default_rng(9)
    arch = Architecture((8, 6, 3))
    ok = True
    for t in range(1000):
        model = init_params(arch, t % 17)
        x = rng.uniform(size=8)
        y = int(rng.integers(0, 3))
        eps = float(rng.choice([0.05, 0.1, 0.25]))
        xp = fgsm_perturb(model, x, y, eps, LossKind.CCE)
        ok &= bool(np.all((xp == x) | (xp == x + eps) | (xp == x - eps)))
        ok &= bool(np.array_equal(fgsm_perturb(model, x, y, 0.0, LossKind.CCE), x))
        if not ok:
            break
    report("9 FGSM contract", ok, "1000 random inputs")

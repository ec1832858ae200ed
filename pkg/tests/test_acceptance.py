"""Acceptance suite: one test per criterion, one printed line per criterion.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the pass/fail
lines as they happen. The synthetic end-to-end criteria share one training
run, so the whole module stays inside the stated runtime budgets.
"""

import time

import numpy as np
import pytest

from regbank.cli import main as cli_main
from regbank.config import default_config
from regbank.descriptor import (extract_training_descriptors,
                                pad_sequence, weighted_score_curves)
from regbank.matcher import MatcherConfig, train_folded_matchers, train_matcher
from regbank.pipeline import run_systems, sweep_segment_size
from regbank.regforest import (ForestConfig, RegressorForest, forest_estimate,
                               sample_test_pool, select_best_test, split_cost,
                               train_forest)
from regbank.svm import (KernelSpec, dual_objective, kernel_eval,
                         kernel_matrix, kkt_violation, smo_train_binary)

from test_descriptor import oracle_curves, random_forest
from test_regforest import oracle_best_test


def check(criterion: int, label: str, passed: bool, detail: str = ""):
    status = "PASS" if passed else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"[criterion {criterion:2d}] {label}: {status}{suffix}")
    assert passed, f"criterion {criterion} failed: {label}{suffix}"


# ---------------------------------------------------------------------------
# shared synthetic end-to-end run (criteria 6, 7, 8)
# ---------------------------------------------------------------------------

BENCH_SYSTEMS = ["bor_linear", "bor_chi2", "bor_plus", "phi_hat",
                 "max_voting", "bow"]


def bench_config():
    cfg = default_config()
    cfg.update({
        "synth.enable": True,
        "synth.seed": 7,
        "synth.classes": 5,
        "synth.events_per_class": 100,
        "synth.units_per_class": 5,
        "synth.unit_ms": 150.0,
        "synth.noise_sigma": 0.01,
        "synth.duration_jitter": 0.2,
        "synth.shared_histogram": True,
        "synth.train_fraction": 0.5,
        "forest.trees": 10,
        "forest.tests_per_node": 500,
        "forest.max_depth": 12,
        "forest.min_samples": 20,
        "matcher.trees": 40,
        "matcher.folds": 10,
        "svm.c_grid": "0.1,1,10,100",
        "svm.gamma_grid": "0.5,1,2",
        "svm.tune_folds": 5,
        "bow.codebook_sizes": "50,100,150",
        "bow.kmeans_iters": 30,
    })
    return cfg


@pytest.fixture(scope="module")
def bench():
    start = time.perf_counter()
    results = run_systems(bench_config(), systems=BENCH_SYSTEMS)
    elapsed = time.perf_counter() - start
    acc = {name: res.report.accuracy for name, res in results.items()}
    return {"results": results, "accuracy": acc, "elapsed": elapsed}


# ---------------------------------------------------------------------------
# criterion 1: descriptor pipeline vs brute-force triple loop
# ---------------------------------------------------------------------------

def test_criterion_1_descriptor_oracle():
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    n_instances = 100
    worst = 0.0
    for _ in range(n_instances):
        dim = int(rng.integers(2, 5))
        n_classes = int(rng.integers(1, 5))          # C <= 4
        n_segments = int(rng.integers(1, 21))        # N <= 20
        bank = [random_forest(rng, dim=dim, n_trees=int(rng.integers(1, 4)),
                              class_id=c)            # T <= 3
                for c in range(n_classes)]
        feats = rng.normal(size=(n_segments, dim))
        padded = pad_sequence(feats, 5)
        post = rng.random((len(padded), max(n_classes, 2)))
        post /= post.sum(axis=1, keepdims=True)

        for c, forest in enumerate(bank):
            curves = weighted_score_curves(forest, post[:, c], padded)
            fast = 0.5 * (curves.f_plus.max() + curves.f_minus.max())
            o_plus, o_minus = oracle_curves(forest, post[:, c], padded)
            slow = 0.5 * (max(o_plus) + max(o_minus))
            worst = max(worst, abs(fast - slow),
                        np.abs(curves.f_plus - o_plus).max(),
                        np.abs(curves.f_minus - o_minus).max())
    elapsed = time.perf_counter() - start
    check(1, "descriptor pipeline equals triple-loop oracle",
          worst <= 1e-9 and elapsed < 30.0,
          f"{n_instances} instances, max |diff| {worst:.2e}, "
          f"{elapsed:.1f}s")


# ---------------------------------------------------------------------------
# criterion 2: split selection vs exhaustive pool minimisation
# ---------------------------------------------------------------------------

def test_criterion_2_split_oracle():
    rng = np.random.default_rng(202)
    start = time.perf_counter()
    n_nodes = 100
    worst = 0.0
    checked = 0
    for _ in range(n_nodes):
        n = int(rng.integers(2, 51))                 # samples <= 50
        dim = int(rng.integers(2, 8))
        x = rng.normal(size=(n, dim))
        idx = np.arange(n, dtype=float)
        d = np.column_stack([idx, n - 1 - idx])
        pool = sample_test_pool(rng, x, int(rng.integers(1, 201)))
        oracle_idx, oracle_cost, unique = oracle_best_test(pool, x, d)
        if oracle_idx is None:
            continue
        chosen = select_best_test(pool, x, d)
        mask = x[:, chosen.channel] > chosen.threshold
        cost = split_cost(d[~mask], d[mask])
        worst = max(worst, abs(cost - oracle_cost))
        if unique:
            assert chosen == pool[oracle_idx]
        checked += 1
    elapsed = time.perf_counter() - start
    check(2, "split selection equals exhaustive pool minimum",
          worst <= 1e-9 * (1 + oracle_cost) and elapsed < 30.0,
          f"{checked} nodes, max cost diff {worst:.2e}, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# criterion 3: forest estimate equals the mean of per-tree densities
# ---------------------------------------------------------------------------

def test_criterion_3_forest_averaging():
    rng = np.random.default_rng(303)
    worst = 0.0
    for _ in range(20):
        events = [rng.normal(size=(int(rng.integers(2, 10)), 4))
                  for _ in range(6)]
        cfg = ForestConfig(n_trees=int(rng.integers(1, 6)),
                           tests_per_node=30, max_depth=4, min_samples=2)
        forest = train_forest(events, cfg, seed=int(rng.integers(1000)))
        x = rng.normal(size=4)
        n_prime = int(rng.integers(0, 30))
        p_plus, p_minus = forest_estimate(forest, x, n_prime, 40)
        singles = [forest_estimate(
            RegressorForest(trees=[t], class_id=0, config=cfg, seed=(0,)),
            x, n_prime, 40) for t in forest.trees]
        mean_plus = np.mean([s[0] for s in singles], axis=0)
        mean_minus = np.mean([s[1] for s in singles], axis=0)
        worst = max(worst, np.abs(p_plus - mean_plus).max(),
                    np.abs(p_minus - mean_minus).max())
    check(3, "forest density is the mean of per-tree densities",
          worst <= 1e-12, f"max |diff| {worst:.2e}")


# ---------------------------------------------------------------------------
# criterion 4: normalization and posterior invariants
# ---------------------------------------------------------------------------

def test_criterion_4_normalization_invariants():
    rng = np.random.default_rng(404)
    n_classes, n_events = 3, 12
    feats, labels = [], []
    for i in range(n_events):
        c = i % n_classes
        feats.append(rng.normal(size=(int(rng.integers(3, 8)), 6)) + 2.0 * c)
        labels.append(c)
    fcfg = ForestConfig(n_trees=3, tests_per_node=40, max_depth=4,
                        min_samples=3)
    bank = [train_forest([f for f, l in zip(feats, labels) if l == c],
                         fcfg, seed=c, class_id=c)
            for c in range(n_classes)]
    folded = train_folded_matchers(feats, labels, 3,
                                   MatcherConfig(n_trees=10), seed=1)
    raw, hats, stats, normalized = extract_training_descriptors(
        feats, bank, folded)

    x_all = np.vstack(feats)
    y_all = np.concatenate([np.full(len(f), l)
                            for f, l in zip(feats, labels)])
    full = train_matcher(x_all, y_all, MatcherConfig(n_trees=10), seed=2)
    post = full.posterior_matrix(rng.normal(size=(200, 6)) * 2)

    ok = ((raw >= 0).all() and (normalized >= 0).all()
          and all(abs(row.sum() - 1.0) <= 1e-9
                  for row in normalized if row.sum() > 0)
          and np.all(np.abs(hats.sum(axis=1) - 1.0) <= 1e-9)
          and (post >= 0).all()
          and np.all(np.abs(post.sum(axis=1) - 1.0) <= 1e-9))
    check(4, "descriptors nonnegative/l1 and posteriors on the simplex", ok)


# ---------------------------------------------------------------------------
# criterion 5: kernel and SMO correctness
# ---------------------------------------------------------------------------

def test_criterion_5_kernel_and_smo():
    rng = np.random.default_rng(505)

    # extended Gaussian kernel: unit diagonal, symmetric
    recs = [{"phi": rng.dirichlet(np.ones(4)),
             "phi_hat": rng.dirichlet(np.ones(4))} for _ in range(10)]
    spec = KernelSpec("extended_gaussian", channels=("phi", "phi_hat"),
                      scales={"phi": 0.8, "phi_hat": 0.6})
    gram = kernel_matrix(spec, recs)
    kernel_ok = (np.abs(np.diag(gram) - 1.0).max() <= 1e-12
                 and np.abs(gram - gram.T).max() <= 1e-12
                 and abs(kernel_eval(spec, recs[0], recs[0]) - 1.0) <= 1e-12)

    # analytic two-point dual solution
    k2 = np.asarray([[1.0, -1.0], [-1.0, 1.0]])
    y2 = np.asarray([-1.0, 1.0])
    alpha, bias = smo_train_binary(k2, y2, c_reg=100.0)
    two_point_ok = (np.abs(alpha - 0.5).max() <= 1e-6
                    and abs(bias) <= 1e-6
                    and abs(dual_objective(k2, y2, alpha) - 0.5) <= 1e-6)

    # KKT on random separable sets
    kkt_ok = True
    for _ in range(10):
        n = int(rng.integers(6, 40))
        half = n // 2
        x = np.vstack([rng.normal(size=(half, 3)) - 4.0,
                       rng.normal(size=(n - half, 3)) + 4.0])
        y = np.concatenate([-np.ones(half), np.ones(n - half)])
        gram = x @ x.T
        c_reg = float(rng.choice([1.0, 10.0]))
        a, b = smo_train_binary(gram, y, c_reg)
        kkt_ok &= kkt_violation(gram, y, a, b, c_reg) <= 1e-3

    # XOR with an RBF kernel
    x = np.asarray([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    y = np.asarray([-1.0, 1.0, 1.0, -1.0])
    gram = np.exp(-((x[:, None] - x[None, :]) ** 2).sum(axis=2))
    a, b = smo_train_binary(gram, y, 10.0)
    xor_ok = (np.sign(gram @ (a * y) + b) == y).all()

    check(5, "kernels and SMO (diagonal, analytic, KKT, XOR)",
          kernel_ok and two_point_ok and kkt_ok and bool(xor_ok))


# ---------------------------------------------------------------------------
# criteria 6-8: shared-histogram synthetic benchmark
# ---------------------------------------------------------------------------

def test_criterion_6_structure_beats_histograms(bench):
    acc = bench["accuracy"]
    gap = acc["bor_linear"] - acc["bow"]
    check(6, "linear structural descriptors beat tuned BoW by >= 10 points",
          acc["bor_linear"] >= 0.90 and gap >= 0.10
          and bench["elapsed"] < 300.0,
          f"bor_linear {acc['bor_linear']:.3f}, bow {acc['bow']:.3f}, "
          f"gap {gap * 100:.1f} pts, {bench['elapsed']:.0f}s")


def test_criterion_7_svm_dominates_max_voting(bench):
    acc = bench["accuracy"]
    check(7, "descriptor SVM at least matches max voting",
          acc["bor_chi2"] >= acc["max_voting"]
          and acc["bor_linear"] >= acc["max_voting"],
          f"bor_chi2 {acc['bor_chi2']:.3f}, "
          f"max_voting {acc['max_voting']:.3f}")


def test_criterion_8_fusion_sanity(bench):
    acc = bench["accuracy"]
    floor = max(acc["bor_chi2"], acc["phi_hat"]) - 0.01
    check(8, "fused descriptor within 1 point of its best input",
          acc["bor_plus"] >= floor,
          f"bor_plus {acc['bor_plus']:.3f}, floor {floor:.3f}")


# ---------------------------------------------------------------------------
# criterion 9: pipeline determinism (byte-identical reports and bundles)
# ---------------------------------------------------------------------------

def test_criterion_9_pipeline_determinism(tmp_path):
    args = ["pipeline", "--out", None, "--save-bundle", None,
            "--set", "synth.enable=true",
            "--set", "synth.classes=3",
            "--set", "synth.events_per_class=8",
            "--set", "synth.units_per_class=3",
            "--set", "synth.unit_ms=90",
            "--set", "forest.trees=3",
            "--set", "forest.tests_per_node=40",
            "--set", "forest.min_samples=6",
            "--set", "matcher.trees=8",
            "--set", "matcher.folds=2",
            "--set", "svm.c_grid=1,10",
            "--set", "svm.gamma_grid=1",
            "--set", "svm.tune_folds=2",
            "--set", "report.figures=false"]
    outs = []
    for run in ("r1", "r2"):
        run_args = list(args)
        run_args[2] = str(tmp_path / run)
        run_args[4] = str(tmp_path / f"{run}.bundle")
        assert cli_main(run_args) == 0
        outs.append((
            (tmp_path / run / "report.txt").read_bytes(),
            (tmp_path / f"{run}.bundle").read_bytes(),
        ))
    check(9, "identical config and seed give byte-identical outputs",
          outs[0][0] == outs[1][0] and outs[0][1] == outs[1][1])


# ---------------------------------------------------------------------------
# criterion 10: segment-size sweep stability
# ---------------------------------------------------------------------------

def test_criterion_10_segment_size_sweep():
    cfg = default_config()
    cfg.update({
        "system": "bor_linear",
        "synth.enable": True,
        "synth.seed": 7,
        "synth.classes": 4,
        "synth.events_per_class": 40,
        "synth.units_per_class": 4,
        "synth.unit_ms": 150.0,
        "synth.noise_sigma": 0.01,
        "forest.trees": 8,
        "forest.tests_per_node": 300,
        "forest.min_samples": 15,
        "matcher.trees": 20,
        "matcher.folds": 5,
        "svm.c_grid": "1,10",
        "svm.gamma_grid": "1",
        "svm.tune_folds": 3,
    })
    rows = sweep_segment_size(cfg, sizes=[30, 40, 50, 60, 70, 80, 90, 100])
    ok_rows = [r for r in rows if r["status"] == "ok"]
    accs = [r["accuracy"] for r in ok_rows]
    spread = max(accs) - min(accs) if accs else 1.0
    check(10, "accuracy stable across 30-100 ms segment sizes",
          len(ok_rows) == 8 and spread <= 0.10,
          f"min {min(accs):.3f}, max {max(accs):.3f}, "
          f"spread {spread * 100:.1f} pts")

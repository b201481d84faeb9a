"""Acceptance suite: one test and one printed PASS/FAIL line per criterion."""
import itertools
import time
from importlib import resources
import json

import numpy as np
import pytest

from transphylo.analysis import Phenomenon, PhenomenonRate, count_phenomenon
from transphylo.classify import cross_validate, train_smo
from transphylo.corpus import parse_tagged_corpus, sample_equal
from transphylo.experiments import (ExperimentConfig, OTConfig, SourceIDConfig, default_gold, reconstruct_tree,
                                    run_ot_classification, run_source_id)
from transphylo.features import FeatureVector
from transphylo.phylo import (cut, euclidean_distances, parse_newick, project_gold, to_newick, ward_linkage)
from transphylo.synthetic import SyntheticConfig, generate_synthetic, planted_tree
from transphylo.treedist import Mode, dist, estimate_norm_constant, leaf_pair_distances, normalize, random_baseline

from conftest import ACCEPTANCE_LINES, META, random_binary_tree
from test_phylo import brute_force_ward


def report(n: int, ok: bool, detail: str):
    line = f"AC{n}: {'PASS' if ok else 'FAIL'} {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def structure(node):
    """Order-free structure with rounded lengths, for comparing trees."""
    if node.is_leaf:
        return (node.label, round(node.length, 9))
    return (frozenset(structure(c) for c in node.children), round(node.length, 9))


def test_ac1_metric_identity_and_hand_case():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    nonzero = 0
    for _ in range(100):
        g = random_binary_tree(rng, int(rng.integers(3, 18)))
        nonzero += sum(dist(g, g, m) != 0 for m in Mode)
    swap = dist(parse_newick("((A,C),B);"), parse_newick("((A,B),C);"), Mode.UNWEIGHTED)
    elapsed = time.perf_counter() - t0
    report(1, nonzero == 0 and swap == 2 and elapsed < 1.0,
           f"dist(g,g)!=0 in {nonzero}/200 cases; 3-leaf swap raw={swap}; {elapsed:.2f}s (<1s)")


def test_ac2_ward_matches_brute_force():
    t0 = time.perf_counter()
    rng = np.random.default_rng(202)
    mismatches = 0
    for _ in range(1000):
        X = rng.normal(size=(int(rng.integers(2, 7)), int(rng.integers(1, 5))))
        m = euclidean_distances([FeatureVector("s", x, str(i)) for i, x in enumerate(X)])
        got = ward_linkage(m)
        want = brute_force_ward(X)
        same = [frozenset({g.left, g.right}) for g in got] == [frozenset({a, b}) for a, b, _ in want]
        same = same and np.allclose([g.height for g in got], [h for _, _, h in want], rtol=1e-9, atol=0)
        mismatches += not same
    elapsed = time.perf_counter() - t0
    report(2, mismatches == 0 and elapsed < 30,
           f"{1000 - mismatches}/1000 merge sequences identical to brute force; {elapsed:.1f}s (<30s)")


def test_ac3_newick_round_trip():
    t0 = time.perf_counter()
    rng = np.random.default_rng(303)
    bad = 0
    for _ in range(1000):
        t = random_binary_tree(rng, int(rng.integers(2, 21)))
        back = parse_newick(to_newick(t))
        bad += structure(back.root) != structure(t.root)
    elapsed = time.perf_counter() - t0
    report(3, bad == 0 and elapsed < 5, f"{1000 - bad}/1000 trees round-trip within 1e-9; {elapsed:.2f}s (<5s)")


def test_ac4_projection_preserves_paths():
    rng = np.random.default_rng(404)
    worst = 0.0
    for _ in range(100):
        g = random_binary_tree(rng, int(rng.integers(3, 20)))
        labels = sorted(g.leaf_labels)
        keep = sorted(rng.choice(labels, size=int(rng.integers(2, len(labels) + 1)), replace=False))
        full = leaf_pair_distances(g, Mode.WEIGHTED)
        proj = leaf_pair_distances(project_gold(g, keep), Mode.WEIGHTED)
        for a, b in itertools.combinations(keep, 2):
            worst = max(worst, abs(full.value(a, b) - proj.value(a, b)))
    report(4, worst <= 1e-9, f"max path-length error {worst:.2e} over 100 trees x random keep-sets (<=1e-9)")


def test_ac5_planted_typology_recovery():
    t0 = time.perf_counter()
    cfg = SyntheticConfig(families=3, languages_per_family=4, tokens_per_language=30_000)
    gold = planted_tree(cfg)
    planted = sorted(sorted(c) for c in cut(gold, 3))
    norm = estimate_norm_constant(gold, Mode.UNWEIGHTED)
    recovered, scores = 0, []
    for seed in range(100):
        rng = np.random.default_rng(seed)
        data = generate_synthetic(cfg, rng)
        chunks = sample_equal(data.corpora, 30_000, rng)
        tree = reconstruct_tree(chunks, "pos_trigrams", {}, 1000)
        recovered += sorted(sorted(c) for c in cut(tree, 3)) == planted
        scores.append(normalize(dist(tree, gold, Mode.UNWEIGHTED), norm))
    base_mean, _ = random_baseline(gold, Mode.UNWEIGHTED, 1000, np.random.default_rng(555), norm)
    mean = float(np.mean(scores))
    elapsed = time.perf_counter() - t0
    ok = recovered >= 95 and mean < 0.5 * base_mean and elapsed < 120
    report(5, ok, f"families recovered in {recovered}/100 seeds (>=95); mean normalized dist {mean:.3f} "
                  f"< 0.5 x baseline {base_mean:.3f}; {elapsed:.0f}s (<120s)")


def test_ac6_smo():
    m = train_smo([[-1.0], [1.0]], [-1, 1], C=1.0)
    analytic = abs(m.weights[0] - 1) <= 1e-3 and abs(m.bias) <= 1e-3
    rng = np.random.default_rng(606)
    X = np.vstack([rng.normal(size=(50, 2)) + 4, rng.normal(size=(50, 2)) - 4])
    y = np.r_[np.ones(50), -np.ones(50)]
    train_acc = float((train_smo(X, y).predict(X) == y).mean())
    accs = []
    for seed in range(20):
        r = np.random.default_rng(seed)
        Xs = np.vstack([r.normal(size=(50, 5)) + 2, r.normal(size=(50, 5)) - 2])
        ys = list(r.permutation(["a"] * 50 + ["b"] * 50))
        accs.append(cross_validate(Xs, ys, 10, rng=r).accuracy)
    chance = float(np.mean(accs))
    report(6, analytic and train_acc == 1.0 and abs(chance - 0.5) <= 0.1,
           f"2-point w={m.weights[0]:.4f} b={m.bias:.4f}; separable train acc {train_acc:.2f}; "
           f"shuffled-label CV acc {chance:.3f} over 20 seeds (0.5+-0.1)")


def test_ac7_ot_and_source_id_sanity():
    cfg = ExperimentConfig(seed=7, synthetic=SyntheticConfig(), ot=OTConfig(),
                           source_id=SourceIDConfig(chunks=40, folds=10))
    ot = run_ot_classification(cfg)["feature_sets"]
    ot_acc = {fs: r["accuracy"] for fs, r in ot.items()}
    monotone = []
    for seed in range(3):
        cfg_s = ExperimentConfig(seed=seed, synthetic=SyntheticConfig(families=3, languages_per_family=2),
                                 source_id=SourceIDConfig(chunks=40, folds=10))
        row = run_source_id(cfg_s)["feature_sets"]["pos_trigrams"]
        monotone.append((row["accuracy"], row["family_accuracy"]))
    ok = ot_acc["pos_trigrams"] >= 0.95 and ot_acc["function_words"] >= 0.95
    ok = ok and all(f >= a for a, f in monotone)
    detail = ", ".join(f"{k}={v:.3f}" for k, v in ot_acc.items())
    runs = ", ".join(f"{a:.2f}->{f:.2f}" for a, f in monotone)
    report(7, ok, f"O-vs-T 10-fold CV ({detail}; trigrams and function words >=0.95); "
                  f"source-ID language->family accuracy per run: {runs}")


def test_ac8_random_baseline_stable_across_seeds():
    gold = default_gold()
    assert len(gold.leaf_labels) == 17
    norm = estimate_norm_constant(gold, Mode.UNWEIGHTED)
    a, _ = random_baseline(gold, Mode.UNWEIGHTED, 1000, np.random.default_rng(np.random.SeedSequence([11, 4])), norm)
    b, _ = random_baseline(gold, Mode.UNWEIGHTED, 1000, np.random.default_rng(np.random.SeedSequence([12, 4])), norm)
    report(8, abs(a - b) < 0.01, f"baseline means {a:.4f} vs {b:.4f}, difference {abs(a - b):.4f} (<0.01)")


def test_ac9_analysis_counters():
    data = resources.files("transphylo") / "data"
    corpus = parse_tagged_corpus((data / "analysis_fixture.tsv").read_text(encoding="utf-8"), META)
    want = json.loads((data / "analysis_fixture_counts.json").read_text(encoding="utf-8"))["window_2"]
    got = {p.value: count_phenomenon(corpus, p).count for p in Phenomenon}
    rate = PhenomenonRate(Phenomenon.DEFINITE_ARTICLE, 656, 10_000).rate
    ok = got == want and abs(rate - 0.656) < 1e-12
    report(9, ok, f"fixture counts {got} match hand-verified constants; 656/10000 -> {rate:.3f} per 10 tokens")


def test_ac10_full_corpus_figures_documented():
    ACCEPTANCE_LINES.append("AC10: NOT ASSERTED reproducing published full-corpus figures needs the licensed corpus; "
                            "see README (pipeline runs on it via a manifest)")
    pytest.skip("requires the licensed parliamentary corpus; documented, not asserted")

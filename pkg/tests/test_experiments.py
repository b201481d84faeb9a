import json
from dataclasses import replace

import numpy as np
import pytest

from transphylo.features import FeatureVector
from transphylo.experiments import (ConfigError, ExperimentConfig, OTConfig, SourceIDConfig, TreeConfig,
                                    default_families, default_gold, load_config, run_experiments,
                                    run_ot_classification, run_source_id, run_tree_experiment)
from transphylo.phylo import euclidean_distances, ward_cluster
from transphylo.synthetic import SyntheticConfig
from transphylo.treedist import Mode, dist, estimate_norm_constant, normalize, random_baseline

SMALL_TREES = TreeConfig(repetitions=3, tokens_per_language=8000, norm_samples=300, baseline_draws=50,
                         feature_sets=("pos_trigrams", "function_words"))


def synth_cfg(**kw):
    base = ExperimentConfig(
        seed=5, synthetic=SyntheticConfig(tokens_per_language=10_000),
        ot=OTConfig(chunks=40, chunk_tokens=800, feature_sets=("pos_trigrams",)),
        source_id=SourceIDConfig(chunks=20, chunk_tokens=800, folds=5),
        trees=SMALL_TREES)
    return replace(base, **kw)


def test_load_config(tmp_path):
    (tmp_path / "m.tsv").write_text("")
    p = tmp_path / "exp.cfg"
    p.write_text("[experiment]\nseed = 3\nexperiments = ot, trees\n\n[data]\nmanifest = m.tsv\n\n"
                 "[ot]\nchunks = 10\nfeature_sets = pos_trigrams, function_words\nshuffle_labels = yes\n\n"
                 "[trees]\ntokens_per_language = max-common\n")
    cfg = load_config(p)
    assert cfg.seed == 3 and cfg.experiments == ("ot", "trees")
    assert cfg.manifest == str(tmp_path / "m.tsv")
    assert cfg.ot.chunks == 10 and cfg.ot.shuffle_labels
    assert cfg.ot.feature_sets == ("pos_trigrams", "function_words")
    assert load_config(p, seed=9).seed == 9


@pytest.mark.parametrize("text", ["[bogus]\nx = 1\n", "[ot]\nchunks = 0\n[synthetic]\n",
                                  "[ot]\nnope = 1\n[synthetic]\n", "[ot]\nfeature_sets = colour\n[synthetic]\n",
                                  "[ot]\nchunks = many\n[synthetic]\n", "[experiment]\nseed = 1\n"])
def test_invalid_configs(tmp_path, text):
    p = tmp_path / "bad.cfg"
    p.write_text(text)
    with pytest.raises(ConfigError):
        load_config(p)


def test_shipped_reference_data():
    gold = default_gold()
    fam = default_families()
    assert len(gold.leaf_labels) == 17
    assert set(gold.leaf_labels) == set(fam)
    assert set(fam.values()) == {"Germanic", "Romance", "Balto-Slavic"}


def test_ot_planted_signal_and_shuffle():
    cfg = synth_cfg()
    assert run_ot_classification(cfg)["feature_sets"]["pos_trigrams"]["accuracy"] >= 0.95
    shuffled = replace(cfg, ot=replace(cfg.ot, shuffle_labels=True))
    acc = run_ot_classification(shuffled)["feature_sets"]["pos_trigrams"]["accuracy"]
    assert abs(acc - 0.5) <= 0.2


def test_source_id_families_beat_languages():
    cfg = synth_cfg(synthetic=SyntheticConfig(families=3, languages_per_family=2, tokens_per_language=10_000))
    row = run_source_id(cfg)["feature_sets"]["pos_trigrams"]
    assert row["family_accuracy"] > row["accuracy"]
    assert row["baseline"] == pytest.approx(1 / 6)


def test_source_id_two_distinct_languages():
    cfg = synth_cfg(synthetic=SyntheticConfig(families=2, languages_per_family=1, inter_divergence=3.0,
                                                    tokens_per_language=10_000))
    assert run_source_id(cfg)["feature_sets"]["pos_trigrams"]["accuracy"] >= 0.95


def test_tree_experiment_report_shape():
    res = run_tree_experiment(synth_cfg())
    for fs in ("pos_trigrams", "function_words"):
        for mode in ("weighted", "unweighted"):
            row = res["feature_sets"][fs][mode]
            assert row["n"] == 3 and row["std"] >= 0 and 0 <= row["mean"] <= 1
    assert set(res["random_tree"]) == {"weighted", "unweighted"}
    assert res["feature_sets"]["pos_trigrams"]["unweighted"]["mean"] < res["random_tree"]["unweighted"]["mean"]


def test_report_reproducible_from_embedded_config():
    cfg = synth_cfg(experiments=("trees",))
    a = run_experiments(cfg)
    b = run_experiments(cfg)
    assert a.to_json() == b.to_json()
    d = json.loads(a.to_json())
    assert d["seed"] == 5 and d["config"]["trees"]["repetitions"] == 3
    assert "trees_unweighted.csv" in a.tables()


def test_parallel_repetitions_match_serial():
    cfg = synth_cfg(experiments=("trees",))
    assert run_experiments(cfg).to_json() == run_experiments(replace(cfg, jobs=2)).to_json()


def test_missing_corpus_errors():
    from transphylo.corpus import CorpusError
    from transphylo.experiments import ExperimentData
    cfg = synth_cfg()
    empty = ExperimentData({}, {}, default_gold(), {}, {})
    with pytest.raises(CorpusError):
        run_ot_classification(cfg, empty)
    with pytest.raises(CorpusError):
        run_source_id(cfg, empty)
    with pytest.raises(CorpusError):
        run_tree_experiment(cfg, empty)


def test_gold_geometry_recovered_exactly():
    """Points placed along the gold hierarchy cluster back to the gold topology."""
    gold = default_gold()

    rng = np.random.default_rng(0)

    def place(node, center, spread):
        if node.is_leaf:
            return {node.label: center}
        step = rng.normal(size=len(center))
        step *= spread / np.linalg.norm(step)
        out = {}
        for sign, child in zip((1, -1), node.children):
            out.update(place(child, center + sign * step, spread / 4))
        return out

    pts = place(gold.root, np.zeros(32), 1000.0)
    labels = sorted(pts)
    m = euclidean_distances([FeatureVector("s", pts[lab], lab) for lab in labels])
    assert dist(ward_cluster(m), gold, Mode.UNWEIGHTED) == 0


def test_random_vectors_match_random_baseline():
    gold = default_gold()
    labels = sorted(gold.leaf_labels)
    rng = np.random.default_rng(8)
    c = estimate_norm_constant(gold, Mode.UNWEIGHTED, samples=2000)
    scores = []
    for _ in range(100):
        vecs = [FeatureVector("s", rng.random(50), lab) for lab in labels]
        scores.append(normalize(dist(ward_cluster(euclidean_distances(vecs)), gold, Mode.UNWEIGHTED), c))
    mean, std = random_baseline(gold, Mode.UNWEIGHTED, 500, np.random.default_rng(9), c)
    m, s = float(np.mean(scores)), float(np.std(scores, ddof=1))
    assert m - 2 * s <= mean + 2 * std and mean - 2 * std <= m + 2 * s
    assert abs(m - mean) < 0.05

import numpy as np
import pytest

from transphylo.phylo import cherries, cut
from transphylo.synthetic import (SyntheticConfig, SyntheticError, generate_ot_pair, generate_synthetic, planted_tree)


def small(**kw):
    return SyntheticConfig(tokens_per_language=3000, **kw)


def test_planted_tree_shape():
    t = planted_tree(SyntheticConfig())
    assert sorted(t.leaf_labels) == sorted(f"{f}{m}" for f in "abc" for m in range(4))
    assert sorted(map(sorted, cut(t, 3))) == [[f"{f}{m}" for m in range(4)] for f in "abc"]
    assert frozenset({"a0", "a1"}) in cherries(t)


def test_same_seed_identical():
    a = generate_synthetic(small(), np.random.default_rng(3))
    b = generate_synthetic(small(), np.random.default_rng(3))
    assert {k: v.to_text() for k, v in a.corpora.items()} == {k: v.to_text() for k, v in b.corpora.items()}


def test_sizes_and_families():
    data = generate_synthetic(small(families=2, languages_per_family=3), np.random.default_rng(0))
    assert data.languages == ["a0", "a1", "a2", "b0", "b1", "b2"]
    assert all(c.token_count >= 3000 for c in data.corpora.values())
    assert data.families["b2"] == "family_B"


@pytest.mark.parametrize("kw", [dict(intra_divergence=0.0), dict(inter_divergence=0.0),
                                dict(intra_divergence=1.0, inter_divergence=0.5)])
def test_rejects_bad_divergence(kw):
    with pytest.raises(SyntheticError):
        generate_synthetic(small(**kw), np.random.default_rng(0))


def test_ot_pair_statuses():
    pair = generate_ot_pair(small(), 1.0, np.random.default_rng(0))
    assert not pair["o"].meta.status.translated
    assert pair["t"].meta.status.translated
    with pytest.raises(SyntheticError):
        generate_ot_pair(small(), 0.0, np.random.default_rng(0))


def test_every_sentence_ends_with_period():
    data = generate_synthetic(small(families=1, languages_per_family=2), np.random.default_rng(1))
    for c in data.corpora.values():
        assert all(s[-1] == (".", ".") for s in c.sentences)

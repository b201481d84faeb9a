"""Synthetic tagged corpora with a planted language phylogeny.

Each language is a first-order Markov source over Penn-style tags plus
per-tag word-emission distributions for closed-class words and a
sentence-initial cohesive-marker channel.  All parameters live in log
space and drift down a planted binary tree: a child's parameters are its
parent's plus Gaussian noise with standard deviation proportional to the
branch length.  Languages that share more history therefore share more
statistics, which gives every feature family a controllable signal.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .corpus import CorpusMeta, Status, TaggedCorpus
from .phylo import Node, PhyloTree, parse_newick


class SyntheticError(ValueError):
    pass


# Tags emitted by the Markov chain; every sentence is closed by "." separately.
TAGS = ("DT", "NN", "NNS", "NNP", "JJ", "IN", "PRP", "VB", "VBZ", "VBP", "VBD",
        "VBN", "VBG", "RB", "RP", "CC", "MD", "TO", ",")

CLOSED_CLASS = {
    "DT": ("the", "a", "an", "this", "that", "these", "those", "all", "some", "each"),
    "IN": ("of", "in", "on", "for", "with", "by", "from", "at", "about", "into", "between", "under"),
    "PRP": ("we", "it", "they", "i", "he", "she", "you"),
    "CC": ("and", "but", "or", "nor"),
    "MD": ("must", "will", "can", "should", "would", "may", "could", "shall"),
    "TO": ("to",),
    "RP": ("up", "out", "down", "off", "back"),
    "VBZ": ("is", "has", "does", "seems", "remains"),
    "VBP": ("are", "have", "do", "believe", "think"),
    "VBD": ("was", "were", "had", "did", "said"),
    ",": (",",),
}
OPEN_CLASS_SIZE = 400

MARKERS = ("however", "therefore", "moreover", "in addition", "on the other hand", "for example",
           "in fact", "thus", "furthermore", "nevertheless", "indeed", "of course", "as a result",
           "consequently", "in other words")


@dataclass(frozen=True)
class SyntheticConfig:
    families: int = 3
    languages_per_family: int = 4
    tokens_per_language: int = 30_000
    inter_divergence: float = 1.0
    intra_divergence: float = 0.35
    tag_signal: float = 0.15
    word_signal: float = 0.3
    marker_signal: float = 0.05
    marker_rate: float = 0.15
    base_concentration: float = 0.5
    mean_sentence_length: float = 22.0
    target_language: str = "en"

    def validate(self):
        if self.families < 1 or self.languages_per_family < 1 or self.families * self.languages_per_family < 2:
            raise SyntheticError("need at least two languages")
        if self.tokens_per_language < 1:
            raise SyntheticError("tokens_per_language must be >= 1")
        if self.intra_divergence <= 0 or self.inter_divergence <= 0:
            raise SyntheticError("divergences must be positive (zero divergence makes languages identical)")
        if self.families > 1 and self.languages_per_family > 1 and not self.intra_divergence < self.inter_divergence:
            raise SyntheticError("intra-family divergence must be smaller than inter-family divergence")
        if not 0 <= self.marker_rate < 1:
            raise SyntheticError("marker_rate must be in [0, 1)")
        if self.mean_sentence_length < 4:
            raise SyntheticError("mean_sentence_length must be >= 4")


@dataclass
class SyntheticData:
    corpora: dict[str, TaggedCorpus]
    tree: PhyloTree
    families: dict[str, str] = field(default_factory=dict)

    @property
    def languages(self) -> list[str]:
        return sorted(self.corpora)


def language_code(family: int, member: int) -> str:
    return f"{chr(ord('a') + family)}{member}"


def family_name(family: int) -> str:
    return f"family_{chr(ord('A') + family)}"


def _balanced_lengths(items: list[str], length: float) -> str:
    if len(items) == 1:
        return items[0]
    mid = (len(items) + 1) // 2
    return f"({_balanced_lengths(items[:mid], length)},{_balanced_lengths(items[mid:], length)}):{length!r}"


def planted_tree(cfg: SyntheticConfig) -> PhyloTree:
    """Families hang off a balanced backbone with inter-family edges; languages
    inside a family form a balanced subtree with intra-family edges."""
    cfg.validate()
    fams = []
    for f in range(cfg.families):
        leaves = [f"{language_code(f, m)}:{cfg.intra_divergence!r}" for m in range(cfg.languages_per_family)]
        if len(leaves) == 1:
            fams.append(f"{language_code(f, 0)}:{cfg.inter_divergence!r}")
        else:
            sub = _balanced_lengths(leaves, cfg.intra_divergence)
            fams.append(sub.rsplit(":", 1)[0] + f":{cfg.inter_divergence!r}")
    if len(fams) == 1:
        body = fams[0].rsplit(":", 1)[0]
    else:
        body = _balanced_lengths(fams, cfg.inter_divergence).rsplit(":", 1)[0]
    return parse_newick(body + ";")


@dataclass
class _Params:
    trans: np.ndarray       # (T+1, T) log-weights; last row is the start state
    words: dict             # tag -> log-weights over CLOSED_CLASS[tag]
    marker_logit: float
    markers: np.ndarray     # log-weights over MARKERS


def _root_params(cfg: SyntheticConfig, rng: np.random.Generator) -> _Params:
    T = len(TAGS)
    trans = np.log(rng.dirichlet(np.full(T, cfg.base_concentration), size=T + 1) + 1e-12)
    words = {t: np.log(rng.dirichlet(np.ones(len(w)))) for t, w in CLOSED_CLASS.items() if len(w) > 1}
    marker_logit = float(np.log(cfg.marker_rate / (1 - cfg.marker_rate))) if cfg.marker_rate > 0 else -np.inf
    return _Params(trans, words, marker_logit, np.log(rng.dirichlet(np.ones(len(MARKERS)))))


def _drift(p: _Params, length: float, cfg: SyntheticConfig, rng: np.random.Generator) -> _Params:
    s_tag, s_word, s_mark = (cfg.tag_signal * length, cfg.word_signal * length, cfg.marker_signal * length)
    return _Params(
        p.trans + rng.normal(0, s_tag, p.trans.shape),
        {t: v + rng.normal(0, s_word, v.shape) for t, v in p.words.items()},
        p.marker_logit + (rng.normal(0, s_mark) if np.isfinite(p.marker_logit) else 0.0),
        p.markers + rng.normal(0, s_mark, p.markers.shape),
    )


def _softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _leaf_params(tree: PhyloTree, cfg: SyntheticConfig, rng: np.random.Generator) -> dict[str, _Params]:
    root = _root_params(cfg, rng)
    out = {}

    def rec(node: Node, params: _Params):
        if node.is_leaf:
            out[node.label] = params
            return
        for child in node.children:
            rec(child, _drift(params, child.length, cfg, rng))

    rec(tree.root, root)
    return out


def _sample_tags(trans: np.ndarray, lengths: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Tag index matrix (sentences x max length); -1 beyond each sentence's length."""
    probs = _softmax(trans)
    cum = np.cumsum(probs, axis=1)
    cum[:, -1] = 1.0
    n, L = len(lengths), int(lengths.max())
    out = np.full((n, L), -1, dtype=np.int64)
    state = np.full(n, len(TAGS))  # start row
    u = rng.random((n, L))
    for pos in range(L):
        nxt = (cum[state] < u[:, pos, None]).sum(axis=1)
        out[:, pos] = nxt
        state = nxt
    out[np.arange(L)[None, :] >= lengths[:, None]] = -1
    return out


def _generate_language(params: _Params, meta: CorpusMeta, cfg: SyntheticConfig, n_tokens: int,
                       rng: np.random.Generator) -> TaggedCorpus:
    sentences = []
    total = 0
    open_words = {t: [f"{t.lower()}{k}" for k in range(OPEN_CLASS_SIZE)] for t in TAGS if t not in CLOSED_CLASS}
    word_probs = {t: _softmax(v) for t, v in params.words.items()}
    p_marker = 1 / (1 + np.exp(-params.marker_logit)) if np.isfinite(params.marker_logit) else 0.0
    marker_probs = _softmax(params.markers)
    mean_body = cfg.mean_sentence_length - 1
    while total < n_tokens:
        batch = max(16, int(1.2 * (n_tokens - total) / cfg.mean_sentence_length) + 1)
        lengths = 3 + rng.poisson(mean_body - 3, size=batch)
        tags = _sample_tags(params.trans, lengths, rng)
        has_marker = rng.random(batch) < p_marker
        marker_ids = rng.choice(len(MARKERS), size=batch, p=marker_probs)
        flat = tags[tags >= 0]
        words = np.empty(len(flat), dtype=object)
        for k, tag in enumerate(TAGS):
            where = np.flatnonzero(flat == k)
            if not len(where):
                continue
            vocab = CLOSED_CLASS.get(tag) or open_words[tag]
            if tag in word_probs:
                choice = rng.choice(len(vocab), size=len(where), p=word_probs[tag])
            else:
                choice = rng.integers(0, len(vocab), size=len(where))
            words[where] = np.asarray(vocab, dtype=object)[choice]
        pos = 0
        for s in range(batch):
            n = int(lengths[s])
            body = list(zip(words[pos:pos + n].tolist(), [TAGS[t] for t in flat[pos:pos + n]]))
            pos += n
            if has_marker[s]:
                body = [(w, "RB") for w in MARKERS[marker_ids[s]].split()] + [(",", ",")] + body
            body.append((".", "."))
            sentences.append(tuple(body))
            total += len(body)
            if total >= n_tokens:
                break
    return TaggedCorpus(tuple(sentences), meta)


def generate_from_tree(tree: PhyloTree, cfg: SyntheticConfig, rng: np.random.Generator,
                       status: Optional[Mapping[str, Status]] = None) -> dict[str, TaggedCorpus]:
    """One corpus of at least ``cfg.tokens_per_language`` tokens per leaf of ``tree``."""
    params = _leaf_params(tree, cfg, rng)
    status = status or {}
    out = {}
    for lang in sorted(params):
        meta = CorpusMeta(lang, cfg.target_language, status.get(lang, Status.TRANSLATED_DIRECT))
        out[lang] = _generate_language(params[lang], meta, cfg, cfg.tokens_per_language, rng)
    return out


def generate_synthetic(cfg: SyntheticConfig, rng: np.random.Generator) -> SyntheticData:
    """Corpora for ``families x languages_per_family`` languages plus the planted tree."""
    cfg.validate()
    tree = planted_tree(cfg)
    corpora = generate_from_tree(tree, cfg, rng)
    families = {language_code(f, m): family_name(f)
                for f in range(cfg.families) for m in range(cfg.languages_per_family)}
    return SyntheticData(corpora, tree, families)


def generate_ot_pair(cfg: SyntheticConfig, divergence: float, rng: np.random.Generator,
                     original: str = "o", translated: str = "t") -> dict[str, TaggedCorpus]:
    """An original and a translated corpus in the same target language, ``divergence`` apart."""
    if divergence <= 0:
        raise SyntheticError("divergence must be positive")
    tree = parse_newick(f"({original}:{divergence!r},{translated}:{divergence!r});")
    return generate_from_tree(tree, cfg, rng, {original: Status.ORIGINAL, translated: Status.TRANSLATED_DIRECT})

"""Feature specifications and per-chunk feature vectors.

Three feature families are supported: the K most frequent POS-tag
trigrams, function-word frequencies and cohesive-marker frequencies.  All
values are raw counts divided by the chunk's token count; min-max scaling
to [0, 1] is a separate step because it must be fitted on a set of vectors.
"""
from __future__ import annotations

import enum
import hashlib
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .corpus import Chunk

DEFAULT_TOP_K = 1000


class FeatureError(ValueError):
    pass


class FeatureKind(str, enum.Enum):
    POS_TRIGRAMS = "pos_trigrams"
    FUNCTION_WORDS = "function_words"
    COHESIVE_MARKERS = "cohesive_markers"
    COMBINED = "combined"


@dataclass(frozen=True)
class FeatureSpec:
    """Frozen, ordered list of feature dimensions.

    For lexicon kinds the dimensions are the lower-cased lexicon entries;
    for trigrams they are ``"TAG1 TAG2 TAG3"`` strings.  A combined spec
    keeps its parts and its dimensions are their concatenation.
    """

    kind: FeatureKind
    dimensions: tuple[str, ...]
    top_k: Optional[int] = None
    parts: tuple["FeatureSpec", ...] = ()

    def __post_init__(self):
        if len(set(self.dimensions)) != len(self.dimensions):
            raise FeatureError("feature dimensions must be unique")
        if self.kind is FeatureKind.POS_TRIGRAMS and self.top_k is not None and len(self.dimensions) > self.top_k:
            raise FeatureError("more trigram dimensions than top_k")

    def __len__(self):
        return len(self.dimensions)

    @property
    def spec_id(self) -> str:
        h = hashlib.sha1(self.kind.value.encode())
        for part in self.parts:
            h.update(part.spec_id.encode())
        h.update("\x1f".join(self.dimensions).encode("utf-8"))
        return h.hexdigest()[:16]

    @property
    def lexicons(self) -> dict[FeatureKind, tuple[str, ...]]:
        if self.kind is FeatureKind.COMBINED:
            out = {}
            for part in self.parts:
                out.update(part.lexicons)
            return out
        if self.kind is FeatureKind.POS_TRIGRAMS:
            return {}
        return {self.kind: self.dimensions}


@dataclass(frozen=True, eq=False)
class FeatureVector:
    spec_id: str
    values: np.ndarray
    label: object = None


def _trigrams(tags: Sequence[str]):
    return zip(tags, tags[1:], tags[2:])


def trigram_counts(chunks: Iterable[Chunk]) -> Counter:
    """Counts of within-sentence tag trigrams; no padding at sentence edges."""
    counts: Counter = Counter()
    for ch in chunks:
        for sent in ch.sentences:
            if len(sent) >= 3:
                tags = [t for _, t in sent]
                counts.update(_trigrams(tags))
    return counts


def build_trigram_spec(chunks: Sequence[Chunk], k: int = DEFAULT_TOP_K) -> FeatureSpec:
    if k < 1:
        raise FeatureError("k must be >= 1")
    if not chunks:
        raise FeatureError("cannot build a trigram spec from no chunks")
    counts = trigram_counts(chunks)
    if not counts:
        raise FeatureError("no sentence of length >= 3: no trigrams to count")
    named = [(" ".join(tri), c) for tri, c in counts.items()]
    named.sort(key=lambda nc: (-nc[1], nc[0]))
    return FeatureSpec(FeatureKind.POS_TRIGRAMS, tuple(n for n, _ in named[:k]), top_k=k)


def normalize_entry(entry: str) -> str:
    return " ".join(entry.lower().split())


def build_lexicon_spec(kind: Union[FeatureKind, str], entries: Iterable[str]) -> FeatureSpec:
    kind = FeatureKind(kind)
    if kind not in (FeatureKind.FUNCTION_WORDS, FeatureKind.COHESIVE_MARKERS):
        raise FeatureError(f"{kind.value} is not a lexicon feature kind")
    seen: dict[str, None] = {}
    for e in entries:
        e = normalize_entry(e)
        if e:
            seen.setdefault(e, None)
    if not seen:
        raise FeatureError(f"empty {kind.value} lexicon")
    return FeatureSpec(kind, tuple(seen))


def combine_specs(*specs: FeatureSpec) -> FeatureSpec:
    if len(specs) < 2:
        raise FeatureError("a combined spec needs at least two parts")
    parts = []
    for s in specs:
        parts.extend(s.parts if s.kind is FeatureKind.COMBINED else [s])
    dims = []
    for p in parts:
        dims.extend(f"{p.kind.value}:{d}" for d in p.dimensions)
    return FeatureSpec(FeatureKind.COMBINED, tuple(dims), parts=tuple(parts))


def read_lexicon(path: Union[str, Path]) -> list[str]:
    """One entry per line; blank lines and ``#`` comments are skipped."""
    return _parse_lexicon(Path(path).read_text(encoding="utf-8"))


def _parse_lexicon(text: str) -> list[str]:
    out = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            out.append(line)
    return out


def default_lexicon(kind: Union[FeatureKind, str], language: str) -> list[str]:
    """Shipped lexicon for ``kind`` in ``language`` (``en`` or ``fr``)."""
    kind = FeatureKind(kind)
    name = f"{kind.value}_{language.lower()}.txt"
    res = resources.files("transphylo") / "data" / "lexicons" / name
    if not res.is_file():
        raise FeatureError(f"no shipped {kind.value} lexicon for language {language!r}")
    return _parse_lexicon(res.read_text(encoding="utf-8"))


class _PhraseMatcher:
    """Longest-match-first, non-overlapping phrase counter over lower-cased tokens."""

    def __init__(self, entries: Sequence[str]):
        self.index = {}
        by_first: dict[str, list[tuple[tuple[str, ...], int]]] = {}
        for i, e in enumerate(entries):
            words = tuple(e.split())
            by_first.setdefault(words[0], []).append((words, i))
        for first, cands in by_first.items():
            cands.sort(key=lambda c: -len(c[0]))
            self.index[first] = cands

    def count(self, sentences: Iterable[Sequence[str]], out: np.ndarray) -> None:
        index = self.index
        for words in sentences:
            words = [w.lower() for w in words]
            n = len(words)
            i = 0
            while i < n:
                cands = index.get(words[i])
                step = 1
                if cands:
                    for phrase, dim in cands:
                        m = len(phrase)
                        if i + m <= n and (m == 1 or tuple(words[i:i + m]) == phrase):
                            out[dim] += 1
                            step = m
                            break
                i += step


_matchers: dict[str, _PhraseMatcher] = {}


def _matcher(spec: FeatureSpec) -> _PhraseMatcher:
    m = _matchers.get(spec.spec_id)
    if m is None:
        m = _matchers[spec.spec_id] = _PhraseMatcher(spec.dimensions)
    return m


def _raw_counts(chunk: Chunk, spec: FeatureSpec) -> np.ndarray:
    if spec.kind is FeatureKind.COMBINED:
        return np.concatenate([_raw_counts(chunk, p) for p in spec.parts])
    out = np.zeros(len(spec.dimensions))
    if spec.kind is FeatureKind.POS_TRIGRAMS:
        index = {tuple(d.split(" ")): i for i, d in enumerate(spec.dimensions)}
        for tri, c in trigram_counts([chunk]).items():
            i = index.get(tri)
            if i is not None:
                out[i] = c
    else:
        _matcher(spec).count(chunk.tokens, out)
    return out


def extract(chunk: Chunk, spec: FeatureSpec, label=None) -> FeatureVector:
    """Per-token normalized feature frequencies of one chunk."""
    if chunk.token_count == 0:
        raise FeatureError("cannot extract features from an empty chunk")
    return FeatureVector(spec.spec_id, _raw_counts(chunk, spec) / chunk.token_count, label)


def extract_matrix(chunks: Sequence[Chunk], spec: FeatureSpec) -> np.ndarray:
    """Rows are :func:`extract` values for each chunk."""
    return np.vstack([extract(ch, spec).values for ch in chunks]) if chunks else np.zeros((0, len(spec)))


def fit_minmax(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-column (min, span); constant columns get span 0."""
    X = np.asarray(X, dtype=float)
    lo = X.min(axis=0)
    return lo, X.max(axis=0) - lo


def apply_minmax(X: np.ndarray, lo: np.ndarray, span: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, (X - lo) / safe, 0.0)


def minmax_scale(vectors: Sequence[FeatureVector]) -> list[FeatureVector]:
    """Scale each dimension to [0, 1] across ``vectors`` (constant dimensions become 0)."""
    if len(vectors) < 2:
        raise FeatureError("min-max scaling needs at least two vectors")
    ids = {v.spec_id for v in vectors}
    if len(ids) != 1:
        raise FeatureError(f"vectors come from different feature specs: {sorted(ids)}")
    X = np.vstack([v.values for v in vectors])
    Y = apply_minmax(X, *fit_minmax(X))
    return [FeatureVector(v.spec_id, row, v.label) for v, row in zip(vectors, Y)]

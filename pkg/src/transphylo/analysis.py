"""Counters for five interference-related phenomena in Penn-tagged English.

Every pattern is matched inside a single sentence.  Rates are reported per
a phenomenon-specific unit of tokens so the five values share a scale.
"""
from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .corpus import Sentence, TaggedCorpus

DEFAULT_WINDOW = 2

NOUN_TAGS = frozenset({"NN", "NNS", "NNP", "NNPS"})
ADVERB_TAGS = frozenset({"RB", "RBR", "RBS"})
HAVE_FORMS = frozenset({"have", "has", "had", "having"})
BE_FORMS = frozenset({"am", "is", "are", "was", "were", "be", "been", "being"})


class AnalysisError(ValueError):
    pass


class Phenomenon(str, enum.Enum):
    DEFINITE_ARTICLE = "definite_article"
    OF_CONSTRUCTION = "of_construction"
    VERB_PARTICLE = "verb_particle"
    PERFECT = "perfect"
    PROGRESSIVE = "progressive"

    @property
    def unit(self) -> int:
        return _UNITS[self]

    @classmethod
    def parse(cls, value) -> "Phenomenon":
        try:
            return cls(value)
        except ValueError:
            raise AnalysisError(f"unknown phenomenon {value!r}") from None


_UNITS = {
    Phenomenon.DEFINITE_ARTICLE: 10,
    Phenomenon.OF_CONSTRUCTION: 25,
    Phenomenon.VERB_PARTICLE: 250,
    Phenomenon.PERFECT: 100,
    Phenomenon.PROGRESSIVE: 500,
}


def _is_verb(tag: str) -> bool:
    return tag.startswith("VB")


def _aux_then(sent: Sentence, aux_forms, target_tag: str, window: int) -> int:
    """Auxiliary (verb-tagged) followed by ``target_tag`` within ``window`` tokens,
    the gap consisting only of adverbs."""
    n = 0
    for i, (tok, tag) in enumerate(sent):
        if tok.lower() not in aux_forms or not _is_verb(tag):
            continue
        for k in range(i + 1, min(i + window, len(sent) - 1) + 1):
            t = sent[k][1]
            if t == target_tag:
                n += 1
                break
            if t not in ADVERB_TAGS:
                break
    return n


def count_sentence(sent: Sentence, phenomenon: Phenomenon, window: int = DEFAULT_WINDOW) -> int:
    if phenomenon is Phenomenon.DEFINITE_ARTICLE:
        return sum(1 for tok, tag in sent if tok.lower() == "the" and tag == "DT")
    pairs = zip(sent, sent[1:])
    if phenomenon is Phenomenon.OF_CONSTRUCTION:
        return sum(1 for (_, t1), (w2, _) in pairs if t1 in NOUN_TAGS and w2.lower() == "of")
    if phenomenon is Phenomenon.VERB_PARTICLE:
        return sum(1 for (_, t1), (_, t2) in pairs if _is_verb(t1) and t2 == "RP")
    if phenomenon is Phenomenon.PERFECT:
        return _aux_then(sent, HAVE_FORMS, "VBN", window)
    if phenomenon is Phenomenon.PROGRESSIVE:
        return _aux_then(sent, BE_FORMS, "VBG", window)
    raise AnalysisError(f"unknown phenomenon {phenomenon!r}")


@dataclass(frozen=True)
class PhenomenonRate:
    phenomenon: Phenomenon
    count: int
    tokens: int

    @property
    def rate(self) -> float:
        return self.count * self.phenomenon.unit / self.tokens if self.tokens else 0.0


def count_sentences(sentences: Iterable[Sentence], phenomenon, window: int = DEFAULT_WINDOW) -> PhenomenonRate:
    phenomenon = Phenomenon.parse(phenomenon)
    if window < 1:
        raise AnalysisError("window must be >= 1")
    count = tokens = 0
    for s in sentences:
        count += count_sentence(s, phenomenon, window)
        tokens += len(s)
    return PhenomenonRate(phenomenon, count, tokens)


def count_phenomenon(corpus: TaggedCorpus, phenomenon, window: int = DEFAULT_WINDOW) -> PhenomenonRate:
    """Occurrences of ``phenomenon`` in ``corpus`` and their rate per unit tokens.

    ``window`` is the largest distance from the auxiliary to the participle
    for the perfect and progressive; ``window=1`` demands adjacency.
    """
    return count_sentences(corpus.sentences, phenomenon, window)


def family_rates(corpora: Mapping[str, TaggedCorpus], phenomenon, families: Mapping[str, str],
                 window: int = DEFAULT_WINDOW) -> dict[str, float]:
    """Unweighted mean of per-language rates within each family."""
    unmapped = sorted(set(corpora) - set(families))
    if unmapped:
        raise AnalysisError(f"languages without a family: {', '.join(unmapped)}")
    per_family: dict[str, list[float]] = {}
    for lang in sorted(corpora):
        rate = count_phenomenon(corpora[lang], phenomenon, window).rate
        per_family.setdefault(families[lang], []).append(rate)
    return {fam: sum(v) / len(v) for fam, v in per_family.items()}


def family_rate_table(corpora: Mapping[str, TaggedCorpus], families: Mapping[str, str],
                      phenomena: Sequence[Phenomenon] = tuple(Phenomenon),
                      window: int = DEFAULT_WINDOW) -> dict[str, dict[str, float]]:
    """family -> phenomenon -> rate, families in first-appearance order of ``families``."""
    cols = {p: family_rates(corpora, p, families, window) for p in phenomena}
    order = [f for f in dict.fromkeys(families.values()) if f in cols[phenomena[0]]]
    return {f: {p.value: cols[p][f] for p in phenomena} for f in order}


def rate_table_csv(table: Mapping[str, Mapping[str, float]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = [f"{p.value} (per {p.unit})" for p in Phenomenon]
    w.writerow(["family", *header])
    for fam, row in table.items():
        w.writerow([fam, *(f"{row[p.value]:.3f}" for p in Phenomenon)])
    return buf.getvalue()

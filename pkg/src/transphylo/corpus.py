"""Tagged-corpus ingestion, sentence-respecting chunking and equal-size sampling.

Corpora arrive already tokenized and POS-tagged, one ``token<TAB>tag`` pair
per line with a blank line between sentences.  A manifest (TSV) lists the
corpus files together with their language metadata.
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence, Union

import numpy as np

Sentence = tuple[tuple[str, str], ...]


class CorpusError(ValueError):
    """Raised for malformed corpus text, manifests or impossible sampling requests."""


class Status(enum.Enum):
    ORIGINAL = "Original"
    TRANSLATED_DIRECT = "TranslatedDirect"
    TRANSLATED_VIA_PIVOT = "TranslatedViaPivot"

    @classmethod
    def parse(cls, value: str) -> "Status":
        key = value.strip().replace("_", "").replace("-", "").lower()
        for status in cls:
            if status.value.lower() == key:
                return status
        raise CorpusError(f"unknown translation status {value!r}")

    @property
    def translated(self) -> bool:
        return self is not Status.ORIGINAL


@dataclass(frozen=True)
class CorpusMeta:
    source_language: str
    target_language: str
    status: Status

    def __post_init__(self):
        for name in ("source_language", "target_language"):
            if not getattr(self, name):
                raise CorpusError(f"corpus metadata is missing {name}")
        if not isinstance(self.status, Status):
            object.__setattr__(self, "status", Status.parse(str(self.status)))


@dataclass(frozen=True)
class TaggedCorpus:
    sentences: tuple[Sentence, ...]
    meta: CorpusMeta

    def __post_init__(self):
        for i, sent in enumerate(self.sentences):
            if not sent:
                raise CorpusError(f"sentence {i} is empty")
            for tok, tag in sent:
                if not tok or not tag:
                    raise CorpusError(f"sentence {i} has an empty token or tag")

    @property
    def token_count(self) -> int:
        return sum(len(s) for s in self.sentences)

    def to_text(self) -> str:
        """Serialize back to the two-column format."""
        blocks = ["\n".join(f"{tok}\t{tag}" for tok, tag in sent) for sent in self.sentences]
        return "\n\n".join(blocks) + "\n"


@dataclass(frozen=True)
class Chunk:
    sentences: tuple[Sentence, ...]
    origin: CorpusMeta
    token_count: int = field(default=-1)

    def __post_init__(self):
        n = sum(len(s) for s in self.sentences)
        if self.token_count == -1:
            object.__setattr__(self, "token_count", n)
        elif self.token_count != n:
            raise CorpusError(f"token_count {self.token_count} does not match sentences ({n})")

    @property
    def tags(self) -> list[list[str]]:
        return [[tag for _, tag in s] for s in self.sentences]

    @property
    def tokens(self) -> list[list[str]]:
        return [[tok for tok, _ in s] for s in self.sentences]


def parse_tagged_corpus(text: str, meta: CorpusMeta) -> TaggedCorpus:
    """Read two-column tagged text into a :class:`TaggedCorpus`.

    Runs of blank lines are treated as a single sentence break.  A line
    that does not split into exactly two non-empty tab-separated fields
    raises :class:`CorpusError` carrying the 1-based line number.
    """
    sentences: list[Sentence] = []
    current: list[tuple[str, str]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\r")
        if not line.strip():
            if current:
                sentences.append(tuple(current))
                current = []
            continue
        cols = line.split("\t")
        if len(cols) != 2 or not cols[0] or not cols[1].strip():
            raise CorpusError(f"line {lineno}: expected 'token<TAB>tag', got {line!r}")
        current.append((cols[0], cols[1].strip()))
    if current:
        sentences.append(tuple(current))
    if not sentences:
        raise CorpusError("empty corpus")
    return TaggedCorpus(tuple(sentences), meta)


def read_corpus(path: Union[str, Path], meta: CorpusMeta) -> TaggedCorpus:
    return parse_tagged_corpus(Path(path).read_text(encoding="utf-8"), meta)


@dataclass(frozen=True)
class ManifestEntry:
    path: Path
    meta: CorpusMeta


MANIFEST_FIELDS = ("path", "source_language", "target_language", "status")


def read_manifest(path: Union[str, Path]) -> list[ManifestEntry]:
    """Parse a TSV manifest; relative corpus paths resolve against the manifest directory."""
    path = Path(path)
    base = path.parent
    with path.open(encoding="utf-8", newline="") as fh:
        rows = [r for r in csv.reader(fh, delimiter="\t") if r and not r[0].startswith("#")]
    if not rows:
        raise CorpusError(f"{path}: empty manifest")
    header = [h.strip() for h in rows[0]]
    missing = [f for f in MANIFEST_FIELDS if f not in header]
    if missing:
        raise CorpusError(f"{path}: manifest header lacks {', '.join(missing)}")
    entries = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise CorpusError(f"{path}: line {lineno}: expected {len(header)} columns")
        rec = dict(zip(header, (c.strip() for c in row)))
        meta = CorpusMeta(rec["source_language"], rec["target_language"], Status.parse(rec["status"]))
        entries.append(ManifestEntry(base / rec["path"], meta))
    return entries


def write_manifest(path: Union[str, Path], entries: Sequence[ManifestEntry]) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(MANIFEST_FIELDS)
        for e in entries:
            p = e.path
            try:
                p = p.relative_to(path.parent)
            except ValueError:
                pass
            w.writerow([p.as_posix(), e.meta.source_language, e.meta.target_language, e.meta.status.value])


def load_manifest(path: Union[str, Path]) -> list[TaggedCorpus]:
    out = []
    for entry in read_manifest(path):
        if not entry.path.is_file():
            raise FileNotFoundError(entry.path)
        out.append(read_corpus(entry.path, entry.meta))
    return out


def chunk(corpus: TaggedCorpus, target_tokens: int) -> list[Chunk]:
    """Greedily pack whole sentences into chunks of at least ``target_tokens`` tokens.

    A chunk closes as soon as it reaches the target; the trailing partial
    chunk is dropped.
    """
    if target_tokens < 1:
        raise CorpusError("target_tokens must be >= 1")
    chunks = []
    current: list[Sentence] = []
    n = 0
    for sent in corpus.sentences:
        current.append(sent)
        n += len(sent)
        if n >= target_tokens:
            chunks.append(Chunk(tuple(current), corpus.meta, n))
            current, n = [], 0
    return chunks


MAX_COMMON = "max-common"


def max_common_budget(corpora: Mapping[str, TaggedCorpus]) -> int:
    """Smallest corpus size rounded down to a multiple of 1000 tokens."""
    smallest = min(c.token_count for c in corpora.values())
    budget = (smallest // 1000) * 1000
    if budget < 1000:
        lang = min(corpora, key=lambda k: corpora[k].token_count)
        raise CorpusError(f"language {lang!r} has fewer than 1000 tokens ({smallest})")
    return budget


def sample_sentences(corpus: TaggedCorpus, budget: int, rng: np.random.Generator) -> Chunk:
    """Draw sentences uniformly without replacement until ``budget`` tokens are covered.

    The selected sentences are returned in corpus order.
    """
    order = rng.permutation(len(corpus.sentences))
    lengths = np.fromiter((len(s) for s in corpus.sentences), dtype=np.int64, count=len(corpus.sentences))
    cum = np.cumsum(lengths[order])
    stop = int(np.searchsorted(cum, budget)) + 1
    picked = np.sort(order[:stop])
    return Chunk(tuple(corpus.sentences[i] for i in picked), corpus.meta)


def sample_equal(corpora: Mapping[str, TaggedCorpus], tokens_per_language: Union[int, str],
                 rng: np.random.Generator) -> dict[str, Chunk]:
    """Sample one equal-budget chunk per language.

    ``tokens_per_language`` is either a positive integer or ``"max-common"``.
    Languages are visited in sorted order so the result depends only on the
    seed and the data.
    """
    if not corpora:
        raise CorpusError("no corpora to sample from")
    if tokens_per_language == MAX_COMMON:
        budget = max_common_budget(corpora)
    else:
        budget = int(tokens_per_language)
        if budget < 1:
            raise CorpusError("tokens_per_language must be >= 1")
    short = sorted(lang for lang, c in corpora.items() if c.token_count < budget)
    if short:
        detail = ", ".join(f"{lang} ({corpora[lang].token_count} tokens)" for lang in short)
        raise CorpusError(f"insufficient data for a budget of {budget} tokens: {detail}")
    return {lang: sample_sentences(corpora[lang], budget, rng) for lang in sorted(corpora)}


def sample_chunks(chunks: Sequence[Chunk], n: int, rng: np.random.Generator, what: str = "corpus") -> list[Chunk]:
    """Pick ``n`` chunks uniformly without replacement, keeping their original order."""
    if len(chunks) < n:
        raise CorpusError(f"{what}: need {n} chunks, only {len(chunks)} available")
    idx = np.sort(rng.choice(len(chunks), size=n, replace=False))
    return [chunks[i] for i in idx]


def corpus_stats(corpus: TaggedCorpus) -> dict:
    lengths = [len(s) for s in corpus.sentences]
    return {
        "source_language": corpus.meta.source_language,
        "target_language": corpus.meta.target_language,
        "status": corpus.meta.status.value,
        "sentences": len(lengths),
        "tokens": sum(lengths),
        "mean_sentence_length": round(sum(lengths) / len(lengths), 3),
        "max_sentence_length": max(lengths),
    }

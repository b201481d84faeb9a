import numpy as np
import pytest

from transphylo.corpus import Chunk, CorpusMeta, Status, TaggedCorpus
from transphylo.phylo import Node, PhyloTree

META = CorpusMeta("de", "en", Status.TRANSLATED_DIRECT)


def corpus_from(sentences, meta=META) -> TaggedCorpus:
    """``sentences`` is a list of lists of (token, tag) pairs or of "tok/TAG" strings."""
    out = []
    for s in sentences:
        if isinstance(s, str):
            s = [tuple(w.rsplit("/", 1)) for w in s.split()]
        out.append(tuple(s))
    return TaggedCorpus(tuple(out), meta)


def chunk_from(sentences, meta=META) -> Chunk:
    return Chunk(corpus_from(sentences, meta).sentences, meta)


def random_binary_tree(rng: np.random.Generator, n_leaves: int, integer_lengths: bool = False) -> PhyloTree:
    """Uniformly random merge order with random positive edge lengths."""
    def length():
        return float(rng.integers(1, 10)) if integer_lengths else float(rng.uniform(0.01, 5.0))

    nodes = [Node(f"L{i}", length()) for i in range(n_leaves)]
    while len(nodes) > 1:
        i, j = sorted(rng.choice(len(nodes), size=2, replace=False))
        b = nodes.pop(j)
        a = nodes.pop(i)
        nodes.append(Node(None, length(), (a, b)))
    root = nodes[0]
    return PhyloTree(Node(root.label, 0.0, root.children))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][2:].rstrip(":"))):
            terminalreporter.write_line(line)

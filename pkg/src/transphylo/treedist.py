"""Leaf-pair squared-difference distance between trees, with normalization.

Two trees over the same leaves are compared through their matrices of
leaf-to-leaf path lengths.  In unweighted mode each edge counts 1; in
weighted mode edge lengths are summed and each matrix is divided by its
own maximum first, so trees measured in different units (years vs. Ward
heights) become comparable.  Raw distances are mapped to [0, 1] by an
empirical constant: the largest distance seen between the gold tree and
random Ward trees.
"""
from __future__ import annotations

import enum
import functools
import json
from dataclasses import asdict, dataclass
from typing import Optional, Union

import numpy as np

from .phylo import DistanceMatrix, Node, PhyloTree, parse_newick, random_tree, to_newick

EPS = float(np.finfo(float).eps)
DEFAULT_NORM_SAMPLES = 10_000
DEFAULT_BASELINE_DRAWS = 1000
NORM_SEED = 0


class Mode(str, enum.Enum):
    WEIGHTED = "weighted"
    UNWEIGHTED = "unweighted"


class TreeDistanceError(ValueError):
    pass


def _pair_matrix(tree: PhyloTree, weighted: bool) -> tuple[tuple[str, ...], np.ndarray]:
    labels = tuple(sorted(tree.leaf_labels))
    pos = {lab: i for i, lab in enumerate(labels)}
    D = np.zeros((len(labels), len(labels)))

    def rec(node: Node) -> list[tuple[int, float]]:
        if node.is_leaf:
            return [(pos[node.label], 0.0)]
        below = []
        for child in node.children:
            step = child.length if weighted else 1.0
            below.append([(i, d + step) for i, d in rec(child)])
        left, right = below
        for i, di in left:
            for j, dj in right:
                D[i, j] = D[j, i] = di + dj
        return left + right

    if len(labels) < 2:
        raise TreeDistanceError("tree needs at least two leaves")
    rec(tree.root)
    return labels, D


def leaf_pair_distances(tree: PhyloTree, mode: Union[Mode, str]) -> DistanceMatrix:
    """Path lengths (weighted) or edge counts (unweighted) between all leaves, rows in sorted label order."""
    labels, D = _pair_matrix(tree, Mode(mode) is Mode.WEIGHTED)
    return DistanceMatrix(labels, D)


def _aligned(tau: PhyloTree, gold: PhyloTree, mode: Mode) -> tuple[np.ndarray, np.ndarray]:
    a, b = set(tau.leaf_labels), set(gold.leaf_labels)
    if a != b:
        diff = sorted(a ^ b)
        raise TreeDistanceError(f"leaf sets differ: {', '.join(diff)}")
    weighted = mode is Mode.WEIGHTED
    _, Dt = _pair_matrix(tau, weighted)
    _, Dg = _pair_matrix(gold, weighted)
    if weighted:
        Dt = _max_scaled(Dt)
        Dg = _max_scaled(Dg)
    return Dt, Dg


def _max_scaled(D: np.ndarray) -> np.ndarray:
    m = D.max()
    return D / m if m > 0 else D


def dist(tau: PhyloTree, gold: PhyloTree, mode: Union[Mode, str] = Mode.UNWEIGHTED,
         ordered_pairs: bool = False) -> float:
    """Sum of squared leaf-pair distance differences between ``tau`` and ``gold``.

    Each unordered pair is counted once; ``ordered_pairs=True`` counts both
    orders, which doubles the value.
    """
    Dt, Dg = _aligned(tau, gold, Mode(mode))
    iu = np.triu_indices(len(Dt), 1)
    raw = float(np.sum((Dt[iu] - Dg[iu]) ** 2))
    return 2 * raw if ordered_pairs else raw


class _GoldScorer:
    """Scores many candidate trees against one gold tree without recomputing its matrix."""

    def __init__(self, gold: PhyloTree, mode: Mode):
        self.mode = mode
        self.weighted = mode is Mode.WEIGHTED
        self.labels, D = _pair_matrix(gold, self.weighted)
        self.gold = _max_scaled(D) if self.weighted else D
        self.iu = np.triu_indices(len(self.labels), 1)

    def __call__(self, tau: PhyloTree) -> float:
        labels, D = _pair_matrix(tau, self.weighted)
        if labels != self.labels:
            raise TreeDistanceError(f"leaf sets differ: {', '.join(sorted(set(labels) ^ set(self.labels)))}")
        if self.weighted:
            D = _max_scaled(D)
        return float(np.sum((D[self.iu] - self.gold[self.iu]) ** 2))


@functools.lru_cache(maxsize=64)
def _norm_constant_cached(newick: str, mode: Mode, samples: int, seed: int) -> float:
    gold = parse_newick(newick)
    scorer = _GoldScorer(gold, mode)
    rng = np.random.default_rng(seed)
    labels = scorer.labels
    worst = max(scorer(random_tree(labels, rng)) for _ in range(samples))
    return max(worst, EPS)


def estimate_norm_constant(gold: PhyloTree, mode: Union[Mode, str] = Mode.UNWEIGHTED,
                           samples: int = DEFAULT_NORM_SAMPLES, seed: int = NORM_SEED) -> float:
    """Largest raw distance from ``gold`` over ``samples`` random Ward trees.

    The value is a property of the gold tree and mode, so it uses its own
    seed rather than an experiment's master seed, and is memoized.  A
    machine-epsilon floor keeps degenerate golds (two leaves) divisible.
    """
    if samples < 1:
        raise TreeDistanceError("samples must be >= 1")
    return _norm_constant_cached(to_newick(gold), Mode(mode), int(samples), int(seed))


def normalize(raw: float, norm_constant: float) -> float:
    return min(raw / norm_constant, 1.0)


@dataclass(frozen=True)
class TreeDistanceReport:
    raw: float
    normalized: float
    mode: str
    norm_constant: float
    seed: Optional[int] = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def evaluate(tau: PhyloTree, gold: PhyloTree, mode: Union[Mode, str] = Mode.UNWEIGHTED,
             norm_constant: Optional[float] = None, samples: int = DEFAULT_NORM_SAMPLES,
             seed: int = NORM_SEED) -> TreeDistanceReport:
    mode = Mode(mode)
    raw = dist(tau, gold, mode)
    if norm_constant is None:
        norm_constant = estimate_norm_constant(gold, mode, samples, seed)
    return TreeDistanceReport(raw, normalize(raw, norm_constant), mode.value, norm_constant, seed)


def random_baseline(gold: PhyloTree, mode: Union[Mode, str] = Mode.UNWEIGHTED,
                    n: int = DEFAULT_BASELINE_DRAWS, rng: Optional[np.random.Generator] = None,
                    norm_constant: Optional[float] = None) -> tuple[float, float]:
    """Mean and sample standard deviation of the normalized distance of ``n`` random trees."""
    if n < 2:
        raise TreeDistanceError("random baseline needs n >= 2")
    mode = Mode(mode)
    rng = rng if rng is not None else np.random.default_rng()
    if norm_constant is None:
        norm_constant = estimate_norm_constant(gold, mode)
    scorer = _GoldScorer(gold, mode)
    scores = np.array([normalize(scorer(random_tree(scorer.labels, rng)), norm_constant) for _ in range(n)])
    return float(scores.mean()), float(scores.std(ddof=1))

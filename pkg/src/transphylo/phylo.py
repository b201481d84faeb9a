"""Rooted binary trees, Newick I/O, gold-tree projection and Ward clustering."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

from .features import FeatureVector


class TreeError(ValueError):
    pass


class NewickError(TreeError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


@dataclass(frozen=True, eq=False)
class Node:
    label: Optional[str] = None
    length: float = 0.0
    children: tuple["Node", ...] = ()
    height: Optional[float] = None

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def iter_leaves(self) -> Iterator["Node"]:
        stack = [self]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                yield node
            else:
                stack.extend(reversed(node.children))

    def iter_preorder(self) -> Iterator["Node"]:
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))


@dataclass(frozen=True, eq=False)
class PhyloTree:
    """Rooted binary tree with uniquely labeled leaves and non-negative edge lengths.

    ``root.length`` is carried along for Newick round trips but never
    contributes to leaf-to-leaf paths.
    """

    root: Node
    _labels: tuple[str, ...] = field(init=False, repr=False)

    def __post_init__(self):
        labels = []
        for node in self.root.iter_preorder():
            if node.length < 0 or node.length != node.length:
                raise TreeError(f"negative or NaN edge length {node.length!r}")
            if node.is_leaf:
                if not node.label:
                    raise TreeError("leaf without a label")
                labels.append(node.label)
            elif len(node.children) != 2:
                raise TreeError(f"internal node with {len(node.children)} children; tree must be binary")
        if len(set(labels)) != len(labels):
            dup = sorted({x for x in labels if labels.count(x) > 1})
            raise TreeError(f"duplicate leaf labels: {', '.join(dup)}")
        object.__setattr__(self, "_labels", tuple(labels))

    @property
    def leaf_labels(self) -> tuple[str, ...]:
        """Leaf labels in left-to-right order."""
        return self._labels

    def __len__(self):
        return len(self._labels)

    def to_newick(self) -> str:
        return to_newick(self)

    def __str__(self):
        return self.to_newick()


# --- Newick ---------------------------------------------------------------

_SPECIAL = set("():,;[]'")


class _NewickReader:
    def __init__(self, text: str, missing_length: Optional[float], binarize: bool):
        self.s = text
        self.i = 0
        self.missing_length = missing_length
        self.binarize = binarize

    def fail(self, msg: str, pos: Optional[int] = None):
        raise NewickError(msg, self.i if pos is None else pos)

    def skip(self):
        s = self.s
        while self.i < len(s):
            c = s[self.i]
            if c.isspace():
                self.i += 1
            elif c == "[":
                end = s.find("]", self.i)
                if end < 0:
                    self.fail("unterminated comment")
                self.i = end + 1
            else:
                break

    def peek(self) -> str:
        self.skip()
        return self.s[self.i] if self.i < len(self.s) else ""

    def label(self) -> Optional[str]:
        self.skip()
        s = self.s
        if self.i < len(s) and s[self.i] == "'":
            out = []
            self.i += 1
            while True:
                if self.i >= len(s):
                    self.fail("unterminated quoted label")
                c = s[self.i]
                if c == "'":
                    if s.startswith("''", self.i):
                        out.append("'")
                        self.i += 2
                        continue
                    self.i += 1
                    return "".join(out)
                out.append(c)
                self.i += 1
        start = self.i
        while self.i < len(s) and s[self.i] not in _SPECIAL and not s[self.i].isspace():
            self.i += 1
        return s[start:self.i] or None

    def length(self) -> Optional[float]:
        if self.peek() != ":":
            return None
        self.i += 1
        self.skip()
        start = self.i
        s = self.s
        while self.i < len(s) and (s[self.i].isalnum() or s[self.i] in "+-."):
            self.i += 1
        try:
            value = float(s[start:self.i])
        except ValueError:
            self.fail("invalid branch length", start)
        if value < 0 or value != value:
            self.fail("negative or NaN branch length", start)
        return value

    def subtree(self, is_root: bool = False) -> Node:
        start = self.i
        children = []
        if self.peek() == "(":
            self.i += 1
            children.append(self.subtree())
            while self.peek() == ",":
                self.i += 1
                children.append(self.subtree())
            if self.peek() != ")":
                at_end = self.i >= len(self.s) or self.s[self.i] == ";"
                self.fail("unbalanced parentheses" if at_end else "expected ')' or ','")
            self.i += 1
        lab = self.label()
        length = self.length()
        if length is None and is_root:
            length = 0.0
        if length is None:
            if self.missing_length is None:
                self.fail("missing branch length")
            length = self.missing_length
        if not children:
            if lab is None:
                self.fail("empty leaf label")
            return Node(lab, length)
        if len(children) == 1:
            if not self.binarize:
                self.fail("unary node", start)
            only = children[0]
            return Node(only.label, only.length + length, only.children)
        if len(children) > 2:
            if not self.binarize:
                self.fail("non-binary node", start)
            acc = children[0]
            for nxt in children[1:-1]:
                acc = Node(None, 0.0, (acc, nxt))
            children = [acc, children[-1]]
        return Node(lab, length, tuple(children))

    def parse(self) -> PhyloTree:
        if not self.s.strip():
            self.fail("empty Newick string")
        root = self.subtree(is_root=True)
        if self.peek() == ")":
            self.fail("unbalanced parentheses")
        if self.peek() != ";":
            self.fail("missing ';'")
        self.i += 1
        if self.peek():
            self.fail("trailing characters after ';'")
        try:
            return PhyloTree(root)
        except TreeError as exc:
            raise NewickError(str(exc), 0) from None


def parse_newick(text: str, missing_length: Optional[float] = 1.0, binarize: bool = False) -> PhyloTree:
    """Parse a Newick string into a :class:`PhyloTree`.

    Absent branch lengths default to ``missing_length`` (pass ``None`` to
    make them an error).  Non-binary and unary nodes are rejected unless
    ``binarize`` is set, in which case polytomies are resolved left to
    right with zero-length edges and unary nodes are suppressed.
    """
    return _NewickReader(text, missing_length, binarize).parse()


def read_newick(path, **kwargs) -> PhyloTree:
    with open(path, encoding="utf-8") as fh:
        return parse_newick(fh.read(), **kwargs)


def _quote(label: str) -> str:
    if any(c in _SPECIAL or c.isspace() for c in label):
        return "'" + label.replace("'", "''") + "'"
    return label


def _fmt(x: float) -> str:
    return repr(float(x))


def to_newick(tree: PhyloTree) -> str:
    def rec(node: Node) -> str:
        if node.is_leaf:
            return f"{_quote(node.label)}:{_fmt(node.length)}"
        inner = ",".join(rec(c) for c in node.children)
        lab = _quote(node.label) if node.label else ""
        return f"({inner}){lab}:{_fmt(node.length)}"

    root = tree.root
    inner = ",".join(rec(c) for c in root.children) if root.children else None
    if inner is None:
        body = _quote(root.label)
    else:
        body = f"({inner})" + (_quote(root.label) if root.label else "")
    if root.length:
        body += f":{_fmt(root.length)}"
    return body + ";"


# --- tree utilities -------------------------------------------------------

def node_height(node: Node) -> float:
    """Longest path length from ``node`` down to a descendant leaf."""
    if node.is_leaf:
        return 0.0
    return max(c.length + node_height(c) for c in node.children)


def clusters(tree: PhyloTree) -> set[frozenset]:
    """Leaf sets below every internal node (the clades)."""
    out = set()

    def rec(node):
        if node.is_leaf:
            return frozenset([node.label])
        s = frozenset().union(*(rec(c) for c in node.children))
        out.add(s)
        return s

    rec(tree.root)
    return out


def cherries(tree: PhyloTree) -> list[frozenset]:
    return [frozenset(c.label for c in n.children) for n in tree.root.iter_preorder()
            if n.children and all(c.is_leaf for c in n.children)]


def cut(tree: PhyloTree, k: int) -> list[frozenset]:
    """Partition the leaves into ``k`` groups by undoing the ``k - 1`` highest merges."""
    if not 1 <= k <= len(tree):
        raise TreeError(f"cannot cut a {len(tree)}-leaf tree into {k} groups")
    groups = [tree.root]
    while len(groups) < k:
        internal = [g for g in groups if not g.is_leaf]
        top = max(internal, key=node_height)
        groups.remove(top)
        groups.extend(top.children)
    return [frozenset(n.label for n in g.iter_leaves()) for g in groups]


def same_topology(a: PhyloTree, b: PhyloTree) -> bool:
    return set(a.leaf_labels) == set(b.leaf_labels) and clusters(a) == clusters(b)


def relabel(tree: PhyloTree, mapping: dict) -> PhyloTree:
    def rec(n: Node) -> Node:
        if n.is_leaf:
            return Node(mapping[n.label], n.length, (), n.height)
        return Node(n.label, n.length, tuple(rec(c) for c in n.children), n.height)

    return PhyloTree(rec(tree.root))


def project_gold(gold: PhyloTree, keep) -> PhyloTree:
    """Restrict ``gold`` to the leaves in ``keep``.

    Degree-2 nodes left behind are suppressed by summing their two incident
    edges, so every path length between kept leaves is unchanged.
    """
    keep = set(keep)
    unknown = keep - set(gold.leaf_labels)
    if unknown:
        raise TreeError(f"labels not in the gold tree: {', '.join(sorted(unknown))}")
    if len(keep) < 2:
        raise TreeError("projection needs at least two leaves")

    def rec(node: Node) -> Optional[Node]:
        if node.is_leaf:
            return node if node.label in keep else None
        kids = [k for k in (rec(c) for c in node.children) if k is not None]
        if not kids:
            return None
        if len(kids) == 1:
            only = kids[0]
            return Node(only.label, only.length + node.length, only.children, only.height)
        return Node(node.label, node.length, tuple(kids), node.height)

    root = rec(gold.root)
    if root is not gold.root:
        root = Node(root.label, 0.0, root.children, root.height)
    return PhyloTree(root)


# --- distance matrices and clustering ------------------------------------

@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    labels: tuple
    d: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.d, dtype=float)
        n = len(self.labels)
        if d.shape != (n, n):
            raise TreeError(f"distance matrix shape {d.shape} does not match {n} labels")
        if len(set(self.labels)) != n:
            raise TreeError("distance matrix labels must be unique")
        if not np.all(np.isfinite(d)):
            raise TreeError("distance matrix has non-finite entries")
        if np.any(d < 0):
            raise TreeError("distance matrix has negative entries")
        scale = max(float(d.max()), 1.0) if n else 1.0
        if not np.allclose(d, d.T, rtol=0, atol=1e-12 * scale):
            raise TreeError("distance matrix is not symmetric")
        if np.any(np.diag(d) != 0):
            raise TreeError("distance matrix has a non-zero diagonal")
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "labels", tuple(self.labels))

    def __len__(self):
        return len(self.labels)

    def value(self, a, b) -> float:
        return float(self.d[self.labels.index(a), self.labels.index(b)])


def euclidean_distances(vectors: Sequence[FeatureVector], labels: Optional[Sequence] = None) -> DistanceMatrix:
    """Pairwise L2 distances; labels default to each vector's ``label``."""
    if len(vectors) < 2:
        raise TreeError("need at least two vectors")
    ids = {v.spec_id for v in vectors}
    if len(ids) != 1:
        raise TreeError(f"vectors come from different feature specs: {sorted(ids)}")
    X = np.vstack([v.values for v in vectors])
    diff = X[:, None, :] - X[None, :, :]
    d = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    d = 0.5 * (d + d.T)
    np.fill_diagonal(d, 0.0)
    return DistanceMatrix(tuple(labels) if labels is not None else tuple(v.label for v in vectors), d)


@dataclass(frozen=True)
class Merge:
    left: frozenset
    right: frozenset
    height: float


def ward_linkage(m: DistanceMatrix) -> list[Merge]:
    """Ward agglomeration via the Lance-Williams recurrence.

    Each cluster lives in the slot of its smallest member index; the pair
    with the smallest criterion is merged, ties going to the smallest
    (slot_i, slot_j) pair.  Heights follow the usual convention where two
    singletons merge at their input distance.
    """
    n = len(m)
    if n < 2:
        raise TreeError("ward clustering needs at least two labels")
    d2 = m.d ** 2
    np.fill_diagonal(d2, np.inf)
    size = np.ones(n)
    members = [frozenset([i]) for i in range(n)]
    active = np.ones(n, dtype=bool)
    merges = []
    upper = np.triu(np.ones((n, n), dtype=bool), 1)
    for _ in range(n - 1):
        masked = np.where(upper & active[:, None] & active[None, :], d2, np.inf)
        flat = int(np.argmin(masked))
        i, j = divmod(flat, n)
        dij = d2[i, j]
        merges.append(Merge(members[i], members[j], float(np.sqrt(dij))))
        ni, nj = size[i], size[j]
        nk = size
        new = ((ni + nk) * d2[i] + (nj + nk) * d2[j] - nk * dij) / (ni + nj + nk)
        d2[i, :] = new
        d2[:, i] = new
        d2[i, i] = np.inf
        active[j] = False
        d2[j, :] = np.inf
        d2[:, j] = np.inf
        size[i] = ni + nj
        members[i] = members[i] | members[j]
    return merges


def tree_from_merges(labels: Sequence, merges: Sequence[Merge]) -> PhyloTree:
    """Build a tree whose edge lengths are parent height minus child height."""
    nodes: dict[frozenset, tuple] = {frozenset([i]): (str(lab), 0.0, ()) for i, lab in enumerate(labels)}
    heights = {k: 0.0 for k in nodes}
    for mg in merges:
        h = mg.height
        kids = []
        for part in (mg.left, mg.right):
            lab, _, ch = nodes.pop(part)
            kids.append(Node(lab if not ch else None, max(h - heights[part], 0.0), ch,
                             heights[part] if ch else 0.0))
        key = mg.left | mg.right
        nodes[key] = (None, 0.0, tuple(kids))
        heights[key] = h
    (key, (_, _, ch)), = nodes.items()
    return PhyloTree(Node(None, 0.0, ch, heights[key]))


def ward_cluster(m: DistanceMatrix) -> PhyloTree:
    return tree_from_merges(m.labels, ward_linkage(m))


def random_distance_matrix(labels: Sequence, rng: np.random.Generator) -> DistanceMatrix:
    """Symmetric matrix of i.i.d. U(0,1) entries with a zero diagonal."""
    n = len(labels)
    d = np.zeros((n, n))
    iu = np.triu_indices(n, 1)
    d[iu] = rng.random(len(iu[0]))
    return DistanceMatrix(tuple(labels), d + d.T)


def random_tree(labels: Sequence, rng: np.random.Generator) -> PhyloTree:
    if len(labels) < 2:
        raise TreeError("a random tree needs at least two labels")
    return ward_cluster(random_distance_matrix(labels, rng))

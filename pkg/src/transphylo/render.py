"""Text and SVG dendrograms for rooted trees.

Leaves sit on the right at depth equal to their distance from the root;
internal nodes are placed at their own depth, vertically centred on their
children.
"""
from __future__ import annotations

from xml.sax.saxutils import escape

from .phylo import Node, PhyloTree


def _layout(tree: PhyloTree, weighted: bool):
    """Depth (distance from root) and row (leaf index, fractional for internals) per node."""
    depth, row = {}, {}
    leaves = []

    def rec(node: Node, d: float):
        depth[id(node)] = d
        if node.is_leaf:
            row[id(node)] = float(len(leaves))
            leaves.append(node)
            return
        for c in node.children:
            rec(c, d + (c.length if weighted else 1.0))
        rows = [row[id(c)] for c in node.children]
        row[id(node)] = (min(rows) + max(rows)) / 2

    rec(tree.root, 0.0)
    if not weighted:
        # align leaves on the right edge
        far = max(depth[id(leaf)] for leaf in leaves)
        for leaf in leaves:
            depth[id(leaf)] = far
    return depth, row, leaves


def render_ascii(tree: PhyloTree, width: int = 60, weighted: bool = True) -> str:
    """Sideways dendrogram, one leaf per line (two text rows per leaf)."""
    depth, row, leaves = _layout(tree, weighted)
    far = max(depth.values()) or 1.0
    ncols = max(width, 4)
    nrows = 2 * len(leaves) - 1
    grid = [[" "] * (ncols + 1) for _ in range(nrows)]

    def col(node):
        return int(round(depth[id(node)] / far * ncols))

    def r(node):
        return int(round(2 * row[id(node)]))

    def draw(node: Node):
        if node.is_leaf:
            return
        c0 = col(node)
        rows = [r(ch) for ch in node.children]
        for y in range(min(rows), max(rows) + 1):
            grid[y][c0] = "|"
        for ch in node.children:
            y = r(ch)
            grid[y][c0] = "+"
            for x in range(c0 + 1, col(ch)):
                grid[y][x] = "-"
            draw(ch)

    draw(tree.root)
    lines = []
    for y, cells in enumerate(grid):
        line = "".join(cells).rstrip()
        if y % 2 == 0:
            line = line.ljust(ncols + 1) + " " + leaves[y // 2].label
        lines.append(line.rstrip())
    return "\n".join(lines) + "\n"


def render_svg(tree: PhyloTree, width: int = 480, row_height: int = 18, weighted: bool = True) -> str:
    depth, row, leaves = _layout(tree, weighted)
    far = max(depth.values()) or 1.0
    margin, label_w = 10, 8 * max(len(leaf.label) for leaf in leaves) + 10
    plot_w = max(width - 2 * margin - label_w, 10)
    height = 2 * margin + row_height * len(leaves)

    def xy(node):
        return (margin + depth[id(node)] / far * plot_w, margin + row_height * (row[id(node)] + 0.5))

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'font-family="sans-serif" font-size="12">']
    for node in tree.root.iter_preorder():
        x, y = xy(node)
        if node.is_leaf:
            parts.append(f'<text x="{x + 4:.1f}" y="{y + 4:.1f}">{escape(node.label)}</text>')
            continue
        ys = [xy(c)[1] for c in node.children]
        parts.append(f'<line x1="{x:.1f}" y1="{min(ys):.1f}" x2="{x:.1f}" y2="{max(ys):.1f}" stroke="black"/>')
        for c in node.children:
            cx, cy = xy(c)
            parts.append(f'<line x1="{x:.1f}" y1="{cy:.1f}" x2="{cx:.1f}" y2="{cy:.1f}" stroke="black"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"

from transphylo.phylo import parse_newick
from transphylo.render import render_ascii, render_svg

T = parse_newick("((a:1,b:1):2,(c:0.5,'d<e':0.5):2.5);")


def test_ascii_lists_leaves_in_order():
    text = render_ascii(T, width=20)
    names = [line.split()[-1] for line in text.splitlines() if line.rstrip() and not line.rstrip().endswith("|")]
    assert names == ["a", "b", "c", "d<e"]


def test_svg_is_escaped_xml():
    import xml.dom.minidom
    svg = render_svg(T)
    xml.dom.minidom.parseString(svg)
    assert "d&lt;e" in svg

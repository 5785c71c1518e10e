import pytest
from hypothesis import given
from hypothesis import strategies as st

from coexhmc.errors import ClosureViolation, NoSubHierarchies, UnknownTerm
from coexhmc.ontology import (
    AnnotationMap,
    Hierarchy,
    dag_to_tree,
    filter_functions,
    levels,
    split_subhierarchies,
    true_path_close,
    write_subhierarchy_report,
)
from oracles import bfs_level_counts


def chain():
    return Hierarchy.from_edges([("b", "a"), ("c", "b")])


def diamond():
    return Hierarchy.from_edges([("a", "r"), ("b", "r"), ("c", "a"), ("c", "b")])


def genes(prefix, n):
    return [f"{prefix}{i}" for i in range(n)]


def test_close_chain():
    ann = true_path_close([("v", "c")], chain())
    assert ann.terms_of("v") == {"a", "b", "c"}


def test_close_root_only():
    ann = true_path_close([("v", "a")], chain())
    assert ann.terms_of("v") == {"a"}


def test_close_diamond():
    ann = true_path_close([("v", "c")], diamond())
    assert ann.terms_of("v") == {"c", "a", "b", "r"}


def test_close_unknown_term():
    with pytest.raises(UnknownTerm):
        true_path_close([("v", "zzz")], chain())


def test_strict_closure():
    with pytest.raises(ClosureViolation):
        true_path_close([("v", "c")], chain(), strict=True)
    closed = [("v", "a"), ("v", "b"), ("v", "c")]
    assert true_path_close(closed, chain(), strict=True).terms_of("v") == {"a", "b", "c"}


def test_filter_is_strict():
    h = Hierarchy.from_edges([("c", "r")])
    pairs = [(g, "r") for g in genes("g", 300)] + [(g, "c") for g in genes("g", 200)]
    h2, ann2 = filter_functions(AnnotationMap.from_pairs(pairs), h, 200)
    assert h2.terms == {"r"}
    assert ann2.genes_of("c") == frozenset()


def test_filter_rejects_unclosed_sizes():
    h = Hierarchy.from_edges([("c", "r")])
    pairs = [(g, "r") for g in genes("g", 201)] + [(g, "c") for g in genes("x", 300)]
    with pytest.raises(ClosureViolation):
        filter_functions(AnnotationMap.from_pairs(pairs), h, 250)


def test_filter_identity_when_all_pass():
    h = diamond()
    ann = true_path_close([(g, "c") for g in genes("g", 5)], h)
    h2, ann2 = filter_functions(ann, h, 1)
    assert h2 == h
    assert ann2 == ann


def star(root, n):
    return [(f"{root}_{i}", root) for i in range(n)]


def test_split_keeps_large_roots_only():
    h = Hierarchy.from_edges(star("big", 11) + star("small", 3))
    ann = true_path_close([("g", t) for t, _ in star("big", 11) + star("small", 3)], h)
    subs = split_subhierarchies(h, ann, 10)
    assert [s.root for s in subs] == ["big"]
    assert len(subs[0].terms) == 12


def test_split_boundary_is_inclusive():
    h = Hierarchy.from_edges(star("r", 9))
    ann = true_path_close([("g", "r_0")], h)
    assert len(split_subhierarchies(h, ann, 10)[0].terms) == 10
    with pytest.raises(NoSubHierarchies):
        split_subhierarchies(h, ann, 11)


def test_report_matches_table_layout(tmp_path):
    # root, 5 terms at depth 1, 5 at depth 2, 2 at depth 3
    edges = [(f"a{i}", "r") for i in range(5)] + [(f"b{i}", f"a{i}") for i in range(5)] + [("c0", "b0"), ("c1", "b1")]
    h = Hierarchy.from_edges(edges)
    ann = true_path_close([(f"g{i}", t) for i, (t, _) in enumerate(edges)], h)
    (sh,) = split_subhierarchies(h, ann, 10)
    assert sh.functions_per_level() == [5, 5, 2]
    write_subhierarchy_report([sh], tmp_path / "subs.tsv")
    lines = (tmp_path / "subs.tsv").read_text().splitlines()
    assert lines[0] == "root\tn_functions\tn_genes\tfunctions_per_level"
    assert lines[1] == f"r\t13\t{len(edges)}\t5/5/2"


def test_tree_keeps_highest_ratio_parent():
    h = diamond()
    pairs = [(g, "c") for g in genes("g", 10)] + [(g, "a") for g in genes("a", 10)] + [(g, "b") for g in genes("b", 30)]
    ann = true_path_close(pairs, h)
    assert len(ann.genes_of("a")) == 20 and len(ann.genes_of("b")) == 40
    sh = dag_to_tree("r", h, ann)
    assert sh.tree_edges["c"] == "a"


def test_tree_tie_goes_to_smaller_id():
    h = Hierarchy.from_edges([("y", "r"), ("x", "r"), ("c", "y"), ("c", "x")])
    pairs = [(g, "c") for g in genes("g", 10)] + [(g, "x") for g in genes("x", 10)] + [(g, "y") for g in genes("y", 10)]
    sh = dag_to_tree("r", h, true_path_close(pairs, h))
    assert sh.tree_edges["c"] == "x"


def test_tree_of_tree_is_identity():
    h = Hierarchy.from_edges([("a", "r"), ("b", "r"), ("c", "a")])
    sh = dag_to_tree("r", h, true_path_close([("g", "c"), ("g", "b")], h))
    assert set(sh.tree_edges.items()) == set(h.edges)


def test_levels_chain_and_star():
    assert levels(("r", {"a": "r", "b": "a"})) == {"r": 0, "a": 1, "b": 2}
    assert levels(("r", {"x": "r", "y": "r", "z": "r"})) == {"r": 0, "x": 1, "y": 1, "z": 1}


def test_levels_match_bfs_census():
    tree = {"a": "r", "b": "a", "c": "b", "x": "r", "y": "r", "z": "r"}
    depth = levels(("r", tree))
    children = {}
    for c, p in tree.items():
        children.setdefault(p, []).append(c)
    census = [sum(1 for d in depth.values() if d == k) for k in range(max(depth.values()) + 1)]
    assert census == bfs_level_counts("r", children)


@st.composite
def dag_with_annotations(draw):
    n = draw(st.integers(2, 12))
    names = [f"t{i:02d}" for i in range(n)]
    edges = set()
    for i in range(1, n):
        parents = draw(st.sets(st.integers(0, i - 1), min_size=1, max_size=min(3, i)))
        edges |= {(names[i], names[p]) for p in parents}
    h = Hierarchy.from_edges(edges, extra_terms=names)
    pairs = draw(st.lists(st.tuples(st.sampled_from(["g0", "g1", "g2", "g3", "g4"]), st.sampled_from(names)), max_size=25))
    return h, pairs


@given(dag_with_annotations())
def test_closure_idempotent_and_monotone(case):
    h, pairs = case
    once = true_path_close(pairs, h)
    assert true_path_close(once, h) == once
    assert set(pairs) <= set(once.pairs())
    for child, parent in h.edges:
        assert once.genes_of(child) <= once.genes_of(parent)


@given(dag_with_annotations())
def test_dag_to_tree_shape(case):
    h, pairs = case
    ann = true_path_close(pairs + [("anchor", t) for t in h.terms], h)
    for root in h.roots:
        sh = dag_to_tree(root, h, ann)
        assert set(sh.terms) == h.descendants(root)
        assert set(sh.tree_edges) == set(sh.terms) - {root}
        assert set(sh.tree_edges.items()) <= set(h.edges)
        assert all(sh.level_of[c] == sh.level_of[p] + 1 for c, p in sh.tree_edges.items())

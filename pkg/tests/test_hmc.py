import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coexhmc import hmc
from coexhmc.enrichment import FeatureDescriptor, FeatureMatrix
from coexhmc.errors import EmptyTrainingSplit, MalformedLine
from coexhmc.evaluate import evaluate
from coexhmc.learn import ForestParams
from coexhmc.ontology import AnnotationMap, Hierarchy, dag_to_tree, true_path_close

TWO_LEVEL = [("a", "r"), ("b", "r"), ("c", "a"), ("d", "a"), ("e", "b"), ("f", "b")]


def tree_of(edges, genes_per_leaf=2):
    h = Hierarchy.from_edges(edges)
    has_child = {p for _, p in edges}
    leaves = sorted({c for c, _ in edges} - has_child)
    raw = [(f"{leaf}{i}", leaf) for leaf in leaves for i in range(genes_per_leaf)]
    ann = true_path_close(raw, h)
    root = h.roots[0]
    return dag_to_tree(root, h, ann), ann


@pytest.mark.parametrize(
    "edges,counts",
    [
        (TWO_LEVEL, {"lcn": 6, "lcpn": 3, "lcl": 2, "global": 1}),
        ([("a", "r"), ("b", "a")], {"lcn": 2, "lcpn": 2, "lcl": 2, "global": 1}),
        ([(c, "r") for c in "abcde"], {"lcn": 5, "lcpn": 1, "lcl": 1, "global": 1}),
    ],
)
def test_unit_counts(edges, counts):
    sh, _ = tree_of(edges)
    for strategy, n in counts.items():
        assert len(hmc.plan(strategy, sh).units) == n


def test_lcpn_training_population():
    sh, _ = tree_of(TWO_LEVEL)
    units = {u.unit_id: u for u in hmc.plan("lcpn", sh).units}
    assert units["r"].train_on is None and units["r"].targets == ("a", "b")
    assert units["a"].train_on == "a" and units["a"].targets == ("c", "d")


def _random_tree_edges(draw_parents):
    return [(f"t{i}", "t0" if p == 0 else f"t{p}") for i, p in enumerate(draw_parents, start=1)]


tree_shapes = st.lists(st.integers(0, 30), min_size=1, max_size=15).map(
    lambda ps: _random_tree_edges([min(p, i) for i, p in enumerate(ps)])
)


@given(tree_shapes)
def test_every_term_targeted_once(edges):
    sh, _ = tree_of(edges, genes_per_leaf=1)
    non_root = sorted(sh.non_root_terms())
    for strategy in hmc.ALL_STRATEGIES:
        p = hmc.plan(strategy, sh)
        targets = sorted(t for u in p.units for t in u.targets)
        assert targets == non_root
        assert sh.root not in targets
    assert len(hmc.plan("lcl", sh).units) == sh.depth
    assert len(hmc.plan("lcpn", sh).units) == sum(1 for t in sh.terms if sh.children[t])


def _table(sh, genes, raw):
    terms = sh.breadth_first()
    probs = np.array([[raw[g].get(t, 1.0) for t in terms] for g in genes])
    return hmc.PredictionTable(sh.root, "lcn", genes, terms, probs)


def test_propagate_examples():
    sh, _ = tree_of([("c1", "r"), ("c2", "c1")])
    out = hmc.propagate(_table(sh, ["g"], {"g": {"c1": 0.9, "c2": 0.8}}), sh)
    assert out.get("g", "c1") == pytest.approx(0.9)
    assert out.get("g", "c2") == pytest.approx(0.72)
    assert out.consistent

    sh, _ = tree_of([("p", "r"), ("c", "p")])
    out = hmc.propagate(_table(sh, ["g"], {"g": {"p": 0.5, "c": 0.9}}), sh)
    assert out.get("g", "c") == pytest.approx(0.45)

    sh, _ = tree_of(TWO_LEVEL)
    ones = _table(sh, ["g", "h"], {"g": {}, "h": {}})
    assert np.array_equal(hmc.propagate(ones, sh).probs, ones.probs)


@given(tree_shapes, st.integers(0, 2**32 - 1))
def test_propagate_removes_violations(edges, seed):
    sh, _ = tree_of(edges, genes_per_leaf=1)
    genes = [f"g{i}" for i in range(5)]
    rng = np.random.default_rng(seed)
    raw = hmc.PredictionTable(sh.root, "x", genes, sh.breadth_first(), rng.random((5, len(sh.terms))))
    out = hmc.propagate(raw, sh)
    assert out.count_violations(sh, tol=0.0) == 0
    assert np.all(out.column(sh.root) == 1.0)
    assert np.all((out.probs >= 0) & (out.probs <= 1))


def separable_setup(edges, per_leaf=12, seed=0, noise=0.1):
    sh, ann = tree_of(edges, genes_per_leaf=per_leaf)
    genes = sorted(sh.gene_set)
    rng = np.random.default_rng(seed)
    cols, vals = [], []
    for t in sorted(sh.terms):
        member = np.array([g in ann.genes_of(t) for g in genes], dtype=float)
        for tag in ("G", "F"):
            cols.append(FeatureDescriptor(tag, t, 4))
            vals.append(member + noise * rng.random(len(genes)))
    fm = FeatureMatrix(genes, cols, np.column_stack(vals))
    folds = hmc.fold_plan(sh, genes, ann, 4, seed)
    return sh, ann, fm, folds


@pytest.mark.parametrize("strategy", hmc.ALL_STRATEGIES)
def test_separable_data_scores_high(strategy):
    sh, ann, fm, folds = separable_setup(TWO_LEVEL)
    table, records = hmc.run_strategy(strategy, sh, fm, ann, folds, ForestParams(n_trees=30, seed=1))
    assert table.count_violations(sh) == 0
    assert evaluate(table, ann).micro_auprc >= 0.8
    assert records and all(r.filtered_features >= 1 for r in records)


def test_local_units_see_only_their_columns():
    sh, ann, fm, folds = separable_setup(TWO_LEVEL)
    _, records = hmc.run_strategy("lcn", sh, fm, ann, folds, ForestParams(n_trees=5))
    for r in records:
        assert {c.split("|")[1] for c in r.columns} == {r.unit}
    _, records = hmc.run_strategy("global", sh, fm, ann, folds, ForestParams(n_trees=5))
    assert all(len(r.columns) == fm.shape[1] for r in records)


def test_single_term_strategies_agree():
    genes = [f"g{i:02d}" for i in range(40)]
    member = np.arange(40) % 2 == 0
    ann = AnnotationMap.from_pairs([(g, "r") for g in genes] + [(g, "a") for g, m in zip(genes, member) if m])
    sh = dag_to_tree("r", Hierarchy.from_edges([("a", "r")]), ann)
    rng = np.random.default_rng(0)
    cols = [FeatureDescriptor("G", "a", 4), FeatureDescriptor("F", "a", 4)]
    fm = FeatureMatrix(genes, cols, member[:, None] + 0.3 * rng.random((40, 2)))
    folds = hmc.fold_plan(sh, genes, ann, 4, 0)
    params = ForestParams(n_trees=20, seed=5)
    # the global unit also sees the root's columns; here there are none, so all four coincide
    runs = [hmc.run_strategy(s, sh, fm, ann, folds, params)[0].column("a") for s in hmc.ALL_STRATEGIES]
    for r in runs[1:]:
        assert np.array_equal(r, runs[0])
    assert np.array_equal(hmc.run_strategy("lcn", sh, fm, ann, folds, params)[0].column("a"), runs[0])


def test_all_positive_term_predicts_one():
    sh, ann, fm, folds = separable_setup([("a", "r"), ("b", "a")])
    # every gene of the sub-hierarchy lies under a
    table, _ = hmc.run_strategy("lcn", sh, fm, ann, folds, ForestParams(n_trees=5))
    assert np.all(table.column("a") == 1.0)


def test_empty_training_split_warns():
    sh, ann, fm, folds = separable_setup(TWO_LEVEL)
    ann = AnnotationMap.from_pairs([(g, t) for g, t in ann.pairs() if t != "c"])
    with pytest.warns(EmptyTrainingSplit):
        table, _ = hmc.run_strategy("lcn", sh, fm, ann, folds, ForestParams(n_trees=5))
    assert np.all(table.column("c") == 0.0)


def test_predictions_round_trip(tmp_path):
    sh, ann, fm, folds = separable_setup(TWO_LEVEL)
    tables = [hmc.run_strategy(s, sh, fm, ann, folds, ForestParams(n_trees=5))[0] for s in ("lcn", "global")]
    hmc.write_predictions(tables, tmp_path / "p.tsv")
    back = hmc.read_predictions(tmp_path / "p.tsv")
    assert [(b.root, b.method) for b in back] == [(t.root, t.method) for t in tables]
    for a, b in zip(tables, back):
        assert a.genes == b.genes and a.terms == b.terms
        assert np.array_equal(a.probs, b.probs)


def test_read_predictions_rejects_gaps(tmp_path):
    p = tmp_path / "p.tsv"
    p.write_text("\t".join(hmc.PREDICTION_HEADER) + "\nr\tlcn\tg1\ta\t0.5\nr\tlcn\tg2\tb\t0.5\n", encoding="utf-8")
    with pytest.raises(MalformedLine):
        hmc.read_predictions(p)
    p.write_text("\t".join(hmc.PREDICTION_HEADER) + "\nr\tlcn\tg1\ta\tx\n", encoding="utf-8")
    with pytest.raises(MalformedLine):
        hmc.read_predictions(p)

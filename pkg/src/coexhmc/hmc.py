"""Hierarchical multi-label strategies, out-of-fold assembly and consistency propagation."""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import explain, learn
from .enrichment import FeatureMatrix
from .errors import AllZeroImportance, EmptyTrainingSplit, MalformedLine
from .ingest import fmt_float
from .ontology import AnnotationMap, SubHierarchy
from .spectral import derive_seed


class StrategyKind(str, enum.Enum):
    LCN = "lcn"
    LCPN = "lcpn"
    LCL = "lcl"
    GLOBAL = "global"


ALL_STRATEGIES = tuple(StrategyKind)


@dataclass(frozen=True)
class ClassifierUnit:
    """One classifier: its target terms and which genes it trains on.

    ``train_on`` is ``None`` for all genes of the sub-hierarchy, otherwise a
    term whose annotated genes form the training population.
    """

    unit_id: str
    targets: tuple[str, ...]
    train_on: str | None = None


@dataclass(frozen=True)
class ClassifierPlan:
    strategy: StrategyKind
    root: str
    units: tuple[ClassifierUnit, ...]


def plan(strategy: StrategyKind | str, sh: SubHierarchy) -> ClassifierPlan:
    strategy = StrategyKind(strategy)
    if strategy is StrategyKind.LCN:
        units = [ClassifierUnit(t, (t,)) for t in sh.non_root_terms()]
    elif strategy is StrategyKind.LCPN:
        units = [
            ClassifierUnit(p, sh.children[p], None if p == sh.root else p)
            for p in sh.parent_terms
        ]
    elif strategy is StrategyKind.LCL:
        by_level: dict[int, list[str]] = {}
        for t in sh.non_root_terms():
            by_level.setdefault(sh.level_of[t], []).append(t)
        units = [ClassifierUnit(f"level{d}", tuple(by_level[d])) for d in sorted(by_level)]
    else:
        units = [ClassifierUnit("global", tuple(sh.non_root_terms()))]
    return ClassifierPlan(strategy, sh.root, tuple(units))


@dataclass
class PredictionTable:
    """Probabilities ``probs[i, j]`` for gene ``genes[i]`` and term ``terms[j]``."""

    root: str
    method: str
    genes: tuple[str, ...]
    terms: tuple[str, ...]
    probs: np.ndarray = field(repr=False)
    consistent: bool = False

    def __post_init__(self):
        self.genes = tuple(self.genes)
        self.terms = tuple(self.terms)
        self.probs = np.asarray(self.probs, dtype=float)
        if self.probs.shape != (len(self.genes), len(self.terms)):
            raise ValueError(f"probs shape {self.probs.shape} does not match {len(self.genes)}x{len(self.terms)}")

    def column(self, term: str) -> np.ndarray:
        return self.probs[:, self.terms.index(term)]

    def get(self, gene: str, term: str) -> float:
        return float(self.probs[self.genes.index(gene), self.terms.index(term)])

    def count_violations(self, sh: SubHierarchy, tol: float = 1e-12) -> int:
        """Gene/edge pairs where a child outscores its parent by more than ``tol``."""
        idx = {t: j for j, t in enumerate(self.terms)}
        bad = 0
        for child, parent in sh.tree_edges.items():
            bad += int(np.count_nonzero(self.probs[:, idx[child]] > self.probs[:, idx[parent]] + tol))
        return bad


@dataclass(frozen=True)
class SelectionRecord:
    root: str
    method: str
    unit: str
    fold: int
    columns: tuple[str, ...]
    importance: tuple[float, ...]
    selected: tuple[int, ...]

    @property
    def total_features(self) -> int:
        return len(self.columns)

    @property
    def filtered_features(self) -> int:
        return len(self.selected)

    def selected_by_tag(self, tag: str) -> int:
        return sum(1 for i in self.selected if self.columns[i].startswith(tag + "|"))


def label_matrix(genes: Sequence[str], terms: Sequence[str], ann: AnnotationMap) -> np.ndarray:
    index = {g: i for i, g in enumerate(genes)}
    Y = np.zeros((len(genes), len(terms)), dtype=np.int8)
    for j, t in enumerate(terms):
        for g in ann.genes_of(t):
            i = index.get(g)
            if i is not None:
                Y[i, j] = 1
    return Y


def fold_plan(sh: SubHierarchy, genes: Sequence[str], ann: AnnotationMap, k_folds: int, seed: int) -> learn.FoldPlan:
    Y = label_matrix(genes, sh.non_root_terms(), ann)
    return learn.stratified_kfold(Y, k_folds, derive_seed(seed, "folds", sh.root))


def _fit_unit(X_train, Y_train, X_test, columns, params, cutoff, seed_full):
    """Train, attribute, select, retrain. Returns test predictions and the selection."""
    forest_params = learn.ForestParams(
        n_trees=params.n_trees,
        min_samples_split=params.min_samples_split,
        bootstrap=params.bootstrap,
        seed=seed_full,
        n_jobs=params.n_jobs,
    )
    full = learn.fit(X_train, Y_train, forest_params)
    importance = explain.mean_abs_importance(explain.tree_shap(full, X_train))
    if importance.sum() > 0:
        chosen = explain.select_features(importance, cutoff).selected_columns
    else:
        warnings.warn("all feature importances are zero; keeping every column", AllZeroImportance, stacklevel=3)
        chosen = list(range(len(columns)))
    if len(chosen) == len(columns):
        # same seed and same columns would regrow ``full`` exactly
        return learn.predict_proba(full, X_test), importance, list(range(len(columns)))
    reduced = learn.fit(X_train[:, chosen], Y_train, forest_params)
    return learn.predict_proba(reduced, X_test[:, chosen]), importance, chosen


def train_strategy(
    plan_: ClassifierPlan,
    features: FeatureMatrix,
    ann: AnnotationMap,
    sh: SubHierarchy,
    folds: learn.FoldPlan,
    params: learn.ForestParams = learn.ForestParams(),
    cutoff: float = 0.9,
) -> tuple[PredictionTable, list[SelectionRecord]]:
    """Out-of-fold raw probabilities for every term of ``sh``, root fixed at 1.

    ``features`` rows are the genes to score. Each unit only sees the
    columns describing its own targets (the global unit sees all of them).
    """
    genes = features.genes
    terms = tuple(sh.breadth_first())
    tindex = {t: j for j, t in enumerate(terms)}
    Y_all = label_matrix(genes, terms, ann)
    probs = np.zeros((len(genes), len(terms)))
    probs[:, tindex[sh.root]] = 1.0
    records: list[SelectionRecord] = []
    method = plan_.strategy.value
    for unit in plan_.units:
        scope = terms if plan_.strategy is StrategyKind.GLOBAL else unit.targets
        cols = features.columns_for_terms(scope)
        X = features.values[:, cols]
        col_ids = tuple(features.columns[c].column_id for c in cols)
        target_idx = [tindex[t] for t in unit.targets]
        Y = Y_all[:, target_idx]
        if unit.train_on is None:
            population = np.ones(len(genes), dtype=bool)
        else:
            population = Y_all[:, tindex[unit.train_on]] > 0
        for f, (train, test) in enumerate(folds.splits()):
            train = train[population[train]]
            Yt = Y[train]
            if len(train) == 0 or not Yt.any():
                warnings.warn(
                    f"{method} unit {unit.unit_id} fold {f}: no positive training rows; predicting 0",
                    EmptyTrainingSplit,
                    stacklevel=2,
                )
                probs[np.ix_(test, target_idx)] = 0.0
                continue
            if Yt.all():
                probs[np.ix_(test, target_idx)] = 1.0
                continue
            # keyed by targets, so units that solve the same problem grow the same forest
            seed = derive_seed(params.seed, sh.root, f, *unit.targets)
            pred, importance, chosen = _fit_unit(X[train], Yt, X[test], col_ids, params, cutoff, seed)
            probs[np.ix_(test, target_idx)] = pred
            records.append(
                SelectionRecord(
                    sh.root, method, unit.unit_id, f, col_ids,
                    tuple(float(v) for v in importance), tuple(int(c) for c in chosen),
                )
            )
    return PredictionTable(sh.root, method, genes, terms, probs, False), records


def propagate(raw: PredictionTable, sh: SubHierarchy) -> PredictionTable:
    """Multiply each term's probability by its (already updated) parent's, root to leaves."""
    idx = {t: j for j, t in enumerate(raw.terms)}
    out = raw.probs.copy()
    out[:, idx[sh.root]] = 1.0
    for t in sh.breadth_first():
        if t == sh.root:
            continue
        out[:, idx[t]] *= out[:, idx[sh.tree_edges[t]]]
    return PredictionTable(raw.root, raw.method, raw.genes, raw.terms, out, True)


def run_strategy(
    strategy: StrategyKind | str,
    sh: SubHierarchy,
    features: FeatureMatrix,
    ann: AnnotationMap,
    folds: learn.FoldPlan,
    params: learn.ForestParams = learn.ForestParams(),
    cutoff: float = 0.9,
) -> tuple[PredictionTable, list[SelectionRecord]]:
    raw, records = train_strategy(plan(strategy, sh), features, ann, sh, folds, params, cutoff)
    return propagate(raw, sh), records


PREDICTION_HEADER = ("sub_hierarchy_root", "method", "gene", "term", "probability")


def write_predictions(tables: Sequence[PredictionTable], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(PREDICTION_HEADER) + "\n")
        for tab in tables:
            for i, g in enumerate(tab.genes):
                for j, t in enumerate(tab.terms):
                    fh.write(f"{tab.root}\t{tab.method}\t{g}\t{t}\t{fmt_float(tab.probs[i, j])}\n")


def read_predictions(path) -> list[PredictionTable]:
    """Inverse of :func:`write_predictions`; gene and term order follow first appearance."""
    groups: dict[tuple[str, str], dict] = {}
    with open(path, encoding="utf-8") as fh:
        header = tuple(fh.readline().rstrip("\n").split("\t"))
        if header != PREDICTION_HEADER:
            raise MalformedLine(f"unexpected header {header}", line=1, path=str(path))
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 5:
                raise MalformedLine("expected 5 fields", line=lineno, path=str(path))
            root, method, gene, term, p = parts
            try:
                p = float(p)
            except ValueError:
                raise MalformedLine(f"probability {p!r} is not a number", line=lineno, path=str(path)) from None
            grp = groups.setdefault((root, method), {"genes": {}, "terms": {}, "cells": []})
            grp["genes"].setdefault(gene, len(grp["genes"]))
            grp["terms"].setdefault(term, len(grp["terms"]))
            grp["cells"].append((gene, term, p))
    out = []
    for (root, method), grp in groups.items():
        probs = np.full((len(grp["genes"]), len(grp["terms"])), np.nan)
        for g, t, p in grp["cells"]:
            probs[grp["genes"][g], grp["terms"][t]] = p
        if np.isnan(probs).any():
            raise MalformedLine(f"{root}/{method} does not cover every gene/term pair", path=str(path))
        out.append(PredictionTable(root, method, tuple(grp["genes"]), tuple(grp["terms"]), probs, True))
    return out

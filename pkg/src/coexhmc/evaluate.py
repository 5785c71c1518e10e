"""Precision-recall curves and the micro, macro and frequency-weighted areas."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import NoPositives, NoPositivesForTerm
from .hmc import PredictionTable
from .ingest import fmt_float
from .ontology import AnnotationMap


@dataclass
class PRCurve:
    """Curve points ordered by decreasing threshold; a pair is called positive when its score >= threshold."""

    thresholds: np.ndarray
    precision: np.ndarray
    recall: np.ndarray

    @property
    def points(self) -> list[tuple[float, float]]:
        return [(float(r), float(p)) for r, p in zip(self.recall, self.precision)]


def pr_curve(scores, truth) -> PRCurve:
    scores = np.asarray(scores, dtype=float).ravel()
    truth = np.asarray(truth, dtype=bool).ravel()
    n_pos = int(truth.sum())
    if n_pos == 0:
        raise NoPositives("no positive pairs; the PR curve is undefined")
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    tp = np.cumsum(truth[order])
    # last index of each run of equal scores
    ends = np.r_[np.flatnonzero(s[1:] != s[:-1]), len(s) - 1]
    called = ends + 1
    return PRCurve(s[ends], tp[ends] / called, tp[ends] / n_pos)


def auc(curve: PRCurve) -> float:
    """Step-wise area: sum of recall increments times the precision reached there."""
    if len(curve.recall) == 0:
        raise ValueError("empty curve")
    dr = np.diff(np.r_[0.0, curve.recall])
    return float(np.sum(dr * curve.precision))


def _scored(pred: PredictionTable, truth: AnnotationMap) -> tuple[list[str], np.ndarray, np.ndarray]:
    terms = [t for t in pred.terms if t != pred.root]
    cols = [pred.terms.index(t) for t in terms]
    index = {g: i for i, g in enumerate(pred.genes)}
    Y = np.zeros((len(pred.genes), len(terms)), dtype=bool)
    for j, t in enumerate(terms):
        for g in truth.genes_of(t):
            i = index.get(g)
            if i is not None:
                Y[i, j] = True
    return terms, pred.probs[:, cols], Y


def micro_curve(pred: PredictionTable, truth: AnnotationMap) -> PRCurve:
    """Pooled curve over every (gene, non-root term) pair."""
    _, P, Y = _scored(pred, truth)
    return pr_curve(P, Y)


def per_function_auprc(pred: PredictionTable, truth: AnnotationMap, term: str) -> float:
    """Area under the single-term curve; NaN (with a warning) when the term has no positive gene."""
    y = np.zeros(len(pred.genes), dtype=bool)
    index = {g: i for i, g in enumerate(pred.genes)}
    for g in truth.genes_of(term):
        if g in index:
            y[index[g]] = True
    if not y.any():
        warnings.warn(f"term {term} has no positive genes; left out of macro averages", NoPositivesForTerm, stacklevel=2)
        return math.nan
    return auc(pr_curve(pred.column(term), y))


def aggregate(per_function: Mapping[str, float], weights_mode: str = "uniform", counts: Mapping[str, int] | None = None) -> float:
    scored = {t: v for t, v in per_function.items() if not math.isnan(v)}
    if not scored:
        raise NoPositives("no term has a defined AUPRC")
    if weights_mode == "uniform":
        return float(np.mean(list(scored.values())))
    if weights_mode == "frequency":
        if counts is None:
            raise ValueError("frequency weighting needs per-term gene counts")
        # one division at the end, so equal areas average to themselves exactly
        total = math.fsum(counts[t] for t in scored)
        return math.fsum(counts[t] * scored[t] for t in scored) / total
    raise ValueError(f"unknown weights mode {weights_mode!r}")


def frequency_weights(counts: Mapping[str, int]) -> dict[str, float]:
    total = sum(counts.values())
    return {t: c / total for t, c in counts.items()}


@dataclass
class MetricReport:
    micro_auprc: float
    macro_auprc: float
    weighted_macro_auprc: float
    per_function_auprc: dict[str, float] = field(repr=False)
    weights: dict[str, float] = field(repr=False)
    micro: PRCurve = field(repr=False, default=None)


def evaluate(pred: PredictionTable, truth: AnnotationMap) -> MetricReport:
    terms, _, Y = _scored(pred, truth)
    curve = micro_curve(pred, truth)
    per = {t: per_function_auprc(pred, truth, t) for t in terms}
    counts = {t: int(Y[:, j].sum()) for j, t in enumerate(terms) if not math.isnan(per[t])}
    return MetricReport(
        micro_auprc=auc(curve),
        macro_auprc=aggregate(per, "uniform"),
        weighted_macro_auprc=aggregate(per, "frequency", counts),
        per_function_auprc=per,
        weights=frequency_weights(counts),
        micro=curve,
    )


METRIC_HEADER = ("sub_hierarchy_root", "method", "metric", "value")
CURVE_HEADER = ("sub_hierarchy_root", "method", "term", "threshold", "precision", "recall")


def write_metrics(reports: Sequence[tuple[str, str, MetricReport]], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(METRIC_HEADER) + "\n")
        for root, method, rep in reports:
            for name, value in (
                ("micro", rep.micro_auprc),
                ("macro", rep.macro_auprc),
                ("macro_weighted", rep.weighted_macro_auprc),
            ):
                fh.write(f"{root}\t{method}\t{name}\t{fmt_float(value)}\n")


def read_metrics(path) -> dict[tuple[str, str, str], float]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        header = tuple(fh.readline().rstrip("\n").split("\t"))
        if header != METRIC_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        for line in fh:
            root, method, metric, value = line.rstrip("\n").split("\t")
            out[root, method, metric] = float(value)
    return out


def write_curves(entries: Sequence[tuple[str, str, str, PRCurve]], path) -> None:
    """``entries`` holds ``(root, method, term or 'ALL', curve)``."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(CURVE_HEADER) + "\n")
        for root, method, term, c in entries:
            for t, p, r in zip(c.thresholds, c.precision, c.recall):
                fh.write(f"{root}\t{method}\t{term}\t{fmt_float(t)}\t{fmt_float(p)}\t{fmt_float(r)}\n")

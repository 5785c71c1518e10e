"""Cluster-level over-representation p-values as per-gene features."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import gammaln

from .errors import GeneOrderMismatch, GeneSetMismatch, InvalidCounts
from .ontology import AnnotationMap
from .spectral import ClusterMatrix


class FeatureDescriptor(NamedTuple):
    graph_tag: str
    term: str
    cluster_count: int

    @property
    def column_id(self) -> str:
        return f"{self.graph_tag}|{self.term}|{self.cluster_count}"

    @classmethod
    def parse(cls, text: str) -> "FeatureDescriptor":
        tag, rest = text.split("|", 1)
        term, k = rest.rsplit("|", 1)
        return cls(tag, term, int(k))


@dataclass
class FeatureMatrix:
    genes: tuple[str, ...]
    columns: tuple[FeatureDescriptor, ...]
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.genes = tuple(self.genes)
        self.columns = tuple(self.columns)
        self.values = np.asarray(self.values, dtype=float).reshape(len(self.genes), len(self.columns))
        if len(set(self.columns)) != len(self.columns):
            raise ValueError("duplicate feature descriptors")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def take(self, genes: Sequence[str] | None = None, columns: Sequence[int] | None = None) -> "FeatureMatrix":
        if genes is None:
            rows = slice(None)
        else:
            index = {g: i for i, g in enumerate(self.genes)}
            rows = [index[g] for g in genes]
        cols = slice(None) if columns is None else list(columns)
        out_genes = self.genes if genes is None else tuple(genes)
        out_cols = self.columns if columns is None else tuple(self.columns[c] for c in columns)
        return FeatureMatrix(out_genes, out_cols, self.values[rows][:, cols])

    def columns_for_terms(self, terms, tags=("G", "F")) -> list[int]:
        terms = set(terms)
        return [i for i, d in enumerate(self.columns) if d.term in terms and d.graph_tag in tags]

    def slice(self, genes: Sequence[str], terms) -> "FeatureMatrix":
        """Rows for ``genes`` and the columns of ``terms``, original column order."""
        return self.take(genes, self.columns_for_terms(terms))


class _LogComb:
    """``log C(a, b)`` from a cached log-factorial table."""

    def __init__(self):
        self.table = gammaln(np.arange(1, 2, dtype=float))

    def ensure(self, m: int):
        if len(self.table) <= m:
            self.table = gammaln(np.arange(1, max(m + 1, 2 * len(self.table)) + 1, dtype=float))

    def __call__(self, a, b):
        return self.table[a] - self.table[b] - self.table[a - b]


_logc = _LogComb()


def hypergeom_tail(x: int, M: int, n: int, N: int) -> float:
    """``P[X >= x]`` for ``X ~ Hypergeometric(population M, n successes, N draws)``."""
    for name, v in (("x", x), ("M", M), ("n", n), ("N", N)):
        if int(v) != v or v < 0:
            raise InvalidCounts(f"{name}={v} must be a nonnegative integer")
    if n > M or N > M or x > min(n, N):
        raise InvalidCounts(f"inconsistent counts x={x}, M={M}, n={n}, N={N}")
    return float(hypergeom_tail_array(np.array([x]), M, np.array([n]), np.array([N]))[0])


def hypergeom_tail_array(x: np.ndarray, M: int, n: np.ndarray, N: np.ndarray) -> np.ndarray:
    """Vectorised upper tail over matching arrays ``x, n, N`` with one population ``M``.

    Terms are summed in log space relative to their maximum.
    """
    x, n, N = (np.asarray(a, dtype=np.int64) for a in (x, n, N))
    x, n, N = np.broadcast_arrays(x, n, N)
    _logc.ensure(M)
    out = np.ones(x.shape, dtype=float)
    lo = np.maximum(x, N - (M - n))  # support starts at max(0, N - (M - n))
    hi = np.minimum(n, N)
    out[lo > hi] = 0.0  # x beyond the support
    todo = (x > np.maximum(0, N - (M - n))) & (lo <= hi)
    if not todo.any():
        return out
    lo, hi, n_t, N_t = lo[todo], hi[todo], n[todo], N[todo]
    width = int((hi - lo).max()) + 1
    i = lo[:, None] + np.arange(width)[None, :]
    valid = i <= hi[:, None]
    i = np.where(valid, i, lo[:, None])
    logp = _logc(n_t[:, None], i) + _logc(M - n_t[:, None], N_t[:, None] - i) - _logc(M, N_t)[:, None]
    logp = np.where(valid, logp, -np.inf)
    top = logp.max(axis=1)
    tail = np.exp(top) * np.exp(logp - top[:, None]).sum(axis=1)
    out[todo] = np.clip(tail, 0.0, 1.0)
    return out


def annotation_matrix(genes: Sequence[str], terms: Sequence[str], ann: AnnotationMap) -> np.ndarray:
    index = {g: i for i, g in enumerate(genes)}
    B = np.zeros((len(genes), len(terms)), dtype=bool)
    for j, t in enumerate(terms):
        for g in ann.genes_of(t):
            i = index.get(g)
            if i is not None:
                B[i, j] = True
    return B


def enrich(clusters: ClusterMatrix, ann: AnnotationMap, terms: Sequence[str], graph_tag: str | None = None) -> FeatureMatrix:
    """Feature ``(tag, a, k)`` of gene ``v``: tail p-value of ``a`` within ``v``'s cluster at ``k``.

    Columns are term-major: all cluster counts of the first term, then the next.
    """
    tag = graph_tag or clusters.graph_tag
    genes = clusters.genes
    stray = set(ann.by_gene) - set(genes)
    if stray:
        raise GeneSetMismatch(f"{len(stray)} annotated genes are not clustered, e.g. {sorted(stray)[:3]}")
    terms = list(terms)
    M = len(genes)
    B = annotation_matrix(genes, terms, ann).astype(np.int64)
    n_term = B.sum(axis=0)
    K = clusters.cluster_counts
    values = np.empty((M, len(terms), len(K)))
    for j, k in enumerate(K):
        labels = clusters.labels[:, j]
        n_clusters = int(labels.max()) + 1
        onehot = np.zeros((M, n_clusters), dtype=np.int64)
        onehot[np.arange(M), labels] = 1
        overlap = onehot.T @ B  # (clusters, terms)
        size = onehot.sum(axis=0)
        p = hypergeom_tail_array(overlap, M, n_term[None, :], size[:, None])
        values[:, :, j] = p[labels]
    columns = [FeatureDescriptor(tag, t, k) for t in terms for k in K]
    return FeatureMatrix(genes, columns, values.reshape(M, len(terms) * len(K)))


def concat_features(jg: FeatureMatrix, jf: FeatureMatrix) -> FeatureMatrix:
    if jf.values.size == 0 and not jf.columns:
        return jg
    if jg.genes != jf.genes:
        raise GeneOrderMismatch("feature matrices have different gene order")
    return FeatureMatrix(jg.genes, jg.columns + jf.columns, np.hstack([jg.values, jf.values]))


def write_features(fm: FeatureMatrix, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("gene\t" + "\t".join(d.column_id for d in fm.columns) + "\n")
        for g, row in zip(fm.genes, fm.values):
            fh.write(g + "\t" + "\t".join(format(v, ".17g") for v in row) + "\n")


def read_features(path) -> FeatureMatrix:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if not header or header[0] != "gene":
            raise ValueError(f"{path}: feature file must start with a 'gene' header")
        columns = [FeatureDescriptor.parse(c) for c in header[1:]]
        genes, rows = [], []
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            if len(parts) != len(header):
                raise ValueError(f"{path}: row for {parts[0]} has {len(parts)} fields")
            genes.append(parts[0])
            rows.append([float(v) for v in parts[1:]])
    values = np.array(rows, dtype=float).reshape(len(genes), len(columns))
    return FeatureMatrix(tuple(genes), tuple(columns), values)


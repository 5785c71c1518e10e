"""Co-expression network and the annotation-enriched affinity graph."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateWeights, InputError, UnknownGene
from .ingest import fmt_float
from .ontology import AnnotationMap


@dataclass(frozen=True)
class Network:
    """Undirected weighted graph over an ordered gene list.

    ``adjacency`` is a symmetric CSR matrix indexed by position in ``nodes``.
    """

    nodes: tuple[str, ...]
    adjacency: sp.csr_matrix = field(repr=False)

    def __post_init__(self):
        A = self.adjacency
        if A.shape != (len(self.nodes), len(self.nodes)):
            raise ValueError("adjacency shape does not match node count")
        if A.diagonal().any():
            raise ValueError("self loops are not allowed")
        if (A != A.T).nnz:
            raise ValueError("adjacency must be symmetric")

    @classmethod
    def from_edges(cls, edges: Iterable, nodes: Iterable[str] | None = None) -> "Network":
        edges = list(edges)
        if nodes is None:
            nodes = sorted({g for a, b, _ in edges for g in (a, b)})
        nodes = tuple(nodes)
        index = {g: i for i, g in enumerate(nodes)}
        n = len(nodes)
        if not edges:
            return cls(nodes, sp.csr_matrix((n, n)))
        try:
            rows = np.array([index[a] for a, _, _ in edges])
            cols = np.array([index[b] for _, b, _ in edges])
        except KeyError as exc:
            raise UnknownGene(f"edge endpoint {exc.args[0]} not in node list") from None
        w = np.array([float(x) for _, _, x in edges])
        A = sp.coo_matrix((np.r_[w, w], (np.r_[rows, cols], np.r_[cols, rows])), shape=(n, n)).tocsr()
        return cls(nodes, A)

    @cached_property
    def index(self) -> dict[str, int]:
        return {g: i for i, g in enumerate(self.nodes)}

    @cached_property
    def max_weight(self) -> float:
        return float(self.adjacency.data.max()) if self.adjacency.nnz else 0.0

    @property
    def n_edges(self) -> int:
        return self.adjacency.nnz // 2

    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Upper-triangle edges as ``(i, j, w)`` with ``i < j``, row-major order."""
        U = sp.triu(self.adjacency, k=1).tocoo()
        order = np.lexsort((U.col, U.row))
        return U.row[order], U.col[order], U.data[order]

    def edges(self) -> list[tuple[str, str, float]]:
        i, j, w = self.edge_arrays()
        return [(self.nodes[a], self.nodes[b], float(x)) for a, b, x in zip(i, j, w)]

    def weight(self, u: str, v: str) -> float:
        idx = self.index
        return float(self.adjacency[idx[u], idx[v]])


class AffinityNetwork(Network):
    """Same edge set as its source network, weights in [0, 1]."""


def _set_similarity(a: frozenset, b: frozenset, mode: str) -> float:
    inter = len(a & b)
    union = len(a | b)
    if mode == "jaccard":
        return inter / union if union else 0.0
    if mode == "literal":
        # |union| / |intersection|, the literal orientation; > 1 whenever defined
        return union / inter if inter else 0.0
    raise ValueError(f"unknown similarity mode {mode!r}")


def affinity_weight(u: str, v: str, net: Network, ann: AnnotationMap, mode: str = "jaccard") -> float:
    """Mean of the normalised co-expression weight and the annotation overlap of ``u`` and ``v``."""
    w = net.weight(u, v)
    if w == 0:
        raise UnknownGene(f"no edge between {u} and {v}")
    top = net.max_weight
    if top <= 1.0:
        raise DegenerateWeights("max weight is 1; normalised co-expression is 0/0")
    return 0.5 * ((w - 1.0) / (top - 1.0) + _set_similarity(ann.terms_of(u), ann.terms_of(v), mode))


def build_affinity(net: Network, ann: AnnotationMap, mode: str = "jaccard") -> AffinityNetwork:
    top = net.max_weight
    if top <= 1.0:
        raise DegenerateWeights("max weight is 1; normalised co-expression is 0/0")
    i, j, w = net.edge_arrays()
    n = len(net.nodes)
    if mode == "jaccard":
        terms = sorted({t for g in net.nodes for t in ann.terms_of(g)})
        tindex = {t: k for k, t in enumerate(terms)}
        r, c = [], []
        for gi, g in enumerate(net.nodes):
            for t in ann.terms_of(g):
                r.append(gi)
                c.append(tindex[t])
        B = sp.csr_matrix((np.ones(len(r)), (r, c)), shape=(n, len(terms)))
        sizes = np.asarray(B.sum(axis=1)).ravel()
        inter = np.asarray(B[i].multiply(B[j]).sum(axis=1)).ravel()
        union = sizes[i] + sizes[j] - inter
        sim = np.divide(inter, union, out=np.zeros_like(inter), where=union > 0)
    else:
        sim = np.array(
            [_set_similarity(ann.terms_of(net.nodes[a]), ann.terms_of(net.nodes[b]), mode) for a, b in zip(i, j)]
        )
    wf = 0.5 * ((w - 1.0) / (top - 1.0) + sim)
    A = sp.coo_matrix((np.r_[wf, wf], (np.r_[i, j], np.r_[j, i])), shape=(n, n)).tocsr()
    # explicit zeros must stay stored so the edge set is preserved
    return AffinityNetwork(net.nodes, A)


def subgraph(net: Network, genes: Iterable[str]) -> Network:
    genes = set(genes)
    idx = net.index
    missing = genes - idx.keys()
    if missing:
        raise UnknownGene(f"genes not in network: {sorted(missing)[:5]}")
    keep = sorted(idx[g] for g in genes)
    A = net.adjacency[keep][:, keep].tocsr()
    return type(net)(tuple(net.nodes[k] for k in keep), A)


def write_network(net: Network, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for a, b, w in net.edges():
            fh.write(f"{a}\t{b}\t{fmt_float(w)}\n")


def network_from_records(records) -> Network:
    if not records:
        raise InputError("edge file contains no edges")
    return Network.from_edges(records)

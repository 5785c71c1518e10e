"""Unnormalised-Laplacian spectral clustering swept over several cluster counts."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph
import scipy.sparse.linalg as spla
from sklearn.cluster import KMeans
from sklearn.exceptions import ConvergenceWarning

from .errors import EigensolverFailure
from .graph import Network

DENSE_BELOW = 500
ZERO_TOL = 1e-9


def laplacian(net: Network) -> sp.csr_matrix:
    """``L = D - A`` with ``D`` the weighted degree diagonal."""
    A = net.adjacency
    deg = np.asarray(A.sum(axis=1)).ravel()
    return (sp.diags(deg) - A).tocsr()


@dataclass
class SpectralEmbedding:
    coordinates: np.ndarray = field(repr=False)
    eigenvalues: np.ndarray
    padded: bool = False


def _smallest_eigenpairs(L, count: int, *, maxiter: int, tol: float, seed: int):
    n = L.shape[0]
    if n < DENSE_BELOW or count >= n - 1:
        vals, vecs = scipy.linalg.eigh(L.toarray() if sp.issparse(L) else L)
        return vals[:count], vecs[:, :count]
    v0 = np.random.default_rng(seed).standard_normal(n)
    # shift-invert just below zero: L - sigma*I is positive definite
    try:
        vals, vecs = spla.eigsh(L.tocsc(), k=count, sigma=-1e-3, which="LM", v0=v0, maxiter=maxiter, tol=tol)
    except spla.ArpackNoConvergence as exc:
        raise EigensolverFailure(f"eigsh did not converge for {count} eigenpairs: {exc}") from None
    order = np.argsort(vals, kind="stable")
    return vals[order], vecs[:, order]


def embed(L, n: int, *, n_zero: int | None = None, maxiter: int = 10000, tol: float = 0.0, seed: int = 0) -> SpectralEmbedding:
    """Coordinates from the eigenvectors of the ``n`` smallest nonzero eigenvalues.

    An eigenvalue counts as zero when ``lam <= 1e-9 * max(2 * max_degree, 1)``. If
    fewer than ``n`` nonzero eigenvalues exist, zero-eigenvalue vectors pad
    the embedding (smallest first) and ``padded`` is set.
    ``n_zero`` is the expected multiplicity of zero (number of connected
    components); it sizes the sparse solve and is computed when omitted.
    """
    size = L.shape[0]
    if not 1 <= n < size:
        raise ValueError(f"need 1 <= n < {size}, got {n}")
    if n_zero is None:
        n_zero = csgraph.connected_components(sp.csr_matrix(L), directed=False)[0]
    count = min(size, n + n_zero)
    vals, vecs = _smallest_eigenpairs(L, count, maxiter=maxiter, tol=tol, seed=seed)
    # 2 * max degree bounds the largest Laplacian eigenvalue
    diag = L.diagonal() if sp.issparse(L) else np.diag(L)
    scale = max(2.0 * float(np.max(diag, initial=0.0)), 1.0)
    is_zero = vals <= ZERO_TOL * scale
    nonzero = np.flatnonzero(~is_zero)[:n]
    padded = len(nonzero) < n
    if padded:
        zeros = np.flatnonzero(is_zero)[: n - len(nonzero)]
        pick = np.r_[nonzero, zeros]
    else:
        pick = nonzero
    return SpectralEmbedding(vecs[:, pick], vals[pick], padded)


def _dense_labels(labels: np.ndarray) -> np.ndarray:
    """Relabel so cluster ids appear in order of first occurrence: 0, 1, 2, ..."""
    mapping: dict[int, int] = {}
    out = np.empty(len(labels), dtype=np.int64)
    for i, lab in enumerate(labels):
        out[i] = mapping.setdefault(int(lab), len(mapping))
    return out


def kmeans(points: np.ndarray, k: int, seed: int, n_init: int = 10, max_iter: int = 300) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    if not 1 <= k <= len(points):
        raise ValueError(f"k={k} must be in [1, {len(points)}]")
    km = KMeans(n_clusters=k, init="k-means++", n_init=n_init, max_iter=max_iter, random_state=seed % 2**32)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        labels = km.fit_predict(points)
    return _dense_labels(labels)


@dataclass
class ClusterMatrix:
    genes: tuple[str, ...]
    cluster_counts: tuple[int, ...]
    labels: np.ndarray = field(repr=False)  # (n_genes, len(cluster_counts)) int
    graph_tag: str = "G"
    padded: tuple[bool, ...] = ()

    def column(self, k: int) -> np.ndarray:
        return self.labels[:, self.cluster_counts.index(k)]


def derive_seed(*parts) -> int:
    """Stable 32-bit seed from integers and short strings."""
    ints = []
    for p in parts:
        if isinstance(p, str):
            b = p.encode()
            ints.append(len(b))  # keeps ("ab", "c") apart from ("a", "bc")
            ints.extend(b)
        else:
            ints.append(int(p))
    return int(np.random.SeedSequence(ints).generate_state(1)[0])


def cluster_sweep(net: Network, K, seed: int, graph_tag: str = "G", *, maxiter: int = 10000, tol: float = 0.0) -> ClusterMatrix:
    K = tuple(int(k) for k in K)
    n = len(net.nodes)
    if max(K) >= n:
        raise ValueError(f"cluster count {max(K)} must be below the node count {n}")
    L = laplacian(net)
    n_zero = csgraph.connected_components(net.adjacency, directed=False)[0]
    cols = []
    padded = []
    for k in K:
        emb = embed(L, k, n_zero=n_zero, maxiter=maxiter, tol=tol, seed=derive_seed(seed, graph_tag, k, 0))
        cols.append(kmeans(emb.coordinates, k, derive_seed(seed, graph_tag, k, 1)))
        padded.append(emb.padded)
    return ClusterMatrix(net.nodes, K, np.column_stack(cols), graph_tag, tuple(padded))


def write_clusters(matrices, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("gene\tgraph_tag\tk\tcluster_id\n")
        for cm in matrices:
            for j, k in enumerate(cm.cluster_counts):
                for g, lab in zip(cm.genes, cm.labels[:, j]):
                    fh.write(f"{g}\t{cm.graph_tag}\t{k}\t{lab}\n")

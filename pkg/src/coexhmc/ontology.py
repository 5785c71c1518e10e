"""Function hierarchy, true-path closure, filtering and sub-hierarchy trees."""

from __future__ import annotations

from collections import defaultdict, deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping

from .errors import ClosureViolation, NoSubHierarchies, UnknownTerm, ZeroAncestorGenes
from .ingest import check_acyclic


@dataclass(frozen=True)
class Hierarchy:
    """Rooted DAG over function ids; ``edges`` holds ``(child, parent)`` pairs."""

    terms: frozenset
    edges: frozenset

    def __post_init__(self):
        for child, parent in self.edges:
            if child not in self.terms or parent not in self.terms:
                raise UnknownTerm(f"edge {child}->{parent} references a term outside the hierarchy")
        check_acyclic(sorted(self.edges))
        if self.terms and not self.roots:
            raise UnknownTerm("hierarchy has no root")

    @classmethod
    def from_edges(cls, edges: Iterable, extra_terms: Iterable[str] = ()) -> "Hierarchy":
        edges = frozenset((c, p) for c, p in edges)
        terms = {t for e in edges for t in e} | set(extra_terms)
        return cls(frozenset(terms), edges)

    @cached_property
    def parents(self) -> dict[str, tuple[str, ...]]:
        out = defaultdict(list)
        for c, p in self.edges:
            out[c].append(p)
        return {t: tuple(sorted(out.get(t, ()))) for t in self.terms}

    @cached_property
    def children(self) -> dict[str, tuple[str, ...]]:
        out = defaultdict(list)
        for c, p in self.edges:
            out[p].append(c)
        return {t: tuple(sorted(out.get(t, ()))) for t in self.terms}

    @cached_property
    def roots(self) -> tuple[str, ...]:
        return tuple(sorted(t for t in self.terms if not self.parents[t]))

    @cached_property
    def _ancestors(self) -> dict[str, frozenset]:
        memo: dict[str, frozenset] = {}
        for t in self.topological_order():
            acc = set()
            for p in self.parents[t]:
                acc.add(p)
                acc |= memo[p]
            memo[t] = frozenset(acc)
        return memo

    def ancestors(self, term: str) -> frozenset:
        return self._ancestors[term]

    def descendants(self, term: str) -> set[str]:
        seen = {term}
        queue = deque([term])
        while queue:
            for c in self.children[queue.popleft()]:
                if c not in seen:
                    seen.add(c)
                    queue.append(c)
        return seen

    def topological_order(self) -> list[str]:
        """Parents before children; ties broken by term id."""
        indeg = {t: len(self.parents[t]) for t in self.terms}
        ready = sorted(t for t, d in indeg.items() if d == 0)
        order = []
        queue = deque(ready)
        while queue:
            t = queue.popleft()
            order.append(t)
            for c in self.children[t]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    queue.append(c)
        return order

    def restrict(self, keep: Iterable[str]) -> "Hierarchy":
        keep = frozenset(keep)
        return Hierarchy(keep, frozenset((c, p) for c, p in self.edges if c in keep and p in keep))


@dataclass(frozen=True)
class AnnotationMap:
    """Gene -> terms map together with its inverse."""

    by_gene: Mapping[str, frozenset]
    by_term: Mapping[str, frozenset]

    @classmethod
    def from_pairs(cls, pairs: Iterable) -> "AnnotationMap":
        by_gene = defaultdict(set)
        by_term = defaultdict(set)
        for gene, term in pairs:
            by_gene[gene].add(term)
            by_term[term].add(gene)
        return cls(
            {g: frozenset(ts) for g, ts in by_gene.items()},
            {t: frozenset(gs) for t, gs in by_term.items()},
        )

    def pairs(self) -> list[tuple[str, str]]:
        return sorted((g, t) for g, ts in self.by_gene.items() for t in ts)

    def terms_of(self, gene: str) -> frozenset:
        return self.by_gene.get(gene, frozenset())

    def genes_of(self, term: str) -> frozenset:
        return self.by_term.get(term, frozenset())

    def restrict_genes(self, genes: Iterable[str]) -> "AnnotationMap":
        genes = set(genes)
        return AnnotationMap.from_pairs((g, t) for g, ts in self.by_gene.items() if g in genes for t in ts)

    def restrict_terms(self, terms: Iterable[str]) -> "AnnotationMap":
        terms = set(terms)
        return AnnotationMap.from_pairs((g, t) for g, ts in self.by_gene.items() for t in ts if t in terms)

    def is_closed(self, h: Hierarchy) -> bool:
        return all(h.ancestors(t) <= ts for ts in self.by_gene.values() for t in ts)


def true_path_close(raw, h: Hierarchy, strict: bool = False) -> AnnotationMap:
    """Add every ancestor of every annotated term.

    ``raw`` is an :class:`AnnotationMap` or an iterable of ``(gene, term)``
    pairs. With ``strict`` set, an input that is not already closed raises
    :class:`ClosureViolation` instead of being completed.
    """
    if isinstance(raw, AnnotationMap):
        raw = raw.pairs()
    closed = set()
    for gene, term in raw:
        if term not in h.terms:
            raise UnknownTerm(f"term {term} (gene {gene}) is not in the hierarchy")
        closed.add((gene, term))
    missing = {(g, a) for g, t in closed for a in h.ancestors(t)} - closed
    if missing and strict:
        g, a = min(missing)
        raise ClosureViolation(f"gene {g} lacks ancestor term {a}")
    return AnnotationMap.from_pairs(closed | missing)


def filter_functions(ann: AnnotationMap, h: Hierarchy, min_genes: int) -> tuple[Hierarchy, AnnotationMap]:
    """Keep terms annotated to strictly more than ``min_genes`` genes."""
    keep = {t for t in h.terms if len(ann.genes_of(t)) > min_genes}
    for c, p in h.edges:
        if c in keep and p not in keep:
            raise ClosureViolation(f"term {c} has more genes than its parent {p}")
    h2 = h.restrict(keep)
    return h2, true_path_close(ann.restrict_terms(keep), h2)


@dataclass(frozen=True)
class SubHierarchy:
    root: str
    terms: tuple[str, ...]
    tree_edges: Mapping[str, str]
    level_of: Mapping[str, int]
    gene_set: frozenset = field(repr=False)

    @cached_property
    def children(self) -> dict[str, tuple[str, ...]]:
        out = defaultdict(list)
        for c, p in self.tree_edges.items():
            out[p].append(c)
        return {t: tuple(sorted(out.get(t, ()))) for t in self.terms}

    @property
    def parent_terms(self) -> list[str]:
        """Terms with at least one child, in breadth-first order."""
        return [t for t in self.breadth_first() if self.children[t]]

    @property
    def depth(self) -> int:
        return max(self.level_of.values())

    def breadth_first(self) -> list[str]:
        order = []
        queue = deque([self.root])
        while queue:
            t = queue.popleft()
            order.append(t)
            queue.extend(self.children[t])
        return order

    def non_root_terms(self) -> list[str]:
        return [t for t in self.breadth_first() if t != self.root]

    def functions_per_level(self) -> list[int]:
        counts = [0] * (self.depth + 1)
        for lvl in self.level_of.values():
            counts[lvl] += 1
        return counts[1:]


def levels(sh: SubHierarchy | tuple) -> dict[str, int]:
    """Depth of each term in a tree; accepts a SubHierarchy or ``(root, child->parent map)``."""
    if isinstance(sh, SubHierarchy):
        root, tree_edges = sh.root, sh.tree_edges
    else:
        root, tree_edges = sh
    depth = {root: 0}

    def resolve(t):
        chain = []
        while t not in depth:
            chain.append(t)
            t = tree_edges[t]
        d = depth[t]
        for c in reversed(chain):
            d += 1
            depth[c] = d

    for t in tree_edges:
        resolve(t)
    return depth


def dag_to_tree(root: str, h: Hierarchy, ann: AnnotationMap) -> SubHierarchy:
    """Turn the DAG below ``root`` into a tree.

    Each edge ``(a, b)`` is weighted by ``|genes(a)| / |genes(b)|``; a term
    with several parents keeps the heaviest edge, ties going to the smallest
    parent id.
    """
    terms = h.descendants(root)
    tree_edges = {}
    for t in sorted(terms):
        if t == root:
            continue
        parents = [p for p in h.parents[t] if p in terms]
        n_child = len(ann.genes_of(t))
        best = None
        for p in sorted(parents):
            n_parent = len(ann.genes_of(p))
            if n_parent == 0:
                raise ZeroAncestorGenes(f"parent {p} of {t} has no genes")
            w = n_child / n_parent
            if best is None or w > best[0]:
                best = (w, p)
        tree_edges[t] = best[1]
    lv = levels((root, tree_edges))
    return SubHierarchy(
        root=root,
        terms=tuple(sorted(terms)),
        tree_edges=tree_edges,
        level_of=lv,
        gene_set=ann.genes_of(root),
    )


def split_subhierarchies(h: Hierarchy, ann: AnnotationMap, min_functions: int) -> list[SubHierarchy]:
    """One tree per root reaching at least ``min_functions`` terms (root included)."""
    out = []
    for r in h.roots:
        if len(h.descendants(r)) >= min_functions:
            out.append(dag_to_tree(r, h, ann))
    if not out:
        raise NoSubHierarchies(f"no root reaches {min_functions} functions")
    return out


def write_subhierarchy_report(subs: Iterable[SubHierarchy], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("root\tn_functions\tn_genes\tfunctions_per_level\n")
        for sh in subs:
            per_level = "/".join(str(n) for n in sh.functions_per_level())
            fh.write(f"{sh.root}\t{len(sh.terms)}\t{len(sh.gene_set)}\t{per_level}\n")

"""Planted-partition networks with hierarchy-consistent annotations.

Genes are split into blocks; dense heavy edges inside blocks, sparse
weight-1 edges across. Every hierarchy root is carried by all genes, and
each child term draws a subset of its parent's blocks, so annotations are
closed by construction.
"""

from __future__ import annotations

import json
from graphlib import TopologicalSorter
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import InfeasibleSpec
from .ingest import check_acyclic, write_annotations, write_edges, write_hierarchy

SHAPES = ("chain", "star", "binary-tree", "custom")


@dataclass(frozen=True)
class SynthSpec:
    n_genes: int = 60
    n_blocks: int = 3
    in_block_density: float = 0.6
    in_block_weight_range: tuple[float, float] = (2.0, 5.0)
    cross_block_edge_prob: float = 0.01
    hierarchy_shape: str = "chain"
    n_terms: int = 4  # per hierarchy, root included
    n_hierarchies: int = 1
    signal: float = 1.0  # chance a gene of a mapped block carries the term
    noise: float = 0.0  # flip rate of leaf-term memberships
    seed: int = 0
    custom_edges: tuple[tuple[str, str], ...] = ()  # (child, parent) when shape is custom

    def validate(self) -> None:
        if self.n_blocks < 1 or self.n_genes < 1:
            raise InfeasibleSpec("n_genes and n_blocks must be positive")
        if self.n_blocks > self.n_genes:
            raise InfeasibleSpec(f"{self.n_blocks} blocks cannot be filled by {self.n_genes} genes")
        for name in ("in_block_density", "cross_block_edge_prob", "signal", "noise"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InfeasibleSpec(f"{name}={v} is not a probability")
        lo, hi = self.in_block_weight_range
        if lo < 1.0 or hi < lo:
            raise InfeasibleSpec(f"weight range ({lo}, {hi}) must satisfy 1 <= lo <= hi")
        if self.hierarchy_shape not in SHAPES:
            raise InfeasibleSpec(f"unknown hierarchy shape {self.hierarchy_shape!r}")
        if self.hierarchy_shape == "custom":
            if not self.custom_edges:
                raise InfeasibleSpec("custom shape needs custom_edges")
            check_acyclic(list(self.custom_edges))
            children = {c for c, _ in self.custom_edges}
            roots = {p for _, p in self.custom_edges} - children
            if len(roots) != 1:
                raise InfeasibleSpec("custom hierarchy must have exactly one root")
        elif self.n_terms < 2:
            raise InfeasibleSpec("n_terms must be >= 2 (a root and one child)")
        if self.n_hierarchies < 1:
            raise InfeasibleSpec("n_hierarchies must be >= 1")


@dataclass
class SynthData:
    edges: list[tuple[str, str, float]]
    annotations: list[tuple[str, str]]
    hierarchy: list[tuple[str, str]]  # (child, parent)
    block_of: dict[str, int]
    planted: dict[str, list[str]]  # term -> genes before noise
    term_blocks: dict[str, list[int]]
    spec: SynthSpec


def _shape_edges(spec: SynthSpec, prefix: str) -> tuple[str, list[tuple[str, str]]]:
    """Root id and (child, parent) edges of one hierarchy."""
    if spec.hierarchy_shape == "custom":
        edges = [(f"{prefix}{c}", f"{prefix}{p}") for c, p in spec.custom_edges]
        children = {c for c, _ in edges}
        root = next(p for _, p in edges if p not in children)
        return root, edges
    names = [f"{prefix}t{i:02d}" for i in range(spec.n_terms)]
    if spec.hierarchy_shape == "chain":
        parent = lambda i: i - 1
    elif spec.hierarchy_shape == "star":
        parent = lambda i: 0
    else:
        parent = lambda i: (i - 1) // 2
    return names[0], [(names[i], names[parent(i)]) for i in range(1, len(names))]


def _assign_blocks(root, edges, n_blocks, rng) -> dict[str, list[int]]:
    children: dict[str, list[str]] = {}
    for c, p in edges:
        children.setdefault(p, []).append(c)
    blocks = {root: list(range(n_blocks))}
    queue = [root]
    while queue:
        p = queue.pop(0)
        kids = sorted(children.get(p, []))
        if not kids:
            continue
        pool = list(rng.permutation(blocks[p]))
        if len(pool) > len(kids):
            # one share stays with the parent alone, so no child equals it
            for kid, chunk in zip(kids, np.array_split(np.array(pool), len(kids) + 1)):
                blocks[kid] = sorted(int(b) for b in chunk)
        elif len(pool) == len(kids):
            for kid, chunk in zip(kids, np.array_split(np.array(pool), len(kids))):
                blocks[kid] = sorted(int(b) for b in chunk)
        else:
            for i, kid in enumerate(kids):
                blocks[kid] = [int(pool[i % len(pool)])]
        queue.extend(kids)
    return blocks


def generate(spec: SynthSpec) -> SynthData:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n = spec.n_genes
    width = len(str(n - 1))
    genes = [f"g{i:0{width}d}" for i in range(n)]
    block = rng.permutation(np.arange(n) % spec.n_blocks)
    lo, hi = spec.in_block_weight_range

    iu, ju = np.triu_indices(n, k=1)
    same = block[iu] == block[ju]
    draw = rng.random(len(iu))
    weights = np.round(rng.uniform(lo, hi, len(iu)), 6)
    keep_in = same & (draw < spec.in_block_density)
    keep_cross = ~same & (draw < spec.cross_block_edge_prob)
    edges = [(genes[a], genes[b], float(weights[k])) for k, (a, b) in enumerate(zip(iu, ju)) if keep_in[k]]
    edges += [(genes[a], genes[b], 1.0) for k, (a, b) in enumerate(zip(iu, ju)) if keep_cross[k]]
    edges.sort()

    hierarchy: list[tuple[str, str]] = []
    members: dict[str, np.ndarray] = {}
    term_blocks: dict[str, list[int]] = {}
    leaves: list[str] = []
    parents_of: dict[str, list[str]] = {}
    for h in range(spec.n_hierarchies):
        prefix = "" if spec.hierarchy_shape == "custom" and spec.n_hierarchies == 1 else f"h{h}_"
        root, h_edges = _shape_edges(spec, prefix)
        hierarchy.extend(h_edges)
        blocks = _assign_blocks(root, h_edges, spec.n_blocks, rng)
        term_blocks.update(blocks)
        for c, p in h_edges:
            parents_of.setdefault(c, []).append(p)
        members[root] = np.ones(n, dtype=bool)
        ts = TopologicalSorter({c: parents_of.get(c, []) for c, _ in h_edges})
        for t in ts.static_order():
            if t == root:
                continue
            inherited = np.logical_and.reduce([members[p] for p in parents_of[t]])
            members[t] = inherited & np.isin(block, blocks[t]) & (rng.random(n) < spec.signal)
        has_child = {p for _, p in h_edges}
        leaves.extend(sorted({c for c, _ in h_edges} - has_child))

    planted = {t: [genes[i] for i in np.flatnonzero(m)] for t, m in members.items()}
    if spec.noise > 0:
        for t in leaves:
            members[t] = members[t] ^ (rng.random(n) < spec.noise)
        # re-close: a gene that gained a leaf gains every ancestor
        for t in leaves:
            stack = list(parents_of.get(t, []))
            while stack:
                p = stack.pop()
                members[p] = members[p] | members[t]
                stack.extend(parents_of.get(p, []))
    annotations = sorted((genes[i], t) for t, m in members.items() for i in np.flatnonzero(m))
    return SynthData(
        edges=edges,
        annotations=annotations,
        hierarchy=sorted(hierarchy),
        block_of={g: int(b) for g, b in zip(genes, block)},
        planted=planted,
        term_blocks=term_blocks,
        spec=spec,
    )


def write(data: SynthData, outdir) -> dict[str, Path]:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "edges": out / "edges.tsv",
        "annotations": out / "annotations.tsv",
        "hierarchy": out / "hierarchy.tsv",
        "plant": out / "plant.json",
    }
    write_edges(data.edges, paths["edges"])
    write_annotations(data.annotations, paths["annotations"])
    write_hierarchy(data.hierarchy, paths["hierarchy"])
    record = {
        "spec": asdict(data.spec),
        "block_of": data.block_of,
        "planted": data.planted,
        "term_blocks": data.term_blocks,
    }
    paths["plant"].write_text(json.dumps(record, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return paths


def spec_from_json(text: str) -> SynthSpec:
    raw = json.loads(text)
    known = set(SynthSpec.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise InfeasibleSpec(f"unknown spec fields {sorted(unknown)}")
    if "in_block_weight_range" in raw:
        raw["in_block_weight_range"] = tuple(raw["in_block_weight_range"])
    if "custom_edges" in raw:
        raw["custom_edges"] = tuple(tuple(e) for e in raw["custom_edges"])
    return SynthSpec(**raw)

"""Readers and writers for the three input tables and the run configuration.

All tables are UTF-8 TSV. Lines starting with ``#`` are comments (a header
line must therefore start with ``#``); blank lines are ignored.
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
import sys
from dataclasses import dataclass
from graphlib import CycleError, TopologicalSorter
from pathlib import Path
from typing import Iterator, NamedTuple

from .errors import (
    CycleDetected,
    DuplicateEdge,
    DuplicatePair,
    InvalidValue,
    MalformedLine,
    SelfLoop,
    SubThresholdWeight,
    UnknownKey,
)


class EdgeRecord(NamedTuple):
    gene_a: str
    gene_b: str
    weight: float


class AnnotationRecord(NamedTuple):
    gene: str
    term: str


class HierarchyEdgeRecord(NamedTuple):
    child: str
    parent: str


def _rows(path, ncols: int) -> Iterator[tuple[int, list[str]]]:
    path = str(path)
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != ncols:
                raise MalformedLine(
                    f"expected {ncols} tab-separated columns, got {len(fields)}",
                    line=lineno,
                    path=path,
                )
            fields = [f.strip() for f in fields]
            if any(not f for f in fields):
                raise MalformedLine("empty column", line=lineno, path=path)
            yield lineno, [sys.intern(f) for f in fields]


def parse_edges(path) -> list[EdgeRecord]:
    records: list[EdgeRecord] = []
    seen: dict[frozenset, int] = {}
    for lineno, (a, b, w) in _rows(path, 3):
        try:
            weight = float(w)
        except ValueError:
            raise MalformedLine(f"weight {w!r} is not a number", line=lineno, path=str(path)) from None
        if not math.isfinite(weight):
            raise MalformedLine(f"weight {w!r} is not finite", line=lineno, path=str(path))
        if a == b:
            raise SelfLoop(f"self loop on {a}", line=lineno, path=str(path))
        if weight < 1.0:
            raise SubThresholdWeight(f"weight {weight} < 1", line=lineno, path=str(path))
        key = frozenset((a, b))
        if key in seen:
            raise DuplicateEdge(
                f"edge {a}-{b} already given on line {seen[key]}", line=lineno, path=str(path)
            )
        seen[key] = lineno
        records.append(EdgeRecord(a, b, weight))
    return records


def parse_annotations(path) -> list[AnnotationRecord]:
    records: list[AnnotationRecord] = []
    seen: dict[tuple[str, str], int] = {}
    for lineno, (gene, term) in _rows(path, 2):
        if (gene, term) in seen:
            raise DuplicatePair(
                f"pair {gene}/{term} already given on line {seen[gene, term]}",
                line=lineno,
                path=str(path),
            )
        seen[gene, term] = lineno
        records.append(AnnotationRecord(gene, term))
    return records


def parse_hierarchy(path) -> list[HierarchyEdgeRecord]:
    records: list[HierarchyEdgeRecord] = []
    seen: dict[tuple[str, str], int] = {}
    for lineno, (child, parent) in _rows(path, 2):
        if child == parent:
            raise MalformedLine(f"term {child} is its own parent", line=lineno, path=str(path))
        if (child, parent) in seen:
            raise DuplicatePair(
                f"edge {child}->{parent} already given on line {seen[child, parent]}",
                line=lineno,
                path=str(path),
            )
        seen[child, parent] = lineno
        records.append(HierarchyEdgeRecord(child, parent))
    check_acyclic(records, lines=seen, path=str(path))
    return records


def check_acyclic(records, lines=None, path=None) -> None:
    """Raise :class:`CycleDetected` if the child->parent edges contain a cycle."""
    sorter = TopologicalSorter()
    for child, parent in records:
        sorter.add(child, parent)
    try:
        sorter.prepare()
    except CycleError as exc:
        cycle = exc.args[1]
        line = None
        if lines:
            # graphlib reports the cycle as [n0, n1, ..., n0] with n_{i+1} a predecessor of n_i
            for a, b in zip(cycle, cycle[1:]):
                line = lines.get((a, b)) or lines.get((b, a))
                if line is not None:
                    break
        raise CycleDetected(cycle, line=line, path=path) from None


def fmt_float(x) -> str:
    """Shortest text that reads back to the same double."""
    return repr(float(x))


def write_edges(records, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for a, b, w in records:
            fh.write(f"{a}\t{b}\t{fmt_float(w)}\n")


def write_annotations(records, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for gene, term in records:
            fh.write(f"{gene}\t{term}\n")


def write_hierarchy(records, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for child, parent in records:
            fh.write(f"{child}\t{parent}\n")


@dataclass(frozen=True)
class RunConfig:
    cluster_counts: tuple[int, ...] = tuple(range(10, 101, 10))
    selection_cutoff: float = 0.9
    folds: int = 5
    min_genes_per_function: int = 200
    min_functions_per_subhierarchy: int = 10
    forest_trees: int = 200
    forest_min_split: int = 5
    seed: int = 0
    eigen_maxiter: int = 10000
    eigen_tol: float = 0.0
    strict_closure: bool = False

    def __post_init__(self):
        K = self.cluster_counts
        if not K:
            raise InvalidValue("cluster_counts must not be empty")
        if any(k < 2 for k in K):
            raise InvalidValue("cluster_counts entries must be >= 2")
        if any(b <= a for a, b in zip(K, K[1:])):
            raise InvalidValue("cluster_counts must be strictly increasing")
        if not 0.0 <= self.selection_cutoff <= 1.0:
            raise InvalidValue(f"selection_cutoff {self.selection_cutoff} is not in [0, 1]")
        if self.folds < 2:
            raise InvalidValue("folds must be >= 2")
        for name in ("min_genes_per_function", "min_functions_per_subhierarchy", "forest_trees", "eigen_maxiter"):
            if getattr(self, name) < 1:
                raise InvalidValue(f"{name} must be positive")
        if self.forest_min_split < 2:
            raise InvalidValue("forest_min_split must be >= 2")
        if not 0 <= self.seed < 2**64:
            raise InvalidValue("seed must be an unsigned 64-bit integer")
        if self.eigen_tol < 0:
            raise InvalidValue("eigen_tol must be >= 0")

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if f.name == "cluster_counts":
                value = ",".join(str(k) for k in value)
            elif isinstance(value, bool):
                value = "true" if value else "false"
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{f.name}={value}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()


def _parse_counts(text: str) -> tuple[int, ...]:
    text = text.strip()
    if ":" in text:
        # start:stop:step, stop inclusive
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(text)
        start, stop, step = (int(p) for p in parts)
        if step < 1:
            raise ValueError(text)
        return tuple(range(start, stop + 1, step))
    return tuple(int(p) for p in text.split(",") if p.strip())


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


_CONVERTERS = {
    "cluster_counts": _parse_counts,
    "selection_cutoff": float,
    "folds": int,
    "min_genes_per_function": int,
    "min_functions_per_subhierarchy": int,
    "forest_trees": int,
    "forest_min_split": int,
    "seed": int,
    "eigen_maxiter": int,
    "eigen_tol": float,
    "strict_closure": _parse_bool,
}


def parse_config_text(text: str, path: str | None = None) -> RunConfig:
    values: dict = {}
    lines: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise MalformedLine("expected key=value", line=lineno, path=path)
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _CONVERTERS:
            raise UnknownKey(f"unknown key {key!r}", line=lineno, path=path)
        try:
            values[key] = _CONVERTERS[key](value)
        except ValueError:
            raise InvalidValue(f"bad value {value.strip()!r} for {key}", line=lineno, path=path) from None
        lines[key] = lineno
    try:
        return RunConfig(**values)
    except InvalidValue as exc:
        key = str(exc).split()[0]
        raise InvalidValue(str(exc), line=lines.get(key, 1), path=path) from None


def load_config(path) -> RunConfig:
    return parse_config_text(Path(path).read_text(encoding="utf-8"), path=str(path))

"""End-to-end stages with digest-keyed caching and a run manifest.

Every stage writes into a scratch directory under the cache root and is
only published (renamed into the cache, then copied to the output
directory) once it has finished, so a failed stage leaves nothing behind.
The cache root defaults to ``<out>/.cache`` and can be moved with the
``COEXHMC_CACHE`` environment variable.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import shutil
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

from . import hmc
from .enrichment import FeatureMatrix, concat_features, enrich, read_features, write_features
from .errors import InvalidValue
from .evaluate import evaluate, pr_curve, write_curves, write_metrics
from .graph import Network, build_affinity, network_from_records, write_network
from .hmc import PredictionTable, SelectionRecord, StrategyKind
from .ingest import RunConfig, fmt_float, parse_annotations, parse_edges, parse_hierarchy
from .learn import ForestParams
from .ontology import (
    AnnotationMap,
    Hierarchy,
    SubHierarchy,
    filter_functions,
    split_subhierarchies,
    true_path_close,
    write_subhierarchy_report,
)
from .spectral import cluster_sweep, write_clusters

log = logging.getLogger(__name__)

CACHE_ENV = "COEXHMC_CACHE"
MANIFEST = "manifest.json"


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _atomic_copy(src: Path, dst: Path) -> None:
    tmp = dst.with_name(f".{dst.name}.tmp{os.getpid()}")
    shutil.copyfile(src, tmp)
    os.replace(tmp, dst)


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def cache_root(outdir) -> Path:
    env = os.environ.get(CACHE_ENV)
    return Path(env) if env else Path(outdir) / ".cache"


def read_manifest(outdir) -> dict:
    path = Path(outdir) / MANIFEST
    if path.exists():
        return json.loads(path.read_text(encoding="utf-8"))
    return {"stages": {}}


def run_stage(
    name: str,
    outdir,
    config: RunConfig,
    inputs: Sequence,
    produce: Callable[[Path], None],
    extra: dict | None = None,
) -> bool:
    """Run ``produce(scratch_dir)`` unless an identical run is cached. Returns True on a cache hit."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    input_digests = {str(p): file_digest(p) for p in inputs}
    key_src = json.dumps(
        {"stage": name, "config": config.digest(), "inputs": sorted(input_digests.values()), "extra": extra or {}},
        sort_keys=True,
    )
    key = hashlib.sha256(key_src.encode()).hexdigest()
    root = cache_root(outdir)
    root.mkdir(parents=True, exist_ok=True)
    done = root / f"{name}-{key[:16]}"
    hit = (done / ".complete").exists()
    start = time.perf_counter()
    if hit:
        log.info("%s: cache hit %s", name, done.name)
    else:
        scratch = Path(tempfile.mkdtemp(prefix=f".{name}-", dir=root))
        try:
            produce(scratch)
            (scratch / ".complete").write_text(key + "\n", encoding="utf-8")
            if done.exists():
                shutil.rmtree(done)
            os.replace(scratch, done)
        except BaseException:
            shutil.rmtree(scratch, ignore_errors=True)
            raise
    outputs = {}
    for f in sorted(done.iterdir()):
        if f.name.startswith("."):
            continue
        _atomic_copy(f, outdir / f.name)
        outputs[f.name] = file_digest(outdir / f.name)
    manifest = read_manifest(outdir)
    manifest["config_digest"] = config.digest()
    manifest["seed"] = config.seed
    manifest["stages"][name] = {
        "key": key,
        "inputs": input_digests,
        "outputs": outputs,
        "seconds": round(time.perf_counter() - start, 3),
        "cache_hit": hit,
    }
    _atomic_write_text(outdir / MANIFEST, json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return hit


@dataclass
class Dataset:
    network: Network | None
    hierarchy: Hierarchy
    annotations: AnnotationMap  # closed


def load_dataset(edges, annotations, hierarchy, config: RunConfig = RunConfig()) -> Dataset:
    net = network_from_records(parse_edges(edges)) if edges is not None else None
    h = Hierarchy.from_edges((r.child, r.parent) for r in parse_hierarchy(hierarchy))
    raw = [(r.gene, r.term) for r in parse_annotations(annotations)]
    closed = true_path_close(raw, h, strict=config.strict_closure)
    return Dataset(net, h, closed)


def prepare_functions(ann: AnnotationMap, h: Hierarchy, genes: Iterable[str], config: RunConfig):
    """Annotations of the network genes, then the size filter; returns (hierarchy, annotations, terms)."""
    ann_v = ann.restrict_genes(genes)
    h2, ann2 = filter_functions(ann_v, h, config.min_genes_per_function)
    return h2, ann2, sorted(h2.terms)


def check_cluster_counts(config: RunConfig, n_genes: int) -> None:
    if max(config.cluster_counts) >= n_genes:
        raise InvalidValue(f"cluster_counts entry {max(config.cluster_counts)} must be below the gene count {n_genes}")


def compute_features(ds: Dataset, config: RunConfig):
    net = ds.network
    check_cluster_counts(config, len(net.nodes))
    ann_v = ds.annotations.restrict_genes(net.nodes)
    _, ann2, terms = prepare_functions(ds.annotations, ds.hierarchy, net.nodes, config)
    affinity = build_affinity(net, ann_v)
    kw = dict(maxiter=config.eigen_maxiter, tol=config.eigen_tol)
    cg = cluster_sweep(net, config.cluster_counts, config.seed, "G", **kw)
    cf = cluster_sweep(affinity, config.cluster_counts, config.seed, "F", **kw)
    return enrich(cg, ann2, terms, "G"), enrich(cf, ann2, terms, "F"), (cg, cf), affinity


def cmd_features(config: RunConfig, edges, annotations, hierarchy, outdir) -> bool:
    def produce(d: Path):
        jg, jf, clusters, affinity = compute_features(ds, config)
        write_features(jg, d / "J_G.tsv")
        write_features(jf, d / "J_F.tsv")
        write_clusters(clusters, d / "clusters.tsv")
        write_network(affinity, d / "affinity.tsv")

    # the cluster-count check needs only the edge list; fail before any compute
    ds = load_dataset(edges, annotations, hierarchy, config)
    check_cluster_counts(config, len(ds.network.nodes))
    return run_stage("features", outdir, config, [edges, annotations, hierarchy], produce)


def load_features(features_dir) -> FeatureMatrix:
    d = Path(features_dir)
    return concat_features(read_features(d / "J_G.tsv"), read_features(d / "J_F.tsv"))


def sub_hierarchies(ds: Dataset, genes, config: RunConfig) -> tuple[list[SubHierarchy], AnnotationMap]:
    h2, ann2, _ = prepare_functions(ds.annotations, ds.hierarchy, genes, config)
    return split_subhierarchies(h2, ann2, config.min_functions_per_subhierarchy), ann2


def forest_params(config: RunConfig, threads: int = 1) -> ForestParams:
    return ForestParams(
        n_trees=config.forest_trees,
        min_samples_split=config.forest_min_split,
        seed=config.seed,
        n_jobs=threads,
    )


def parse_methods(method: str) -> list[StrategyKind]:
    if method == "all":
        return list(hmc.ALL_STRATEGIES)
    try:
        return [StrategyKind(method)]
    except ValueError:
        raise InvalidValue(f"unknown method {method!r}; expected lcn, lcpn, lcl, global or all") from None


def predict_all(
    features: FeatureMatrix,
    ds: Dataset,
    config: RunConfig,
    methods: Sequence[StrategyKind],
    threads: int = 1,
    tags: Sequence[str] = ("G", "F"),
) -> tuple[list[SubHierarchy], list[PredictionTable], list[SelectionRecord]]:
    subs, ann2 = sub_hierarchies(ds, features.genes, config)
    params = forest_params(config, threads)
    tables, records = [], []
    for sh in subs:
        genes = sorted(sh.gene_set)
        cols = features.columns_for_terms(sh.terms, tags)
        fm = features.take(genes, cols)
        folds = hmc.fold_plan(sh, genes, ann2, config.folds, config.seed)
        for m in methods:
            t0 = time.perf_counter()
            table, recs = hmc.run_strategy(m, sh, fm, ann2, folds, params, config.selection_cutoff)
            log.info("%s %s: %d genes, %d columns, %.1fs", sh.root, m.value, len(genes), len(cols), time.perf_counter() - t0)
            tables.append(table)
            records.extend(recs)
    return subs, tables, records


def write_selection(records: Sequence[SelectionRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("sub_hierarchy_root\tmethod\tunit\tfold\tcolumn\timportance\tselected\n")
        for r in records:
            chosen = set(r.selected)
            for i, (col, imp) in enumerate(zip(r.columns, r.importance)):
                fh.write(f"{r.root}\t{r.method}\t{r.unit}\t{r.fold}\t{col}\t{fmt_float(imp)}\t{int(i in chosen)}\n")


def write_selection_summary(records: Sequence[SelectionRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("root\tmethod\tunit\tfold\ttotal_features\tfiltered_features\tselected_G\tselected_F\n")
        for r in records:
            fh.write(
                f"{r.root}\t{r.method}\t{r.unit}\t{r.fold}\t{r.total_features}\t{r.filtered_features}"
                f"\t{r.selected_by_tag('G')}\t{r.selected_by_tag('F')}\n"
            )


def cmd_predict(config: RunConfig, features_dir, annotations, hierarchy, outdir, method: str = "all", threads: int = 1) -> bool:
    methods = parse_methods(method)
    fdir = Path(features_dir)
    inputs = [fdir / "J_G.tsv", fdir / "J_F.tsv", annotations, hierarchy]

    def produce(d: Path):
        features = load_features(fdir)
        ds = load_dataset(None, annotations, hierarchy, config)
        subs, tables, records = predict_all(features, ds, config, methods, threads)
        write_subhierarchy_report(subs, d / "subhierarchies.tsv")
        hmc.write_predictions(tables, d / "predictions.tsv")
        for m in methods:
            hmc.write_predictions([t for t in tables if t.method == m.value], d / f"predictions_{m.value}.tsv")
        write_selection(records, d / "selection.tsv")
        write_selection_summary(records, d / "selection_summary.tsv")

    return run_stage("predict", outdir, config, inputs, produce, {"method": method})


def evaluate_tables(tables: Sequence[PredictionTable], truth: AnnotationMap):
    reports, curves = [], []
    for tab in tables:
        rep = evaluate(tab, truth)
        reports.append((tab.root, tab.method, rep))
        curves.append((tab.root, tab.method, "ALL", rep.micro))
    return reports, curves


def cmd_evaluate(config: RunConfig, predictions, annotations, hierarchy, outdir) -> bool:
    def produce(d: Path):
        ds = load_dataset(None, annotations, hierarchy, config)
        tables = hmc.read_predictions(predictions)
        reports, curves = evaluate_tables(tables, ds.annotations)
        for tab in tables:
            for term in tab.terms:
                if term == tab.root:
                    continue
                y = [g in ds.annotations.genes_of(term) for g in tab.genes]
                if any(y):
                    curves.append((tab.root, tab.method, term, pr_curve(tab.column(term), y)))
        write_metrics(reports, d / "metrics.tsv")
        write_curves(curves, d / "curves.tsv")

    return run_stage("evaluate", outdir, config, [predictions, annotations, hierarchy], produce)


ABLATION_VARIANTS = (("G", ("G",)), ("F", ("F",)), ("both", ("G", "F")))


def ablate(features: FeatureMatrix, ds: Dataset, config: RunConfig, threads: int = 1):
    """Global strategy on each feature source alone and on both; rows of (root, variant, n_columns, report)."""
    rows = []
    for name, tags in ABLATION_VARIANTS:
        subs, tables, _ = predict_all(features, ds, config, [StrategyKind.GLOBAL], threads, tags)
        for sh, tab in zip(subs, tables):
            n_cols = len(features.columns_for_terms(sh.terms, tags))
            rows.append((sh.root, name, n_cols, evaluate(tab, ds.annotations)))
    rows.sort(key=lambda r: (r[0], [v for v, _ in ABLATION_VARIANTS].index(r[1])))
    return rows


def write_ablation(rows, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("sub_hierarchy_root\tvariant\tn_columns\tmicro\tmacro\tmacro_weighted\n")
        for root, name, n_cols, rep in rows:
            fh.write(f"{root}\t{name}\t{n_cols}\t{fmt_float(rep.micro_auprc)}\t{fmt_float(rep.macro_auprc)}\t{fmt_float(rep.weighted_macro_auprc)}\n")


def cmd_ablate(config: RunConfig, features_dir, annotations, hierarchy, outdir, threads: int = 1) -> bool:
    fdir = Path(features_dir)
    inputs = [fdir / "J_G.tsv", fdir / "J_F.tsv", annotations, hierarchy]

    def produce(d: Path):
        features = load_features(fdir)
        ds = load_dataset(None, annotations, hierarchy, config)
        write_ablation(ablate(features, ds, config, threads), d / "ablation.tsv")

    return run_stage("ablate", outdir, config, inputs, produce)


def cmd_run_all(
    config: RunConfig, edges, annotations, hierarchy, outdir, method: str = "all", threads: int = 1, ablation: bool = True
) -> None:
    out = Path(outdir)
    cmd_features(config, edges, annotations, hierarchy, out)
    cmd_predict(config, out, annotations, hierarchy, out, method, threads)
    cmd_evaluate(config, out / "predictions.tsv", annotations, hierarchy, out)
    if ablation:
        cmd_ablate(config, out, annotations, hierarchy, out, threads)


def cmd_validate(config: RunConfig, edges, annotations, hierarchy) -> dict:
    """Parse and check every input; returns summary counts."""
    ds = load_dataset(edges, annotations, hierarchy, config)
    net = ds.network
    check_cluster_counts(config, len(net.nodes))
    subs, ann2 = sub_hierarchies(ds, net.nodes, config)
    return {
        "genes": len(net.nodes),
        "edges": net.n_edges,
        "terms": len(ds.hierarchy.terms),
        "annotated_genes": len(ds.annotations.by_gene),
        "annotation_pairs": sum(len(t) for t in ds.annotations.by_gene.values()),
        "sub_hierarchies": [
            {"root": sh.root, "functions": len(sh.terms), "genes": len(sh.gene_set), "per_level": sh.functions_per_level()}
            for sh in subs
        ],
    }

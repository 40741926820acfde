"""Stage-wise batch pipeline over a run directory.

Every stage reads the artifacts of the stages before it, writes its own, and
records a manifest ``manifests/<stage>.json`` holding the hash of the
settings it depends on, the hashes of the upstream manifests and the hash of
every file it wrote. A stage refuses to start when an upstream manifest is
missing, was produced under different settings, or no longer matches the
files on disk.

Wall-clock timings go to ``timing/`` and the timing report; they are the only
outputs that differ between otherwise identical runs.
"""
import functools
import hashlib
import json
import logging
import os
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict

import numpy as np

from .config import STAGE_UPSTREAM
from .embed import EmbeddingMatrix, embed_network, read_embeddings, write_embeddings
from .engine import (
    TRAINED,
    ClassResult,
    PredictionRecord,
    SubHierarchyRun,
    decide_and_extend,
    score_outside,
    train_subhierarchy,
    write_predictions,
    read_predictions,
)
from .errors import HmcError
from .hbn import evaluate_subhierarchy
from .hierarchy import (
    AnnotationMap,
    SubHierarchy,
    class_census,
    close_annotations,
    normalize,
    read_annotations,
    read_hierarchy,
    read_tree,
    split_subhierarchies,
    write_tree,
)
from .learn import ClassifierConfig, TrainedModel
from .metrics import class_report, pr_curve, roc_curve, write_curve_csv
from .network import NodeFeatureTable, read_edge_list, read_features, topological_features, write_features
from .ontology import read_obo

logger = logging.getLogger(__name__)

INPUT_ERROR, PIPELINE_ERROR = 1, 2
MODELS = ("engine", "hbn")


class PipelineError(Exception):
    """Failure of one stage; ``code`` is the process exit status."""

    def __init__(self, stage, message, subhierarchy=None, code=PIPELINE_ERROR):
        super().__init__(stage, message, subhierarchy, code)
        self.stage = stage
        self.message = message
        self.subhierarchy = subhierarchy
        self.code = code

    def __str__(self):
        where = f" [{self.subhierarchy}]" if self.subhierarchy else ""
        return f"{self.stage}{where}: {self.message}"

    def as_dict(self):
        return {
            "error": {
                "stage": self.stage,
                "subhierarchy": self.subhierarchy,
                "message": self.message,
                "exit_code": self.code,
            }
        }


# ---------------------------------------------------------------- file helpers

def _sha(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _dump_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _load_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _safe(name):
    return re.sub(r"[^A-Za-z0-9._-]", "_", name)


def _write_annotations(amap, path):
    with open(path, "w", encoding="utf-8") as fh:
        for v in sorted(amap):
            for c in sorted(amap[v]):
                fh.write(f"{v}\t{c}\n")


class RunDir:
    def __init__(self, root):
        self.root = root

    def path(self, *parts):
        return os.path.join(self.root, *parts)

    def rel(self, path):
        return os.path.relpath(path, self.root).replace(os.sep, "/")

    def manifest_path(self, stage):
        return self.path("manifests", f"{stage}.json")

    def sub_dirs(self):
        man = self.path("subhierarchies.tsv")
        with open(man, encoding="utf-8") as fh:
            fh.readline()
            return [line.rstrip("\n").split("\t")[-1] for line in fh if line.strip()]


# --------------------------------------------------------------- stage control

def _require(run, cfg, stage, upstream):
    """Validate an upstream manifest; returns its sha256."""
    mpath = run.manifest_path(upstream)
    if not os.path.isfile(mpath):
        raise PipelineError(stage, f"missing artifact {run.rel(mpath)}; run the '{upstream}' stage first")
    man = _load_json(mpath)
    if man.get("config_hash") != cfg.stage_hash(upstream):
        raise PipelineError(stage, f"stage '{upstream}' was run with different settings; rerun it first")
    for rel, digest in man.get("outputs", {}).items():
        p = run.path(rel)
        if not os.path.isfile(p):
            raise PipelineError(stage, f"missing artifact {rel} (listed by the '{upstream}' manifest)")
        if _sha(p) != digest:
            raise PipelineError(stage, f"artifact {rel} changed after stage '{upstream}'; rerun it first")
    return _sha(mpath)


def _finish(run, cfg, stage, upstream_hashes, outputs, inputs=None, timing=None):
    man = {
        "stage": stage,
        "config_hash": cfg.stage_hash(stage),
        "upstream": upstream_hashes,
        "outputs": {run.rel(p): _sha(p) for p in sorted(outputs)},
    }
    if inputs:
        man["inputs"] = inputs
    os.makedirs(run.path("manifests"), exist_ok=True)
    _dump_json(man, run.manifest_path(stage))
    if timing is not None:
        os.makedirs(run.path("timing"), exist_ok=True)
        _dump_json(timing, run.path("timing", f"{stage}.json"))


def _start(run, cfg, stage, optional=()):
    hashes = {up: _require(run, cfg, stage, up) for up in STAGE_UPSTREAM[stage]}
    for up in optional:
        if os.path.isfile(run.manifest_path(up)):
            hashes[up] = _require(run, cfg, stage, up)
    # invalidate this stage's manifest until it completes
    mp = run.manifest_path(stage)
    if os.path.isfile(mp):
        os.remove(mp)
    return hashes


# ------------------------------------------------------------------ ingestion

def _ingest(fn, *args):
    try:
        return fn(*args)
    except (OSError, HmcError, UnicodeDecodeError) as exc:
        raise PipelineError("ingest", str(exc), code=INPUT_ERROR) from exc


def read_input_hierarchy(path):
    if path.lower().endswith(".obo"):
        return read_obo(path)
    return read_hierarchy(path)


@functools.lru_cache(maxsize=2)
def _cached_network(edges, nodes, stamp):
    return read_edge_list(edges, nodes or None)


def _network(edges, nodes):
    stamp = tuple(os.stat(p).st_mtime_ns for p in (edges, nodes) if p)
    return _cached_network(edges, nodes, stamp)


def _closed(run):
    tree = read_tree(run.path("tree.tsv"))
    return tree, AnnotationMap(read_annotations(run.path("closed_annotations.tsv")), tree.classes)


def _load_sub(run, cfg, subdir):
    meta = _load_json(run.path(subdir, "subhierarchy.json"))
    net = _network(cfg.edges, cfg.nodes)
    parent = {c["class"]: c["parent"] for c in meta["classes"]}
    targets = frozenset(c["class"] for c in meta["classes"] if c["target"])
    classes = tuple(c["class"] for c in meta["classes"])
    return SubHierarchy(meta["root"], classes, parent, targets, net.subgraph(meta["nodes"]))


# --------------------------------------------------------------------- stages

def stage_normalize(cfg, out):
    run = RunDir(out)
    os.makedirs(out, exist_ok=True)
    hashes = _start(run, cfg, "normalize")
    t0 = time.perf_counter()
    h = _ingest(read_input_hierarchy, cfg.hierarchy)
    phi = _ingest(read_annotations, cfg.annotations)
    inputs = {"hierarchy": _ingest(_sha, cfg.hierarchy), "annotations": _ingest(_sha, cfg.annotations)}
    try:
        closed = close_annotations(phi, h)
        tree = normalize(h, class_census(h, closed))
    except HmcError as exc:
        raise PipelineError("normalize", str(exc), code=INPUT_ERROR) from exc
    outputs = [run.path("tree.tsv"), run.path("removed_edges.tsv"), run.path("closed_annotations.tsv")]
    write_tree(tree, outputs[0])
    with open(outputs[1], "w", encoding="utf-8") as fh:
        for a, b in tree.removed_edges:
            fh.write(f"{a}\t{b}\n")
    _write_annotations(closed, outputs[2])
    _finish(run, cfg, "normalize", hashes, outputs, inputs, {"seconds": time.perf_counter() - t0})
    return tree


def stage_split(cfg, out):
    run = RunDir(out)
    hashes = _start(run, cfg, "split")
    t0 = time.perf_counter()
    net = _ingest(_network, cfg.edges, cfg.nodes)
    inputs = {"edges": _ingest(_sha, cfg.edges)}
    if cfg.nodes:
        inputs["nodes"] = _ingest(_sha, cfg.nodes)
    tree, closed = _closed(run)
    try:
        subs = split_subhierarchies(tree, closed, net, cfg.min_count, cfg.max_count)
    except HmcError as exc:
        raise PipelineError("split", str(exc), code=INPUT_ERROR) from exc
    outputs = []
    rows = []
    for i, s in enumerate(subs, 1):
        subdir = f"sub/{i:02d}_{_safe(s.root)}"
        os.makedirs(run.path(subdir), exist_ok=True)
        meta = {
            "root": s.root,
            "class_count": len(s.classes),
            "target_count": len(s.targets),
            "node_count": len(s.subgraph),
            "edge_count": s.subgraph.n_edges,
            "classes": [{"class": c, "parent": s.parent[c], "target": c in s.targets} for c in s.classes],
            "nodes": list(s.subgraph.nodes),
        }
        p = run.path(subdir, "subhierarchy.json")
        _dump_json(meta, p)
        outputs.append(p)
        rows.append((s.root, len(s.classes), len(s.targets), len(s.subgraph), subdir))
    table = run.path("subhierarchies.tsv")
    with open(table, "w", encoding="utf-8") as fh:
        fh.write("root\tclasses\ttargets\tnodes\tdirectory\n")
        for r in rows:
            fh.write("\t".join(map(str, r)) + "\n")
    outputs.append(table)
    _finish(run, cfg, "split", hashes, outputs, inputs, {"seconds": time.perf_counter() - t0})
    return subs


def _map_subs(cfg, fn, subdirs, run):
    """Apply ``fn(cfg, out, subdir)`` to every sub-hierarchy, in a pool if allowed."""
    n = min(cfg.pool_size(), len(subdirs))
    if n <= 1:
        return [fn(cfg, run.root, d) for d in subdirs]
    with ProcessPoolExecutor(max_workers=n) as pool:
        futures = [pool.submit(fn, cfg, run.root, d) for d in subdirs]
        return [f.result() for f in futures]


class _Guard:
    """Picklable wrapper so task failures name the stage and sub-hierarchy."""

    def __init__(self, stage, fn):
        self.stage = stage
        self.fn = fn

    def __call__(self, cfg, out, subdir):
        try:
            return self.fn(cfg, out, subdir)
        except PipelineError:
            raise
        except (HmcError, OSError, FloatingPointError) as exc:
            root = subdir
            try:
                root = _load_json(os.path.join(out, subdir, "subhierarchy.json"))["root"]
            except (OSError, ValueError, KeyError):
                pass
            raise PipelineError(self.stage, str(exc), root) from None


def _global_tables(cfg, run):
    feats = read_features(run.path("global", "features.tsv"))
    emb = read_embeddings(run.path("global", "embeddings.tsv"))
    return feats, emb


def _features_task(cfg, out, subdir):
    run = RunDir(out)
    t0 = time.perf_counter()
    if cfg.widen_candidates:
        sub = _load_sub(run, cfg, subdir)
        feats = read_features(run.path("global", "features.tsv"))
        nodes = sub.subgraph.nodes
        block = feats.matrix(nodes)
        table = NodeFeatureTable(nodes, {n: block[:, j] for j, n in enumerate(feats.names)})
    else:
        table = topological_features(_load_sub(run, cfg, subdir).subgraph, clustering=cfg.clustering)
    p = run.path(subdir, "features.tsv")
    write_features(table, p)
    return p, time.perf_counter() - t0


def _embed_task(cfg, out, subdir):
    run = RunDir(out)
    t0 = time.perf_counter()
    sub = _load_sub(run, cfg, subdir)
    if cfg.widen_candidates:
        emb = read_embeddings(run.path("global", "embeddings.tsv"))
        emb = EmbeddingMatrix(sub.subgraph.nodes, emb.matrix(sub.subgraph.nodes), emb.config_hash)
    else:
        emb = embed_network(sub.subgraph, cfg.walk, cfg.embedding)
    p = run.path(subdir, "embeddings.tsv")
    write_embeddings(emb, p)
    return p, time.perf_counter() - t0


def _per_sub_stage(cfg, out, stage, task, prepare=None):
    run = RunDir(out)
    hashes = _start(run, cfg, stage)
    t0 = time.perf_counter()
    outputs = list(prepare(cfg, run)) if prepare else []
    subdirs = run.sub_dirs()
    results = _map_subs(cfg, _Guard(stage, task), subdirs, run)
    per_sub = {}
    for d, (paths, secs) in zip(subdirs, results):
        outputs.extend(paths if isinstance(paths, list) else [paths])
        per_sub[d] = secs
    _finish(run, cfg, stage, hashes, outputs, timing={"seconds": time.perf_counter() - t0, "subhierarchies": per_sub})


def _prepare_global_features(cfg, run):
    if not cfg.widen_candidates:
        return []
    os.makedirs(run.path("global"), exist_ok=True)
    p = run.path("global", "features.tsv")
    try:
        write_features(topological_features(_network(cfg.edges, cfg.nodes), clustering=cfg.clustering), p)
    except HmcError as exc:
        raise PipelineError("features", str(exc)) from exc
    return [p]


def _prepare_global_embeddings(cfg, run):
    if not cfg.widen_candidates:
        return []
    os.makedirs(run.path("global"), exist_ok=True)
    p = run.path("global", "embeddings.tsv")
    try:
        write_embeddings(embed_network(_network(cfg.edges, cfg.nodes), cfg.walk, cfg.embedding), p)
    except HmcError as exc:
        raise PipelineError("embed", str(exc)) from exc
    return [p]


def stage_features(cfg, out):
    _per_sub_stage(cfg, out, "features", _features_task, _prepare_global_features)


def stage_embed(cfg, out):
    _per_sub_stage(cfg, out, "embed", _embed_task, _prepare_global_embeddings)


# training artifacts

def _write_scores(path, nodes, p_local, p_cum, classes):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("node\tclass\tp_local\tp_cumulative\n")
        for c in classes:
            if c not in p_cum:
                continue
            for v, a, b in zip(nodes, p_local[c], p_cum[c]):
                fh.write(f"{v}\t{c}\t{float(a)!r}\t{float(b)!r}\n")


def _read_scores(path, nodes):
    idx = {v: i for i, v in enumerate(nodes)}
    p_local, p_cum = {}, {}
    with open(path, encoding="utf-8") as fh:
        fh.readline()
        for line in fh:
            v, c, a, b = line.rstrip("\n").split("\t")
            if c not in p_local:
                p_local[c] = np.full(len(nodes), np.nan)
                p_cum[c] = np.full(len(nodes), np.nan)
            p_local[c][idx[v]] = float(a)
            p_cum[c][idx[v]] = float(b)
    return p_local, p_cum


def _write_run(run, subdir, res, prefix):
    """Persist a :class:`SubHierarchyRun`; returns the written paths."""
    sub = res.sub
    nodes = sub.subgraph.nodes
    paths = []
    p = run.path(subdir, f"{prefix}classes.tsv")
    with open(p, "w", encoding="utf-8") as fh:
        fh.write("class\tparent\tstatus\tthreshold\tconfig\treason\n")
        for r in res.results:
            conf = json.dumps(asdict(r.config), sort_keys=True) if r.config is not None else ""
            thr = repr(float(r.threshold)) if r.status == TRAINED else ""
            fh.write(f"{r.cls}\t{sub.parent[r.cls] or ''}\t{r.status}\t{thr}\t{conf}\t{r.reason}\n")
    paths.append(p)
    p = run.path(subdir, f"{prefix}scores.tsv")
    _write_scores(p, nodes, res.p_local, res.p_cumulative, sub.topological_order())
    paths.append(p)
    p = run.path(subdir, f"{prefix}folds.tsv")
    with open(p, "w", encoding="utf-8") as fh:
        fh.write("class\tnode\tfold\n")
        for r in res.trained:
            for v, f in zip(nodes, r.folds.fold):
                fh.write(f"{r.cls}\t{v}\t{int(f)}\n")
    paths.append(p)
    p = run.path(subdir, f"{prefix}fold_metrics.tsv")
    with open(p, "w", encoding="utf-8") as fh:
        fh.write("class\tfold\taverage_precision\troc_auc\n")
        for r in res.trained:
            for m in r.fold_metrics:
                fh.write(f"{r.cls}\t{m['fold']}\t{m['average_precision']!r}\t{m['roc_auc']!r}\n")
    paths.append(p)
    return paths


def _write_models(run, subdir, res):
    models = {}
    for r in res.trained:
        mean, std = r.scaling
        models[r.cls] = {
            "column_names": list(r.column_names),
            "scaling": {"mean": [float(x) for x in mean], "std": [float(x) for x in std]},
            "folds": [None if m is None else [float(x) for x in m.weights] for m in r.models],
            "schema": next((m.schema for m in r.models if m is not None), None),
        }
    p = run.path(subdir, "models.json")
    _dump_json(models, p)
    return p


def _read_run(run, cfg, subdir, prefix="", with_models=False):
    sub = _load_sub(run, cfg, subdir)
    nodes = sub.subgraph.nodes
    p_local, p_cum = _read_scores(run.path(subdir, f"{prefix}scores.tsv"), nodes)
    models = _load_json(run.path(subdir, "models.json")) if with_models else {}
    results = []
    with open(run.path(subdir, f"{prefix}classes.tsv"), encoding="utf-8") as fh:
        fh.readline()
        for line in fh:
            c, _, status, thr, conf, reason = line.rstrip("\n").split("\t")
            r = ClassResult(c, status, reason=reason)
            if status == TRAINED:
                r.threshold = float(thr)
                r.config = ClassifierConfig(**json.loads(conf)) if conf else None
                r.p_local = p_local[c]
                if c in models:
                    m = models[c]
                    r.column_names = tuple(m["column_names"])
                    r.scaling = (np.array(m["scaling"]["mean"]), np.array(m["scaling"]["std"]))
                    r.models = [None if w is None else TrainedModel(np.array(w), r.config, m["schema"]) for w in m["folds"]]
            results.append(r)
    return SubHierarchyRun(sub, results, p_local, p_cum)


def _train_task(cfg, out, subdir):
    run = RunDir(out)
    t0 = time.perf_counter()
    sub = _load_sub(run, cfg, subdir)
    _, closed = _closed(run)
    feats = read_features(run.path(subdir, "features.tsv"))
    emb = read_embeddings(run.path(subdir, "embeddings.tsv"))
    ratio_net = _network(cfg.edges, cfg.nodes) if cfg.widen_candidates else None
    os.makedirs(run.path(subdir, "train"), exist_ok=True)
    res = train_subhierarchy(sub, feats, emb, closed, cfg.engine_config(), ratio_net=ratio_net)
    paths = _write_run(run, subdir, res, "train/") + [_write_models(run, subdir, res)]
    return paths, time.perf_counter() - t0


def stage_train(cfg, out):
    _per_sub_stage(cfg, out, "train", _train_task)


def _widened_records(res, nodes, p_local, p_cum):
    thresholds = res.thresholds
    decision, records = {}, []
    for c in res.sub.topological_order():
        if c not in p_cum:
            continue
        parent = res.sub.parent[c]
        gate = np.ones(len(nodes), dtype=bool) if parent is None else decision[parent]
        if c in thresholds:
            d = gate & (p_cum[c] >= thresholds[c])
            records.extend(
                PredictionRecord(v, c, float(a), float(b), float(thresholds[c]), int(x))
                for v, a, b, x in zip(nodes, p_local[c], p_cum[c], d)
            )
        else:
            d = gate
        decision[c] = d
    return records


def _predict_task(cfg, out, subdir):
    run = RunDir(out)
    t0 = time.perf_counter()
    res = _read_run(run, cfg, subdir, "train/", with_models=cfg.widen_candidates)
    _, closed = _closed(run)
    extended, records = decide_and_extend(res.sub, res.p_cumulative, res.thresholds, closed, res.p_local)
    paths = [run.path(subdir, "predictions.tsv"), run.path(subdir, "extended_annotations.tsv")]
    write_predictions(records, paths[0], model="engine")
    added = {v: cs - closed.get(v, frozenset()) for v, cs in extended.items()}
    _write_annotations({v: cs for v, cs in added.items() if cs}, paths[1])
    if cfg.widen_candidates:
        net = _network(cfg.edges, cfg.nodes)
        feats, emb = _global_tables(cfg, run)
        extra, pl, pc = score_outside(res, feats, emb, closed, net)
        p = run.path(subdir, "widened_predictions.tsv")
        write_predictions(_widened_records(res, extra, pl, pc), p, model="engine")
        paths.append(p)
    return paths, time.perf_counter() - t0


def _merge_tables(run, subdirs, name, header=True):
    p = run.path(name)
    with open(p, "w", encoding="utf-8") as out:
        wrote_header = False
        for d in subdirs:
            src = run.path(d, name)
            if not os.path.isfile(src):
                continue
            with open(src, encoding="utf-8") as fh:
                first = fh.readline() if header else ""
                if header and not wrote_header:
                    out.write(first)
                    wrote_header = True
                out.write(fh.read())
    return p


def stage_predict(cfg, out):
    run = RunDir(out)
    hashes = _start(run, cfg, "predict")
    t0 = time.perf_counter()
    subdirs = run.sub_dirs()
    results = _map_subs(cfg, _Guard("predict", _predict_task), subdirs, run)
    outputs, per_sub = [], {}
    for d, (paths, secs) in zip(subdirs, results):
        outputs.extend(paths)
        per_sub[d] = secs
    outputs.append(_merge_tables(run, subdirs, "predictions.tsv"))
    if cfg.widen_candidates:
        outputs.append(_merge_tables(run, subdirs, "widened_predictions.tsv"))
    # phi' = closed annotations plus every decided class and its ancestors
    _, closed = _closed(run)
    merged = {v: set(cs) for v, cs in closed.items()}
    for d in subdirs:
        for v, cs in read_annotations(run.path(d, "extended_annotations.tsv")).items():
            merged.setdefault(v, set()).update(cs)
    p = run.path("extended_annotations.tsv")
    _write_annotations(merged, p)
    outputs.append(p)
    _finish(run, cfg, "predict", hashes, outputs, timing={"seconds": time.perf_counter() - t0, "subhierarchies": per_sub})


def _baseline_task(cfg, out, subdir):
    run = RunDir(out)
    t0 = time.perf_counter()
    sub = _load_sub(run, cfg, subdir)
    _, closed = _closed(run)
    res = evaluate_subhierarchy(sub, closed, cfg.k, cfg.seed)
    _, records = decide_and_extend(sub, res.p_cumulative, res.thresholds, closed, res.p_local)
    os.makedirs(run.path(subdir, "baseline"), exist_ok=True)
    paths = _write_run(run, subdir, res, "baseline/")
    p = run.path(subdir, "baseline_predictions.tsv")
    write_predictions(records, p, model="hbn")
    return paths + [p], time.perf_counter() - t0


def stage_baseline(cfg, out):
    run = RunDir(out)
    hashes = _start(run, cfg, "baseline")
    t0 = time.perf_counter()
    subdirs = run.sub_dirs()
    results = _map_subs(cfg, _Guard("baseline", _baseline_task), subdirs, run)
    outputs, per_sub = [], {}
    for d, (paths, secs) in zip(subdirs, results):
        outputs.extend(paths)
        per_sub[d] = secs
    outputs.append(_merge_tables(run, subdirs, "baseline_predictions.tsv"))
    _finish(run, cfg, "baseline", hashes, outputs, timing={"seconds": time.perf_counter() - t0, "subhierarchies": per_sub})


# ---------------------------------------------------------------- evaluation

def _evaluate_file(run, cfg, model, subdirs, closed, curve_dir):
    name = "predictions.tsv" if model == "engine" else "baseline_predictions.tsv"
    subs_out, f1s, aps, aucs = [], [], [], []
    outputs = []
    for d in subdirs:
        path = run.path(d, name)
        records = read_predictions(path)
        meta = _load_json(run.path(d, "subhierarchy.json"))
        by_class = {}
        for r in records:
            by_class.setdefault(r.cls, []).append(r)
        classes = {}
        for c, rs in by_class.items():
            scores = np.array([r.p_cumulative for r in rs])
            labels = np.array([c in closed.get(r.node, ()) for r in rs])
            rep = class_report(scores, labels, rs[0].threshold)
            rep["threshold"] = rs[0].threshold
            classes[c] = rep
            f1s.append(rep["f1"])
            aps.append(rep["average_precision"])
            aucs.append(rep["roc_auc"])
            base = os.path.join(curve_dir, model, d.split("/")[-1])
            os.makedirs(base, exist_ok=True)
            for kind, fn in (("pr", pr_curve), ("roc", roc_curve)):
                p = os.path.join(base, f"{_safe(c)}.{kind}.csv")
                write_curve_csv(fn(scores, labels), p)
                outputs.append(p)
        subs_out.append({"root": meta["root"], "directory": d, "classes": classes})

    def mean(xs):
        return float(np.mean(xs)) if xs else None

    summary = {"classes": len(f1s), "mean_f1": mean(f1s), "mean_average_precision": mean(aps), "mean_roc_auc": mean(aucs)}
    return {"summary": summary, "subhierarchies": subs_out}, outputs


def write_timing_report(run):
    """Per-stage and per-sub-hierarchy seconds plus the engine-vs-baseline table."""
    stages = {}
    for stage in STAGE_UPSTREAM:
        p = run.path("timing", f"{stage}.json")
        if os.path.isfile(p):
            stages[stage] = _load_json(p)
    rows = []
    with open(run.path("subhierarchies.tsv"), encoding="utf-8") as fh:
        fh.readline()
        for line in fh:
            root, n_classes, n_targets, n_nodes, d = line.rstrip("\n").split("\t")
            engine = sum(stages[s]["subhierarchies"].get(d, 0.0) for s in ("features", "embed", "train", "predict") if s in stages)
            base = stages["baseline"]["subhierarchies"].get(d) if "baseline" in stages else None
            rows.append({"subhierarchy": root, "classes": int(n_classes), "nodes": int(n_nodes),
                         "engine_seconds": engine, "baseline_seconds": base})
    with open(run.path("timing_report.tsv"), "w", encoding="utf-8") as fh:
        fh.write("subhierarchy\tclasses\tnodes\tengine_seconds\thbn_seconds\tengine_over_hbn\n")
        for r in rows:
            b = r["baseline_seconds"]
            ratio = f"{r['engine_seconds'] / b:.3f}" if b else ""
            fh.write(f"{r['subhierarchy']}\t{r['classes']}\t{r['nodes']}\t{r['engine_seconds']:.4f}\t"
                     f"{'' if b is None else f'{b:.4f}'}\t{ratio}\n")
    _dump_json({"stages": {s: v["seconds"] for s, v in stages.items()}, "subhierarchies": rows},
               run.path("timing.json"))
    return rows


def stage_eval(cfg, out):
    run = RunDir(out)
    hashes = _start(run, cfg, "eval", optional=("baseline",))
    if cfg.baseline == "hbn" and "baseline" not in hashes:
        raise PipelineError("eval", "missing artifact manifests/baseline.json; run the 'baseline' stage first")
    t0 = time.perf_counter()
    subdirs = run.sub_dirs()
    _, closed = _closed(run)
    curve_dir = run.path("curves")
    report, outputs = {}, []
    for model in MODELS:
        if model == "hbn" and "baseline" not in hashes:
            continue
        try:
            report[model], paths = _evaluate_file(run, cfg, model, subdirs, closed, curve_dir)
        except HmcError as exc:
            raise PipelineError("eval", str(exc)) from exc
        outputs.extend(paths)
    p = run.path("metrics.json")
    _dump_json(report, p)
    outputs.append(p)
    _finish(run, cfg, "eval", hashes, outputs, timing={"seconds": time.perf_counter() - t0})
    write_timing_report(run)
    return report


STAGES = {
    "normalize": stage_normalize,
    "split": stage_split,
    "features": stage_features,
    "embed": stage_embed,
    "train": stage_train,
    "predict": stage_predict,
    "baseline": stage_baseline,
    "eval": stage_eval,
}


def run_pipeline(cfg, out=None):
    """All stages in order (the baseline only when configured); returns the metrics report."""
    out = out or cfg.output
    order = ["normalize", "split", "features", "embed", "train", "predict"]
    if cfg.baseline == "hbn":
        order.append("baseline")
    for stage in order:
        logger.info("stage %s", stage)
        STAGES[stage](cfg, out)
    return stage_eval(cfg, out)

"""Top-down training over a sub-hierarchy with cumulative path probabilities.

Within a sub-hierarchy every candidate node carries the root class, so the root
(and any class annotated on every candidate) is *given*: its local
probability is 1.0 and no model is trained. Out-of-range classes are
*structural* and also contribute 1.0. Every other target class gets a binary
classifier trained on out-of-fold predictions of its parent.
"""
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from ._seeding import derive_seed
from .dataset import build_dataset
from .errors import EngineError, LearnError, ResampleError
from .hierarchy import AnnotationMap
from .learn import HyperGrid, default_grid, predict_proba, tune_cv
from .metrics import average_precision, optimum_threshold, roc_auc
from .network import neighborhood_class_ratio
from .resample import SmoteConfig, oversample, stratified_kfold

logger = logging.getLogger(__name__)

TRAINED, GIVEN, STRUCTURAL, SKIPPED = "trained", "given", "structural", "skipped"


@dataclass(frozen=True)
class EngineConfig:
    k: int = 5
    seed: int = 0
    grid: HyperGrid = field(default_factory=default_grid)
    smote: bool = True
    smote_k_neighbors: int = 5
    smote_target_ratio: float = 1.0

    def __post_init__(self):
        if self.k < 2:
            raise EngineError("k must be >= 2")


@dataclass
class ClassResult:
    cls: str
    status: str
    reason: str = ""
    labels: np.ndarray = None
    p_local: np.ndarray = None
    folds: object = None
    config: object = None
    models: list = field(default_factory=list)
    fold_metrics: list = field(default_factory=list)
    threshold: float = float("nan")
    column_names: tuple = ()
    scaling: tuple = ()


@dataclass(frozen=True)
class PredictionRecord:
    node: str
    cls: str
    p_local: float
    p_cumulative: float
    threshold: float
    decision: int


@dataclass
class SubHierarchyRun:
    """Outcome of :func:`train_subhierarchy`; iterating yields the class results."""

    sub: object
    results: list
    p_local: dict
    p_cumulative: dict

    def __iter__(self):
        return iter(self.results)

    def __len__(self):
        return len(self.results)

    def result(self, cls):
        for r in self.results:
            if r.cls == cls:
                return r
        raise KeyError(cls)

    @property
    def trained(self):
        return [r for r in self.results if r.status == TRAINED]

    @property
    def thresholds(self):
        return {r.cls: r.threshold for r in self.trained}


def fold_seed(master, cls):
    """Seed of the stratified split for ``cls``; shared with the baseline."""
    return derive_seed(master, "folds", cls)


def class_labels(nodes, closed, cls):
    return np.fromiter((cls in closed.get(v, ()) for v in nodes), dtype=bool, count=len(nodes))


def cumulative_probabilities(tree, p_local):
    """Multiply local probabilities down each root-to-class path.

    ``tree`` needs a ``parent`` mapping; ``p_local`` maps class -> per-node
    array. The result covers every class of ``p_local``.
    """
    out = {}

    def walk(c):
        if c in out:
            return out[c]
        if c not in p_local:
            raise EngineError(f"missing local probability for class {c!r}")
        parent = tree.parent.get(c)
        val = np.asarray(p_local[c], dtype=float)
        if parent is not None:
            if parent not in p_local:
                raise EngineError(f"missing local probability for ancestor {parent!r} of {c!r}")
            val = walk(parent) * val
        out[c] = val
        return val

    for c in p_local:
        walk(c)
    return out


def _smote_resampler(cfg, c):
    def resample(X, y, fold):
        sc = SmoteConfig(cfg.smote_k_neighbors, cfg.smote_target_ratio, derive_seed(cfg.seed, "smote", c, fold))
        return oversample(X, y, sc)
    return resample


def _train_class(sub, c, y, parent_pred, feats, emb, closed, cfg, ratio_net):
    ds = build_dataset(sub, feats, emb, closed, c, parent_pred, ratio_net=ratio_net)
    folds = stratified_kfold(y, cfg.k, fold_seed(cfg.seed, c))
    model_seed = derive_seed(cfg.seed, "model", c)
    grid = HyperGrid(tuple(replace(g, seed=model_seed) for g in cfg.grid), cfg.grid.metric)

    resampler = _smote_resampler(cfg, c) if cfg.smote else None
    cv = tune_cv(ds.X, ds.y, grid, folds, resampler, ds.column_names)
    fold_metrics = []
    for i, (_, te) in enumerate(folds.splits()):
        fold_metrics.append({
            "fold": i,
            "average_precision": average_precision(cv.oof[te], y[te]),
            "roc_auc": roc_auc(cv.oof[te], y[te]),
        })
    return ClassResult(
        c, TRAINED, labels=y, p_local=cv.oof, folds=folds, config=cv.config, models=cv.models,
        fold_metrics=fold_metrics, column_names=ds.column_names, scaling=ds.scaling,
    )


def plan_subhierarchy(sub, closed, k=5):
    """Status of every class of ``sub`` in root-first order.

    Returns ``{class: (status, reason)}`` with status one of ``trained``,
    ``given``, ``structural`` or ``skipped``. Skipping a class skips its whole
    subtree.
    """
    nodes = sub.subgraph.nodes
    n = len(nodes)
    plan = {}
    for c in sub.topological_order():
        parent = sub.parent[c]
        if parent is not None and plan[parent][0] == SKIPPED:
            plan[c] = (SKIPPED, f"ancestor {parent!r} was skipped")
            continue
        if c not in sub.targets:
            plan[c] = (STRUCTURAL, "outside the class-size range")
            continue
        y = class_labels(nodes, closed, c)
        npos = int(y.sum())
        if parent is None or npos == n:
            plan[c] = (GIVEN, "annotated on every candidate node")
        elif npos < k or n - npos < k:
            plan[c] = (SKIPPED, f"{npos} positives / {n - npos} negatives, need at least k={k} of each")
        else:
            plan[c] = (TRAINED, "")
    return plan


def train_subhierarchy(sub, feats, emb, closed, cfg=EngineConfig(), ratio_net=None):
    """Train every target class of ``sub`` from the root down.

    Parents are always finished before their children, whose
    ``parent_prediction`` feature is the parent's out-of-fold cumulative
    probability. A target with fewer than ``k`` positives or negatives is
    skipped (with a warning) together with everything below it.
    """
    if not sub.targets:
        raise EngineError(f"sub-hierarchy {sub.root!r} has no target classes")
    nodes = sub.subgraph.nodes
    ones = np.ones(len(nodes))
    p_local, p_cum = {}, {}
    results = []
    for c, (status, reason) in plan_subhierarchy(sub, closed, cfg.k).items():
        parent = sub.parent[c]
        if status == SKIPPED:
            if c in sub.targets:
                if not reason.startswith("ancestor"):
                    logger.warning("skipping class %s in %s: %s", c, sub.root, reason)
                results.append(ClassResult(c, SKIPPED, reason=reason))
            continue
        res = None
        if status == STRUCTURAL:
            p_local[c] = ones
        elif status == GIVEN:
            p_local[c] = ones
            res = ClassResult(c, GIVEN, reason=reason, labels=class_labels(nodes, closed, c), p_local=ones)
        else:
            y = class_labels(nodes, closed, c)
            try:
                res = _train_class(sub, c, y, p_cum[parent], feats, emb, closed, cfg, ratio_net)
            except (LearnError, ResampleError) as exc:
                raise EngineError(f"class {c!r} in sub-hierarchy {sub.root!r}: {exc}") from exc
            p_local[c] = res.p_local
        p_cum[c] = p_local[c] if parent is None else p_cum[parent] * p_local[c]
        if res is not None:
            if res.status == TRAINED:
                res.threshold = optimum_threshold(p_cum[c], res.labels)
            results.append(res)
    _check_monotone(sub, p_cum)
    return SubHierarchyRun(sub, results, p_local, p_cum)


def _check_monotone(sub, p_cum):
    for c, vals in p_cum.items():
        parent = sub.parent[c]
        if parent is not None and np.any(vals > p_cum[parent]):
            raise EngineError(f"cumulative probability of {c!r} exceeds its parent's")


def decide_and_extend(sub, p_cumulative, thresholds, closed, p_local=None):
    """True-path consistent decisions and the extended annotation map.

    A node takes a trained class when its cumulative probability reaches the
    class threshold *and* it took the parent. Given and structural classes
    pass the parent's decision through. The extension adds every decided
    target class together with its ancestors, so the result stays closed.

    Returns ``(AnnotationMap, records)``; one record per (node, trained class).
    """
    nodes = sub.subgraph.nodes
    n = len(nodes)
    decision = {}
    records = []
    for c in sub.topological_order():
        if c not in p_cumulative:
            continue
        parent = sub.parent[c]
        gate = np.ones(n, dtype=bool) if parent is None else decision.get(parent, np.zeros(n, dtype=bool))
        if c in thresholds:
            t = float(thresholds[c])
            d = gate & (np.asarray(p_cumulative[c]) >= t)
            pl = p_local[c] if p_local is not None else np.full(n, np.nan)
            for i, v in enumerate(nodes):
                records.append(PredictionRecord(v, c, float(pl[i]), float(p_cumulative[c][i]), t, int(d[i])))
        else:
            d = gate
        decision[c] = d

    extended = {}
    for v, cs in closed.items():
        extended[v] = set(cs)
    for c, d in decision.items():
        if c not in thresholds:
            continue
        for i in np.flatnonzero(d):
            v = nodes[i]
            s = extended.setdefault(v, set())
            a = c
            while a is not None and a not in s:
                s.add(a)
                a = sub.parent.get(a)
    _check_closed(sub, decision)
    return AnnotationMap(extended, closed.classes), records


def _check_closed(sub, decision):
    for c, d in decision.items():
        parent = sub.parent[c]
        if parent is not None and parent in decision and np.any(d & ~decision[parent]):
            raise EngineError(f"true-path violation: {c!r} decided without its parent")


def predict_subhierarchy(run, closed):
    """Decisions for a finished run; see :func:`decide_and_extend`."""
    return decide_and_extend(run.sub, run.p_cumulative, run.thresholds, closed, run.p_local)


def score_outside(run, feats, emb, closed, net):
    """Fold-ensemble probabilities for network nodes outside the sub-hierarchy.

    These nodes do not carry the root class, so their scores are conditional
    on root membership (root factor 1.0). ``feats``/``emb`` must cover the
    extra nodes and the run must have been trained with the same tables.
    Returns ``(nodes, {class: p_local}, {class: p_cumulative})``.
    """
    sub = run.sub
    inside = set(sub.subgraph.nodes)
    extra = tuple(v for v in net.nodes if v not in inside)
    if not extra:
        return extra, {}, {}
    idx = np.array([net.index[v] for v in extra])
    topo = feats.matrix(extra)
    embedding = emb.matrix(extra)
    m = len(extra)
    p_local, p_cum = {}, {}
    status = {r.cls: r for r in run.results}
    for c in sub.topological_order():
        parent = sub.parent[c]
        if parent is not None and parent not in p_cum:
            continue
        r = status.get(c)
        if r is not None and r.status == SKIPPED:
            continue
        if r is None or r.status == GIVEN:
            p_local[c] = np.ones(m)
        else:
            if any(mod is None for mod in r.models):
                raise EngineError("widened scoring needs in-process models (not an external classifier)")
            mean, std = r.scaling
            t = (topo - mean) / np.where(std > 0, std, 1.0)
            rs = neighborhood_class_ratio(net, closed, c)[idx]
            rp = neighborhood_class_ratio(net, closed, parent)[idx]
            X = np.column_stack([t, embedding, rs, rp, p_cum[parent]])
            p_local[c] = np.mean([predict_proba(mod, X, r.column_names) for mod in r.models], axis=0)
        p_cum[c] = p_local[c] if parent is None else p_cum[parent] * p_local[c]
    return extra, p_local, p_cum


def write_predictions(records, path, model=None):
    with open(path, "w", encoding="utf-8") as fh:
        cols = ["node", "class", "p_local", "p_cumulative", "threshold", "decision"]
        if model is not None:
            cols.append("model")
        fh.write("\t".join(cols) + "\n")
        for r in records:
            row = [r.node, r.cls, repr(r.p_local), repr(r.p_cumulative), repr(r.threshold), str(r.decision)]
            if model is not None:
                row.append(model)
            fh.write("\t".join(row) + "\n")


def read_predictions(path):
    records = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header[:6] != ["node", "class", "p_local", "p_cumulative", "threshold", "decision"]:
            raise EngineError(f"{path}: not a predictions file")
        for line in fh:
            p = line.rstrip("\n").split("\t")
            records.append(PredictionRecord(p[0], p[1], float(p[2]), float(p[3]), float(p[4]), int(p[5])))
    return records

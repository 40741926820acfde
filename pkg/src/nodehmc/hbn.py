"""HBN-style baseline: a Bayes posterior over binomial counts of annotated
neighbors, multiplied down hierarchy paths.

For a node with ``n`` neighbors of which ``k`` carry class C::

    posterior = pi B(k; n, p1) / (pi B(k; n, p1) + (1 - pi) B(k; n, p0))

where ``p1``/``p0`` are the chances that a neighbor carries C given that the
node does / does not, and ``pi`` is the prior of C given its parent. The
binomial coefficient cancels, so the posterior is evaluated as a sigmoid of
summed log-odds.
"""
from dataclasses import dataclass

import numpy as np

from .engine import (
    GIVEN,
    TRAINED,
    ClassResult,
    SubHierarchyRun,
    class_labels,
    fold_seed,
    plan_subhierarchy,
)
from .errors import EngineError
from .metrics import average_precision, optimum_threshold, roc_auc
from .resample import stratified_kfold


@dataclass(frozen=True)
class HbnParams:
    p1: dict
    p0: dict
    prior: dict


def _neighbor_hits(net, members):
    ind = np.fromiter((v in members for v in net.nodes), dtype=float, count=len(net))
    return net.adjacency @ ind, ind.astype(bool)


def _fit_one(net, closed, cls, parent, train):
    members = closed.nodes_with(cls)
    hits, pos = _neighbor_hits(net, members)
    deg = net.degree.astype(float)
    on = pos & train
    off = ~pos & train
    p1 = (hits[on].sum() + 1.0) / (deg[on].sum() + 2.0)
    p0 = (hits[off].sum() + 1.0) / (deg[off].sum() + 2.0)
    if parent is None:
        extent = int(train.sum())
    else:
        pmembers = closed.nodes_with(parent)
        extent = sum(1 for i in np.flatnonzero(train) if net.nodes[i] in pmembers)
    if extent == 0:
        raise EngineError(f"cannot estimate prior of {cls!r}: parent {parent!r} has no annotated nodes")
    return float(p1), float(p0), int(on.sum()) / extent


def fit_hbn(net, closed, tree, nodes=None, classes=None):
    """Estimate ``p1``, ``p0`` and ``prior`` with add-one smoothing.

    ``nodes`` restricts the fitting population (default: every node of
    ``net``); neighbor counts always see all annotations of ``net``.
    """
    train = np.ones(len(net), dtype=bool)
    if nodes is not None:
        train[:] = False
        train[[net.index[v] for v in nodes]] = True
    p1, p0, prior = {}, {}, {}
    for c in (tree.classes if classes is None else classes):
        p1[c], p0[c], prior[c] = _fit_one(net, closed, c, tree.parent.get(c), train)
    return HbnParams(p1, p0, prior)


def posterior(prior, p1, p0, k, n):
    """Bayes posterior of membership from ``k`` annotated out of ``n`` neighbors."""
    k = np.asarray(k, dtype=float)
    n = np.asarray(n, dtype=float)
    if prior <= 0.0:
        return np.zeros(np.broadcast(k, n).shape)
    if prior >= 1.0:
        return np.ones(np.broadcast(k, n).shape)
    z = (np.log(prior) - np.log1p(-prior)
         + k * (np.log(p1) - np.log(p0))
         + (n - k) * (np.log1p(-p1) - np.log1p(-p0)))
    return np.exp(-np.logaddexp(0.0, -z))


def hbn_local(params, net, closed, cls):
    """Per-node posterior of ``cls`` (one factor of the path product)."""
    hits, _ = _neighbor_hits(net, closed.nodes_with(cls))
    return posterior(params.prior[cls], params.p1[cls], params.p0[cls], hits, net.degree)


def hbn_scores(params, net, closed, tree, classes=None, given=()):
    """Path-product scores for every node of ``net``.

    Classes in ``given`` contribute a factor of 1. Scores never increase from
    a class to its children.
    """
    classes = tree.classes if classes is None else classes
    local = {}
    for c in classes:
        local[c] = np.ones(len(net)) if c in given else hbn_local(params, net, closed, c)
    out = {}

    def walk(c):
        if c not in out:
            parent = tree.parent.get(c)
            out[c] = local[c] if parent is None else walk(parent) * local[c]
        return out[c]

    for c in classes:
        walk(c)
    return out


def predict_hbn(params, net, tree, node, cls, closed):
    """Score of a single ``(node, cls)`` pair: posteriors multiplied from the root."""
    i = net.index[node]
    deg = net.degree[i]
    nbrs = net.neighbors(i)
    score = 1.0
    for c in tree.path(cls):
        members = closed.nodes_with(c)
        k = sum(1 for j in nbrs if net.nodes[j] in members)
        score *= float(posterior(params.prior[c], params.p1[c], params.p0[c], k, deg))
    return score


def evaluate_subhierarchy(sub, closed, k=5, seed=0):
    """Out-of-fold baseline scores on the engine's classes and folds.

    For each trained class the parameters are refitted on every training
    split and applied to the held-out nodes; a node's own annotation never
    enters its own score. The result mirrors
    :func:`nodehmc.engine.train_subhierarchy`.
    """
    net = sub.subgraph
    nodes = net.nodes
    n = len(nodes)
    ones = np.ones(n)
    plan = plan_subhierarchy(sub, closed, k)
    p_local, p_cum = {}, {}
    results = []
    for c, (status, reason) in plan.items():
        parent = sub.parent[c]
        if status == "skipped":
            if c in sub.targets:
                results.append(ClassResult(c, status, reason=reason))
            continue
        if status != TRAINED:
            p_local[c] = ones
            if status == GIVEN:
                results.append(ClassResult(c, GIVEN, reason=reason, labels=class_labels(nodes, closed, c), p_local=ones))
        else:
            y = class_labels(nodes, closed, c)
            folds = stratified_kfold(y, k, fold_seed(seed, c))
            hits, _ = _neighbor_hits(net, closed.nodes_with(c))
            oof = np.empty(n)
            fold_metrics = []
            for i, (tr, te) in enumerate(folds.splits()):
                mask = np.zeros(n, dtype=bool)
                mask[tr] = True
                p1, p0, prior = _fit_one(net, closed, c, parent, mask)
                oof[te] = posterior(prior, p1, p0, hits[te], net.degree[te])
            for i, (_, te) in enumerate(folds.splits()):
                fold_metrics.append({
                    "fold": i,
                    "average_precision": average_precision(oof[te], y[te]),
                    "roc_auc": roc_auc(oof[te], y[te]),
                })
            p_local[c] = oof
            results.append(ClassResult(c, TRAINED, labels=y, p_local=oof, folds=folds, fold_metrics=fold_metrics))
        p_cum[c] = p_local[c] if parent is None else p_cum[parent] * p_local[c]
    for r in results:
        if r.status == TRAINED:
            r.threshold = optimum_threshold(p_cum[r.cls], r.labels)
    return SubHierarchyRun(sub, results, p_local, p_cum)

"""Per-class training matrices for one sub-hierarchy."""
from dataclasses import dataclass

import numpy as np

from .errors import EngineError
from .network import neighborhood_class_ratio


@dataclass(frozen=True)
class ClassDataset:
    cls: str
    nodes: tuple
    X: np.ndarray
    y: np.ndarray
    column_names: tuple
    scaling: tuple = ()

    @property
    def n_positive(self):
        return int(self.y.sum())


def build_dataset(sub, feats, emb, closed, cls, parent_predictions=None, ratio_net=None):
    """Feature matrix and labels for ``cls`` over every node of ``sub.subgraph``.

    Columns, in order: the topological block (standardized over the subgraph),
    the embedding block (raw), ``ratio_self``, ``ratio_parent`` and
    ``parent_prediction``. For the sub-hierarchy root the last two are
    constant 1.0 and ``parent_predictions`` must be omitted; for every other
    class it is required.

    Neighborhood ratios are counted on ``ratio_net`` (default: the subgraph).
    """
    if cls not in sub.classes:
        raise EngineError(f"class {cls!r} is not part of sub-hierarchy {sub.root!r}")
    net = sub.subgraph
    nodes = net.nodes
    n = len(nodes)
    parent = sub.parent[cls]
    if parent is None and parent_predictions is not None:
        raise EngineError(f"root class {cls!r} takes no parent predictions")
    if parent is not None and parent_predictions is None:
        raise EngineError(f"class {cls!r} needs its parent's predictions")

    topo = feats.matrix(nodes)
    mean = topo.mean(axis=0)
    std = topo.std(axis=0)
    safe = np.where(std > 0, std, 1.0)
    topo = (topo - mean) / safe
    embedding = emb.matrix(nodes)

    rnet = net if ratio_net is None else ratio_net
    rows = None if rnet is net else np.array([rnet.index[v] for v in nodes])

    def ratio(c):
        r = neighborhood_class_ratio(rnet, closed, c)
        return r if rows is None else r[rows]

    ratio_self = ratio(cls)
    if parent is None:
        ratio_parent = np.ones(n)
        parent_pred = np.ones(n)
    else:
        ratio_parent = ratio(parent)
        parent_pred = np.asarray(parent_predictions, dtype=float)
        if parent_pred.shape != (n,):
            raise EngineError(f"parent predictions for {cls!r} have shape {parent_pred.shape}, expected ({n},)")

    X = np.column_stack([topo, embedding, ratio_self, ratio_parent, parent_pred])
    if not np.all(np.isfinite(X)):
        raise EngineError(f"non-finite feature value in dataset for {cls!r}")
    names = (
        tuple(feats.names)
        + tuple(f"emb_{j}" for j in range(embedding.shape[1]))
        + ("ratio_self", "ratio_parent", "parent_prediction")
    )
    y = np.fromiter((cls in closed.get(v, ()) for v in nodes), dtype=bool, count=n)
    return ClassDataset(cls, nodes, X, y, names, (mean, std))


def write_dataset(ds, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("node\t" + "\t".join(ds.column_names) + "\tlabel\n")
        for node, row, lab in zip(ds.nodes, ds.X, ds.y):
            fh.write(node + "\t" + "\t".join(repr(float(v)) for v in row) + f"\t{int(lab)}\n")

"""Undirected weighted networks and per-node topological features."""
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .errors import AnnotationError, NetworkError

logger = logging.getLogger(__name__)

TOPOLOGICAL_COLUMNS = (
    "degree",
    "average_neighbor_degree",
    "degree_centrality",
    "closeness_centrality",
    "eccentricity",
    "clustering_coefficient",
)


class Network:
    """Immutable undirected graph over string node identifiers.

    Nodes are mapped to dense indices in ``nodes`` order. Edges are stored once,
    with ``src < dst`` in index space, alongside their non-negative weight.
    """

    def __init__(self, nodes, src, dst, weight):
        self.nodes = tuple(nodes)
        self.index = {n: i for i, n in enumerate(self.nodes)}
        self.src = np.asarray(src, dtype=np.int64)
        self.dst = np.asarray(dst, dtype=np.int64)
        self.weight = np.asarray(weight, dtype=float)
        n = len(self.nodes)
        rows = np.concatenate([self.src, self.dst])
        cols = np.concatenate([self.dst, self.src])
        w = np.concatenate([self.weight, self.weight])
        self.weights = sparse.csr_matrix((w, (rows, cols)), shape=(n, n))
        self.weights.sort_indices()
        self.adjacency = sparse.csr_matrix(
            (np.ones(len(rows), dtype=np.int64), (rows, cols)), shape=(n, n)
        )
        self.adjacency.sort_indices()
        self.degree = np.diff(self.adjacency.indptr)
        for a in (self.src, self.dst, self.weight):
            a.setflags(write=False)
        self.degree.setflags(write=False)

    def __len__(self):
        return len(self.nodes)

    def __contains__(self, node):
        return node in self.index

    def __repr__(self):
        return f"Network(nodes={len(self.nodes)}, edges={self.n_edges})"

    @property
    def n_edges(self):
        return len(self.src)

    def neighbors(self, i):
        """Neighbor indices of node index ``i`` (sorted)."""
        a = self.adjacency
        return a.indices[a.indptr[i]:a.indptr[i + 1]]

    def neighbor_weights(self, i):
        w = self.weights
        return w.data[w.indptr[i]:w.indptr[i + 1]]

    def edges(self):
        for s, d, w in zip(self.src, self.dst, self.weight):
            yield self.nodes[s], self.nodes[d], float(w)

    def subgraph(self, nodes):
        """Induced subgraph; node order follows this network's canonical order."""
        keep = set()
        for n in nodes:
            if n not in self.index:
                raise NetworkError(f"node {n!r} is not in the network")
            keep.add(self.index[n])
        order = sorted(keep)
        remap = np.full(len(self.nodes), -1, dtype=np.int64)
        remap[order] = np.arange(len(order))
        mask = (remap[self.src] >= 0) & (remap[self.dst] >= 0)
        return Network(
            [self.nodes[i] for i in order],
            remap[self.src[mask]],
            remap[self.dst[mask]],
            self.weight[mask],
        )


def load_network(edge_records, nodes=None, merge_duplicates=False, line_numbers=None):
    """Build a :class:`Network` from ``(node, node, weight)`` records.

    Parameters
    ----------
    edge_records : iterable of (str, str, weight)
        Weight may be anything ``float`` accepts; it must be finite and >= 0.
    nodes : iterable of str, optional
        Extra node identifiers. This is the only way to declare isolated nodes.
    merge_duplicates : bool
        By default any repeated unordered pair is rejected. When true, a repeat
        with an identical weight is merged silently; conflicting weights are
        still rejected.
    line_numbers : sequence of int, optional
        Source line of each record, used in error messages.
    """
    records = list(edge_records)
    if not records:
        raise NetworkError("edge list is empty")
    index = {}
    order = []
    seen = {}
    src, dst, wts = [], [], []

    def where(k):
        return f"line {line_numbers[k]}" if line_numbers is not None else f"record {k + 1}"

    def intern(node):
        i = index.get(node)
        if i is None:
            i = index[node] = len(order)
            order.append(node)
        return i

    for k, rec in enumerate(records):
        try:
            a, b, w = rec
        except (TypeError, ValueError):
            raise NetworkError(f"{where(k)}: expected (node, node, weight), got {rec!r}") from None
        a, b = str(a), str(b)
        if a == b:
            raise NetworkError(f"{where(k)}: self-loop on {a!r}")
        try:
            w = float(w)
        except (TypeError, ValueError):
            raise NetworkError(f"{where(k)}: weight {w!r} is not a number") from None
        if not math.isfinite(w) or w < 0:
            raise NetworkError(f"{where(k)}: weight {w!r} must be finite and non-negative")
        i, j = intern(a), intern(b)
        key = (i, j) if i < j else (j, i)
        if key in seen:
            prev_k, prev_w = seen[key]
            if prev_w != w:
                raise NetworkError(
                    f"{where(k)}: pair ({a!r}, {b!r}) repeats {where(prev_k)} "
                    f"with conflicting weight {w} != {prev_w}"
                )
            if not merge_duplicates:
                raise NetworkError(f"{where(k)}: duplicate pair ({a!r}, {b!r}), first seen at {where(prev_k)}")
            continue
        seen[key] = (k, w)
        src.append(key[0])
        dst.append(key[1])
        wts.append(w)
    if nodes is not None:
        for n in nodes:
            intern(str(n))
    return Network(order, src, dst, wts)


@dataclass(frozen=True)
class NodeFeatureTable:
    nodes: tuple
    columns: dict

    def __post_init__(self):
        for name, col in self.columns.items():
            if len(col) != len(self.nodes):
                raise NetworkError(f"column {name!r} has {len(col)} rows, expected {len(self.nodes)}")
            if not np.all(np.isfinite(np.asarray(col, dtype=float))):
                raise NetworkError(f"column {name!r} contains non-finite values")

    @property
    def names(self):
        return tuple(self.columns)

    def matrix(self, nodes=None, names=None):
        names = self.names if names is None else tuple(names)
        data = np.column_stack([np.asarray(self.columns[c], dtype=float) for c in names])
        if nodes is None:
            return data
        where = {n: i for i, n in enumerate(self.nodes)}
        rows = []
        for n in nodes:
            if n not in where:
                raise NetworkError(f"node {n!r} missing from feature table")
            rows.append(where[n])
        return data[rows]


def _bfs_summaries(adj, chunk=256):
    """Eccentricity and harmonic sums for every node via chunked BFS."""
    n = adj.shape[0]
    ecc = np.zeros(n)
    harmonic = np.zeros(n)
    for start in range(0, n, chunk):
        idx = np.arange(start, min(n, start + chunk))
        dist = csgraph.shortest_path(adj, method="D", unweighted=True, directed=False, indices=idx)
        finite = np.isfinite(dist)
        ecc[idx] = np.where(finite, dist, 0.0).max(axis=1)
        with np.errstate(divide="ignore"):
            inv = np.where(finite & (dist > 0), 1.0 / dist, 0.0)
        harmonic[idx] = inv.sum(axis=1)
    return ecc, harmonic


def topological_features(net, clustering=True):
    """Per-node structural features on the unweighted skeleton of ``net``.

    Closeness is harmonic (sum of reciprocal BFS distances over ``|V| - 1``),
    so unreachable nodes contribute zero and disconnected graphs need no
    special case. Eccentricity is taken within the node's own component;
    isolated nodes get 0.
    """
    n = len(net)
    if n == 0:
        raise NetworkError("network has no nodes")
    adj = net.adjacency
    deg = net.degree.astype(float)
    nbr_sum = adj @ deg
    avg_nbr = np.divide(nbr_sum, deg, out=np.zeros(n), where=deg > 0)
    denom = max(n - 1, 1)
    ecc, harmonic = _bfs_summaries(adj)
    cols = {
        "degree": deg,
        "average_neighbor_degree": avg_nbr,
        "degree_centrality": deg / denom if n > 1 else np.zeros(n),
        "closeness_centrality": harmonic / denom if n > 1 else np.zeros(n),
        "eccentricity": ecc,
    }
    if clustering:
        a = adj.astype(float)
        tri2 = np.asarray((a @ a).multiply(a).sum(axis=1)).ravel()
        pairs = deg * (deg - 1)
        cols["clustering_coefficient"] = np.divide(tri2, pairs, out=np.zeros(n), where=pairs > 0)
    return NodeFeatureTable(net.nodes, cols)


def neighborhood_class_ratio(net, closed_annotations, cls):
    """Fraction of each node's neighbors annotated with ``cls``.

    Returns an array aligned with ``net.nodes``; isolated nodes get 0.
    """
    if cls not in closed_annotations.classes:
        raise AnnotationError(f"unknown class {cls!r}")
    members = closed_annotations.nodes_with(cls)
    ind = np.fromiter((n in members for n in net.nodes), dtype=float, count=len(net))
    hits = net.adjacency @ ind
    deg = net.degree.astype(float)
    return np.divide(hits, deg, out=np.zeros(len(net)), where=deg > 0)


def read_edge_list(path, node_list=None, merge_duplicates=False):
    """Read a tab-separated ``node_a  node_b  weight`` file (``#`` comments allowed)."""
    records, lines = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise NetworkError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}")
            records.append(tuple(parts))
            lines.append(lineno)
    nodes = None
    if node_list is not None:
        with open(node_list, encoding="utf-8") as fh:
            nodes = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    try:
        return load_network(records, nodes=nodes, merge_duplicates=merge_duplicates, line_numbers=lines)
    except NetworkError as exc:
        raise NetworkError(f"{path}: {exc}") from None


def write_edge_list(net, path):
    with open(path, "w", encoding="utf-8") as fh:
        for a, b, w in net.edges():
            fh.write(f"{a}\t{b}\t{w!r}\n")


def write_features(table, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("node\t" + "\t".join(table.names) + "\n")
        data = table.matrix()
        for node, row in zip(table.nodes, data):
            fh.write(node + "\t" + "\t".join(repr(float(x)) for x in row) + "\n")


def read_features(path):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        nodes, rows = [], []
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            nodes.append(parts[0])
            rows.append([float(x) for x in parts[1:]])
    data = np.array(rows, dtype=float).reshape(len(nodes), len(header) - 1)
    return NodeFeatureTable(tuple(nodes), {name: data[:, j] for j, name in enumerate(header[1:])})

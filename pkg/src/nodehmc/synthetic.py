"""Synthetic inputs: the five-class normalization example, random DAGs and
planted block-model benchmarks."""
import numpy as np

from .hierarchy import Hierarchy
from .network import load_network


def diamond_example():
    """Five-class DAG with a two-parent class and its annotations.

    Raw annotations put 4 nodes on E, 4 on D, 4 on B alone and 2 on C alone;
    after closure B covers 12 nodes, C covers 6 and E covers 4.
    """
    h = Hierarchy(edges=[("A", "B"), ("A", "C"), ("B", "D"), ("B", "E"), ("C", "E")])
    phi = {}
    labels = ["E"] * 4 + ["D"] * 4 + ["B"] * 4 + ["C"] * 2
    for i, c in enumerate(labels):
        phi[f"g{i + 1:02d}"] = {c}
    return h, phi


def random_dag(n_classes, n_edges, seed=0, prefix="c"):
    """Random DAG whose edges always point from a lower to a higher index."""
    rng = np.random.default_rng(seed)
    names = [f"{prefix}{i:06d}" for i in range(n_classes)]
    max_edges = n_classes * (n_classes - 1) // 2
    n_edges = min(n_edges, max_edges)
    seen = set()
    # every non-first class gets one parent so the DAG stays connected-ish
    for j in range(1, n_classes):
        if len(seen) >= n_edges:
            break
        seen.add((int(rng.integers(0, j)), j))
    while len(seen) < n_edges:
        batch = rng.integers(0, n_classes, size=(2 * (n_edges - len(seen)) + 8, 2))
        for a, b in batch:
            if a == b:
                continue
            a, b = (a, b) if a < b else (b, a)
            seen.add((int(a), int(b)))
            if len(seen) >= n_edges:
                break
    return Hierarchy(names, [(names[a], names[b]) for a, b in sorted(seen)])


def random_annotations(h, nodes, per_node=2, seed=0):
    rng = np.random.default_rng(seed)
    classes = np.array(h.classes)
    return {v: set(rng.choice(classes, size=min(per_node, len(classes)), replace=False).tolist()) for v in nodes}


def sbm_records(sizes, p_matrix, seed=0, prefix="v"):
    """Edge records of a stochastic block model (unit weights)."""
    rng = np.random.default_rng(seed)
    sizes = list(sizes)
    n = sum(sizes)
    block = np.repeat(np.arange(len(sizes)), sizes)
    P = np.asarray(p_matrix, dtype=float)[block][:, block]
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(len(iu)) < P[iu, ju]
    names = [f"{prefix}{i:04d}" for i in range(n)]
    return [(names[i], names[j], 1.0) for i, j in zip(iu[keep], ju[keep])], names, block


def planted_benchmark(seed=0, n_nodes=300, p_leaf=0.12, p_group=0.03, p_out=0.005, label_noise=0.05):
    """Seven-class, three-level hierarchy over a 300-node block model.

    ``R`` covers every node; ``A``/``B`` split the nodes in halves and the
    leaves ``A1, A2, B1, B2`` match the four blocks. A ``label_noise``
    fraction of nodes carry the sibling leaf instead of their block's leaf.

    Returns ``(network, hierarchy, annotations, truth)`` where ``truth`` maps
    node -> block leaf.
    """
    rng = np.random.default_rng(seed)
    q = n_nodes // 4
    sizes = [q, q, q, n_nodes - 3 * q]
    P = np.full((4, 4), p_out)
    P[0, 1] = P[1, 0] = P[2, 3] = P[3, 2] = p_group
    np.fill_diagonal(P, p_leaf)
    records, names, block = sbm_records(sizes, P, seed=int(rng.integers(2**31)), prefix="v")
    net = load_network(records, nodes=names)
    leaves = ["A1", "A2", "B1", "B2"]
    sibling = {"A1": "A2", "A2": "A1", "B1": "B2", "B2": "B1"}
    h = Hierarchy(edges=[("R", "A"), ("R", "B"), ("A", "A1"), ("A", "A2"), ("B", "B1"), ("B", "B2")])
    flip = rng.random(len(names)) < label_noise
    phi, truth = {}, {}
    for v, b, f in zip(names, block, flip):
        leaf = leaves[b]
        truth[v] = leaf
        phi[v] = {sibling[leaf] if f else leaf}
    return net, h, phi, truth


def random_problem(seed=0, n_nodes=120, depth=3, branching=2):
    """Random tree hierarchy with block-aligned labels, for end-to-end checks.

    A global root sits above ``branching`` top classes; each class has
    ``branching`` children down to ``depth`` levels below the global root.
    Every node is labelled with one leaf, chosen to follow its block most of
    the time, so all classes are populated.
    """
    rng = np.random.default_rng(seed)
    edges = []
    level = ["ROOT"]
    leaves = []
    for d in range(depth):
        nxt = []
        for p in level:
            for b in range(branching):
                c = f"{p}.{b}" if p != "ROOT" else f"K{b}"
                edges.append((p, c))
                nxt.append(c)
        level = nxt
    leaves = level
    h = Hierarchy(edges=edges)
    n_blocks = len(leaves)
    sizes = np.full(n_blocks, n_nodes // n_blocks)
    sizes[: n_nodes - sizes.sum()] += 1
    P = np.full((n_blocks, n_blocks), 0.01)
    np.fill_diagonal(P, rng.uniform(0.15, 0.35))
    records, names, block = sbm_records(sizes, P, seed=int(rng.integers(2**31)), prefix="u")
    net = load_network(records, nodes=names)
    phi = {}
    for v, b in zip(names, block):
        leaf = leaves[b] if rng.random() > 0.1 else leaves[int(rng.integers(n_blocks))]
        phi[v] = {leaf}
    return net, h, phi

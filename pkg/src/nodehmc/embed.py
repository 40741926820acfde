"""Node embeddings from second-order biased random walks and skip-gram with
negative sampling."""
import hashlib
import logging
from dataclasses import asdict, dataclass

import numba
import numpy as np

from ._seeding import derive_seed
from .errors import HmcError, NetworkError

logger = logging.getLogger(__name__)

_BLOCK = 1 << 18


@dataclass(frozen=True)
class WalkConfig:
    p: float = 1.0
    q: float = 1.0
    walk_length: int = 30
    walks_per_node: int = 10
    seed: int = 0

    def __post_init__(self):
        if not (self.p > 0 and self.q > 0):
            raise HmcError("walk parameters p and q must be positive")
        if self.walk_length < 2:
            raise HmcError("walk_length must be >= 2")
        if self.walks_per_node < 1:
            raise HmcError("walks_per_node must be >= 1")


@dataclass(frozen=True)
class EmbeddingConfig:
    dimension: int = 64
    window: int = 5
    negative_samples: int = 5
    epochs: int = 5
    learning_rate: float = 0.025
    min_learning_rate: float = 0.0001
    seed: int = 0

    def __post_init__(self):
        if self.dimension < 1:
            raise HmcError("embedding dimension must be >= 1")
        if self.window < 1:
            raise HmcError("window must be >= 1")
        if self.negative_samples < 0 or self.epochs < 1:
            raise HmcError("negative_samples must be >= 0 and epochs >= 1")


def transition_probabilities(net, prev, cur, p=1.0, q=1.0):
    """Normalized next-step distribution from ``cur`` having arrived from ``prev``.

    ``prev=None`` gives the first-order (weight-proportional) step. Returns the
    neighbor index array and matching probabilities, or empty arrays at a dead end.
    """
    nbrs = net.neighbors(cur)
    w = net.neighbor_weights(cur).astype(float)
    if prev is not None:
        back = net.neighbors(prev)
        pos = np.searchsorted(back, nbrs)
        near = (pos < len(back)) & (back[np.minimum(pos, len(back) - 1)] == nbrs)
        alpha = np.where(nbrs == prev, 1.0 / p, np.where(near, 1.0, 1.0 / q))
        w = w * alpha
    total = w.sum()
    if len(nbrs) == 0 or total <= 0:
        return nbrs[:0], w[:0]
    return nbrs, w / total


def _walk(net, start, cfg, rng):
    walk = [start]
    prev = None
    while len(walk) < cfg.walk_length:
        cur = walk[-1]
        nbrs, probs = transition_probabilities(net, prev, cur, cfg.p, cfg.q)
        if len(nbrs) == 0:
            break
        j = int(np.searchsorted(np.cumsum(probs), rng.random() * 1.0, side="right"))
        nxt = int(nbrs[min(j, len(nbrs) - 1)])
        prev = cur
        walk.append(nxt)
    return walk


def generate_walks(net, cfg=WalkConfig()):
    """``walks_per_node`` walks from every non-isolated node, as node-id lists.

    Each walk draws from its own stream seeded by ``(seed, start node, walk
    index)``, so the corpus does not depend on evaluation order.
    """
    starts = [i for i in range(len(net)) if net.degree[i] > 0]
    if not starts:
        raise NetworkError("cannot walk a graph without edges")
    walks = []
    for r in range(cfg.walks_per_node):
        for s in starts:
            rng = np.random.default_rng(derive_seed(cfg.seed, net.nodes[s], r))
            walks.append([net.nodes[i] for i in _walk(net, s, cfg, rng)])
    return walks


@dataclass(frozen=True)
class EmbeddingMatrix:
    nodes: tuple
    vectors: np.ndarray
    config_hash: str = ""

    @property
    def dimension(self):
        return self.vectors.shape[1]

    def matrix(self, nodes=None):
        if nodes is None:
            return self.vectors
        where = {n: i for i, n in enumerate(self.nodes)}
        rows = []
        for n in nodes:
            if n not in where:
                raise NetworkError(f"node {n!r} missing from embedding table")
            rows.append(where[n])
        return self.vectors[rows]


def _pairs(walks, vocab, window):
    centers, contexts = [], []
    for walk in walks:
        ids = np.fromiter((vocab[n] for n in walk), dtype=np.int64, count=len(walk))
        L = len(ids)
        for off in range(1, window + 1):
            if off >= L:
                break
            centers.append(ids[:-off])
            contexts.append(ids[off:])
            centers.append(ids[off:])
            contexts.append(ids[:-off])
    if not centers:
        raise HmcError("walk corpus yields no (center, context) pairs")
    return np.concatenate(centers), np.concatenate(contexts)


def _log_sigmoid(z):
    return -np.logaddexp(0.0, -z)


def sgns_loss(W_in, W_out, centers, contexts, negatives, mask=None):
    """Summed skip-gram negative-sampling loss over the given pairs.

    ``negatives`` has shape ``(n_pairs, K)``; ``mask`` (same shape) switches
    individual negatives off.
    """
    u = W_in[centers]
    pos = np.einsum("ij,ij->i", u, W_out[contexts])
    neg = np.einsum("ij,ikj->ik", u, W_out[negatives])
    m = np.ones(negatives.shape) if mask is None else mask
    return float(-_log_sigmoid(pos).sum() - (m * _log_sigmoid(-neg)).sum())


def sgns_grad(W_in, W_out, centers, contexts, negatives, mask=None):
    """Analytic gradient of :func:`sgns_loss` with respect to both matrices."""
    u = W_in[centers]
    vp = W_out[contexts]
    vn = W_out[negatives]
    m = np.ones(negatives.shape) if mask is None else mask
    gp = _sigmoid(np.einsum("ij,ij->i", u, vp)) - 1.0
    gn = _sigmoid(np.einsum("ij,ikj->ik", u, vn)) * m
    G_in = np.zeros_like(W_in)
    G_out = np.zeros_like(W_out)
    np.add.at(G_in, centers, gp[:, None] * vp + np.einsum("ik,ikj->ij", gn, vn))
    np.add.at(G_out, contexts, gp[:, None] * u)
    np.add.at(G_out, negatives.ravel(), (gn[:, :, None] * u[:, None, :]).reshape(-1, u.shape[1]))
    return G_in, G_out


def _sigmoid(z):
    return np.exp(_log_sigmoid(z))


@numba.njit(cache=True)
def _sgd_block(W_in, W_out, centers, contexts, negatives, lr_start, lr_step):
    """Sequential SGNS updates over one block of pairs; returns the summed loss."""
    d = W_in.shape[1]
    K = negatives.shape[1]
    grad_u = np.empty(d)
    loss = 0.0
    for i in range(centers.shape[0]):
        lr = lr_start - lr_step * i
        c = centers[i]
        o = contexts[i]
        for j in range(d):
            grad_u[j] = 0.0
        for s in range(K + 1):
            if s == 0:
                t = o
                label = 1.0
            else:
                t = negatives[i, s - 1]
                if t == o:
                    continue
                label = 0.0
            z = 0.0
            for j in range(d):
                z += W_in[c, j] * W_out[t, j]
            if z > 0:
                sig = 1.0 / (1.0 + np.exp(-z))
                logsig_pos = -np.log1p(np.exp(-z))
                logsig_neg = -z - np.log1p(np.exp(-z))
            else:
                ez = np.exp(z)
                sig = ez / (1.0 + ez)
                logsig_pos = z - np.log1p(ez)
                logsig_neg = -np.log1p(ez)
            loss -= logsig_pos if label == 1.0 else logsig_neg
            g = lr * (sig - label)
            for j in range(d):
                grad_u[j] += g * W_out[t, j]
                W_out[t, j] -= g * W_in[c, j]
        for j in range(d):
            W_in[c, j] -= grad_u[j]
    return loss


def train_embeddings(walks, cfg=EmbeddingConfig(), nodes=None, callback=None):
    """Fit skip-gram vectors to a walk corpus by per-pair SGD.

    Negatives come from the corpus unigram distribution raised to 0.75; a
    negative that equals the positive context is ignored. The step size decays
    linearly from ``learning_rate`` to ``min_learning_rate`` over all pairs.
    Nodes listed in ``nodes`` but absent from the corpus get zero vectors.

    ``callback(epoch, W_in, W_out, mean_loss)`` runs after every epoch.
    """
    walks = [list(w) for w in walks]
    if not walks:
        raise HmcError("empty walk corpus")
    vocab = {}
    for w in walks:
        for n in w:
            vocab.setdefault(n, len(vocab))
    order = list(vocab)
    if nodes is not None:
        for n in nodes:
            if n not in vocab:
                vocab[n] = len(vocab)
                order.append(n)
    V, d = len(order), cfg.dimension
    centers, contexts = _pairs(walks, vocab, cfg.window)
    freq = np.bincount(np.concatenate([np.fromiter((vocab[n] for n in w), dtype=np.int64) for w in walks]), minlength=V)
    noise = freq.astype(float) ** 0.75
    noise_cdf = np.cumsum(noise / noise.sum())

    rng = np.random.default_rng(cfg.seed)
    W_in = (rng.random((V, d)) - 0.5) / d
    W_out = np.zeros((V, d))
    n_pairs = len(centers)
    K = cfg.negative_samples
    total = n_pairs * cfg.epochs
    lr_step = (cfg.learning_rate - cfg.min_learning_rate) / max(total - 1, 1)
    done = 0
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n_pairs)
        loss_sum = 0.0
        for start in range(0, n_pairs, _BLOCK):
            idx = perm[start:start + _BLOCK]
            neg = np.searchsorted(noise_cdf, rng.random((len(idx), K)), side="right")
            neg = np.minimum(neg, V - 1).astype(np.int64)
            lr0 = cfg.learning_rate - lr_step * done
            loss_sum += _sgd_block(W_in, W_out, centers[idx], contexts[idx], neg, lr0, lr_step)
            done += len(idx)
        if callback is not None:
            callback(epoch, W_in, W_out, loss_sum / n_pairs)
    W = np.where((freq > 0)[:, None], W_in, 0.0)
    if nodes is not None:
        W = W[[vocab[n] for n in nodes]]
        order = list(nodes)
    return EmbeddingMatrix(tuple(order), W, config_hash(cfg))


def config_hash(*cfgs):
    h = hashlib.sha256()
    for c in cfgs:
        h.update(repr(sorted(asdict(c).items())).encode())
    return h.hexdigest()[:16]


def embed_network(net, walk_cfg=WalkConfig(), emb_cfg=EmbeddingConfig()):
    """Embeddings for every node of ``net`` (isolated nodes get zero vectors)."""
    if net.n_edges == 0:
        return EmbeddingMatrix(net.nodes, np.zeros((len(net), emb_cfg.dimension)), config_hash(walk_cfg, emb_cfg))
    walks = generate_walks(net, walk_cfg)
    emb = train_embeddings(walks, emb_cfg, nodes=net.nodes)
    return EmbeddingMatrix(emb.nodes, emb.vectors, config_hash(walk_cfg, emb_cfg))


def write_embeddings(emb, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# dimension={emb.dimension}\tconfig={emb.config_hash}\n")
        for n, v in zip(emb.nodes, emb.vectors):
            fh.write(n + "\t" + "\t".join(repr(float(x)) for x in v) + "\n")


def read_embeddings(path):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("#"):
            raise HmcError(f"{path}: missing embedding header")
        meta = dict(kv.split("=", 1) for kv in header.lstrip("# ").split("\t"))
        dim = int(meta["dimension"])
        nodes, rows = [], []
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            if len(parts) != dim + 1:
                raise HmcError(f"{path}: row for {parts[0]!r} has {len(parts) - 1} values, expected {dim}")
            nodes.append(parts[0])
            rows.append([float(x) for x in parts[1:]])
    return EmbeddingMatrix(tuple(nodes), np.array(rows, dtype=float).reshape(len(nodes), dim), meta.get("config", ""))

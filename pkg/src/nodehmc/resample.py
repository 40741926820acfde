"""Stratified k-fold assignment and SMOTE oversampling."""
from dataclasses import dataclass

import numpy as np

from .errors import ResampleError


@dataclass(frozen=True)
class FoldAssignment:
    k: int
    fold: np.ndarray

    def __post_init__(self):
        if self.k < 2:
            raise ResampleError("k must be at least 2")
        f = np.asarray(self.fold)
        if f.size and (f.min() < 0 or f.max() >= self.k):
            raise ResampleError("fold index out of range")

    def __len__(self):
        return len(self.fold)

    def split(self, i):
        """``(train_idx, test_idx)`` for fold ``i``."""
        test = np.flatnonzero(self.fold == i)
        train = np.flatnonzero(self.fold != i)
        return train, test

    def splits(self):
        for i in range(self.k):
            yield self.split(i)


def stratified_kfold(labels, k=5, seed=0):
    """Assign rows to ``k`` folds with near-identical label distributions.

    Each stratum is shuffled with ``seed`` and dealt round-robin. The negative
    stratum resumes dealing where the positives stopped so fold sizes stay
    within one row of each other.
    """
    y = np.asarray(labels).astype(bool).ravel()
    if k < 2:
        raise ResampleError("k must be at least 2")
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos < k:
        raise ResampleError(f"insufficient positives for stratification ({n_pos} < k={k})")
    if n_neg < k:
        raise ResampleError(f"insufficient negatives for stratification ({n_neg} < k={k})")
    rng = np.random.default_rng(seed)
    fold = np.empty(len(y), dtype=np.int64)
    offset = 0
    for stratum in (np.flatnonzero(y), np.flatnonzero(~y)):
        perm = rng.permutation(stratum)
        fold[perm] = (np.arange(len(perm)) + offset) % k
        offset = (offset + len(perm)) % k
    return FoldAssignment(k, fold)


def write_folds(folds, nodes, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("node\tfold\n")
        for n, f in zip(nodes, folds.fold):
            fh.write(f"{n}\t{int(f)}\n")


@dataclass(frozen=True)
class SmoteConfig:
    k_neighbors: int = 5
    target_ratio: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise ResampleError("k_neighbors must be >= 1")
        if not 0 < self.target_ratio <= 1:
            raise ResampleError("target_ratio must lie in (0, 1]")


def _nearest_neighbors(X, k):
    """Indices of the ``k`` nearest other rows (exact Euclidean, stable ties)."""
    sq = np.sum(X * X, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.fill_diagonal(d2, np.inf)
    return np.argsort(d2, axis=1, kind="stable")[:, :k]


def smote(minority_rows, synthetic_count, cfg=SmoteConfig(), return_sources=False):
    """Synthesize ``synthetic_count`` rows on segments between minority neighbors.

    Each synthetic row is ``x + u * (x_nn - x)`` for a random minority row ``x``,
    one of its ``k_neighbors`` nearest minority rows ``x_nn`` and
    ``u ~ U[0, 1]``. ``k_neighbors`` is clamped to ``len(minority_rows) - 1``.

    With ``return_sources`` the base index, neighbor index and ``u`` of every
    synthetic row are returned too.
    """
    X = np.asarray(minority_rows, dtype=float)
    if X.ndim != 2:
        raise ResampleError("minority_rows must be a 2-D matrix")
    m = len(X)
    if m < 2:
        raise ResampleError("SMOTE needs at least two minority rows to interpolate")
    if synthetic_count < 0:
        raise ResampleError("synthetic_count must be non-negative")
    k = min(cfg.k_neighbors, m - 1)
    nn = _nearest_neighbors(X, k)
    rng = np.random.default_rng(cfg.seed)
    base = rng.integers(0, m, size=synthetic_count)
    pick = rng.integers(0, k, size=synthetic_count)
    u = rng.random(synthetic_count)
    other = nn[base, pick]
    out = X[base] + u[:, None] * (X[other] - X[base])
    if return_sources:
        return out, base, other, u
    return out


def oversample(X, y, cfg=SmoteConfig()):
    """Append SMOTE rows to the minority class of ``(X, y)``.

    Returns ``(X_aug, y_aug, source)`` where ``source`` holds the original row
    index for real rows and -1 for synthetic ones.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(bool)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    minority = n_pos < n_neg
    n_min, n_maj = (n_pos, n_neg) if minority else (n_neg, n_pos)
    want = int(np.ceil(cfg.target_ratio * n_maj - 1e-9))
    extra = max(0, want - n_min)
    source = np.arange(len(y))
    if extra == 0 or n_min < 2:
        return X, y, source
    rows = smote(X[y == minority], extra, cfg)
    return (
        np.vstack([X, rows]),
        np.r_[y, np.full(extra, minority)],
        np.r_[source, np.full(extra, -1)],
    )

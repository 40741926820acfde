"""Binary probabilistic classifiers and grid tuning.

The built-in model is L2-regularized logistic regression fitted by seeded
mini-batch gradient descent. Other learners plug in through
:class:`ExternalClassifier`, which exchanges tab-separated files with a
command-line program.

For external gradient-boosted-tree adapters, a reference configuration is
``booster=gbtree, eval_metric=aucpr, eta=0.05, max_depth=6, subsample=0.9,
min_child_weight=3`` (see :data:`GBT_REFERENCE_PARAMS`).
"""
import hashlib
import itertools
import logging
import os
import shlex
import subprocess
import tempfile
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import LearnError
from .metrics import average_precision

logger = logging.getLogger(__name__)

GBT_REFERENCE_PARAMS = {
    "booster": "gbtree",
    "eval_metric": "aucpr",
    "eta": 0.05,
    "max_depth": 6,
    "subsample": 0.9,
    "min_child_weight": 3,
}

_CLAMP = 1e-15


@dataclass(frozen=True)
class ClassifierConfig:
    kind: str = "builtin-logistic"
    learning_rate: float = 0.05
    epochs: int = 200
    l2_strength: float = 0.0
    seed: int = 0
    batch_size: int = 32
    command: str = ""

    def __post_init__(self):
        if self.kind not in ("builtin-logistic", "external"):
            raise LearnError(f"unknown classifier kind {self.kind!r}")
        if not self.learning_rate > 0:
            raise LearnError("learning_rate must be > 0")
        if self.epochs < 1:
            raise LearnError("epochs must be >= 1")
        if self.l2_strength < 0:
            raise LearnError("l2_strength must be >= 0")
        if self.batch_size < 1:
            raise LearnError("batch_size must be >= 1")
        if self.kind == "external" and not self.command:
            raise LearnError("external classifier needs a command")


@dataclass(frozen=True)
class HyperGrid:
    candidates: tuple
    metric: str = "aucpr"

    def __post_init__(self):
        if not self.candidates:
            raise LearnError("hyper-parameter grid is empty")
        if self.metric != "aucpr":
            raise LearnError(f"unsupported selection metric {self.metric!r}")

    def __iter__(self):
        return iter(self.candidates)

    def __len__(self):
        return len(self.candidates)


def default_grid(base=ClassifierConfig()):
    return HyperGrid(tuple(
        replace(base, learning_rate=lr, l2_strength=l2, epochs=ep)
        for lr, l2, ep in itertools.product((0.01, 0.05, 0.1), (0.0, 0.1, 1.0), (50, 200))
    ))


def schema_hash(feature_names=None, n_features=None):
    if feature_names is not None:
        key = "\x1f".join(map(str, feature_names))
    else:
        key = f"#{n_features}"
    return hashlib.sha256(key.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class TrainedModel:
    weights: np.ndarray
    config: ClassifierConfig
    schema: str
    loss_history: tuple = field(default=(), repr=False)

    @property
    def n_features(self):
        return len(self.weights) - 1


def _sigmoid(z):
    return np.exp(-np.logaddexp(0.0, -z))


def logistic_loss(w, X, y, l2=0.0):
    """Mean binary cross-entropy plus ``l2/2 * ||w[:-1]||^2``; ``w[-1]`` is the bias."""
    z = X @ w[:-1] + w[-1]
    # log(1 + e^z) - y z, evaluated stably
    data = np.mean(np.logaddexp(0.0, z) - y * z)
    return float(data + 0.5 * l2 * np.dot(w[:-1], w[:-1]))


def logistic_grad(w, X, y, l2=0.0):
    z = X @ w[:-1] + w[-1]
    r = (_sigmoid(z) - y) / len(y)
    g = np.empty_like(w)
    g[:-1] = X.T @ r + l2 * w[:-1]
    g[-1] = r.sum()
    return g


def _check_xy(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2 or X.shape[0] != len(y):
        raise LearnError(f"X has shape {X.shape} but y has {len(y)} labels")
    if not np.all(np.isfinite(X)):
        raise LearnError("non-finite feature value")
    if not np.all((y == 0) | (y == 1)):
        raise LearnError("labels must be binary")
    if y.min() == y.max():
        raise LearnError("degenerate labels: only one class present")
    return X, y


def _sgd(X, y, w, cfg, rng, history):
    n = len(y)
    bs = cfg.batch_size
    for epoch in range(cfg.epochs):
        frac = epoch / max(cfg.epochs - 1, 1)
        lr = cfg.learning_rate * (1.0 - 0.99 * frac)
        perm = rng.permutation(n)
        for start in range(0, n, bs):
            idx = perm[start:start + bs]
            Xb = X[idx]
            r = (_sigmoid(Xb @ w[:-1] + w[-1]) - y[idx]) / len(idx)
            w[:-1] -= lr * (Xb.T @ r + cfg.l2_strength * w[:-1])
            w[-1] -= lr * r.sum()
        history.append(logistic_loss(w, X, y, cfg.l2_strength))


def train(X, y, cfg=ClassifierConfig(), feature_names=None):
    """Fit the built-in logistic model.

    Mini-batches are drawn from a per-epoch permutation seeded by ``cfg.seed``;
    the step size decays linearly from ``learning_rate`` to 1% of it.
    """
    if cfg.kind != "builtin-logistic":
        raise LearnError("train() fits the built-in model only; use fit_predict for external learners")
    X, y = _check_xy(X, y)
    d = X.shape[1]
    if feature_names is not None and len(feature_names) != d:
        raise LearnError(f"{len(feature_names)} feature names for {d} columns")
    rng = np.random.default_rng(cfg.seed)
    w = np.zeros(d + 1)
    history = []
    with np.errstate(over="ignore", invalid="ignore"):
        _sgd(X, y, w, cfg, rng, history)
    if not np.all(np.isfinite(w)):
        raise LearnError("training diverged (non-finite weights)")
    w.setflags(write=False)
    return TrainedModel(w, cfg, schema_hash(feature_names, d), tuple(history))


def predict_proba(model, X, feature_names=None):
    """Sigmoid of the affine score, clamped into ``[1e-15, 1 - 1e-15]``."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise LearnError(f"schema mismatch: model expects {model.n_features} features, got shape {X.shape}")
    if feature_names is not None and schema_hash(feature_names, X.shape[1]) != model.schema:
        raise LearnError("schema mismatch: feature names differ from the training schema")
    p = _sigmoid(X @ model.weights[:-1] + model.weights[-1])
    return np.clip(p, _CLAMP, 1.0 - _CLAMP)


class ExternalClassifier:
    """Adapter for a learner living outside this package.

    The command is invoked as ``<command> TRAIN_TSV TEST_TSV OUT_TSV``. Both
    input files carry a header ``f1 ... fd label`` (test labels are blank);
    the program must write one probability per test row to ``OUT_TSV``, with or
    without a ``probability`` header.
    """

    def __init__(self, command):
        self.argv = shlex.split(command)

    @staticmethod
    def _dump(path, X, y, names):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\t".join(list(names) + ["label"]) + "\n")
            for i, row in enumerate(X):
                lab = "" if y is None else str(int(y[i]))
                fh.write("\t".join(repr(float(v)) for v in row) + "\t" + lab + "\n")

    def fit_predict(self, X_train, y_train, X_test, feature_names=None):
        X_train, y_train = _check_xy(X_train, y_train)
        X_test = np.asarray(X_test, dtype=float)
        names = feature_names or [f"f{j}" for j in range(X_train.shape[1])]
        with tempfile.TemporaryDirectory(prefix="nodehmc-ext-") as tmp:
            tr, te, out = (os.path.join(tmp, f) for f in ("train.tsv", "test.tsv", "out.tsv"))
            self._dump(tr, X_train, y_train, names)
            self._dump(te, X_test, None, names)
            proc = subprocess.run(self.argv + [tr, te, out], capture_output=True, text=True)
            if proc.returncode != 0:
                raise LearnError(f"external classifier failed ({proc.returncode}): {proc.stderr.strip()[:500]}")
            p = read_probabilities(out)
        if len(p) != len(X_test):
            raise LearnError(f"external classifier returned {len(p)} rows for {len(X_test)} inputs")
        if not np.all(np.isfinite(p)) or p.min() < 0 or p.max() > 1:
            raise LearnError("external classifier returned probabilities outside [0, 1]")
        return p


def read_probabilities(path):
    vals = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                vals.append(float(line.split("\t")[-1]))
            except ValueError:
                if vals:
                    raise LearnError(f"{path}: unparseable probability {line!r}") from None
    return np.asarray(vals, dtype=float)


def fit_predict(cfg, X_train, y_train, X_test, feature_names=None):
    """Train on one split and score another; returns ``(model_or_None, probs)``."""
    if cfg.kind == "external":
        return None, ExternalClassifier(cfg.command).fit_predict(X_train, y_train, X_test, feature_names)
    model = train(X_train, y_train, cfg, feature_names)
    return model, predict_proba(model, X_test, feature_names)


@dataclass
class CrossValidation:
    config: ClassifierConfig
    oof: np.ndarray
    models: list
    fold_scores: list

    @property
    def score(self):
        return float(np.mean(self.fold_scores))


def cross_validate(X, y, cfg, folds, resampler=None, feature_names=None):
    """Out-of-fold probabilities and per-fold AUCPR for one configuration.

    ``resampler(X_train, y_train, fold_index)`` may augment the training split
    (e.g. SMOTE); test rows are never touched.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(bool)
    oof = np.full(len(y), np.nan)
    models, scores = [], []
    for i, (tr, te) in enumerate(folds.splits()):
        Xtr, ytr = X[tr], y[tr]
        if resampler is not None:
            Xtr, ytr = resampler(Xtr, ytr, i)[:2]
        model, p = fit_predict(cfg, Xtr, ytr, X[te], feature_names)
        oof[te] = p
        models.append(model)
        scores.append(average_precision(p, y[te]))
    return CrossValidation(cfg, oof, models, scores)


def tune_cv(X, y, grid, folds, resampler=None, feature_names=None):
    """Cross-validate every candidate; return the best :class:`CrossValidation`.

    A candidate that raises scores as ``-inf``; ties keep grid order.
    """
    if not isinstance(grid, HyperGrid):
        grid = HyperGrid(tuple(grid))
    best, best_score = None, -np.inf
    failures = []
    for cfg in grid:
        try:
            cv = cross_validate(X, y, cfg, folds, resampler, feature_names)
        except LearnError as exc:
            failures.append(str(exc))
            logger.debug("candidate %s failed: %s", cfg, exc)
            continue
        if best is None or cv.score > best_score:
            best, best_score = cv, cv.score
    if best is None:
        raise LearnError(f"every grid candidate failed; first error: {failures[0]}")
    return best


def tune(X, y, grid, folds, resampler=None, feature_names=None):
    """Configuration with the highest mean AUCPR across folds."""
    return tune_cv(X, y, grid, folds, resampler, feature_names).config

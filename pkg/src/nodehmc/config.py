"""Run configuration: an INI file with one section per pipeline concern."""
import configparser
import hashlib
import json
import os
from dataclasses import dataclass, field, replace

from .embed import EmbeddingConfig, WalkConfig
from .engine import EngineConfig
from .errors import HmcError
from .learn import ClassifierConfig, HyperGrid

# (section, key, default, help); paths are resolved against the config file
SETTINGS = (
    ("input", "edges", "", "tab-separated network edges: node_a, node_b, weight"),
    ("input", "annotations", "", "tab-separated node, class pairs"),
    ("input", "hierarchy", "", "parent<TAB>child edges, or an .obo ontology"),
    ("input", "nodes", "", "optional node list (adds isolated nodes)"),
    ("split", "min_count", "5", "smallest class size that gets a classifier"),
    ("split", "max_count", "300", "largest class size that gets a classifier"),
    ("engine", "k", "5", "number of cross-validation folds"),
    ("engine", "seed", "0", "master seed (overridden by --seed)"),
    ("engine", "classifier", "builtin-logistic", "builtin-logistic or external"),
    ("engine", "command", "", "external learner: COMMAND TRAIN TEST OUT"),
    ("engine", "learning_rates", "0.01, 0.05, 0.1", "grid values"),
    ("engine", "l2_strengths", "0.0, 0.1, 1.0", "grid values"),
    ("engine", "epochs", "50, 200", "grid values"),
    ("engine", "batch_size", "32", "mini-batch size of the built-in learner"),
    ("smote", "enabled", "true", "oversample the minority class of training folds"),
    ("smote", "k_neighbors", "5", "neighbors used to interpolate synthetic rows"),
    ("smote", "target_ratio", "1.0", "minority:majority ratio after oversampling"),
    ("features", "clustering", "true", "add the clustering-coefficient column"),
    ("walk", "p", "1.0", "return parameter"),
    ("walk", "q", "1.0", "in-out parameter"),
    ("walk", "walk_length", "30", "nodes per walk"),
    ("walk", "walks_per_node", "10", "walks started at every node"),
    ("embedding", "dimension", "64", "embedding size"),
    ("embedding", "window", "5", "skip-gram context window"),
    ("embedding", "negative_samples", "5", "negatives per positive pair"),
    ("embedding", "epochs", "5", "passes over the walk corpus"),
    ("embedding", "learning_rate", "0.025", "initial SGD step"),
    ("embedding", "min_learning_rate", "0.0001", "final SGD step"),
    ("run", "output", "out", "output directory"),
    ("run", "workers", "0", "sub-hierarchies processed in parallel (0 = all CPUs)"),
    ("run", "widen_candidates", "false", "also score network nodes outside each sub-hierarchy"),
    ("run", "baseline", "none", "none or hbn"),
)

# which sections feed each stage (upstream sections are added transitively)
STAGE_SECTIONS = {
    "normalize": ("input",),
    "split": ("split",),
    "features": ("features", "run.widen_candidates"),
    "embed": ("walk", "embedding", "engine.seed", "run.widen_candidates"),
    "train": ("engine", "smote"),
    "predict": (),
    "baseline": ("engine.k", "engine.seed"),
    "eval": (),
}

STAGE_UPSTREAM = {
    "normalize": (), "split": ("normalize",), "features": ("split",), "embed": ("split",),
    "train": ("features", "embed"), "predict": ("train",), "baseline": ("split",),
    "eval": ("predict",),
}


def settings_help():
    lines, current = [], None
    for sec, key, default, text in SETTINGS:
        if sec != current:
            lines.append(f"[{sec}]")
            current = sec
        lines.append(f"  {key} = {default:<18} {text}")
    return "\n".join(lines)


def _floats(s):
    return tuple(float(x) for x in s.replace(",", " ").split())


def _ints(s):
    return tuple(int(x) for x in s.replace(",", " ").split())


@dataclass(frozen=True)
class RunConfig:
    edges: str
    annotations: str
    hierarchy: str
    nodes: str = ""
    min_count: int = 5
    max_count: int = 300
    k: int = 5
    seed: int = 0
    classifier: str = "builtin-logistic"
    command: str = ""
    learning_rates: tuple = (0.01, 0.05, 0.1)
    l2_strengths: tuple = (0.0, 0.1, 1.0)
    epochs: tuple = (50, 200)
    batch_size: int = 32
    smote: bool = True
    smote_k_neighbors: int = 5
    smote_target_ratio: float = 1.0
    clustering: bool = True
    walk: WalkConfig = field(default_factory=WalkConfig)
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    output: str = "out"
    workers: int = 0
    widen_candidates: bool = False
    baseline: str = "none"
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if not 1 <= self.min_count <= self.max_count:
            raise HmcError(f"class-size bounds must satisfy 1 <= min_count <= max_count, got {self.min_count}..{self.max_count}")
        if self.k < 2:
            raise HmcError("k must be >= 2")
        if self.baseline not in ("none", "hbn"):
            raise HmcError(f"unknown baseline {self.baseline!r}; expected none or hbn")
        if self.workers < 0:
            raise HmcError("workers must be >= 0")

    def engine_config(self):
        base = ClassifierConfig(kind=self.classifier, batch_size=self.batch_size, command=self.command)
        grid = HyperGrid(tuple(
            replace(base, learning_rate=lr, l2_strength=l2, epochs=ep)
            for lr in self.learning_rates for l2 in self.l2_strengths for ep in self.epochs
        ))
        return EngineConfig(self.k, self.seed, grid, self.smote, self.smote_k_neighbors, self.smote_target_ratio)

    def pool_size(self):
        return self.workers or (os.cpu_count() or 1)

    def stage_hash(self, stage):
        """Hash of every setting (bar input paths) that can change the artifacts of ``stage``."""
        keys, todo = set(), [stage]
        while todo:
            s = todo.pop()
            keys.update(STAGE_SECTIONS[s])
            todo.extend(STAGE_UPSTREAM[s])
        picked = {}
        for sec, key, _, _ in SETTINGS:
            if sec == "input":
                continue  # file contents are hashed in the manifests instead
            if sec in keys or f"{sec}.{key}" in keys:
                picked[f"{sec}.{key}"] = self.raw.get(f"{sec}.{key}", "")
        blob = json.dumps(picked, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def _bool(sec, key, s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise HmcError(f"[{sec}] {key}: expected a boolean, got {s!r}")


def load_config(path=None, seed=None, overrides=None):
    """Read an INI file into a :class:`RunConfig`.

    Relative input paths are taken relative to the file's directory; the
    output directory is relative to the current directory. ``overrides`` maps
    ``"section.key"`` to a string value.
    """
    cp = configparser.ConfigParser(interpolation=None)
    base = os.getcwd()
    if path is not None:
        if not os.path.isfile(path):
            raise FileNotFoundError(f"config file not found: {path}")
        with open(path, encoding="utf-8") as fh:
            try:
                cp.read_file(fh, source=path)
            except configparser.Error as exc:
                raise HmcError(f"malformed config: {exc}") from None
        base = os.path.dirname(os.path.abspath(path))
    known = {(s, k) for s, k, _, _ in SETTINGS}
    for sec in cp.sections():
        for key in cp[sec]:
            if (sec, key) not in known:
                raise HmcError(f"unknown setting [{sec}] {key}")
    raw = {}
    for sec, key, default, _ in SETTINGS:
        raw[f"{sec}.{key}"] = cp.get(sec, key, fallback=default).strip()
    for k, v in (overrides or {}).items():
        if k not in raw:
            raise HmcError(f"unknown setting {k}")
        raw[k] = str(v)
    if seed is not None:
        raw["engine.seed"] = str(int(seed))

    for key in ("edges", "annotations", "hierarchy", "nodes"):
        v = raw[f"input.{key}"]
        if v and not os.path.isabs(v):
            raw[f"input.{key}"] = os.path.normpath(os.path.join(base, v))
    for key in ("edges", "annotations", "hierarchy"):
        if not raw[f"input.{key}"]:
            raise HmcError(f"[input] {key} is required")

    def get(name, conv=str):
        sec, key = name.split(".")
        try:
            return conv(raw[name])
        except ValueError:
            raise HmcError(f"[{sec}] {key}: cannot parse {raw[name]!r}") from None

    master = get("engine.seed", int)
    walk = WalkConfig(
        p=get("walk.p", float), q=get("walk.q", float),
        walk_length=get("walk.walk_length", int), walks_per_node=get("walk.walks_per_node", int),
        seed=master,
    )
    emb = EmbeddingConfig(
        dimension=get("embedding.dimension", int), window=get("embedding.window", int),
        negative_samples=get("embedding.negative_samples", int), epochs=get("embedding.epochs", int),
        learning_rate=get("embedding.learning_rate", float),
        min_learning_rate=get("embedding.min_learning_rate", float), seed=master,
    )
    return RunConfig(
        edges=raw["input.edges"], annotations=raw["input.annotations"], hierarchy=raw["input.hierarchy"],
        nodes=raw["input.nodes"],
        min_count=get("split.min_count", int), max_count=get("split.max_count", int),
        k=get("engine.k", int), seed=master,
        classifier=raw["engine.classifier"], command=raw["engine.command"],
        learning_rates=get("engine.learning_rates", _floats), l2_strengths=get("engine.l2_strengths", _floats),
        epochs=get("engine.epochs", _ints), batch_size=get("engine.batch_size", int),
        smote=_bool("smote", "enabled", raw["smote.enabled"]),
        smote_k_neighbors=get("smote.k_neighbors", int), smote_target_ratio=get("smote.target_ratio", float),
        clustering=_bool("features", "clustering", raw["features.clustering"]),
        walk=walk, embedding=emb,
        output=raw["run.output"], workers=get("run.workers", int),
        widen_candidates=_bool("run", "widen_candidates", raw["run.widen_candidates"]),
        baseline=raw["run.baseline"].lower(),
        raw=raw,
    )

"""Acceptance checks. Every test prints one ``ACCEPTANCE n: PASS|FAIL`` line."""
import csv
import os
import time
from fractions import Fraction

import numpy as np
import pytest

import oracles
from conftest import barbell, data_dir
from nodehmc import (
    class_census,
    close_annotations,
    edge_weight,
    normalize,
    split_subhierarchies,
    topological_features,
)
from nodehmc.cli import main
from nodehmc.embed import EmbeddingConfig, WalkConfig, embed_network
from nodehmc.engine import EngineConfig, predict_subhierarchy, train_subhierarchy
from nodehmc.hbn import evaluate_subhierarchy
from nodehmc.hierarchy import ClassCensus
from nodehmc.learn import ClassifierConfig, HyperGrid, logistic_grad, logistic_loss, predict_proba, train
from nodehmc.metrics import average_precision, confusion, f1, optimum_threshold, roc_auc
from nodehmc.resample import SmoteConfig, oversample, smote, stratified_kfold
from nodehmc.synthetic import diamond_example, planted_benchmark, random_annotations, random_dag, random_problem


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {n}: {'PASS' if ok else 'FAIL'} | {detail}")
        return ok
    return emit


def test_01_diamond_golden(report):
    h, phi = diamond_example()
    closed = close_annotations(phi, h)
    census = class_census(h, closed)
    t0 = time.perf_counter()
    wb, wc = edge_weight(census, "B", "E"), edge_weight(census, "C", "E")
    tree = normalize(h, census)
    elapsed = time.perf_counter() - t0
    ok = (wb == Fraction(1, 3) and wc == Fraction(2, 3)
          and tree.removed_edges == (("B", "E"),) and elapsed < 1e-3)
    report(1, ok, f"w(B,E)={wb} w(C,E)={wc} removed={list(tree.removed_edges)} in {elapsed * 1e6:.0f} us")
    assert ok


def test_02_closure_poset(report):
    violations = 0
    rng = np.random.default_rng(2)
    for i in range(200):
        n = int(rng.integers(2, 51))
        h = random_dag(n, int(rng.integers(0, 3 * n)), seed=i)
        nodes = [f"v{j}" for j in range(30)]
        phi = random_annotations(h, nodes, per_node=int(rng.integers(1, 4)), seed=i)
        closed = close_annotations(phi, h)
        # idempotent
        again = close_annotations({v: set(cs) for v, cs in closed.items()}, h)
        violations += sum(again[v] != closed[v] for v in nodes)
        # monotone: adding classes never removes closed ones
        extra = random_annotations(h, nodes, per_node=1, seed=10_000 + i)
        bigger = close_annotations({v: set(phi[v]) | extra[v] for v in nodes}, h)
        violations += sum(not closed[v] <= bigger[v] for v in nodes)
        # preimage of a child inside the preimage of each parent; weights in [0, 1]
        census = class_census(h, closed)
        for p, c in h.edges:
            violations += not closed.nodes_with(c) <= closed.nodes_with(p)
            if census.annotated_count[p]:
                violations += not 0 <= edge_weight(census, p, c) <= 1
        violations += sum(closed[v] != oracles.closure({v: phi[v]}, h)[v] for v in nodes[:5])
    report(2, violations == 0, f"200 random DAGs (<= 50 classes), {violations} violations")
    assert violations == 0


FAST = EngineConfig(grid=HyperGrid((ClassifierConfig(epochs=20, learning_rate=0.1),)))
SMALL = (WalkConfig(walks_per_node=4, walk_length=20), EmbeddingConfig(dimension=16, epochs=1))


def _prepare(net, h, phi, min_count=5):
    closed = close_annotations(phi, h)
    tree = normalize(h, class_census(h, closed))
    return split_subhierarchies(tree, closed, net, min_count=min_count), closed


def test_03_true_path_consistency(report):
    violations = runs = 0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        net, h, phi = random_problem(seed=seed, n_nodes=int(rng.integers(60, 140)), depth=int(rng.integers(2, 4)))
        subs, closed = _prepare(net, h, phi)
        for sub in subs:
            feats = topological_features(sub.subgraph)
            emb = embed_network(sub.subgraph, *SMALL)
            run = train_subhierarchy(sub, feats, emb, closed, FAST)
            ext, _ = predict_subhierarchy(run, closed)
            for c, vals in run.p_cumulative.items():
                p = sub.parent[c]
                if p is not None:
                    violations += int(np.sum(vals > run.p_cumulative[p]))
            for v in sub.subgraph.nodes:
                for c in ext[v]:
                    if c in sub.parent and sub.parent[c] is not None:
                        violations += sub.parent[c] not in ext[v]
        runs += 1
    report(3, violations == 0, f"{runs} synthetic end-to-end runs, {violations} violations")
    assert violations == 0


def test_04_metric_oracles(report):
    rng = np.random.default_rng(4)
    worst = 0.0
    mismatched = 0
    for _ in range(1000):
        n = int(rng.integers(2, 101))
        s = rng.random(n)
        if rng.random() < 0.5:
            s = np.round(s, 1)  # plenty of ties
        y = rng.random(n) < rng.uniform(0.1, 0.9)
        if y.all() or not y.any():
            y[0] = not y[0]
        sl, yl = s.tolist(), y.tolist()
        worst = max(worst,
                    abs(roc_auc(s, y) - oracles.auc_pairwise(sl, yl)),
                    abs(average_precision(s, y) - oracles.ap_stepwise(sl, yl)))
        t, best = optimum_threshold(s, y, return_f1=True)
        t_ref, best_ref = oracles.f1_scan(sl, yl)
        mismatched += t != t_ref
        worst = max(worst, abs(best - best_ref), abs(f1(confusion(s, y, t)) - oracles.f1_at(sl, yl, t)))
    ok = worst <= 1e-12 and mismatched == 0
    report(4, ok, f"1000 instances, max |diff| {worst:.2e}, threshold mismatches {mismatched}")
    assert ok


def test_05_resampling(report):
    rng = np.random.default_rng(5)
    strat_bad = seg_bad = count_bad = 0
    for i in range(300):
        n_pos, n_neg = int(rng.integers(5, 120)), int(rng.integers(5, 120))
        y = np.r_[np.ones(n_pos, bool), np.zeros(n_neg, bool)]
        rng.shuffle(y)
        f = stratified_kfold(y, 5, seed=i)
        pos = np.bincount(f.fold[y], minlength=5)
        strat_bad += int(np.any(np.abs(pos - n_pos / 5) >= 1))
        X = rng.normal(size=(len(y), 3))
        out, base, other, _ = smote(X[y], 40, SmoteConfig(seed=i), return_sources=True)
        Xm = X[y]
        lo, hi = np.minimum(Xm[base], Xm[other]), np.maximum(Xm[base], Xm[other])
        seg_bad += int(np.sum((out < lo) | (out > hi)))
        ratio = float(rng.choice([0.5, 0.75, 1.0]))
        _, ya, _ = oversample(X, y, SmoteConfig(target_ratio=ratio, seed=i))
        minority = n_pos < n_neg
        n_min, n_maj = sorted((n_pos, n_neg))
        count_bad += int((ya == minority).sum() != max(n_min, int(np.ceil(ratio * n_maj))))
    ok = strat_bad == seg_bad == count_bad == 0
    report(5, ok, f"300 cases: stratification {strat_bad}, segment {seg_bad}, post-SMOTE count {count_bad} violations")
    assert ok


def _margin_blobs(n=500, margin=2.0, seed=6):
    rng = np.random.default_rng(seed)
    direction = np.array([0.6, 0.8])
    X = np.empty((0, 2))
    while len(X) < n:
        cand = rng.normal(scale=3.0, size=(2 * n, 2))
        X = np.r_[X, cand[np.abs(cand @ direction) >= margin / 2]]
    X = X[:n]
    return X, X @ direction > 0


def test_06_learner(report):
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(50):
        X = rng.normal(size=(5, 3))
        y = rng.integers(0, 2, 5).astype(float)
        w = rng.normal(size=4)
        l2 = float(rng.random())
        g = logistic_grad(w, X, y, l2)
        h = 1e-6
        for j, e in enumerate(np.eye(4)):
            num = (logistic_loss(w + h * e, X, y, l2) - logistic_loss(w - h * e, X, y, l2)) / (2 * h)
            worst = max(worst, abs(num - g[j]) / max(abs(num), 1e-8))
    X, y = _margin_blobs()
    t0 = time.perf_counter()
    model = train(X, y, ClassifierConfig())
    acc = float(np.mean((predict_proba(model, X) >= 0.5) == y))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-4 and acc >= 0.95 and elapsed < 5
    report(6, ok, f"gradient rel. error {worst:.1e}; blobs accuracy {acc:.3f} in {elapsed:.2f} s")
    assert ok


def test_07_embedding_barbell(report):
    net, left, right = barbell(6)
    t0 = time.perf_counter()
    emb = embed_network(net)
    elapsed = time.perf_counter() - t0
    X = emb.matrix(left + right)
    X = X / np.linalg.norm(X, axis=1, keepdims=True)
    S = X @ X.T
    iu = np.triu_indices(6, 1)
    intra = np.r_[S[:6, :6][iu], S[6:, 6:][iu]].mean()
    inter = S[:6, 6:].mean()
    ok = intra - inter >= 0.1 and elapsed < 30
    report(7, ok, f"intra {intra:.3f} - inter {inter:.3f} = {intra - inter:.3f} in {elapsed:.1f} s")
    assert ok


def test_08_planted_benchmark(report):
    t0 = time.perf_counter()
    net, h, phi, _ = planted_benchmark(seed=0)
    subs, closed = _prepare(net, h, phi)
    engine_f1, hbn_f1, top_f1, root_f1 = {}, {}, {}, {}
    for sub in subs:
        feats = topological_features(sub.subgraph)
        emb = embed_network(sub.subgraph)
        run = train_subhierarchy(sub, feats, emb, closed, EngineConfig())
        base = evaluate_subhierarchy(sub, closed)
        for r in run.trained:
            engine_f1[r.cls] = f1(confusion(run.p_cumulative[r.cls], r.labels, r.threshold))
            if sub.parent[r.cls] == sub.root:
                top_f1[r.cls] = engine_f1[r.cls]
        for r in base.trained:
            hbn_f1[r.cls] = f1(confusion(base.p_cumulative[r.cls], r.labels, r.threshold))
        # the sub-hierarchy root holds on every candidate node, so its decision is exact
        root = run.result(sub.root)
        root_f1[sub.root] = f1(confusion(run.p_cumulative[sub.root], root.labels, 0.0))
    elapsed = time.perf_counter() - t0
    mean_e, mean_h = np.mean(list(engine_f1.values())), np.mean(list(hbn_f1.values()))
    beats = mean_e >= mean_h
    top_ok = min(top_f1.values()) >= 0.6 and min(root_f1.values()) >= 0.6
    fast = elapsed < 120
    ok = beats and top_ok and fast
    per_class = " ".join(f"{c}:{engine_f1[c]:.3f}/{hbn_f1[c]:.3f}" for c in sorted(engine_f1))
    report(8, ok,
           f"engine mean F1 {mean_e:.4f} vs HBN-style {mean_h:.4f} ({'>=' if beats else '<'}); "
           f"root F1 {min(root_f1.values()):.3f}, top trained classes min F1 {min(top_f1.values()):.3f} (>= 0.6: {top_ok}); "
           f"{elapsed:.1f} s (< 120: {fast}); per class engine/HBN {per_class}")
    assert top_ok and fast
    assert beats, f"engine mean F1 {mean_e:.4f} < HBN-style mean F1 {mean_h:.4f}"


@pytest.fixture(scope="module")
def two_runs(tmp_path_factory):
    cfg = os.path.join(data_dir("synthetic"), "config.ini")
    outs = []
    for name in ("first", "second"):
        out = tmp_path_factory.mktemp(name) / "out"
        assert main(["run", "-c", cfg, "-o", str(out), "--baseline", "hbn"]) == 0
        outs.append(out)
    return outs


def test_09_scale_and_timing(report, two_runs):
    h = random_dag(50_000, 100_000, seed=9)
    census = ClassCensus({c: 1 + (i % 7) for i, c in enumerate(h.classes)})
    t0 = time.perf_counter()
    tree = normalize(h, census)
    elapsed = time.perf_counter() - t0
    with open(two_runs[0] / "timing_report.tsv", newline="") as fh:
        rows = list(csv.DictReader(fh, delimiter="\t"))
    table_ok = bool(rows) and all(
        float(r["engine_seconds"]) > 0 and float(r["hbn_seconds"]) > 0 for r in rows
    )
    eng = sum(float(r["engine_seconds"]) for r in rows)
    hbn = sum(float(r["hbn_seconds"]) for r in rows)
    ok = elapsed < 1.0 and table_ok and len(tree.classes) == 50_000
    report(9, ok, f"normalize 100000 edges in {elapsed:.3f} s; timing table {len(rows)} rows; "
                  f"engine/HBN-style time ratio {eng / hbn:.1f} (reported only)")
    assert ok


def test_10_determinism(report, two_runs):
    a, b = two_runs
    skip = {"timing.json", "timing_report.tsv"}
    files = sorted(
        os.path.relpath(os.path.join(d, f), a)
        for d, _, fs in os.walk(a) for f in fs
        if f not in skip and "timing" not in os.path.relpath(d, a).split(os.sep)
    )
    differ = [f for f in files if (a / f).read_bytes() != (b / f).read_bytes()]
    key = [f for f in files if f in ("predictions.tsv", "baseline_predictions.tsv", "metrics.json")]
    ok = not differ and len(key) == 3
    report(10, ok, f"{len(files)} artifacts compared, {len(differ)} differ {differ[:3]}")
    assert ok

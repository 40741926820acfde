import numpy as np
import pytest

import oracles
from conftest import graph
from nodehmc import (
    AnnotationMap,
    EngineError,
    class_census,
    close_annotations,
    normalize,
    split_subhierarchies,
    topological_features,
)
from nodehmc.embed import EmbeddingMatrix, WalkConfig, EmbeddingConfig, embed_network
from nodehmc.engine import (
    GIVEN,
    SKIPPED,
    TRAINED,
    EngineConfig,
    PredictionRecord,
    cumulative_probabilities,
    decide_and_extend,
    plan_subhierarchy,
    predict_subhierarchy,
    read_predictions,
    train_subhierarchy,
    write_predictions,
)
from nodehmc.hierarchy import Hierarchy, SubHierarchy, TreeHierarchy
from nodehmc.learn import ClassifierConfig, HyperGrid
from nodehmc.metrics import optimum_threshold
from nodehmc.network import load_network
from nodehmc.synthetic import random_problem, sbm_records

FAST = EngineConfig(grid=HyperGrid((ClassifierConfig(epochs=20, learning_rate=0.1),)))
SMALL_EMB = (WalkConfig(walks_per_node=4, walk_length=20), EmbeddingConfig(dimension=16, epochs=1))


def _tree(parent):
    return TreeHierarchy(list(parent), parent)


def test_cumulative_base_case():
    out = cumulative_probabilities(_tree({"R": None}), {"R": np.array([0.8])})
    assert out["R"].tolist() == [0.8]


def test_cumulative_zero_root_kills_chain():
    t = _tree({"R": None, "A": "R", "B": "A"})
    out = cumulative_probabilities(t, {"R": np.array([0.0]), "A": np.array([0.9]), "B": np.array([1.0])})
    assert out["A"][0] == 0.0 and out["B"][0] == 0.0


def test_cumulative_path_product():
    t = _tree({"R": None, "A": "R", "B": "A"})
    out = cumulative_probabilities(t, {"R": np.array([0.9]), "A": np.array([0.5]), "B": np.array([0.4])})
    assert [out[c][0] for c in "RAB"] == pytest.approx([0.9, 0.45, 0.18])


def test_cumulative_missing_ancestor():
    t = _tree({"R": None, "A": "R"})
    with pytest.raises(EngineError, match="ancestor"):
        cumulative_probabilities(t, {"A": np.array([0.5])})


def test_threshold_examples():
    assert optimum_threshold([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0], return_f1=True) == (0.8, 1.0)
    t, f = optimum_threshold([0.3] * 5, [1, 0, 1, 0, 0], return_f1=True)
    assert t == 0.3 and f == pytest.approx(2 * 2 / (2 * 2 + 3))


def test_threshold_random_pairs_match_scan():
    rng = np.random.default_rng(50)
    for _ in range(50):
        n = int(rng.integers(2, 60))
        s = np.round(rng.random(n), int(rng.integers(1, 4))).tolist()
        y = (rng.random(n) < 0.4).tolist()
        if all(y) or not any(y):
            y[0] = not y[0]
        t, f = optimum_threshold(s, y, return_f1=True)
        ts, fs = oracles.f1_scan(s, y)
        assert t == ts and abs(f - fs) < 1e-12


def _chain_sub(nodes=("a", "b", "c")):
    net = graph(list(zip(nodes, nodes[1:])))
    return SubHierarchy("R", ("R", "A", "B"), {"R": None, "A": "R", "B": "A"}, frozenset("RAB"), net)


def test_conjunction_rule():
    sub = _chain_sub()
    p = {"R": np.ones(3), "A": np.array([0.9, 0.2, 0.9]), "B": np.array([0.8, 0.2, 0.1])}
    closed = AnnotationMap({v: {"R"} for v in "abc"}, "RAB")
    # threshold of B sits below its parent's, so node b clears B's bar but not A's
    ext, recs = decide_and_extend(sub, p, {"A": 0.5, "B": 0.15}, closed)
    dec = {(r.node, r.cls): r.decision for r in recs}
    assert dec[("b", "A")] == 0 and dec[("b", "B")] == 0
    assert dec[("a", "B")] == 1 and dec[("c", "B")] == 0
    assert ext["a"] == {"R", "A", "B"} and ext["b"] == {"R"} and ext["c"] == {"R", "A"}


def test_all_thresholds_zero():
    sub = _chain_sub()
    p = {"R": np.ones(3), "A": np.array([0.1, 0.0, 0.3]), "B": np.array([0.0, 0.0, 0.2])}
    closed = AnnotationMap({v: {"R"} for v in "abc"}, "RAB")
    ext, recs = decide_and_extend(sub, p, {"A": 0.0, "B": 0.0}, closed)
    assert all(r.decision == 1 for r in recs)
    assert all(ext[v] == {"R", "A", "B"} for v in "abc")


def test_extension_keeps_existing_annotations():
    sub = _chain_sub()
    p = {"R": np.ones(3), "A": np.zeros(3), "B": np.zeros(3)}
    closed = AnnotationMap({"a": {"R", "A", "B"}, "b": {"R"}, "c": {"R"}}, "RAB")
    ext, _ = decide_and_extend(sub, p, {"A": 0.5, "B": 0.5}, closed)
    assert ext["a"] == {"R", "A", "B"}


def test_prediction_record_io(tmp_path):
    recs = [PredictionRecord("a", "A", 0.25, 0.125, 0.1, 1), PredictionRecord("b", "A", 0.0, 0.0, 0.1, 0)]
    p = tmp_path / "p.tsv"
    write_predictions(recs, str(p), model="engine")
    assert p.read_text().splitlines()[0].endswith("\tmodel")
    assert read_predictions(str(p)) == recs


def _prepared(seed, n_nodes=108, depth=3, branching=2):
    net, h, phi = random_problem(seed=seed, n_nodes=n_nodes, depth=depth, branching=branching)
    closed = close_annotations(phi, h)
    tree = normalize(h, class_census(h, closed))
    return split_subhierarchies(tree, closed, net), closed


def _engine(sub, closed, cfg=FAST):
    feats = topological_features(sub.subgraph)
    emb = embed_network(sub.subgraph, *SMALL_EMB)
    return train_subhierarchy(sub, feats, emb, closed, cfg)


def _violations(sub, run, ext):
    bad = 0
    for c, vals in run.p_cumulative.items():
        p = sub.parent[c]
        if p is not None:
            bad += int(np.sum(vals > run.p_cumulative[p]))
    for v in sub.subgraph.nodes:
        for c in ext[v]:
            p = sub.parent.get(c)
            if c in sub.parent and p is not None and p not in ext[v]:
                bad += 1
    return bad


def test_single_root_target_gives_one_result():
    nodes = [f"n{i}" for i in range(8)]
    net = graph(list(zip(nodes, nodes[1:])))
    sub = SubHierarchy("T", ("T",), {"T": None}, frozenset({"T"}), net)
    closed = AnnotationMap({v: {"T"} for v in nodes}, ["T"])
    feats = topological_features(net)
    emb = EmbeddingMatrix(net.nodes, np.zeros((8, 2)))
    run = train_subhierarchy(sub, feats, emb, closed, FAST)
    assert len(run) == 1 and run.results[0].status == GIVEN


def test_structural_root_feeds_ones():
    nodes = [f"n{i}" for i in range(20)]
    net = graph(list(zip(nodes, nodes[1:])))
    sub = SubHierarchy("S", ("S", "C"), {"S": None, "C": "S"}, frozenset({"C"}), net)
    ann = {v: ({"S", "C"} if i % 2 else {"S"}) for i, v in enumerate(nodes)}
    closed = AnnotationMap(ann, ["S", "C"])
    run = train_subhierarchy(sub, topological_features(net), EmbeddingMatrix(net.nodes, np.zeros((20, 2))), closed, FAST)
    assert np.all(run.p_cumulative["S"] == 1.0)
    r = run.result("C")
    assert r.status == TRAINED and r.column_names[-1] == "parent_prediction"


def test_skipped_class_skips_subtree():
    nodes = [f"n{i}" for i in range(20)]
    net = graph(list(zip(nodes, nodes[1:])))
    sub = SubHierarchy("S", ("S", "C", "D"), {"S": None, "C": "S", "D": "C"}, frozenset("SCD"), net)
    ann = {v: ({"S", "C", "D"} if i < 3 else {"S"}) for i, v in enumerate(nodes)}
    plan = plan_subhierarchy(sub, AnnotationMap(ann, "SCD"))
    assert plan["S"][0] == GIVEN and plan["C"][0] == SKIPPED and plan["D"][0] == SKIPPED
    assert "ancestor" in plan["D"][1]


def _ten_class_problem():
    # T -> {X, Y, Z} -> two leaves each: ten classes over six 18-node blocks
    leaves = ["X1", "X2", "Y1", "Y2", "Z1", "Z2"]
    edges = [("ROOT", "T")] + [("T", g) for g in "XYZ"] + [(leaf[0], leaf) for leaf in leaves]
    h = Hierarchy(edges=edges)
    P = np.full((6, 6), 0.01) + np.eye(6) * 0.25
    records, names, block = sbm_records([18] * 6, P, seed=4)
    net = load_network(records, nodes=names)
    rng = np.random.default_rng(4)
    phi = {v: {leaves[b] if rng.random() > 0.1 else leaves[rng.integers(6)]} for v, b in zip(names, block)}
    closed = close_annotations(phi, h)
    tree = normalize(h, class_census(h, closed))
    return split_subhierarchies(tree, closed, net), closed


def test_ten_class_subhierarchy_end_to_end():
    (sub,), closed = _ten_class_problem()
    assert len(sub.classes) == 10 and len(sub.subgraph) == 108
    run = _engine(sub, closed)
    ext, recs = predict_subhierarchy(run, closed)
    assert len(run.trained) == 9
    assert _violations(sub, run, ext) == 0
    assert len(recs) == len(run.trained) * len(sub.subgraph)


def test_planted_chain_has_no_violations():
    subs, closed = _prepared(seed=1, n_nodes=120, depth=3)
    for sub in subs:
        run = _engine(sub, closed)
        ext, _ = predict_subhierarchy(run, closed)
        assert _violations(sub, run, ext) == 0
        for r in run.trained:
            assert 0.0 <= r.threshold <= 1.0


def test_engine_is_deterministic():
    subs, closed = _prepared(seed=2, n_nodes=100, depth=2)
    a, b = _engine(subs[0], closed), _engine(subs[0], closed)
    for c in a.p_cumulative:
        assert np.array_equal(a.p_cumulative[c], b.p_cumulative[c])
    assert a.thresholds == b.thresholds


def test_empty_targets_rejected():
    net = graph([("a", "b")])
    sub = SubHierarchy("S", ("S",), {"S": None}, frozenset(), net)
    with pytest.raises(EngineError):
        train_subhierarchy(sub, None, None, AnnotationMap({}, ["S"]), FAST)


def test_hierarchy_from_normalized_dag_runs():
    # multi-parent input: the engine sees only the normalized tree
    h = Hierarchy(edges=[("ROOT", "T"), ("T", "X"), ("T", "Y"), ("X", "Z"), ("Y", "Z")])
    nodes = [f"g{i}" for i in range(40)]
    phi = {v: ({"Z"} if i < 10 else {"X"} if i < 22 else {"Y"}) for i, v in enumerate(nodes)}
    closed = close_annotations(phi, h)
    tree = normalize(h, class_census(h, closed))
    net = graph([(nodes[i], nodes[(i + 1) % 40]) for i in range(40)] + [(nodes[i], nodes[i + 5]) for i in range(35)])
    (sub,) = split_subhierarchies(tree, closed, net)
    run = _engine(sub, closed)
    ext, _ = predict_subhierarchy(run, closed)
    assert _violations(sub, run, ext) == 0
    assert tree.parent["Z"] == "X"

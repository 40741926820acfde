"""Train the top-down engine and the neighborhood baseline on a planted benchmark.

A 300-node block model carries a three-level hierarchy: R over A and B, each
with two leaves matching one block. Both models are scored out of fold on the
same splits, and each class is thresholded at its best F1.
"""
import time

from nodehmc import class_census, close_annotations, normalize, split_subhierarchies, topological_features
from nodehmc.embed import embed_network
from nodehmc.engine import EngineConfig, predict_subhierarchy, train_subhierarchy
from nodehmc.hbn import evaluate_subhierarchy
from nodehmc.metrics import average_precision, confusion, f1
from nodehmc.synthetic import planted_benchmark

net, h, phi, _ = planted_benchmark(seed=0)
closed = close_annotations(phi, h)
tree = normalize(h, class_census(h, closed))
subs = split_subhierarchies(tree, closed, net)

print(f"{net}; sub-hierarchies: " + ", ".join(f"{s.root} ({len(s.classes)} classes, {len(s.subgraph)} nodes)" for s in subs))
print(f"{'class':6} {'engine F1':>10} {'HBN F1':>8} {'engine AP':>10} {'HBN AP':>8}")
for sub in subs:
    t0 = time.perf_counter()
    run = train_subhierarchy(sub, topological_features(sub.subgraph), embed_network(sub.subgraph), closed, EngineConfig())
    t_engine = time.perf_counter() - t0
    t0 = time.perf_counter()
    base = evaluate_subhierarchy(sub, closed)
    t_base = time.perf_counter() - t0
    for r, b in zip(run.trained, base.trained):
        fe = f1(confusion(run.p_cumulative[r.cls], r.labels, r.threshold))
        fb = f1(confusion(base.p_cumulative[b.cls], b.labels, b.threshold))
        ae = average_precision(run.p_cumulative[r.cls], r.labels)
        ab = average_precision(base.p_cumulative[b.cls], b.labels)
        print(f"{r.cls:6} {fe:10.3f} {fb:8.3f} {ae:10.3f} {ab:8.3f}")
    extended, _ = predict_subhierarchy(run, closed)
    added = sum(len(extended[v] - closed[v]) for v in sub.subgraph.nodes)
    print(f"  {sub.root}: engine {t_engine:.1f} s, baseline {t_base:.3f} s, {added} new annotations")

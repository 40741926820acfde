"""Turn a small class DAG into a tree and show which edge goes.

Class E sits under both B and C. After closing the annotations upward,
B covers 12 nodes and C covers 6, so E's 4 nodes make up a third of B but
two thirds of C. The edge from the parent with the larger ratio is kept.
"""
from nodehmc import class_census, close_annotations, edge_weight, normalize
from nodehmc.synthetic import diamond_example

h, phi = diamond_example()
closed = close_annotations(phi, h)
census = class_census(h, closed)

print("annotated nodes per class after closure:")
for c in h.classes:
    print(f"  {c}: {census.annotated_count[c]}")

for parent in h.parents["E"]:
    print(f"w({parent}, E) = {edge_weight(census, parent, 'E')}")

tree = normalize(h, census)
print("removed:", ", ".join(f"{p}->{c}" for p, c in tree.removed_edges))
print("tree:", ", ".join(f"{tree.parent[c]}->{c}" for c in tree.topological_order() if tree.parent[c]))

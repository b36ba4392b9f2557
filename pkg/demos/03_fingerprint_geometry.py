"""Embedding trees in the unit cube and comparing paths by fingerprint.

Every node gets the centroid of a recursively subdivided rectangle
(pick-one children split x, joint-attribute children split y; odd groups
skip the middle slot so no child shadows its parent).  Binning the square
at resolution K turns any node set into a fingerprint; at the minimum
injective resolution K*, fingerprints identify paths exactly, and their
Jaccard overlap is a true similarity (1 - J is a metric).
"""

from graft import (
    MethodTuple,
    build_substrate,
    fingerprint,
    jaccard,
    layout,
    method_path_nodes,
    min_injective_k,
)
from graft.fixtures import morning_graph

substrate = build_substrate(morning_graph())
embedding = layout(substrate.tree)

print("positions (x, y, z = depth/max_depth):")
for node in ("morning", "breakfast", "breakfast_yes", "transport_bike"):
    x, y, z = embedding.position[node]
    print(f"  {node:<15} ({x:.4f}, {y:.4f}, {z:.4f})")

k_star = min_injective_k(embedding)
print(f"\nminimum injective resolution K* = {k_star}")

# three methods: m1/m3 share transport and style, m2 differs everywhere
def method(breakfast, style, helmet, transport):
    return MethodTuple.from_picks(
        {
            "breakfast": f"breakfast_{breakfast}",
            "clothes": "clothes",
            "style": f"style_{style}",
            "helmet": f"helmet_{helmet}",
            "transport": f"transport_{transport}",
        }
    )

m1 = method("yes", "casual", "yes", "bike")
m2 = method("no", "formal", "no", "car")
m3 = method("yes", "casual", "yes", "car")

fps = {
    name: fingerprint(embedding, method_path_nodes(substrate, m), k_star)
    for name, m in [("m1", m1), ("m2", m2), ("m3", m3)]
}
print(f"\nfingerprints at K*: {[(n, len(f.cells)) for n, f in fps.items()]}")
print("J(m1, m2) =", jaccard(fps["m1"], fps["m2"]))
print("J(m1, m3) =", jaccard(fps["m1"], fps["m3"]))
assert jaccard(fps["m1"], fps["m3"]) > jaccard(fps["m1"], fps["m2"])
print("m1 reads closer to m3 than to m2, as it should")

"""From a knowledge DAG to a compiled substrate.

The morning-routine example: three attributes hang off the root (breakfast,
clothes, transport), clothes bundles style and helmet, every decision is
binary, and one cross-rule pins the helmet to yes whenever the bike is
picked.  Flattening the joint policy would cost 16 entries; the factored
substrate stores 8 row entries plus the one rule.
"""

from graft import build_substrate, validate_graph
from graft.fixtures import morning_graph

graph = morning_graph()
print(f"graph: {len(graph.nodes)} nodes, {len(graph.edges)} edges, {len(graph.rules)} rule(s)")

# validation reports violations instead of raising; a clean report is empty
report = validate_graph(graph)
print(f"violations: {len(report.violations)}")

substrate = build_substrate(graph)

print("\nchains (level, alphabet):")
for cid in substrate.chain_order:
    chain = substrate.chains.chains[cid]
    alphabet = ", ".join(chain.alphabet) if chain.alphabet else "(pass-through)"
    print(f"  level {substrate.levels[cid]}  {cid:<10} {alphabet}")

# the cross-rule turned into one dependency edge, and nesting into two more
print("\nrule edges:   ", sorted(substrate.dep.rule_edges))
print("nesting edges:", sorted(substrate.dep.nesting_edges))

# helmet sits one level above transport: its rule trigger must resolve first
assert substrate.levels["helmet"] == substrate.levels["transport"] + 1

print(f"\nflat joint size:    {substrate.joint_size}")
print(f"factored footprint: {substrate.footprint} (rows {substrate.footprint - 1} + rules 1)")

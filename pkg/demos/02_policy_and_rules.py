"""The factored policy: rows, rule operators, kernels, and sampling.

Policy state is one probability row per internal pick-one node.  Rules edit
chain distributions at sample time: zero-out removes a slice and
renormalises the survivors, force confines support to a slice.  The two are
duals under set complement and commute on a chain, so firing order never
matters.
"""

from graft import (
    MethodTuple,
    ProbabilityRow,
    build_substrate,
    chain_kernel,
    enumerate_support,
    method_probability,
    op_force,
    op_zero,
    sample_method,
    uniform_rows,
)
from graft.fixtures import morning_graph

substrate = build_substrate(morning_graph())
rows = uniform_rows(substrate)

# -- the support operators on a standalone row --------------------------------

row = ProbabilityRow(options=("adam", "lbfgs", "broyden"), mass=(0.5, 0.3, 0.2))
print("zero-out {broyden}:", op_zero(row, {"broyden"}).as_mapping())
print("force {adam,lbfgs}:", op_force(row, {"adam", "lbfgs"}).as_mapping())
# dual forms land on identical floats
assert op_force(row, {"adam", "lbfgs"}).mass == op_zero(row, {"broyden"}).mass

# -- kernels react to upstream picks -------------------------------------------

for transport in ("transport_bike", "transport_car"):
    ctx = {"breakfast": "breakfast_yes", "clothes": "clothes", "transport": transport}
    kernel = chain_kernel(substrate, rows, "helmet", ctx)
    print(f"helmet kernel given {transport}: {kernel}")

# -- joint probabilities factor over chains ------------------------------------

tuple_car = MethodTuple.from_picks(
    {
        "breakfast": "breakfast_yes",
        "clothes": "clothes",
        "style": "style_casual",
        "helmet": "helmet_no",
        "transport": "transport_car",
    }
)
print("\nP(car, no helmet) =", method_probability(substrate, rows, tuple_car))
tuple_bike = tuple_car.with_value("transport", "transport_bike")
print("P(bike, no helmet) =", method_probability(substrate, rows, tuple_bike))

# the whole support, exactly: 16 structural tuples, rule-violating ones at 0
support = enumerate_support(substrate, rows)
positive = [(m, p) for m, p in support if p > 0.0]
print(f"\nsupport: {len(support)} tuples, {len(positive)} with positive mass")
print("total mass:", sum(p for _, p in support))

# -- seeded sampling ------------------------------------------------------------

draw = sample_method(substrate, rows, seed=2024)
print("\nseeded draw:", draw.picks)
assert draw == sample_method(substrate, rows, seed=2024)  # reproducible

# sampling never violates a fired rule
for seed in range(2000):
    m = sample_method(substrate, rows, seed)
    if m.picks["transport"] == "transport_bike":
        assert m.picks["helmet"] == "helmet_yes"
print("2000 draws, zero rule violations")

"""Rule operators, per-chain kernels, the factored policy, and sampling.

Policy state is one probability row per internal s-node, shared across all
parent contexts; a chain's prior over its alphabet is the path product of
those rows.  Cross-rules edit that prior at sample time through the two
support operators (zero-out and force), which preserve survivor ratios,
commute on the same chain, and are duals under set complement.

Every chain, including a pass-through chain whose root carries no
s-decision, is a variable of the factored policy: a decision chain takes an
alphabet member or the inactive marker (None), a pass-through chain takes
its root id as a presence marker or None.  A chain is active exactly when
its enclosing chain resolved to the tree parent of the chain's root, so
activity reads only the dependency-graph parents.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Optional

import numpy as np

from .build import Substrate
from .errors import EnumerationCapError, RuleSupportError, SupportExhaustedError, VersionMismatchError

MASS_TOLERANCE = 1e-12

# Inactive marker for chains closed by structural nesting (JSON: null).
INACTIVE = None


@dataclass(frozen=True)
class ProbabilityRow:
    """A categorical distribution over a fixed option list."""

    options: tuple[str, ...]
    mass: tuple[float, ...]

    def __post_init__(self):
        if len(self.options) != len(self.mass):
            raise ValueError("options and mass differ in length")
        if any(m < 0.0 for m in self.mass):
            raise ValueError("negative probability mass")
        if abs(sum(self.mass) - 1.0) > MASS_TOLERANCE:
            raise ValueError(f"mass sums to {sum(self.mass)!r}, not 1")

    def probability_of(self, option: str) -> float:
        return self.mass[self.options.index(option)]

    def as_mapping(self) -> dict[str, float]:
        return dict(zip(self.options, self.mass))


@dataclass
class PolicyRows:
    """One row per internal s-node of a tree, keyed by node id."""

    rows: dict[str, ProbabilityRow]
    tree_version: str


@dataclass(frozen=True)
class MethodTuple:
    """One value per chain: alphabet member, presence marker, or None."""

    items: tuple[tuple[str, Optional[str]], ...]  # sorted by chain id

    @classmethod
    def from_picks(cls, picks: Mapping[str, Optional[str]]) -> "MethodTuple":
        return cls(items=tuple(sorted(picks.items())))

    @property
    def picks(self) -> dict[str, Optional[str]]:
        return dict(self.items)

    def value(self, chain_id: str) -> Optional[str]:
        return self.picks[chain_id]

    def with_value(self, chain_id: str, value: Optional[str]) -> "MethodTuple":
        picks = self.picks
        picks[chain_id] = value
        return MethodTuple.from_picks(picks)


def internal_s_nodes(substrate: Substrate) -> tuple[str, ...]:
    return tuple(sorted(n for n in substrate.tree.nodes if substrate.tree.s_children(n)))


def uniform_rows(substrate: Substrate) -> PolicyRows:
    rows = {}
    for n in internal_s_nodes(substrate):
        kids = substrate.tree.s_children(n)
        rows[n] = ProbabilityRow(options=kids, mass=tuple(1.0 / len(kids) for _ in kids))
    return PolicyRows(rows=rows, tree_version=substrate.tree_version)


def _renormalize(row: ProbabilityRow, keep: frozenset[str], offender, hint=None) -> ProbabilityRow:
    # Summing the survivors directly (not 1 - dropped mass) keeps the two
    # operators bitwise dual under set complement.
    denom = sum(m for o, m in zip(row.options, row.mass) if o in keep)
    if denom <= 0.0:
        raise RuleSupportError("operator left empty support", offender=offender, rule_hint=hint)
    return ProbabilityRow(
        options=row.options,
        mass=tuple(m / denom if o in keep else 0.0 for o, m in zip(row.options, row.mass)),
    )


def op_zero(row: ProbabilityRow, target: Iterable[str], *, rule_hint: str | None = None) -> ProbabilityRow:
    """Zero the target mass and renormalise over the survivors."""
    target = frozenset(target)
    if not target & frozenset(row.options):
        return row
    survivors = frozenset(row.options) - target
    if not survivors:
        raise RuleSupportError("zero-out covers the whole support", offender=(row, target), rule_hint=rule_hint)
    return _renormalize(row, survivors, offender=(row, target), hint=rule_hint)


def op_force(row: ProbabilityRow, target: Iterable[str], *, rule_hint: str | None = None) -> ProbabilityRow:
    """Restrict support to the target and renormalise there."""
    target = frozenset(target)
    keep = target & frozenset(row.options)
    if keep == frozenset(row.options):
        return row
    if not keep:
        raise RuleSupportError("force target carries no support", offender=(row, target), rule_hint=rule_hint)
    return _renormalize(row, keep, offender=(row, target), hint=rule_hint)


_OPERATORS = {"zero_out": op_zero, "force": op_force}


def chain_prior(substrate: Substrate, rows: PolicyRows, chain_id: str) -> ProbabilityRow:
    """Path product of the rows along a decision chain's interior s-nodes."""
    chain = substrate.chains.chains[chain_id]
    if not chain.is_decision:
        raise ValueError(f"chain {chain_id} carries no decision")
    probs: dict[str, float] = {}

    def walk(node: str, acc: float) -> None:
        kids = substrate.tree.s_children(node)
        if not kids:
            probs[node] = acc
            return
        row = rows.rows[node]
        for child in kids:
            walk(child, acc * row.probability_of(child))

    walk(chain.root, 1.0)
    return ProbabilityRow(options=chain.alphabet, mass=tuple(probs[a] for a in chain.alphabet))


def fired_rules(substrate: Substrate, chain_id: str, resolved: Mapping[str, Optional[str]]):
    return [
        r for r in substrate.rules if r.target_chain == chain_id and r.fired_by(resolved)
    ]


def _check_lower_levels_resolved(substrate: Substrate, chain_id: str, resolved) -> None:
    lvl = substrate.levels[chain_id]
    for cid in substrate.chain_order:
        if substrate.levels[cid] < lvl and cid not in resolved:
            raise ValueError(f"chain {cid} (level {substrate.levels[cid]}) unresolved below {chain_id}")


def edited_chain_distribution(
    substrate: Substrate, rows: PolicyRows, chain_id: str, resolved: Mapping[str, Optional[str]]
) -> ProbabilityRow:
    """The chain prior after composing every rule whose trigger is met.

    Application order is rule-list order; composition commutes on the valid
    region so the order is immaterial.
    """
    _check_lower_levels_resolved(substrate, chain_id, resolved)
    dist = chain_prior(substrate, rows, chain_id)
    for rule in fired_rules(substrate, chain_id, resolved):
        dist = _OPERATORS[rule.effect](dist, rule.target_slice, rule_hint=rule.hint)
    return dist


def chain_active(substrate: Substrate, chain_id: str, resolved: Mapping[str, Optional[str]]) -> bool:
    gate = substrate.gate.get(chain_id)
    if gate is None:
        return True
    gate_chain, required = gate
    return resolved.get(gate_chain) == required


def chain_kernel(
    substrate: Substrate, rows: PolicyRows, chain_id: str, resolved: Mapping[str, Optional[str]]
) -> dict[Optional[str], float]:
    """Kernel over the augmented alphabet: values plus the inactive marker."""
    domain = substrate.chain_value_domain(chain_id)
    if not chain_active(substrate, chain_id, resolved):
        kernel: dict[Optional[str], float] = {v: 0.0 for v in domain}
        kernel[INACTIVE] = 1.0
        return kernel
    chain = substrate.chains.chains[chain_id]
    if chain.is_decision:
        dist = edited_chain_distribution(substrate, rows, chain_id, resolved)
        kernel = dict(zip(dist.options, dist.mass))
    else:
        kernel = {chain.root: 1.0}
    kernel[INACTIVE] = 0.0
    return kernel


def _validate_tuple(substrate: Substrate, m: MethodTuple) -> None:
    picks = m.picks
    expected = set(substrate.chain_order)
    if set(picks) != expected:
        missing = sorted(expected - set(picks))
        extra = sorted(set(picks) - expected)
        raise ValueError(f"method tuple malformed (missing {missing}, unknown {extra})")
    for cid, value in picks.items():
        if value is not None and value not in substrate.chain_value_domain(cid):
            raise ValueError(f"value {value!r} is not in the domain of chain {cid}")


def method_probability(substrate: Substrate, rows: PolicyRows, m: MethodTuple) -> float:
    """Product of chain kernels in level order; 0 for inadmissible tuples."""
    _check_rows_version(substrate, rows)
    _validate_tuple(substrate, m)
    picks = m.picks
    prob = 1.0
    for cid in substrate.chain_order:
        kernel = chain_kernel(substrate, rows, cid, picks)
        factor = kernel[picks[cid]]
        if factor == 0.0:
            return 0.0
        prob *= factor
    return prob


def method_path_nodes(substrate: Substrate, m: MethodTuple) -> frozenset[str]:
    """Union of root-to-value paths over the tuple's active chains."""
    nodes: set[str] = set()
    for cid, value in m.items:
        if value is None:
            continue
        nodes.update(substrate.tree.path_from_root(value))
    return frozenset(nodes)


def _check_rows_version(substrate: Substrate, rows: PolicyRows) -> None:
    if rows.tree_version != substrate.tree_version:
        raise VersionMismatchError(
            f"rows built for tree {rows.tree_version}, substrate carries {substrate.tree_version}"
        )


def enumerate_support(
    substrate: Substrate, rows: PolicyRows, cap: int = 10**6
) -> list[tuple[MethodTuple, float]]:
    """All structurally admissible tuples with exact kernel-product mass.

    Tuples zeroed by a fired rule are listed with probability 0; the
    activity-inconsistent remainder of the Cartesian product is not.
    """
    _check_rows_version(substrate, rows)
    if substrate.joint_size > cap:
        raise EnumerationCapError(f"joint size {substrate.joint_size} exceeds cap {cap}")

    order = substrate.chain_order
    out: list[tuple[MethodTuple, float]] = []

    def recurse(idx: int, resolved: dict[str, Optional[str]], acc: float) -> None:
        if idx == len(order):
            out.append((MethodTuple.from_picks(resolved), acc))
            return
        cid = order[idx]
        if not chain_active(substrate, cid, resolved):
            resolved[cid] = INACTIVE
            recurse(idx + 1, resolved, acc)
        else:
            chain = substrate.chains.chains[cid]
            if chain.is_decision:
                dist = edited_chain_distribution(substrate, rows, cid, resolved)
                for option, mass in zip(dist.options, dist.mass):
                    resolved[cid] = option
                    recurse(idx + 1, resolved, acc * mass)
            else:
                resolved[cid] = chain.root
                recurse(idx + 1, resolved, acc)
        del resolved[cid]

    recurse(0, {}, 1.0)
    return out


def _draw(rng: np.random.Generator, options: list[Optional[str]], weights: list[float]) -> Optional[str]:
    # explicit inverse-CDF draw so results do not depend on Generator.choice internals
    total = sum(weights)
    u = rng.random() * total
    acc = 0.0
    for option, w in zip(options, weights):
        acc += w
        if u < acc:
            return option
    return options[-1]


def _sample_once(substrate: Substrate, rows: PolicyRows, rng: np.random.Generator) -> MethodTuple:
    resolved: dict[str, Optional[str]] = {}
    for cid in substrate.chain_order:
        kernel = chain_kernel(substrate, rows, cid, resolved)
        positive = [(v, w) for v, w in kernel.items() if w > 0.0]
        if len(positive) == 1:
            resolved[cid] = positive[0][0]
        else:
            resolved[cid] = _draw(rng, [v for v, _ in positive], [w for _, w in positive])
    return MethodTuple.from_picks(resolved)


def sample_method(
    substrate: Substrate,
    rows: PolicyRows,
    seed: int,
    avoid: frozenset[MethodTuple] | set[MethodTuple] = frozenset(),
    *,
    max_retries: int = 64,
    cap: int = 10**6,
) -> MethodTuple:
    """Level-by-level draw (PCG64), rejection-resampling against ``avoid``.

    After ``max_retries`` collisions, falls back to enumerating the positive
    support minus the avoid set and drawing from its renormalisation; raises
    SupportExhaustedError when nothing remains.
    """
    _check_rows_version(substrate, rows)
    rng = np.random.Generator(np.random.PCG64(seed))
    for _ in range(max_retries if avoid else 1):
        m = _sample_once(substrate, rows, rng)
        if m not in avoid:
            return m
    remaining = [(m, p) for m, p in enumerate_support(substrate, rows, cap=cap) if p > 0.0 and m not in avoid]
    if not remaining:
        raise SupportExhaustedError("avoid set covers the whole positive support")
    return _draw(rng, [m for m, _ in remaining], [p for _, p in remaining])

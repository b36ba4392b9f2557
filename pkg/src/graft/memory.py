"""Long-term memory of solved instances and reward-calibrated prior compilation.

Each stored entry pairs a problem fingerprint with the method tuple that ran
on it, the run's observables, and a reward in [0, r_max].  At problem
arrival the nearest entries (Jaccard on the identity-preserving resolution)
vote on every policy row through a sigmoid-gated reward weight; the votes
are blended with the uniform prior, and rule operators are applied on top so
documented constraints cannot be undone by neighbour evidence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .build import Substrate, build_substrate
from .embedding import Fingerprint, jaccard
from .errors import GraftError, StalePathError, VersionMismatchError
from .graph import EdgeType, KnowledgeGraph, graph_to_document
from .policy import (
    MethodTuple,
    PolicyRows,
    ProbabilityRow,
    internal_s_nodes,
    op_force,
    op_zero,
    uniform_rows,
)
from .reduction import FactoredTree

R_MAX = 100.0


@dataclass
class MemoryEntry:
    problem_fp: Fingerprint
    method: MethodTuple
    method_path_nodes: frozenset[str]
    observables: dict[str, float]
    reward: float
    stale: bool = False

    def __post_init__(self):
        if not 0.0 <= self.reward <= R_MAX:
            raise ValueError(f"reward {self.reward} outside [0, {R_MAX}]")


@dataclass
class MemoryRepository:
    """Append-only store; entries are never deleted, only flagged stale."""

    problem_tree_version: str
    action_tree_version: str
    entries: list[MemoryEntry] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class PriorParams:
    n_neighbors: int = 3
    kappa: float = 7.0
    midpoint: float = 0.55  # sigmoid centre s0
    r_max: float = R_MAX


def record(repo: MemoryRepository, entry: MemoryEntry) -> MemoryRepository:
    """Append one entry after checking its fingerprint tags match the repo."""
    if entry.problem_fp.tree_tag != repo.problem_tree_version:
        raise VersionMismatchError(
            f"entry problem fingerprint tagged {entry.problem_fp.tree_tag}, "
            f"repository expects {repo.problem_tree_version}"
        )
    repo.entries.append(entry)
    return repo


def rank_neighbors(
    repo: MemoryRepository, p_new: Fingerprint, n: int
) -> list[tuple[MemoryEntry, float]]:
    """Top-n non-stale entries by similarity desc, reward desc, insertion order."""
    scored = []
    for i, entry in enumerate(repo.entries):
        if entry.stale:
            continue
        scored.append((jaccard(p_new, entry.problem_fp), entry.reward, i, entry))
    scored.sort(key=lambda t: (-t[0], -t[1], t[2]))
    return [(entry, sim) for sim, _, _, entry in scored[:n]]


def neighbor_weight(similarity: float, reward: float, params: PriorParams = PriorParams()) -> float:
    """Sigmoid-gated reward weight: sigma(similarity) * reward / r_max."""
    gate = 1.0 / (1.0 + math.exp(-params.kappa * (similarity - params.midpoint)))
    return gate * (reward / params.r_max)


def _uniform_row(tree: FactoredTree, node: str) -> ProbabilityRow:
    kids = tree.s_children(node)
    return ProbabilityRow(options=kids, mass=tuple(1.0 / len(kids) for _ in kids))


def _chosen_child(tree: FactoredTree, node: str, path: frozenset[str]) -> str | None:
    hits = [c for c in tree.s_children(node) if c in path]
    if len(hits) > 1:
        raise StalePathError(f"method path picks multiple children of {node}")
    return hits[0] if hits else None


def _check_path_current(entry: MemoryEntry, tree: FactoredTree) -> None:
    missing = [n for n in entry.method_path_nodes if n not in tree.depth]
    if missing:
        raise StalePathError(f"method path references removed nodes {sorted(missing)}; re-encode the entry")


def _vote(entry: MemoryEntry, tree: FactoredTree, node: str) -> str | None:
    """The child this entry's path picks at ``node``, or None off-path."""
    if node not in entry.method_path_nodes:
        return None
    return _chosen_child(tree, node, entry.method_path_nodes)


def partial_spec(entry: MemoryEntry, tree: FactoredTree) -> dict[str, ProbabilityRow]:
    """One neighbour's row votes: one-hot along its path, uniform elsewhere."""
    _check_path_current(entry, tree)
    spec: dict[str, ProbabilityRow] = {}
    for node in sorted(n for n in tree.depth if tree.s_children(n)):
        chosen = _vote(entry, tree, node)
        if chosen is None:
            spec[node] = _uniform_row(tree, node)
        else:
            kids = tree.s_children(node)
            spec[node] = ProbabilityRow(
                options=kids, mass=tuple(1.0 if c == chosen else 0.0 for c in kids)
            )
    return spec


def compile_prior(
    repo: MemoryRepository,
    p_new: Fingerprint,
    substrate: Substrate,
    params: PriorParams = PriorParams(),
) -> PolicyRows:
    """Blend neighbour votes with the uniform prior, then apply certain rules.

    Row-wise: M_data is the weight-averaged mix of one-hot votes (rows a
    neighbour visited) and uniform rows (rows it did not), with the exact
    fallback M_data = uniform when the total weight is zero.  The final row
    is W_bar * M_data + (1 - W_bar) * uniform with W_bar the clipped average
    confidence of the neighbours carrying positive weight.
    """
    if p_new.tree_tag != repo.problem_tree_version:
        raise VersionMismatchError("query fingerprint does not match the repository's problem tree")
    tree = substrate.tree
    base = uniform_rows(substrate)

    neighbors = rank_neighbors(repo, p_new, params.n_neighbors)
    weights = [neighbor_weight(sim, e.reward, params) for e, sim in neighbors]
    w_tot = sum(weights)
    n_eff = sum(1 for w in weights if w > 0.0)

    if w_tot == 0.0 or n_eff == 0:
        rows = dict(base.rows)  # exact fallback: the uniform prior, bitwise
    else:
        w_bar = min(1.0, max(0.0, w_tot / n_eff))
        for entry, _ in neighbors:
            _check_path_current(entry, tree)
        rows = {}
        for node in internal_s_nodes(substrate):
            mu = base.rows[node]
            votes = [_vote(e, tree, node) for e, _ in neighbors]
            if all(v is None for v in votes):
                rows[node] = mu  # the average collapses to the uniform row, bitwise
                continue
            data = [0.0] * len(mu.options)
            for w, vote in zip(weights, votes):
                if vote is None:
                    for i, u in enumerate(mu.mass):
                        data[i] += w * u
                else:
                    data[mu.options.index(vote)] += w
            data = [d / w_tot for d in data]
            blended = tuple(w_bar * d + (1.0 - w_bar) * u for d, u in zip(data, mu.mass))
            rows[node] = ProbabilityRow(options=mu.options, mass=blended)

    _apply_certain_rules(substrate, rows)
    return PolicyRows(rows=rows, tree_version=substrate.tree_version)


def _apply_certain_rules(substrate: Substrate, rows: dict[str, ProbabilityRow]) -> None:
    # Only rules whose triggers hold for every admissible tuple can be baked
    # into the rows; everything else bites at sample time through the edited
    # kernel.  The slice is pushed down to each interior row it constrains.
    for rule in substrate.rules:
        if not rule.certain:
            continue
        op = op_zero if rule.effect == "zero_out" else op_force
        chain = substrate.chains.chains[rule.target_chain]
        for node in chain.members:
            kids = substrate.tree.s_children(node)
            if not kids or node not in rows:
                continue
            allowed = {
                kid
                for kid in kids
                if any(substrate.tree.is_ancestor_or_self(kid, a) for a in rule.target_slice)
            }
            if rule.effect == "force":
                if allowed and allowed != set(kids):
                    rows[node] = op(rows[node], allowed, rule_hint=rule.hint)
            else:
                drop = {
                    kid
                    for kid in kids
                    if substrate.members_below(kid, rule.target_chain) <= rule.target_slice
                }
                # a fully-covered interior node is unreachable once its own
                # parent row drops it; leave such rows alone
                if drop and drop != set(kids):
                    rows[node] = op(rows[node], drop, rule_hint=rule.hint)


def grow_tree(
    substrate: Substrate,
    rows: PolicyRows,
    parent: str,
    new_child: str,
    hint: str | None = None,
    edge_kind: EdgeType | None = None,
) -> tuple[Substrate, PolicyRows]:
    """Add a sibling option under ``parent``; the new child inherits the mean
    of its siblings' prior masses and the whole substrate is rebuilt.

    ``edge_kind`` defaults to the siblings' type; passing a mismatching kind
    is rejected by the rebuild's uniform-children validation.
    """
    g = substrate.graph
    if new_child in g.nodes:
        raise GraftError(f"node {new_child!r} already exists")
    siblings = [c for p, c, _ in g.edges if p == parent]
    if not siblings:
        raise GraftError(f"parent {parent!r} has no existing children to infer the edge type from")
    if edge_kind is None:
        edge_kind = next(t for p, _, t in g.edges if p == parent)

    doc_nodes = list(g.nodes) + [new_child]
    hints = dict(g.hints)
    if hint is not None:
        hints[new_child] = hint
    grown = KnowledgeGraph(
        root=g.root,
        nodes=tuple(doc_nodes),
        hints=hints,
        edges=g.edges + ((parent, new_child, edge_kind),),
        canonical_parent=dict(g.canonical_parent),
        rules=g.rules,
    )
    new_sub = build_substrate(grown)

    new_rows: dict[str, ProbabilityRow] = {}
    for node in internal_s_nodes(new_sub):
        kids = new_sub.tree.s_children(node)
        old = rows.rows.get(node)
        if old is not None and old.options == kids:
            new_rows[node] = old
        elif old is not None and node == parent and edge_kind is EdgeType.SUBDIVIDES_IN:
            mean = sum(old.mass) / len(old.mass)
            mass = {o: m for o, m in zip(old.options, old.mass)}
            mass[new_child] = mean
            total = sum(mass.values())
            new_rows[node] = ProbabilityRow(
                options=kids, mass=tuple(mass[k] / total for k in kids)
            )
        else:
            new_rows[node] = _uniform_row(new_sub.tree, node)
    return new_sub, PolicyRows(rows=new_rows, tree_version=new_sub.tree_version)


def remove_node(
    substrate: Substrate,
    rows: PolicyRows,
    node: str,
    repo: MemoryRepository | None = None,
) -> tuple[Substrate, PolicyRows]:
    """Remove a leaf option, redistributing its mass proportionally.

    Entries in ``repo`` whose method path references the node are flagged
    stale (never deleted).  Nodes referenced by a rule cannot be removed.
    """
    g = substrate.graph
    if node not in g.nodes:
        raise GraftError(f"unknown node {node!r}")
    if node == g.root:
        raise GraftError("cannot remove the root")
    if any(p == node for p, _, _ in g.edges):
        raise GraftError(f"{node!r} is not a leaf")
    for rule in g.rules:
        if node in rule.trigger or node in rule.target:
            raise GraftError(f"{node!r} is referenced by rule {rule.hint!r}")
    parent = substrate.tree.parent[node]
    siblings = [c for c in substrate.tree.children[parent] if c != node]
    if not siblings:
        raise GraftError(f"cannot remove the sole child of {parent!r}")

    shrunk = KnowledgeGraph(
        root=g.root,
        nodes=tuple(n for n in g.nodes if n != node),
        hints={k: v for k, v in g.hints.items() if k != node},
        edges=tuple(e for e in g.edges if e[1] != node),
        canonical_parent={k: v for k, v in g.canonical_parent.items() if k != node},
        rules=g.rules,
    )
    new_sub = build_substrate(shrunk)

    new_rows: dict[str, ProbabilityRow] = {}
    for n in internal_s_nodes(new_sub):
        kids = new_sub.tree.s_children(n)
        old = rows.rows.get(n)
        if old is not None and old.options == kids:
            new_rows[n] = old
        elif old is not None and n == parent:
            new_rows[n] = op_zero(old, {node})
            new_rows[n] = ProbabilityRow(
                options=kids, mass=tuple(new_rows[n].probability_of(k) for k in kids)
            )
        else:
            new_rows[n] = _uniform_row(new_sub.tree, n)

    if repo is not None:
        for entry in repo.entries:
            if node in entry.method_path_nodes:
                entry.stale = True

    return new_sub, PolicyRows(rows=new_rows, tree_version=new_sub.tree_version)

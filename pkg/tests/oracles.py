"""Independent oracles and random-instance generators for the test suite.

Everything here recomputes results from the substrate's raw data (tree,
chain index, raw rules, rows) with its own arithmetic and its own activity
and level definitions, so the library's kernel/probability path is checked
against a genuinely separate derivation.
"""

from __future__ import annotations

import itertools

import numpy as np

from graft import KnowledgeGraph, MethodTuple, Substrate, build_substrate, graph_from_document
from graft.policy import PolicyRows


# -- independent longest-path levels ------------------------------------------


def longest_path_levels(vertices, edges) -> dict[str, int]:
    """Recursive longest-path length per vertex (memoised, not a fix-point)."""
    incoming: dict[str, list[str]] = {v: [] for v in vertices}
    for a, b in edges:
        incoming[b].append(a)
    memo: dict[str, int] = {}

    def lp(v: str) -> int:
        if v not in memo:
            memo[v] = 0 if not incoming[v] else 1 + max(lp(a) for a in incoming[v])
        return memo[v]

    return {v: lp(v) for v in vertices}


# -- independent enumeration of the joint -------------------------------------


def _on_picked_path(substrate: Substrate, node: str, pick: str) -> bool:
    # node lies on the path from its chain root down to the picked terminal
    cur = pick
    while True:
        if cur == node:
            return True
        if cur == substrate.tree.root:
            return False
        cur = substrate.tree.parent[cur]


def _oracle_active(substrate: Substrate, chain_id: str, assignment: dict) -> bool:
    """Activity from first principles: every s-decision on the path from the
    global root to the chain root must have its on-path child selected."""
    tree = substrate.tree
    root = substrate.chains.chains[chain_id].root
    path = tree.path_from_root(root)
    for here, below in zip(path, path[1:]):
        if not tree.s_children(here):
            continue
        owner = substrate.chains.enclosing[below]
        pick = assignment.get(owner)
        if pick is None:
            return False
        if not _on_picked_path(substrate, below, pick):
            return False
    return True


def _oracle_chain_distribution(substrate, rows: PolicyRows, chain_id: str) -> dict[str, float]:
    """Path product of rows, recomputed without the library's chain_prior."""
    tree = substrate.tree
    chain = substrate.chains.chains[chain_id]
    out: dict[str, float] = {}
    for leaf in chain.alphabet:
        path = tree.path_from_root(leaf)
        start = path.index(chain.root)
        p = 1.0
        for here, below in zip(path[start:], path[start + 1 :]):
            row = rows.rows[here]
            p *= row.mass[row.options.index(below)]
        out[leaf] = p
    return out


def _oracle_levels(substrate: Substrate) -> dict[str, int]:
    edges = set()
    for child, parent in substrate.chains.nesting_parent.items():
        edges.add((parent, child))
    ci = substrate.chains
    for rule in substrate.graph.rules:
        target_chain = ci.enclosing[next(iter(rule.target))]
        for t in rule.trigger:
            tc = ci.enclosing[t]
            if tc != target_chain:
                edges.add((tc, target_chain))
    return longest_path_levels(list(ci.chains), edges)


def _oracle_edited(substrate: Substrate, rows, chain_id: str, assignment: dict) -> dict[str, float]:
    dist = _oracle_chain_distribution(substrate, rows, chain_id)
    levels = _oracle_levels(substrate)
    ci = substrate.chains
    for rule in substrate.graph.rules:
        target_chain = ci.enclosing[next(iter(rule.target))]
        if target_chain != chain_id:
            continue
        trigger_chains = {ci.enclosing[t] for t in rule.trigger}
        if any(tc == chain_id or levels[tc] >= levels[chain_id] for tc in trigger_chains):
            continue  # can never fire
        met = True
        for t in rule.trigger:
            pick = assignment.get(ci.enclosing[t])
            if pick is None or not _on_picked_path(substrate, t, pick):
                met = False
                break
        if not met:
            continue
        slice_members = {
            a
            for a in dist
            if any(substrate.tree.is_ancestor_or_self(g, a) for g in rule.target)
        }
        if rule.effect == "zero_out":
            keep = {a for a in dist if a not in slice_members}
        else:
            keep = {a for a in dist if a in slice_members}
        denom = sum(dist[a] for a in keep)
        assert denom > 0.0, "oracle hit empty support; generator should prevent this"
        dist = {a: (dist[a] / denom if a in keep else 0.0) for a in dist}
    return dist


def oracle_joint(substrate: Substrate, rows: PolicyRows) -> dict[MethodTuple, float]:
    """Every structurally admissible tuple with its probability.

    Enumerates the Cartesian product over decision chains, filters by the
    oracle's own activity logic, assigns pass-through chain markers, and
    multiplies per-chain edited distributions.
    """
    ci = substrate.chains
    decision = list(ci.decision_chain_ids)
    domains = [list(ci.chains[c].alphabet) + [None] for c in decision]
    out: dict[MethodTuple, float] = {}
    for combo in itertools.product(*domains):
        assignment = dict(zip(decision, combo))
        admissible = True
        for cid, value in assignment.items():
            active = _oracle_active(substrate, cid, assignment)
            if active != (value is not None):
                admissible = False
                break
        if not admissible:
            continue
        picks = dict(assignment)
        for cid, chain in ci.chains.items():
            if chain.is_decision:
                continue
            picks[cid] = chain.root if _oracle_active(substrate, cid, assignment) else None
        prob = 1.0
        for cid, value in assignment.items():
            if value is None:
                continue
            dist = _oracle_edited(substrate, rows, cid, assignment)
            prob *= dist[value]
        out[MethodTuple.from_picks(picks)] = prob
    return out


# -- random instances ----------------------------------------------------------


def random_substrate_document(seed: int) -> dict:
    """Random buildable graph: up to 5 decision chains (some nested, a few
    through pass-through group nodes, some with multi-level interiors), up to
    4 options each, up to 3 forward rules with distinct target chains.
    Triggers and targets occasionally name interior s-nodes rather than
    alphabet members."""
    rng = np.random.default_rng(seed)
    doc = {"root": "root", "nodes": [{"id": "root"}], "edges": [], "rules": []}
    chain_info: list[dict] = []  # creation order; rules point forward

    def new_chain(parent_node: str) -> None:
        idx = len(chain_info)
        head = f"ch{idx}"
        doc["nodes"].append({"id": head})
        doc["edges"].append({"parent": parent_node, "child": head, "type": "c"})
        n_opts = int(rng.integers(2, 5))
        options = []
        interior = []
        for j in range(n_opts):
            opt = f"ch{idx}_o{j}"
            doc["nodes"].append({"id": opt})
            doc["edges"].append({"parent": head, "child": opt, "type": "s"})
            options.append(opt)
        # sometimes deepen one option into a second s-level
        if n_opts < 4 and rng.random() < 0.35:
            deep = options[int(rng.integers(n_opts))]
            options.remove(deep)
            interior.append(deep)
            for j in range(2):
                opt = f"{deep}_s{j}"
                doc["nodes"].append({"id": opt})
                doc["edges"].append({"parent": deep, "child": opt, "type": "s"})
                options.append(opt)
        chain_info.append({"id": head, "alphabet": options, "interior": interior})

    n_top = int(rng.integers(2, 4))
    for _ in range(n_top):
        new_chain("root")
    # nest additional chains under existing alphabet members, sometimes through
    # a pass-through group node (c-children only, no decision of its own)
    while len(chain_info) < 5 and rng.random() < 0.5:
        host = chain_info[int(rng.integers(len(chain_info)))]
        anchor = host["alphabet"][int(rng.integers(len(host["alphabet"])))]
        if len(chain_info) <= 3 and rng.random() < 0.4:
            group = f"grp{len(chain_info)}"
            doc["nodes"].append({"id": group})
            doc["edges"].append({"parent": anchor, "child": group, "type": "c"})
            new_chain(group)
            new_chain(group)
        else:
            new_chain(anchor)

    def pick_slice(info, max_frac_full=True):
        # a value set over a chain: alphabet members, or an interior node
        # standing for the pair of leaves beneath it
        if info["interior"] and rng.random() < 0.3:
            return [info["interior"][0]]
        alphabet = info["alphabet"]
        k = int(rng.integers(1, len(alphabet)))
        return sorted(alphabet[int(i)] for i in rng.choice(len(alphabet), size=k, replace=False))

    n_rules = int(rng.integers(0, 4))
    targets_used: set[int] = set()
    for _ in range(n_rules):
        t_idx = int(rng.integers(1, len(chain_info)))
        if t_idx in targets_used:
            continue
        targets_used.add(t_idx)
        target = chain_info[t_idx]
        n_triggers = int(rng.integers(1, 3))
        trig_idxs = rng.choice(t_idx, size=min(n_triggers, t_idx), replace=False)
        trigger_nodes = []
        for i in sorted(int(x) for x in trig_idxs):
            source = chain_info[i]
            if source["interior"] and rng.random() < 0.25:
                trigger_nodes.append(source["interior"][0])
            else:
                trigger_nodes.append(source["alphabet"][int(rng.integers(len(source["alphabet"])))])
        slice_nodes = pick_slice(target)
        effect = "zero_out" if rng.random() < 0.5 else "force"
        if effect == "zero_out":
            # keep the slice a proper subset of the leaves so the build accepts it
            covered = set()
            for node in slice_nodes:
                covered.update(a for a in target["alphabet"] if a == node or a.startswith(node + "_"))
            if covered >= set(target["alphabet"]):
                effect = "force"
        doc["rules"].append(
            {
                "hint": f"rule targeting {target['id']}",
                "trigger": trigger_nodes,
                "target": slice_nodes,
                "effect": effect,
            }
        )
    return doc


def random_substrate(seed: int) -> Substrate:
    return build_substrate(graph_from_document(random_substrate_document(seed)))


def random_rows(substrate: Substrate, seed: int) -> PolicyRows:
    """Random strictly positive rows (so denominators never vanish)."""
    from graft.policy import ProbabilityRow, internal_s_nodes

    rng = np.random.default_rng(seed)
    rows = {}
    for node in internal_s_nodes(substrate):
        kids = substrate.tree.s_children(node)
        raw = rng.uniform(0.1, 1.0, size=len(kids))
        raw = raw / raw.sum()
        rows[node] = ProbabilityRow(options=kids, mass=tuple(float(x) for x in raw))
    return PolicyRows(rows=rows, tree_version=substrate.tree_version)


def random_tree_document(seed: int, max_depth: int = 7, max_nodes: int = 300) -> dict:
    """Random valid tree-shaped graph for the embedding suite.

    Edge type flips after at most two consecutive same-type levels, keeping
    per-axis splits coarse enough for the resolution search cap.
    """
    rng = np.random.default_rng(seed)
    doc = {"root": "n0", "nodes": [{"id": "n0"}], "edges": []}
    counter = [1]
    frontier = [("n0", 0, "", 0)]  # node, depth, last type, run length
    while frontier:
        node, depth, last, run = frontier.pop(0)
        if depth >= max_depth or counter[0] >= max_nodes:
            continue
        if depth > 0 and rng.random() < 0.25:
            continue  # leaf
        if run >= 2:
            kind = "c" if last == "s" else "s"
        else:
            kind = "s" if rng.random() < 0.5 else "c"
        new_run = run + 1 if kind == last else 1
        for _ in range(int(rng.integers(2, 5))):
            if counter[0] >= max_nodes:
                break
            child = f"n{counter[0]}"
            counter[0] += 1
            doc["nodes"].append({"id": child})
            doc["edges"].append({"parent": node, "child": child, "type": kind})
            frontier.append((child, depth + 1, kind, new_run))
    return doc

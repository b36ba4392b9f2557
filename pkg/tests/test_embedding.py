import itertools
from fractions import Fraction

import numpy as np
import pytest

from graft import (
    FingerprintError,
    Fingerprint,
    MemoryEntry,
    MemoryRepository,
    MethodTuple,
    ResolutionSearchError,
    bin_cell,
    bin_cells,
    build_substrate,
    fingerprint,
    jaccard,
    landscape_export,
    layout,
    method_path_nodes,
    min_injective_k,
    reduce_to_tree,
)
from graft.embedding import first_principal_coordinates, invert_cells
from graft.graph import graph_from_document

from oracles import random_tree_document


def tree_of(doc):
    return reduce_to_tree(graph_from_document(doc))


def s_chain_doc(n_children):
    nodes = [{"id": "root"}] + [{"id": f"kid{i}"} for i in range(n_children)]
    edges = [{"parent": "root", "child": f"kid{i}", "type": "s"} for i in range(n_children)]
    return {"root": "root", "nodes": nodes, "edges": edges}


class TestLayout:
    def test_single_node(self):
        e = layout(tree_of({"root": "only", "nodes": [{"id": "only"}]}))
        assert e.position["only"] == (0.5, 0.5, 0.0)
        assert e.max_depth == 0

    def test_two_s_children(self):
        e = layout(tree_of(s_chain_doc(2)))
        assert e.position["kid0"] == (0.25, 0.5, 1.0)
        assert e.position["kid1"] == (0.75, 0.5, 1.0)

    def test_three_s_children_skip_middle_slot(self):
        e = layout(tree_of(s_chain_doc(3)))
        xs = [e.position[f"kid{i}"][0] for i in range(3)]
        assert xs == [0.125, 0.375, 0.875]

    def test_c_children_split_y(self):
        doc = {
            "root": "root",
            "nodes": [{"id": "root"}, {"id": "a"}, {"id": "b"}],
            "edges": [
                {"parent": "root", "child": "a", "type": "c"},
                {"parent": "root", "child": "b", "type": "c"},
            ],
        }
        e = layout(tree_of(doc))
        assert e.position["a"] == (0.5, 0.25, 1.0)
        assert e.position["b"] == (0.5, 0.75, 1.0)


class TestBinning:
    def test_boundary_clamp(self):
        e = layout(tree_of(s_chain_doc(2)))
        object.__setattr__(e, "position", {**e.position, "edge": (1.0, 1.0, 1.0)})
        object.__setattr__(e, "depth", {**e.depth, "edge": 1})
        assert bin_cell(e, "edge", 32) == (31, 31, 1)

    def test_root_center_at_k2(self):
        e = layout(tree_of({"root": "r", "nodes": [{"id": "r"}]}))
        assert bin_cell(e, "r", 2) == (1, 1, 0)

    def test_k1_single_planar_bin(self):
        e = layout(tree_of(s_chain_doc(3)))
        cells = bin_cells(e, 1)
        assert {c[:2] for c in cells.values()} == {(0, 0)}
        assert len({c[2] for c in cells.values()}) == 2  # depth still separates layers


class TestMinInjectiveK:
    def test_single_node_k1(self):
        e = layout(tree_of({"root": "r", "nodes": [{"id": "r"}]}))
        assert min_injective_k(e) == 1

    def test_two_children_k2(self):
        e = layout(tree_of(s_chain_doc(2)))
        assert min_injective_k(e) == 2

    def test_cap_exceeded_raises(self):
        e = layout(tree_of(s_chain_doc(2)))
        with pytest.raises(ResolutionSearchError, match="separates"):
            min_injective_k(e, cap=1)

    def test_binning_injective_at_kstar(self):
        for seed in range(20):
            e = layout(tree_of(random_tree_document(seed)))
            k = min_injective_k(e)
            cells = bin_cells(e, k)
            assert len(set(cells.values())) == len(cells)


class TestFingerprints:
    def test_full_path_all_nodes_has_path_length(self, morning_substrate, morning_embedding):
        path = morning_substrate.tree.path_from_root("helmet_yes")
        k = min_injective_k(morning_embedding)
        fp = fingerprint(morning_embedding, path, k, keep="all")
        assert len(fp.cells) == len(path)

    def test_s_only_keep_of_c_path_errors(self, morning_substrate, morning_embedding):
        path = morning_substrate.tree.path_from_root("clothes")  # only c-edges
        with pytest.raises(FingerprintError, match="non-empty"):
            fingerprint(morning_embedding, path, 32)

    def test_morning_method_cells_hand_computed(self, morning_substrate, morning_embedding):
        m = MethodTuple.from_picks(
            {
                "breakfast": "breakfast_yes",
                "clothes": "clothes",
                "style": "style_casual",
                "helmet": "helmet_yes",
                "transport": "transport_bike",
            }
        )
        nodes = method_path_nodes(morning_substrate, m)
        fp = fingerprint(morning_embedding, nodes, 32)
        # hand-run of the layout: option leaves sit at
        #   breakfast_yes (0.75, 0.125, d2), transport_bike (0.25, 0.875, d2),
        #   style_casual (0.25, 0.4375, d3), helmet_yes (0.75, 0.3125, d3)
        assert fp.cells == {(24, 4, 2), (8, 28, 2), (8, 14, 3), (24, 10, 3)}

    def test_unknown_node_rejected(self, morning_embedding):
        with pytest.raises(FingerprintError, match="not in embedding"):
            fingerprint(morning_embedding, ["ghost"], 32)

    def test_self_similarity_one(self, morning_substrate, morning_embedding):
        fp = fingerprint(morning_embedding, morning_substrate.tree.path_from_root("helmet_yes"), 32)
        assert jaccard(fp, fp) == 1.0

    def test_disjoint_zero_and_third(self):
        a = Fingerprint(cells=frozenset({(0, 0, 1), (1, 1, 1)}), resolution=8, tree_tag="t", keep="s")
        b = Fingerprint(cells=frozenset({(2, 2, 1), (3, 3, 1)}), resolution=8, tree_tag="t", keep="s")
        assert jaccard(a, b) == 0.0
        c = Fingerprint(cells=frozenset({(0, 0, 1), (5, 5, 1)}), resolution=8, tree_tag="t", keep="s")
        assert jaccard(a, c) == pytest.approx(1 / 3)

    def test_identity_at_kstar_pulls_back_to_node_sets(self):
        # at the injective resolution, equal fingerprints mean equal kept sets
        rng = np.random.default_rng(23)
        t = tree_of(random_tree_document(7))
        e = layout(t)
        k = min_injective_k(e)
        s_nodes = [n for n in t.nodes if e.entered_by.get(n) == "s"]
        seen = {}
        for _ in range(200):
            size = int(rng.integers(1, min(6, len(s_nodes)) + 1))
            subset = frozenset(
                s_nodes[int(i)] for i in rng.choice(len(s_nodes), size=size, replace=False)
            )
            fp = fingerprint(e, subset, k)
            if fp.cells in seen:
                assert seen[fp.cells] == subset
            else:
                seen[fp.cells] = subset

    def test_mismatched_tags_rejected(self):
        a = Fingerprint(cells=frozenset({(0, 0, 0)}), resolution=8, tree_tag="t1", keep="s")
        b = Fingerprint(cells=frozenset({(0, 0, 0)}), resolution=8, tree_tag="t2", keep="s")
        with pytest.raises(FingerprintError):
            jaccard(a, b)
        c = Fingerprint(cells=frozenset({(0, 0, 0)}), resolution=16, tree_tag="t1", keep="s")
        with pytest.raises(FingerprintError):
            jaccard(a, c)


class TestGeometry:
    def test_proof_subclaims_on_random_trees(self):
        for seed in range(25):
            t = tree_of(random_tree_document(seed))
            e = layout(t)
            # containment and non-degeneracy
            for node, parent in t.parent.items():
                x0, x1, y0, y1 = e.rect[node]
                px0, px1, py0, py1 = e.rect[parent]
                assert x1 > x0 and y1 > y0
                assert px0 <= x0 and x1 <= px1 and py0 <= y0 and y1 <= py1
            # sibling interiors disjoint
            for parent, kids in t.children.items():
                for a, b in itertools.combinations(kids, 2):
                    ax0, ax1, ay0, ay1 = e.rect[a]
                    bx0, bx1, by0, by1 = e.rect[b]
                    assert max(ax0, bx0) >= min(ax1, bx1) or max(ay0, by0) >= min(ay1, by1)
            # ancestor centroid excluded from descendant interiors
            for node in t.nodes:
                cx, cy, _ = e.position[node]
                for kid in t.children.get(node, ()):
                    stack = [kid]
                    while stack:
                        d = stack.pop()
                        dx0, dx1, dy0, dy1 = e.rect[d]
                        assert not (dx0 < cx < dx1 and dy0 < cy < dy1)
                        stack.extend(t.children.get(d, ()))


class TestMetricAxioms:
    def _random_fingerprints(self, rng, count):
        out = []
        for _ in range(count):
            n = int(rng.integers(1, 8))
            cells = frozenset(
                (int(rng.integers(0, 6)), int(rng.integers(0, 6)), int(rng.integers(0, 4)))
                for _ in range(n)
            )
            out.append(cells)
        return out

    def test_axioms_hold_exactly(self):
        rng = np.random.default_rng(99)
        fps = self._random_fingerprints(rng, 150)

        def d(a, b):
            return 1 - Fraction(len(a & b), len(a | b))

        for _ in range(2000):
            a, b, c = (fps[int(rng.integers(len(fps)))] for _ in range(3))
            assert d(a, b) >= 0
            assert (d(a, b) == 0) == (a == b)
            assert d(a, b) == d(b, a)
            assert d(a, c) <= d(a, b) + d(b, c)


class TestLandscape:
    def _toy_memory(self, seed=0, n=10):
        from graft.fixtures import morning_graph
        from graft import sample_method, uniform_rows

        problem_s = build_substrate(morning_graph())
        action_s = build_substrate(graph_from_document(s_chain_doc(4)))
        pe, ae = layout(problem_s.tree), layout(action_s.tree)
        pk = min_injective_k(pe)
        repo = MemoryRepository(pe.tree_version, ae.tree_version)
        rng = np.random.default_rng(seed)
        for i in range(n):
            pm = sample_method(problem_s, uniform_rows(problem_s), int(rng.integers(2**32)))
            am = sample_method(action_s, uniform_rows(action_s), int(rng.integers(2**32)))
            p_nodes = method_path_nodes(problem_s, pm)
            a_nodes = method_path_nodes(action_s, am)
            repo.entries.append(
                MemoryEntry(
                    problem_fp=fingerprint(pe, p_nodes, pk),
                    method=am,
                    method_path_nodes=a_nodes,
                    observables={"wall_time": float(i)},
                    reward=50.0,
                )
            )
        return repo, pe, ae

    def test_single_entry_centered_to_origin(self):
        repo, pe, ae = self._toy_memory(n=1)
        table = landscape_export(repo, pe, ae, "wall_time")
        assert table.rows[0][:2] == (0.0, 0.0)
        assert table.degenerate_problem_axis and table.degenerate_method_axis

    def test_identical_problem_fingerprints_share_x(self):
        repo, pe, ae = self._toy_memory(n=6)
        clone = repo.entries[0]
        for e in repo.entries[1:]:
            e.problem_fp = clone.problem_fp
        table = landscape_export(repo, pe, ae, "wall_time")
        xs = {row[0] for row in table.rows}
        assert len(xs) == 1

    def test_first_pc_beats_random_directions(self):
        repo, pe, ae = self._toy_memory(n=10)
        table = landscape_export(repo, pe, ae, "wall_time")
        # reconstruct the centered problem indicator matrix independently
        k32 = 32
        inv = invert_cells(pe, repo.entries[0].problem_fp.resolution)
        sets = []
        for e_ in repo.entries:
            nodes = [inv[c] for c in e_.problem_fp.cells]
            sets.append(frozenset(bin_cell(pe, n, k32) for n in nodes))
        cells = sorted(set().union(*sets))
        mat = np.array([[1.0 if c in s else 0.0 for c in cells] for s in sets])
        centered = mat - mat.mean(axis=0)
        xs = np.array([r[0] for r in table.rows])
        rng = np.random.default_rng(17)
        for _ in range(50):
            direction = rng.normal(size=centered.shape[1])
            direction /= np.linalg.norm(direction)
            assert xs.var() >= (centered @ direction).var() - 1e-9

    def test_missing_observable_rejected(self):
        repo, pe, ae = self._toy_memory(n=3)
        with pytest.raises(KeyError):
            landscape_export(repo, pe, ae, "nonexistent")

    def test_power_iteration_degenerate_input(self):
        coords, degenerate = first_principal_coordinates(np.ones((5, 4)))
        assert degenerate
        assert np.all(coords == 0.0)

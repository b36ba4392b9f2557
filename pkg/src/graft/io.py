"""File formats: substrate, rows, fingerprint, method, memory, and reports.

Every artifact is JSON (memory and loop reports are JSON Lines) with a
format marker and the producing tree version; loading refuses mixed
versions.  Serialization is byte-deterministic: sorted keys, fixed
separators, one trailing newline.  Floats round-trip exactly through the
shortest-repr encoding json uses for binary64.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from .build import Substrate, build_substrate, substrate_content_hash
from .embedding import Embedding, Fingerprint
from .errors import GraftError, VersionMismatchError
from .graph import KnowledgeGraph, graph_from_document, graph_to_document
from .memory import MemoryEntry, MemoryRepository
from .policy import MethodTuple, PolicyRows, ProbabilityRow

SUBSTRATE_FORMAT = "graft-substrate/1"
ROWS_FORMAT = "graft-rows/1"
FINGERPRINT_FORMAT = "graft-fingerprint/1"
METHOD_FORMAT = "graft-method/1"
EMBEDDING_FORMAT = "graft-embedding/1"


def _dump(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def _load_json(path: str | Path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise GraftError(f"{path}: malformed JSON ({exc})") from exc


def _expect_format(payload: dict, marker: str, path) -> None:
    if payload.get("format") != marker:
        raise GraftError(f"{path}: expected a {marker} file, found {payload.get('format')!r}")


# -- graph documents ---------------------------------------------------------


def load_graph(path: str | Path) -> KnowledgeGraph:
    return graph_from_document(_load_json(path))


def save_graph(g: KnowledgeGraph, path: str | Path) -> None:
    Path(path).write_text(_dump(graph_to_document(g)))


# -- substrate ---------------------------------------------------------------


def save_substrate(s: Substrate, path: str | Path) -> None:
    doc = graph_to_document(s.graph)
    payload = {
        "format": SUBSTRATE_FORMAT,
        "graph": doc,
        "content_hash": substrate_content_hash(doc),
        "tree_version": s.tree_version,
        "tree": {
            "root": s.tree.root,
            "parent": dict(sorted(s.tree.parent.items())),
            "edge_type": {n: t.value for n, t in sorted(s.tree.edge_type.items())},
        },
        "chains": {
            cid: {"root": c.root, "members": list(c.members), "alphabet": list(c.alphabet)}
            for cid, c in sorted(s.chains.chains.items())
        },
        "nesting_parent": dict(sorted(s.chains.nesting_parent.items())),
        "dependency": {
            "rule_edges": sorted(list(e) for e in s.dep.rule_edges),
            "nesting_edges": sorted(list(e) for e in s.dep.nesting_edges),
        },
        "levels": dict(sorted(s.levels.level.items())),
        "footprint": {"joint": s.joint_size, "factored": s.footprint},
    }
    Path(path).write_text(_dump(payload))


def load_substrate(path: str | Path) -> Substrate:
    payload = _load_json(path)
    _expect_format(payload, SUBSTRATE_FORMAT, path)
    doc = payload["graph"]
    if substrate_content_hash(doc) != payload["content_hash"]:
        raise GraftError(f"{path}: content hash mismatch, file has drifted")
    s = build_substrate(graph_from_document(doc))
    if s.tree_version != payload.get("tree_version"):
        raise GraftError(f"{path}: recorded tree version does not match the rebuilt tree")
    return s


# -- policy rows -------------------------------------------------------------


def save_rows(rows: PolicyRows, path: str | Path) -> None:
    payload = {
        "format": ROWS_FORMAT,
        "tree_version": rows.tree_version,
        "rows": {
            node: {"options": list(r.options), "mass": list(r.mass)}
            for node, r in sorted(rows.rows.items())
        },
    }
    Path(path).write_text(_dump(payload))


def load_rows(path: str | Path) -> PolicyRows:
    payload = _load_json(path)
    _expect_format(payload, ROWS_FORMAT, path)
    rows = {
        node: ProbabilityRow(options=tuple(r["options"]), mass=tuple(r["mass"]))
        for node, r in payload["rows"].items()
    }
    return PolicyRows(rows=rows, tree_version=payload["tree_version"])


# -- fingerprints ------------------------------------------------------------


def fingerprint_payload(fp: Fingerprint) -> dict:
    return {
        "format": FINGERPRINT_FORMAT,
        "tree_tag": fp.tree_tag,
        "resolution": fp.resolution,
        "keep": fp.keep,
        "cells": sorted(list(c) for c in fp.cells),
    }


def save_fingerprint(fp: Fingerprint, path: str | Path) -> None:
    Path(path).write_text(_dump(fingerprint_payload(fp)))


def fingerprint_from_payload(payload: dict) -> Fingerprint:
    return Fingerprint(
        cells=frozenset(tuple(c) for c in payload["cells"]),
        resolution=payload["resolution"],
        tree_tag=payload["tree_tag"],
        keep=payload["keep"],
    )


def load_fingerprint(path: str | Path) -> Fingerprint:
    payload = _load_json(path)
    _expect_format(payload, FINGERPRINT_FORMAT, path)
    return fingerprint_from_payload(payload)


# -- method tuples -----------------------------------------------------------


def method_payload(m: MethodTuple) -> dict:
    return {"format": METHOD_FORMAT, "picks": {k: v for k, v in m.items}}


def save_method(m: MethodTuple, path: str | Path) -> None:
    Path(path).write_text(_dump(method_payload(m)))


def load_method(path: str | Path) -> MethodTuple:
    payload = _load_json(path)
    _expect_format(payload, METHOD_FORMAT, path)
    return MethodTuple.from_picks(payload["picks"])


def load_method_list(path: str | Path) -> list[MethodTuple]:
    """A JSON array of picks objects (or method payloads), e.g. an avoid set."""
    payload = _load_json(path)
    if not isinstance(payload, list):
        raise GraftError(f"{path}: expected a JSON array of method records")
    out = []
    for item in payload:
        picks = item.get("picks", item) if isinstance(item, dict) else None
        if picks is None:
            raise GraftError(f"{path}: bad method record {item!r}")
        out.append(MethodTuple.from_picks(picks))
    return out


# -- memory (JSON Lines, append-friendly) -------------------------------------


def _entry_payload(entry: MemoryEntry, repo: MemoryRepository) -> dict:
    return {
        "problem_tree_version": repo.problem_tree_version,
        "action_tree_version": repo.action_tree_version,
        "problem_fp": {
            "tree_tag": entry.problem_fp.tree_tag,
            "resolution": entry.problem_fp.resolution,
            "keep": entry.problem_fp.keep,
            "cells": sorted(list(c) for c in entry.problem_fp.cells),
        },
        "method": {k: v for k, v in entry.method.items},
        "method_path_nodes": sorted(entry.method_path_nodes),
        "observables": dict(sorted(entry.observables.items())),
        "reward": entry.reward,
        "stale": entry.stale,
    }


def _entry_from_payload(payload: dict) -> MemoryEntry:
    fp = payload["problem_fp"]
    return MemoryEntry(
        problem_fp=Fingerprint(
            cells=frozenset(tuple(c) for c in fp["cells"]),
            resolution=fp["resolution"],
            tree_tag=fp["tree_tag"],
            keep=fp["keep"],
        ),
        method=MethodTuple.from_picks(payload["method"]),
        method_path_nodes=frozenset(payload["method_path_nodes"]),
        observables=dict(payload["observables"]),
        reward=payload["reward"],
        stale=payload.get("stale", False),
    )


def save_memory(repo: MemoryRepository, path: str | Path) -> None:
    lines = [
        json.dumps(_entry_payload(e, repo), sort_keys=True, separators=(",", ":"))
        for e in repo.entries
    ]
    Path(path).write_text("".join(line + "\n" for line in lines))


def append_memory(repo: MemoryRepository, entry: MemoryEntry, path: str | Path) -> None:
    line = json.dumps(_entry_payload(entry, repo), sort_keys=True, separators=(",", ":"))
    with open(path, "a") as fh:
        fh.write(line + "\n")


def load_memory(
    path: str | Path,
    problem_tree_version: str | None = None,
    action_tree_version: str | None = None,
) -> MemoryRepository:
    """Read a JSONL memory file; every record must agree on tree versions.

    An empty or missing file yields an empty repository with the supplied
    versions (both must then be given).
    """
    p = Path(path)
    entries = []
    versions: tuple[str, str] | None = None
    if p.exists():
        for i, line in enumerate(p.read_text().splitlines()):
            if not line.strip():
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as exc:
                raise GraftError(f"{path}:{i + 1}: malformed record ({exc})") from exc
            record_versions = (payload["problem_tree_version"], payload["action_tree_version"])
            if versions is None:
                versions = record_versions
            elif versions != record_versions:
                raise VersionMismatchError(f"{path}:{i + 1}: mixed tree versions in one memory file")
            entries.append(_entry_from_payload(payload))
    if versions is None:
        if problem_tree_version is None or action_tree_version is None:
            raise GraftError(f"{path}: empty memory needs explicit tree versions")
        versions = (problem_tree_version, action_tree_version)
    if problem_tree_version is not None and versions[0] != problem_tree_version:
        raise VersionMismatchError(
            f"{path}: memory problem tree {versions[0]} does not match {problem_tree_version}"
        )
    if action_tree_version is not None and versions[1] != action_tree_version:
        raise VersionMismatchError(
            f"{path}: memory action tree {versions[1]} does not match {action_tree_version}"
        )
    return MemoryRepository(
        problem_tree_version=versions[0],
        action_tree_version=versions[1],
        entries=entries,
    )


# -- embeddings ---------------------------------------------------------------


def save_embedding(e: Embedding, path: str | Path) -> None:
    payload = {
        "format": EMBEDDING_FORMAT,
        "tree_version": e.tree_version,
        "max_depth": e.max_depth,
        "position": {n: list(p) for n, p in sorted(e.position.items())},
        "depth": dict(sorted(e.depth.items())),
        "rect": {n: list(r) for n, r in sorted(e.rect.items())},
        "entered_by": dict(sorted(e.entered_by.items())),
    }
    Path(path).write_text(_dump(payload))


def load_embedding(path: str | Path) -> Embedding:
    payload = _load_json(path)
    _expect_format(payload, EMBEDDING_FORMAT, path)
    return Embedding(
        position={n: tuple(p) for n, p in payload["position"].items()},
        depth=dict(payload["depth"]),
        max_depth=payload["max_depth"],
        rect={n: tuple(r) for n, r in payload["rect"].items()},
        entered_by=dict(payload["entered_by"]),
        tree_version=payload["tree_version"],
    )


def file_sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()

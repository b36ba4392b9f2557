"""Shipped example graphs, starting with the morning-routine fixture.

The morning routine bundles a breakfast, a clothes, and a transport
attribute; clothes bundles a style and a helmet sub-attribute; each of the
four decisions is binary, and one cross-rule pins the helmet to yes whenever
the bike is picked.  Flattened, the joint policy would need 16 entries; the
factored substrate stores 8 row entries plus the single rule.
"""

from __future__ import annotations

from .graph import KnowledgeGraph, graph_from_document


def morning_graph_document() -> dict:
    return {
        "root": "morning",
        "nodes": [
            {"id": "morning"},
            {"id": "breakfast"},
            {"id": "clothes"},
            {"id": "transport", "hint": "pick how to get to work"},
            {"id": "style"},
            {"id": "helmet"},
            {"id": "breakfast_no"},
            {"id": "breakfast_yes"},
            {"id": "style_casual"},
            {"id": "style_formal"},
            {"id": "helmet_no"},
            {"id": "helmet_yes"},
            {"id": "transport_bike"},
            {"id": "transport_car"},
        ],
        "edges": [
            {"parent": "morning", "child": "breakfast", "type": "c"},
            {"parent": "morning", "child": "clothes", "type": "c"},
            {"parent": "morning", "child": "transport", "type": "c"},
            {"parent": "clothes", "child": "style", "type": "c"},
            {"parent": "clothes", "child": "helmet", "type": "c"},
            {"parent": "breakfast", "child": "breakfast_no", "type": "s"},
            {"parent": "breakfast", "child": "breakfast_yes", "type": "s"},
            {"parent": "style", "child": "style_casual", "type": "s"},
            {"parent": "style", "child": "style_formal", "type": "s"},
            {"parent": "helmet", "child": "helmet_no", "type": "s"},
            {"parent": "helmet", "child": "helmet_yes", "type": "s"},
            {"parent": "transport", "child": "transport_bike", "type": "s"},
            {"parent": "transport", "child": "transport_car", "type": "s"},
        ],
        "rules": [
            {
                "hint": "riding the bike requires wearing the helmet",
                "trigger": ["transport_bike"],
                "target": ["helmet_yes"],
                "effect": "force",
            }
        ],
    }


def morning_graph() -> KnowledgeGraph:
    return graph_from_document(morning_graph_document())

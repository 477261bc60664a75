from __future__ import annotations

import json

import pytest
from hypothesis import given, strategies as st

from respnet.errors import (
    CategoryMismatch,
    DuplicateId,
    HasChildren,
    InvalidSpec,
    NonPositiveWeight,
    UnknownList,
    UnknownParent,
)
from respnet.model import GraphStore, load_templates_file

from conftest import small_graph

MALL_TEMPLATE = {
    "template_id": "tmpl-m",
    "category": "shopping_mall",
    "lists": [
        {"weight": 2, "items": [
            {"description": "walkway check", "legal_basis": "c1", "weight": 1},
            {"description": "exit check", "legal_basis": "c2", "weight": 3},
        ]},
        {"weight": 1, "items": [
            {"description": "briefing", "legal_basis": "c3", "weight": 1},
        ]},
    ],
}


def mall_station() -> tuple[GraphStore, str]:
    graph = GraphStore()
    company = graph.add_company("Co")
    person = graph.add_personnel(company.id, "P", "staff")
    ent = graph.add_enterprise(company.id, "Mall", "shopping_mall", id="E1")
    station = graph.add_station(ent.id, "Post", person.id)
    return graph, station.id


class TestAddEntity:
    def test_add_station_extends_enterprise(self, graph):
        before = len(graph.enterprises["en-1"].station_ids)
        station = graph.add_station("en-1", "Post C", "pe-staff")
        assert station.id in graph.enterprises["en-1"].station_ids
        assert len(graph.enterprises["en-1"].station_ids) == before + 1

    def test_add_station_unknown_enterprise(self, graph):
        with pytest.raises(UnknownParent):
            graph.add_station("E99", "Post X", "pe-staff")

    def test_add_item_zero_weight_rejected(self, graph):
        with pytest.raises(InvalidSpec) as exc:
            graph.add_item("la1", "dud", "reg", 0)
        assert exc.value.details["field"] == "weight"

    def test_duplicate_id_rejected(self, graph):
        with pytest.raises(DuplicateId):
            graph.add_company("Another", id="co-1")

    def test_generic_dispatcher(self, graph):
        new_id = graph.add_entity("en-1", {"type": "station", "name": "Post D",
                                           "personnel_id": "pe-staff"})
        assert new_id in graph.stations

    def test_unknown_category_rejected(self, graph):
        with pytest.raises(InvalidSpec) as exc:
            graph.add_enterprise("co-1", "X", "space_station")
        assert exc.value.details["field"] == "category"


class TestNormalizeWeights:
    def test_symmetric(self):
        graph, station = mall_station()
        lst = graph.add_list(station, 1)
        graph.add_item(lst.id, "i1", "r", 2)
        graph.add_item(lst.id, "i2", "r", 2)
        assert graph.normalize_weights(lst.id) == [0.5, 0.5]

    def test_single_item_identity(self):
        graph, station = mall_station()
        lst = graph.add_list(station, 1)
        graph.add_item(lst.id, "i1", "r", 1)
        assert graph.normalize_weights(lst.id) == [1.0]

    def test_uneven_weights(self):
        graph, station = mall_station()
        lst = graph.add_list(station, 1)
        raw = [1, 2, 5]
        for i, w in enumerate(raw):
            graph.add_item(lst.id, f"i{i}", "r", w)
        expected = [w / sum(raw) for w in raw]  # [0.125, 0.25, 0.625]
        assert graph.normalize_weights(lst.id) == pytest.approx(expected, abs=1e-12)
        assert expected == [0.125, 0.25, 0.625]

    def test_unknown_list(self, graph):
        with pytest.raises(UnknownList):
            graph.normalize_weights("nope")

    def test_tampered_weight_rejected(self, graph):
        graph.items["a1"].weight = 0  # bypasses add-time validation
        with pytest.raises(NonPositiveWeight):
            graph.normalize_weights("la1")

    @given(st.lists(st.floats(min_value=0.01, max_value=50, allow_nan=False),
                    min_size=1, max_size=8))
    def test_sum_one_and_argmax_preserved(self, raw):
        graph, station = mall_station()
        lst = graph.add_list(station, 1)
        for i, w in enumerate(raw):
            graph.add_item(lst.id, f"i{i}", "r", w)
        normalized = graph.normalize_weights(lst.id)
        assert abs(sum(normalized) - 1.0) <= 1e-9
        assert normalized.index(max(normalized)) == raw.index(max(raw))


class TestDeriveStationLists:
    def test_creates_template_lists(self):
        graph, station = mall_station()
        graph.register_template(MALL_TEMPLATE)
        created = graph.derive_station_lists(station, "tmpl-m")
        assert len(created) == 2
        assert len(graph.lists[created[0]].item_ids) == 2
        item = graph.items[graph.lists[created[0]].item_ids[1]]
        assert item.description == "exit check"
        assert item.weight == 3

    def test_idempotent(self):
        graph, station = mall_station()
        graph.register_template(MALL_TEMPLATE)
        first = graph.derive_station_lists(station, "tmpl-m")
        second = graph.derive_station_lists(station, "tmpl-m")
        assert first == second
        assert len(graph.lists) == 2
        assert graph.validate() == []

    def test_category_mismatch(self):
        graph = GraphStore()
        company = graph.add_company("Co")
        person = graph.add_personnel(company.id, "P", "staff")
        ent = graph.add_enterprise(company.id, "Chem", "hazardous_chemicals")
        station = graph.add_station(ent.id, "Post", person.id)
        graph.register_template(MALL_TEMPLATE)
        with pytest.raises(CategoryMismatch):
            graph.derive_station_lists(station.id, "tmpl-m")


class TestValidate:
    def test_clean_graph(self, graph):
        assert graph.validate() == []

    def test_weight_tamper_names_list(self, graph):
        # raw weights 0.7/0.3 tampered so the list's weights sum to 0.9
        # and one weight is no longer positive
        graph.items["a2"].weight = 0.0
        graph.items["a1"].weight = 0.9
        violations = graph.validate()
        assert any(v.entity_id == "la1" and "weight" in v.invariant for v in violations)

    def test_dangling_personnel(self, graph):
        graph.delete_entity("pe-staff")
        violations = graph.validate()
        assert any(v.entity_id == "st-b" and v.invariant == "dangling_reference"
                   for v in violations)

    def test_empty_list_flagged(self, graph):
        graph.lists["la1"].item_ids.clear()
        assert any(v.entity_id == "la1" and v.invariant == "empty_list"
                   for v in graph.validate())

    def test_validate_preserved_by_adds(self, graph):
        graph.add_item("la1", "extra", "reg", 2)
        station = graph.add_station("en-1", "Post C", "pe-staff")
        lst = graph.add_list(station.id, 1)
        graph.add_item(lst.id, "x", "reg", 1)
        assert graph.validate() == []


class TestDelete:
    def test_delete_with_children_rejected(self, graph):
        with pytest.raises(HasChildren):
            graph.delete_entity("la1")

    def test_delete_leaf(self, graph):
        graph.delete_entity("a2")
        assert "a2" not in graph.items
        assert "a2" not in graph.lists["la1"].item_ids


class TestTemplateFile:
    def test_unknown_category_carries_file_and_line(self, tmp_path):
        bad = {"templates": [
            MALL_TEMPLATE,
            {"template_id": "tmpl-x", "category": "moon_base", "lists": [
                {"weight": 1, "items": [
                    {"description": "d", "legal_basis": "l", "weight": 1}]},
            ]},
        ]}
        path = tmp_path / "templates.json"
        path.write_text(json.dumps(bad, indent=2))
        with pytest.raises(InvalidSpec) as exc:
            load_templates_file(path, ("shopping_mall",))
        assert exc.value.details["file"] == str(path)
        assert exc.value.details["line"] > 1

    def test_round_trip(self, tmp_path):
        path = tmp_path / "templates.json"
        path.write_text(json.dumps({"templates": [MALL_TEMPLATE]}))
        templates = load_templates_file(path, ("shopping_mall",))
        assert templates[0].template_id == "tmpl-m"
        assert templates[0].lists[0].items[1].weight == 3


def test_tree_traversal_reaches_everything():
    graph = small_graph()
    reachable = set()
    stack = list(graph.companies)
    while stack:
        node = stack.pop()
        assert node not in reachable, "cycle"
        reachable.add(node)
        stack.extend(graph.children_of(node))
    everything = (set(graph.companies) | set(graph.enterprises) | set(graph.stations)
                  | set(graph.personnel) | set(graph.lists) | set(graph.items))
    assert reachable == everything

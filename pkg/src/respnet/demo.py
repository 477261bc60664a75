"""Built-in demo fixture: a small two-enterprise graph with duty templates,
threshold rules and a region map, used by the CLI ``seed`` command and tests.

Station/enterprise ids are fixed so region files and dashboards keep working
across re-seeds.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Mapping

from .errors import InvalidSpec
from .storage import Store

DEMO_TEMPLATES: list[dict] = [
    {
        "template_id": "tmpl-mall",
        "category": "shopping_mall",
        "lists": [
            {
                "weight": 3,
                "items": [
                    {"description": "evacuation route walkthrough",
                     "legal_basis": "local code 114-2a", "weight": 2,
                     "periodic_rule": {"cycle_days": 1, "grace_days": 0,
                                       "score_method": "fixed_penalty",
                                       "penalty_points": 2}},
                    {"description": "extinguisher pressure check",
                     "legal_basis": "local code 87-1", "weight": 1,
                     "periodic_rule": {"cycle_days": 7, "grace_days": 1,
                                       "score_method": "fixed_penalty",
                                       "penalty_points": 10}},
                    {"description": "alarm panel self-test review",
                     "legal_basis": "local code 87-4", "weight": 1,
                     "periodic_rule": {"cycle_days": 7, "grace_days": 0,
                                       "score_method": "per_day_penalty",
                                       "penalty_points": 2}},
                ],
            },
            {
                "weight": 1,
                "items": [
                    {"description": "tenant safety briefing",
                     "legal_basis": "local code 114-9", "weight": 1,
                     "periodic_rule": {"cycle_days": 14, "grace_days": 2,
                                       "score_method": "fixed_penalty",
                                       "penalty_points": 5}},
                    {"description": "storage corridor clearance audit",
                     "legal_basis": "local code 12-3", "weight": 1},
                ],
            },
        ],
    },
    {
        "template_id": "tmpl-chem",
        "category": "hazardous_chemicals",
        "lists": [
            {
                "weight": 2,
                "items": [
                    {"description": "valve manifold pressure log",
                     "legal_basis": "hazmat reg 5.2", "weight": 3},
                    {"description": "leak detection walk",
                     "legal_basis": "hazmat reg 7.1", "weight": 2,
                     "periodic_rule": {"cycle_days": 3, "grace_days": 0,
                                       "score_method": "per_day_penalty",
                                       "penalty_points": 3}},
                    {"description": "emergency shower function test",
                     "legal_basis": "hazmat reg 9.4", "weight": 1,
                     "periodic_rule": {"cycle_days": 7, "grace_days": 1,
                                       "score_method": "fixed_penalty",
                                       "penalty_points": 8}},
                ],
            },
            {
                "weight": 1,
                "items": [
                    {"description": "hazmat manifest reconciliation",
                     "legal_basis": "hazmat reg 2.8", "weight": 1,
                     "periodic_rule": {"cycle_days": 7, "grace_days": 0,
                                       "score_method": "fixed_penalty",
                                       "penalty_points": 5}},
                    {"description": "night watch log review",
                     "legal_basis": "hazmat reg 1.1", "weight": 1},
                ],
            },
        ],
    },
]

DEMO_REGIONS: list[dict] = [
    {"region_id": "R-north", "station_ids": ["st-mall-lobby", "st-mall-atrium"]},
    {"region_id": "R-east", "station_ids": ["st-chem-yard"]},
    {"region_id": "R-vacant", "station_ids": []},
]

# sensor rules reference demo items by (station, description) and are resolved
# after template derivation
DEMO_RULES: list[dict] = [
    {"rule_id": "rule-press-high", "sensor_id": "chem-press-01", "metric": "pressure",
     "comparator": "gt", "critical_value": 1.2, "unit": "MPa",
     "deduction_mode": "once_per_breach", "penalty_points": 5,
     "target": ("st-chem-yard", "valve manifold pressure log"), "cooldown_hours": 0},
    {"rule_id": "rule-hydrant-low", "sensor_id": "mall-hydrant-01",
     "metric": "water_pressure", "comparator": "lt", "critical_value": 0.3,
     "unit": "MPa", "deduction_mode": "per_day_while_active", "penalty_points": 2,
     "target": ("st-mall-lobby", "extinguisher pressure check"), "cooldown_hours": 0},
    {"rule_id": "rule-temp-spike", "sensor_id": "chem-temp-01", "metric": "temperature",
     "comparator": "ge", "critical_value": 60.0, "unit": "C",
     "deduction_mode": "per_occurrence", "penalty_points": 3,
     "target": ("st-chem-yard", "leak detection walk"), "cooldown_hours": 6},
]


def find_item(store: Store, station_id: str, description: str) -> str:
    station = store.graph.stations.get(station_id)
    if station is None:
        raise InvalidSpec(f"station {station_id!r} not found", field="station_id")
    for lid in station.list_ids:
        for iid in store.graph.lists[lid].item_ids:
            if store.graph.items[iid].description == description:
                return iid
    raise InvalidSpec(f"no item {description!r} under station {station_id!r}",
                      field="description")


def seed_demo(store: Store, templates: list[Mapping[str, Any]] | None = None,
              write_regions: bool = True) -> dict:
    """Install the demo graph; re-seeding an occupied store is a no-op."""
    if store.graph.companies:
        return {"already_seeded": True, "summary": graph_summary(store)}

    for template in (templates if templates is not None else DEMO_TEMPLATES):
        store.register_template(template)

    company = store.add_company("Northgate Safety Services", id="co-north")
    staff_lobby = store.add_personnel(company.id, "Mei Rivera", "staff", id="pe-rivera")
    lead_mall = store.add_personnel(company.id, "Tomas Adeyemi", "leader", id="pe-adeyemi")
    lead_chem = store.add_personnel(company.id, "Ingrid Haas", "leader", id="pe-haas")
    store.add_personnel(company.id, "Ravi Kapoor", "supervisor", id="pe-kapoor")

    mall = store.add_enterprise(company.id, "Harborview Mall", "shopping_mall",
                                id="en-mall")
    chem = store.add_enterprise(company.id, "Calder Chemical Works",
                                "hazardous_chemicals", id="en-chem")

    lobby = store.add_station(mall.id, "Lobby fire post", staff_lobby.id,
                              id="st-mall-lobby")
    atrium = store.add_station(mall.id, "Atrium fire post", lead_mall.id,
                               id="st-mall-atrium")
    yard = store.add_station(chem.id, "Tank yard post", lead_chem.id,
                             id="st-chem-yard")

    mall_template = _template_for_category(store, "shopping_mall")
    chem_template = _template_for_category(store, "hazardous_chemicals")
    for station in (lobby, atrium):
        store.derive_station_lists(station.id, mall_template)
    store.derive_station_lists(yard.id, chem_template)

    for rule in DEMO_RULES:
        resolved = dict(rule)
        station_id, description = resolved.pop("target")
        resolved["target_item_id"] = find_item(store, station_id, description)
        store.register_rule(resolved)

    if write_regions:
        regions_path = store.data_dir / "regions.json"
        if not regions_path.exists():
            regions_path.write_text(
                json.dumps({"regions": DEMO_REGIONS}, indent=2) + "\n", encoding="utf-8")

    violations = store.graph.validate()
    if violations:  # would indicate a broken fixture, not user error
        raise InvalidSpec(f"seed fixture failed validation: {violations}", field="seed")
    return {"already_seeded": False, "summary": graph_summary(store)}


def _template_for_category(store: Store, category: str) -> str:
    for template in store.graph.templates.values():
        if template.category == category:
            return template.template_id
    raise InvalidSpec(f"no template registered for category {category!r}",
                      field="category")


def graph_summary(store: Store) -> dict:
    return {
        "companies": len(store.graph.companies),
        "enterprises": len(store.graph.enterprises),
        "stations": len(store.graph.stations),
        "personnel": len(store.graph.personnel),
        "lists": len(store.graph.lists),
        "items": len(store.graph.items),
    }


def write_templates_file(path: str | Path) -> Path:
    """Export the built-in templates so operators can start from a real file."""
    path = Path(path)
    path.write_text(json.dumps({"templates": DEMO_TEMPLATES}, indent=2) + "\n",
                    encoding="utf-8")
    return path

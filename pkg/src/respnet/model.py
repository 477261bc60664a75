"""Responsibility hierarchy: company -> enterprise -> station -> list -> item.

The graph is a tree. Weights are stored exactly as entered and normalized on
read, so operator input stays auditable; ``normalized_*`` helpers divide each
raw weight by the sibling sum. Station lists can be stamped out from
per-category templates, and ``validate()`` re-checks every structural
invariant, returning findings as data rather than raising.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Mapping

from .errors import (
    CategoryMismatch,
    DuplicateId,
    HasChildren,
    InvalidSpec,
    NonPositiveWeight,
    UnknownEntity,
    UnknownList,
    UnknownParent,
    UnknownTemplate,
)

DEFAULT_CATEGORIES = ("shopping_mall", "hazardous_chemicals", "other")

WEIGHT_SUM_TOL = 1e-9


class Role(str, Enum):
    staff = "staff"
    leader = "leader"
    supervisor = "supervisor"


class ScoreMethod(str, Enum):
    fixed_penalty = "fixed_penalty"
    per_day_penalty = "per_day_penalty"


@dataclass(frozen=True)
class PeriodicRule:
    cycle_days: int
    grace_days: int
    score_method: ScoreMethod
    penalty_points: float

    def __post_init__(self) -> None:
        if not isinstance(self.cycle_days, int) or self.cycle_days < 1:
            raise InvalidSpec("cycle_days must be a positive integer", field="cycle_days")
        if not isinstance(self.grace_days, int) or self.grace_days < 0:
            raise InvalidSpec("grace_days must be a non-negative integer", field="grace_days")
        if not 0 < self.penalty_points <= 100:
            raise InvalidSpec("penalty_points must be in (0, 100]", field="penalty_points")

    def to_json(self) -> dict:
        return {
            "cycle_days": self.cycle_days,
            "grace_days": self.grace_days,
            "score_method": self.score_method.value,
            "penalty_points": self.penalty_points,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "PeriodicRule":
        try:
            method = ScoreMethod(data["score_method"])
        except (KeyError, ValueError):
            raise InvalidSpec(
                f"score_method must be one of {[m.value for m in ScoreMethod]}",
                field="score_method",
            )
        missing = {"cycle_days", "grace_days", "penalty_points"} - set(data)
        if missing:
            raise InvalidSpec(f"periodic_rule missing fields {sorted(missing)}",
                              field="periodic_rule")
        return cls(
            cycle_days=data["cycle_days"],
            grace_days=data["grace_days"],
            score_method=method,
            penalty_points=float(data["penalty_points"]),
        )


@dataclass
class ServiceCompany:
    id: str
    name: str
    enterprise_ids: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"id": self.id, "name": self.name, "enterprise_ids": list(self.enterprise_ids)}


@dataclass
class Enterprise:
    id: str
    name: str
    category: str
    station_ids: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "name": self.name,
            "category": self.category,
            "station_ids": list(self.station_ids),
        }


@dataclass
class Station:
    id: str
    name: str
    personnel_id: str
    list_ids: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "name": self.name,
            "personnel_id": self.personnel_id,
            "list_ids": list(self.list_ids),
        }


@dataclass
class Personnel:
    id: str
    name: str
    role: Role

    def to_json(self) -> dict:
        return {"id": self.id, "name": self.name, "role": self.role.value}


@dataclass
class ResponsibilityList:
    id: str
    station_id: str
    list_weight: float
    item_ids: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "station_id": self.station_id,
            "list_weight": self.list_weight,
            "item_ids": list(self.item_ids),
        }


@dataclass
class ResponsibilityItem:
    id: str
    list_id: str
    description: str
    legal_basis: str
    weight: float
    periodic_rule: PeriodicRule | None = None

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "list_id": self.list_id,
            "description": self.description,
            "legal_basis": self.legal_basis,
            "weight": self.weight,
            "periodic_rule": self.periodic_rule.to_json() if self.periodic_rule else None,
        }


@dataclass(frozen=True)
class Violation:
    """One invariant breach found by ``GraphStore.validate``."""

    entity_id: str
    invariant: str
    message: str

    def to_json(self) -> dict:
        return {"entity_id": self.entity_id, "invariant": self.invariant, "message": self.message}


# --- templates ----------------------------------------------------------------

@dataclass(frozen=True)
class TemplateItem:
    description: str
    legal_basis: str
    weight: float
    periodic_rule: PeriodicRule | None = None


@dataclass(frozen=True)
class TemplateList:
    weight: float
    items: tuple[TemplateItem, ...]


@dataclass(frozen=True)
class Template:
    template_id: str
    category: str
    lists: tuple[TemplateList, ...]

    def to_json(self) -> dict:
        return {
            "template_id": self.template_id,
            "category": self.category,
            "lists": [
                {
                    "weight": lst.weight,
                    "items": [
                        {
                            "description": it.description,
                            "legal_basis": it.legal_basis,
                            "weight": it.weight,
                            "periodic_rule": it.periodic_rule.to_json() if it.periodic_rule else None,
                        }
                        for it in lst.items
                    ],
                }
                for lst in self.lists
            ],
        }


def _require_positive_weight(value: Any, field_name: str) -> float:
    try:
        weight = float(value)
    except (TypeError, ValueError):
        raise InvalidSpec(f"{field_name} must be a number", field=field_name)
    if not weight > 0:
        raise InvalidSpec(f"{field_name} must be strictly positive, got {value}", field=field_name)
    return weight


def parse_template(data: Mapping[str, Any], categories: Iterable[str]) -> Template:
    template_id = data.get("template_id")
    if not template_id or not isinstance(template_id, str):
        raise InvalidSpec("template_id must be a non-empty string", field="template_id")
    category = data.get("category")
    if category not in set(categories):
        raise InvalidSpec(
            f"unknown category {category!r}, expected one of {sorted(categories)}",
            field="category", template_id=template_id,
        )
    raw_lists = data.get("lists")
    if not raw_lists:
        raise InvalidSpec("template must define at least one list",
                          field="lists", template_id=template_id)
    lists = []
    for i, raw in enumerate(raw_lists):
        raw_items = raw.get("items")
        if not raw_items:
            raise InvalidSpec(f"template list #{i} has no items",
                              field="items", template_id=template_id)
        items = tuple(
            TemplateItem(
                description=str(it.get("description", "")),
                legal_basis=str(it.get("legal_basis", "")),
                weight=_require_positive_weight(it.get("weight"), "weight"),
                periodic_rule=PeriodicRule.from_json(it["periodic_rule"])
                if it.get("periodic_rule") else None,
            )
            for it in raw_items
        )
        lists.append(TemplateList(weight=_require_positive_weight(raw.get("weight"), "weight"),
                                  items=items))
    return Template(template_id=template_id, category=category, lists=tuple(lists))


def load_templates_file(path: str | Path, categories: Iterable[str]) -> list[Template]:
    """Parse a templates JSON file; errors carry the file and approximate line."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidSpec(f"templates file is not valid JSON: {exc.msg}",
                          field="templates", file=str(path), line=exc.lineno)
    raw_templates = data.get("templates", data if isinstance(data, list) else None)
    if raw_templates is None:
        raise InvalidSpec('templates file must contain a "templates" array',
                          field="templates", file=str(path), line=1)
    templates = []
    for index, raw in enumerate(raw_templates):
        try:
            templates.append(parse_template(raw, categories))
        except InvalidSpec as exc:
            exc.details.setdefault("file", str(path))
            exc.details.setdefault("line", _locate_template_line(text, index))
            raise
    return templates


def _locate_template_line(text: str, template_index: int) -> int:
    hits = [i + 1 for i, line in enumerate(text.splitlines()) if '"template_id"' in line]
    if template_index < len(hits):
        return hits[template_index]
    return 1


# --- graph store ----------------------------------------------------------------

_ID_PREFIXES = {
    "company": "co",
    "enterprise": "en",
    "station": "st",
    "personnel": "pe",
    "list": "li",
    "item": "it",
}


class GraphStore:
    """In-memory hierarchy with tree bookkeeping.

    Mutations validate invariants up front and raise on breach, so a store
    that only ever saw successful mutations always passes ``validate()``.
    Identifiers are opaque service-generated strings; callers may supply
    their own, which keeps replay and fixtures deterministic.
    """

    def __init__(self, categories: Iterable[str] = DEFAULT_CATEGORIES) -> None:
        self.categories: tuple[str, ...] = tuple(categories)
        self.companies: dict[str, ServiceCompany] = {}
        self.enterprises: dict[str, Enterprise] = {}
        self.stations: dict[str, Station] = {}
        self.personnel: dict[str, Personnel] = {}
        self.lists: dict[str, ResponsibilityList] = {}
        self.items: dict[str, ResponsibilityItem] = {}
        self.templates: dict[str, Template] = {}
        # internal parent bookkeeping (not part of the wire format)
        self._parent: dict[str, str | None] = {}
        self._derived: dict[tuple[str, str], list[str]] = {}
        self._counters: dict[str, int] = {k: 0 for k in _ID_PREFIXES}

    # -- id helpers ------------------------------------------------------------

    def _all_ids(self) -> set[str]:
        ids: set[str] = set()
        for registry in (self.companies, self.enterprises, self.stations,
                         self.personnel, self.lists, self.items):
            ids.update(registry)
        return ids

    def _new_id(self, kind: str, explicit: str | None) -> str:
        taken = self._all_ids()
        if explicit is not None:
            if not explicit or not isinstance(explicit, str):
                raise InvalidSpec("id must be a non-empty string", field="id")
            if explicit in taken:
                raise DuplicateId(f"id {explicit!r} already exists")
            return explicit
        prefix = _ID_PREFIXES[kind]
        while True:
            self._counters[kind] += 1
            candidate = f"{prefix}-{self._counters[kind]:04d}"
            if candidate not in taken:
                return candidate

    # -- typed adders ------------------------------------------------------------

    def add_company(self, name: str, id: str | None = None) -> ServiceCompany:
        if not name:
            raise InvalidSpec("name must be non-empty", field="name")
        company = ServiceCompany(id=self._new_id("company", id), name=name)
        self.companies[company.id] = company
        self._parent[company.id] = None
        return company

    def add_personnel(self, company_id: str, name: str, role: Role | str,
                      id: str | None = None) -> Personnel:
        if company_id not in self.companies:
            raise UnknownParent(f"company {company_id!r} does not exist")
        if not name:
            raise InvalidSpec("name must be non-empty", field="name")
        try:
            role = Role(role)
        except ValueError:
            raise InvalidSpec(f"role must be one of {[r.value for r in Role]}", field="role")
        person = Personnel(id=self._new_id("personnel", id), name=name, role=role)
        self.personnel[person.id] = person
        self._parent[person.id] = company_id
        return person

    def add_enterprise(self, company_id: str, name: str, category: str,
                       id: str | None = None) -> Enterprise:
        if company_id not in self.companies:
            raise UnknownParent(f"company {company_id!r} does not exist")
        if not name:
            raise InvalidSpec("name must be non-empty", field="name")
        if category not in self.categories:
            raise InvalidSpec(
                f"unknown category {category!r}, expected one of {sorted(self.categories)}",
                field="category",
            )
        enterprise = Enterprise(id=self._new_id("enterprise", id), name=name, category=category)
        self.enterprises[enterprise.id] = enterprise
        self.companies[company_id].enterprise_ids.append(enterprise.id)
        self._parent[enterprise.id] = company_id
        return enterprise

    def add_station(self, enterprise_id: str, name: str, personnel_id: str,
                    id: str | None = None) -> Station:
        if enterprise_id not in self.enterprises:
            raise UnknownParent(f"enterprise {enterprise_id!r} does not exist")
        if not name:
            raise InvalidSpec("name must be non-empty", field="name")
        if personnel_id not in self.personnel:
            raise InvalidSpec(f"personnel {personnel_id!r} does not exist", field="personnel_id")
        station = Station(id=self._new_id("station", id), name=name, personnel_id=personnel_id)
        self.stations[station.id] = station
        self.enterprises[enterprise_id].station_ids.append(station.id)
        self._parent[station.id] = enterprise_id
        return station

    def add_list(self, station_id: str, weight: float,
                 id: str | None = None) -> ResponsibilityList:
        if station_id not in self.stations:
            raise UnknownParent(f"station {station_id!r} does not exist")
        weight = _require_positive_weight(weight, "list_weight")
        rlist = ResponsibilityList(id=self._new_id("list", id), station_id=station_id,
                                   list_weight=weight)
        self.lists[rlist.id] = rlist
        self.stations[station_id].list_ids.append(rlist.id)
        self._parent[rlist.id] = station_id
        return rlist

    def add_item(self, list_id: str, description: str, legal_basis: str, weight: float,
                 periodic_rule: PeriodicRule | Mapping[str, Any] | None = None,
                 id: str | None = None) -> ResponsibilityItem:
        if list_id not in self.lists:
            raise UnknownParent(f"list {list_id!r} does not exist")
        if not description:
            raise InvalidSpec("description must be non-empty", field="description")
        weight = _require_positive_weight(weight, "weight")
        if periodic_rule is not None and not isinstance(periodic_rule, PeriodicRule):
            periodic_rule = PeriodicRule.from_json(periodic_rule)
        item = ResponsibilityItem(
            id=self._new_id("item", id),
            list_id=list_id,
            description=description,
            legal_basis=legal_basis,
            weight=weight,
            periodic_rule=periodic_rule,
        )
        self.items[item.id] = item
        self.lists[list_id].item_ids.append(item.id)
        self._parent[item.id] = list_id
        return item

    def add_entity(self, parent_id: str | None, spec: Mapping[str, Any]) -> str:
        """Generic dispatcher over the typed adders; returns the new id."""
        entity_type = spec.get("type")
        fields = {k: v for k, v in spec.items() if k != "type"}
        if entity_type == "company":
            return self.add_company(**fields).id
        if parent_id is None:
            raise UnknownParent("parent_id is required for non-company entities")
        adders = {
            "personnel": self.add_personnel,
            "enterprise": self.add_enterprise,
            "station": self.add_station,
            "list": self.add_list,
            "item": self.add_item,
        }
        if entity_type not in adders:
            raise InvalidSpec(f"unknown entity type {entity_type!r}", field="type")
        try:
            return adders[entity_type](parent_id, **fields).id
        except TypeError as exc:
            raise InvalidSpec(str(exc), field="spec")

    # -- lookups ------------------------------------------------------------------

    def get_item(self, item_id: str) -> ResponsibilityItem:
        try:
            return self.items[item_id]
        except KeyError:
            raise UnknownEntity(f"item {item_id!r} does not exist")

    def parent_of(self, entity_id: str) -> str | None:
        return self._parent.get(entity_id)

    def children_of(self, entity_id: str) -> list[str]:
        if entity_id in self.companies:
            company = self.companies[entity_id]
            owned = [pid for pid, parent in self._parent.items()
                     if parent == entity_id and pid in self.personnel]
            return list(company.enterprise_ids) + owned
        if entity_id in self.enterprises:
            return list(self.enterprises[entity_id].station_ids)
        if entity_id in self.stations:
            return list(self.stations[entity_id].list_ids)
        if entity_id in self.lists:
            return list(self.lists[entity_id].item_ids)
        return []

    def delete_entity(self, entity_id: str) -> None:
        """Remove a leaf entity. Entities with children are rejected outright."""
        children = self.children_of(entity_id)
        if children:
            raise HasChildren(
                f"{entity_id!r} still has {len(children)} children; delete them first")
        for registry in (self.companies, self.enterprises, self.stations,
                         self.personnel, self.lists, self.items):
            if entity_id in registry:
                del registry[entity_id]
                parent = self._parent.pop(entity_id, None)
                if parent is not None:
                    for parent_registry, attr in (
                        (self.companies, "enterprise_ids"),
                        (self.enterprises, "station_ids"),
                        (self.stations, "list_ids"),
                        (self.lists, "item_ids"),
                    ):
                        holder = parent_registry.get(parent)
                        if holder is not None and entity_id in getattr(holder, attr):
                            getattr(holder, attr).remove(entity_id)
                return
        raise UnknownEntity(f"{entity_id!r} does not exist")

    # -- weights ------------------------------------------------------------------

    def normalize_weights(self, list_id: str) -> list[float]:
        """Normalized item weights for one list, order preserved."""
        if list_id not in self.lists:
            raise UnknownList(f"list {list_id!r} does not exist")
        raw = [self.items[iid].weight for iid in self.lists[list_id].item_ids]
        return self._normalize(raw, f"list {list_id!r}")

    def normalized_item_weights(self, list_id: str) -> dict[str, float]:
        if list_id not in self.lists:
            raise UnknownList(f"list {list_id!r} does not exist")
        item_ids = self.lists[list_id].item_ids
        raw = [self.items[iid].weight for iid in item_ids]
        return dict(zip(item_ids, self._normalize(raw, f"list {list_id!r}")))

    def normalized_list_weights(self, station_id: str) -> dict[str, float]:
        if station_id not in self.stations:
            raise UnknownEntity(f"station {station_id!r} does not exist")
        list_ids = self.stations[station_id].list_ids
        raw = [self.lists[lid].list_weight for lid in list_ids]
        return dict(zip(list_ids, self._normalize(raw, f"station {station_id!r}")))

    @staticmethod
    def _normalize(raw: list[float], owner: str) -> list[float]:
        if not raw:
            return []
        if any(w <= 0 for w in raw):
            raise NonPositiveWeight(f"{owner} carries a non-positive weight")
        total = sum(raw)
        return [w / total for w in raw]

    # -- templates ------------------------------------------------------------------

    def register_template(self, template: Template | Mapping[str, Any]) -> Template:
        if not isinstance(template, Template):
            template = parse_template(template, self.categories)
        self.templates[template.template_id] = template
        return template

    def derive_station_lists(self, station_id: str, template_id: str) -> list[str]:
        """Instantiate a category template on a station; idempotent per pair."""
        if station_id not in self.stations:
            raise UnknownEntity(f"station {station_id!r} does not exist")
        template = self.templates.get(template_id)
        if template is None:
            raise UnknownTemplate(f"template {template_id!r} is not registered")
        enterprise_id = self._parent[station_id]
        enterprise = self.enterprises[enterprise_id]
        if template.category != enterprise.category:
            raise CategoryMismatch(
                f"template {template_id!r} targets category {template.category!r} "
                f"but enterprise {enterprise_id!r} is {enterprise.category!r}")
        key = (station_id, template_id)
        if key in self._derived:
            return list(self._derived[key])
        created: list[str] = []
        for tlist in template.lists:
            rlist = self.add_list(station_id, tlist.weight)
            for titem in tlist.items:
                self.add_item(rlist.id, titem.description, titem.legal_basis,
                              titem.weight, titem.periodic_rule)
            created.append(rlist.id)
        self._derived[key] = created
        return list(created)

    def record_derived(self, station_id: str, template_id: str, list_ids: list[str]) -> None:
        """Replay hook: restore an idempotency mapping without re-deriving."""
        self._derived[(station_id, template_id)] = list(list_ids)

    def derived_lists(self, station_id: str, template_id: str) -> list[str] | None:
        found = self._derived.get((station_id, template_id))
        return list(found) if found is not None else None

    # -- validation ------------------------------------------------------------------

    def validate(self) -> list[Violation]:
        """Check every structural invariant; one Violation per breach."""
        violations: list[Violation] = []

        def flag(entity_id: str, invariant: str, message: str) -> None:
            violations.append(Violation(entity_id, invariant, message))

        child_owners: dict[str, list[str]] = {}
        for company in self.companies.values():
            for eid in company.enterprise_ids:
                child_owners.setdefault(eid, []).append(company.id)
                if eid not in self.enterprises:
                    flag(company.id, "dangling_reference",
                         f"company references missing enterprise {eid!r}")
        for enterprise in self.enterprises.values():
            if enterprise.category not in self.categories:
                flag(enterprise.id, "unknown_category",
                     f"category {enterprise.category!r} is not in the configured set")
            for sid in enterprise.station_ids:
                child_owners.setdefault(sid, []).append(enterprise.id)
                if sid not in self.stations:
                    flag(enterprise.id, "dangling_reference",
                         f"enterprise references missing station {sid!r}")
        for station in self.stations.values():
            if station.personnel_id not in self.personnel:
                flag(station.id, "dangling_reference",
                     f"station references missing personnel {station.personnel_id!r}")
            for lid in station.list_ids:
                child_owners.setdefault(lid, []).append(station.id)
                if lid not in self.lists:
                    flag(station.id, "dangling_reference",
                         f"station references missing list {lid!r}")
        for rlist in self.lists.values():
            if not rlist.item_ids:
                flag(rlist.id, "empty_list", "list contains no items")
            if rlist.list_weight <= 0:
                flag(rlist.id, "non_positive_weight",
                     f"list_weight {rlist.list_weight} is not strictly positive")
            raw = []
            for iid in rlist.item_ids:
                child_owners.setdefault(iid, []).append(rlist.id)
                item = self.items.get(iid)
                if item is None:
                    flag(rlist.id, "dangling_reference",
                         f"list references missing item {iid!r}")
                else:
                    raw.append(item.weight)
            if raw and any(w <= 0 for w in raw):
                flag(rlist.id, "non_positive_weight",
                     "an item weight is not strictly positive; weights cannot normalize")
            elif raw:
                total = sum(w / sum(raw) for w in raw)
                if abs(total - 1.0) > WEIGHT_SUM_TOL:
                    flag(rlist.id, "weight_sum",
                         f"normalized item weights sum to {total}, expected 1")
        for item in self.items.values():
            if item.weight <= 0:
                flag(item.id, "non_positive_weight",
                     f"weight {item.weight} is not strictly positive")
            if item.list_id not in self.lists:
                flag(item.id, "dangling_reference",
                     f"item references missing list {item.list_id!r}")

        # tree shape: every non-company entity owned by exactly one parent,
        # and reachable from a company by traversal (no cycles, no orphans)
        for child_id, owners in child_owners.items():
            if len(owners) > 1:
                flag(child_id, "multiple_parents",
                     f"entity is claimed by {len(owners)} parents: {sorted(owners)}")
        reachable: set[str] = set()
        for company in self.companies.values():
            stack = [company.id]
            while stack:
                node = stack.pop()
                if node in reachable:
                    flag(node, "cycle", "entity reached twice during traversal")
                    continue
                reachable.add(node)
                stack.extend(c for c in self.children_of(node)
                             if c in self._all_ids())
        for entity_id in self._all_ids():
            if entity_id not in reachable:
                flag(entity_id, "orphan", "entity is not reachable from any company")
        return violations

    # -- serialization ------------------------------------------------------------------

    def dump(self) -> dict:
        """Full graph as JSON-ready dicts, deterministically ordered by id."""
        return {
            "companies": [self.companies[i].to_json() for i in sorted(self.companies)],
            "enterprises": [self.enterprises[i].to_json() for i in sorted(self.enterprises)],
            "stations": [self.stations[i].to_json() for i in sorted(self.stations)],
            "personnel": [self.personnel[i].to_json() for i in sorted(self.personnel)],
            "lists": [self.lists[i].to_json() for i in sorted(self.lists)],
            "items": [self.items[i].to_json() for i in sorted(self.items)],
        }

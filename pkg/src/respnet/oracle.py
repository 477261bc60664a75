"""Brute-force score recomputation used to check the engine and stored data.

This module is deliberately naive and shares no code with the scoring
engine: it re-reads the raw logs itself, re-sorts every event list from
scratch, folds with clamping, and recomputes every aggregate from raw
weights on each call. Slow and simple on purpose; if the engine and this
module agree, a bug would have to exist twice.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from pathlib import Path
from typing import Any, Iterable, Mapping

from .errors import CorruptLedger

TOLERANCE = 1e-9


def _parse_ts(value: str) -> datetime:
    ts = datetime.fromisoformat(str(value).replace("Z", "+00:00"))
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


@dataclass
class GraphView:
    """Plain-dict picture of the hierarchy, enough to recompute scores."""

    item_weight: dict[str, float] = field(default_factory=dict)
    item_list: dict[str, str] = field(default_factory=dict)
    list_weight: dict[str, float] = field(default_factory=dict)
    list_station: dict[str, str] = field(default_factory=dict)
    list_items: dict[str, list[str]] = field(default_factory=dict)
    station_lists: dict[str, list[str]] = field(default_factory=dict)
    enterprise_stations: dict[str, list[str]] = field(default_factory=dict)


def view_from_dump(dump: Mapping[str, Any]) -> GraphView:
    """Build a view from a plain graph dump (lists of entity dicts)."""
    view = GraphView()
    for ent in dump.get("enterprises", []):
        view.enterprise_stations[ent["id"]] = list(ent["station_ids"])
    for station in dump.get("stations", []):
        view.station_lists[station["id"]] = list(station["list_ids"])
    for lst in dump.get("lists", []):
        view.list_weight[lst["id"]] = float(lst["list_weight"])
        view.list_station[lst["id"]] = lst["station_id"]
        view.list_items[lst["id"]] = list(lst["item_ids"])
    for item in dump.get("items", []):
        view.item_weight[item["id"]] = float(item["weight"])
        view.item_list[item["id"]] = item["list_id"]
    return view


def load_graph_view(graph_log: str | Path) -> GraphView:
    """Rebuild the hierarchy by scanning the graph mutation log."""
    view = GraphView()
    for line_no, entry in iter_jsonl(graph_log):
        op = entry.get("op")
        data = entry.get("data", {})
        if op == "add_enterprise":
            view.enterprise_stations[data["id"]] = []
        elif op == "add_station":
            view.station_lists[data["id"]] = []
            view.enterprise_stations[entry["enterprise_id"]].append(data["id"])
        elif op == "add_list":
            list_id = data["id"]
            view.list_weight[list_id] = float(data["list_weight"])
            view.list_station[list_id] = data["station_id"]
            view.list_items[list_id] = []
            view.station_lists[data["station_id"]].append(list_id)
        elif op == "add_item":
            item_id = data["id"]
            view.item_weight[item_id] = float(data["weight"])
            view.item_list[item_id] = data["list_id"]
            view.list_items[data["list_id"]].append(item_id)
        elif op == "delete_entity":
            _delete_from_view(view, entry["id"])
    return view


def _delete_from_view(view: GraphView, entity_id: str) -> None:
    if entity_id in view.item_weight:
        owner = view.item_list.pop(entity_id)
        view.item_weight.pop(entity_id)
        if owner in view.list_items:
            view.list_items[owner].remove(entity_id)
    elif entity_id in view.list_weight:
        owner = view.list_station.pop(entity_id)
        view.list_weight.pop(entity_id)
        view.list_items.pop(entity_id)
        if owner in view.station_lists:
            view.station_lists[owner].remove(entity_id)
    elif entity_id in view.station_lists:
        view.station_lists.pop(entity_id)
        for stations in view.enterprise_stations.values():
            if entity_id in stations:
                stations.remove(entity_id)
    elif entity_id in view.enterprise_stations:
        view.enterprise_stations.pop(entity_id)


def iter_jsonl(path: str | Path) -> list[tuple[int, dict]]:
    """Strictly parse a line-delimited JSON file; any bad line is corruption."""
    path = Path(path)
    if not path.exists():
        return []
    records = []
    with path.open("r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            try:
                records.append((line_no, json.loads(stripped)))
            except json.JSONDecodeError:
                raise CorruptLedger(f"unparseable record at {path.name}:{line_no}",
                                    path=str(path), line=line_no)
    return records


# --- score recomputation ----------------------------------------------------------


def fold_item_score(events: Iterable[Mapping[str, Any]], item_id: str,
                    as_of: date) -> float:
    """Clamped fold over one item's events in the month of ``as_of``."""
    relevant = []
    for ev in events:
        if ev["item_id"] != item_id:
            continue
        ts = _parse_ts(ev["timestamp"])
        ts_day = ts.date()
        if (ts_day.year, ts_day.month) != (as_of.year, as_of.month):
            continue
        if ts_day > as_of:
            continue
        relevant.append((ts, ev["event_id"], float(ev["points"])))
    relevant.sort(key=lambda r: (r[0], r[1]))
    score = 100.0
    for _, _, points in relevant:
        score = min(100.0, max(0.0, score + points))
    return score


@dataclass
class OracleScores:
    item_scores: dict[str, float]
    list_scores: dict[str, float]
    station_scores: dict[str, float]
    enterprise_scores: dict[str, float]

    def level(self, name: str) -> dict[str, float]:
        return getattr(self, f"{name}_scores")


def replay_scores(view: GraphView, events: Iterable[Mapping[str, Any]],
                  as_of: date) -> OracleScores:
    """Recompute all four score levels from raw events and raw weights."""
    events = list(events)
    # drop duplicate event ids, keeping the first occurrence
    seen: set[str] = set()
    unique = []
    for ev in events:
        if ev["event_id"] in seen:
            continue
        seen.add(ev["event_id"])
        unique.append(ev)

    item_scores = {iid: fold_item_score(unique, iid, as_of)
                   for iid in sorted(view.item_weight)}
    list_scores: dict[str, float] = {}
    for lid in sorted(view.list_weight):
        members = view.list_items.get(lid, [])
        if not members:
            continue
        total = sum(view.item_weight[iid] for iid in members)
        list_scores[lid] = sum(
            (view.item_weight[iid] / total) * item_scores[iid] for iid in members)
    station_scores: dict[str, float] = {}
    for sid in sorted(view.station_lists):
        members = [lid for lid in view.station_lists[sid] if lid in list_scores]
        if not members:
            continue
        total = sum(view.list_weight[lid] for lid in members)
        station_scores[sid] = sum(
            (view.list_weight[lid] / total) * list_scores[lid] for lid in members)
    enterprise_scores: dict[str, float] = {}
    for eid in sorted(view.enterprise_stations):
        members = [sid for sid in view.enterprise_stations[eid] if sid in station_scores]
        if not members:
            continue
        enterprise_scores[eid] = sum(station_scores[sid] for sid in members) / len(members)
    return OracleScores(item_scores, list_scores, station_scores, enterprise_scores)


# --- ledger verification ----------------------------------------------------------


@dataclass(frozen=True)
class Divergence:
    day: str
    level: str
    subject_id: str
    stored: float | None
    recomputed: float | None

    def to_json(self) -> dict:
        return {"date": self.day, "level": self.level, "subject_id": self.subject_id,
                "stored": self.stored, "recomputed": self.recomputed}


@dataclass
class VerifyReport:
    ok: bool
    days_checked: int
    events_checked: int
    divergence: Divergence | None = None

    def to_json(self) -> dict:
        return {
            "ok": self.ok,
            "days_checked": self.days_checked,
            "events_checked": self.events_checked,
            "divergence": self.divergence.to_json() if self.divergence else None,
        }


def verify_data_dir(data_dir: str | Path) -> VerifyReport:
    """Recompute every stored snapshot from the raw ledger and compare.

    Passes only if every value at every level of every snapshot matches the
    recomputation within 1e-9. The first divergence found (scanning dates in
    order, levels coarse to fine) is reported.
    """
    data_dir = Path(data_dir)
    view = load_graph_view(data_dir / "graph.jsonl")
    events = [record for _, record in iter_jsonl(data_dir / "events.jsonl")]
    snapshot_dir = data_dir / "snapshots"
    snapshot_paths = sorted(snapshot_dir.glob("*.json")) if snapshot_dir.exists() else []
    days_checked = 0
    for path in snapshot_paths:
        stored = json.loads(path.read_text(encoding="utf-8"))
        day = date.fromisoformat(stored["date"])
        recomputed = replay_scores(view, events, day)
        for level in ("enterprise", "station", "list", "item"):
            stored_map: Mapping[str, Any] = stored.get(f"{level}_scores", {})
            fresh_map = recomputed.level(level)
            for subject in sorted(set(stored_map) | set(fresh_map)):
                stored_value = stored_map.get(subject)
                fresh_value = fresh_map.get(subject)
                if (stored_value is None or fresh_value is None
                        or abs(stored_value - fresh_value) > TOLERANCE):
                    return VerifyReport(
                        ok=False, days_checked=days_checked, events_checked=len(events),
                        divergence=Divergence(day.isoformat(), level, subject,
                                              stored_value, fresh_value))
        days_checked += 1
    return VerifyReport(ok=True, days_checked=days_checked, events_checked=len(events))


def simulate_day_closes(view: GraphView, events: Iterable[Mapping[str, Any]],
                        days: Iterable[date]) -> dict[date, OracleScores]:
    """Scores for a run of day closes, recomputed independently per day."""
    events = list(events)
    return {day: replay_scores(view, events, day) for day in days}

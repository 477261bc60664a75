"""Persistence and replay: the data directory is the source of truth.

Layout::

    <data_dir>/
      graph.jsonl     append-only graph mutations (entities, templates,
                      threshold rules, duty generation requests)
      events.jsonl    append-only score-event ledger, one event per line
      readings.jsonl  append-only accepted sensor readings
      snapshots/      one immutable JSON document per closed day
      .lock           single-writer lock

Startup replays: graph log first (configuration before data), then the
event ledger in append order, then the reading log (breach states rebuild;
re-derived emissions carry deterministic ids and dedup to no-ops), then the
persisted snapshots, and finally the close-day pipeline is re-run for every
closed date so scheduler/telemetry day-state matches the original run -
again emitting only duplicates. Replays therefore never grow the logs.

Mutations are validated before anything is written, and all writes are
serialized through one lock (single-writer contract); reads are safe against
the in-memory state at any time.
"""

from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Any, IO, Mapping

from filelock import FileLock, Timeout

from .errors import (
    AlreadyClosed,
    CorruptLedger,
    DataDirLocked,
    NoPendingInstance,
)
from .model import GraphStore, PeriodicRule, Role, Template, parse_template
from .scheduler import DutyScheduler
from .scoring import BandPolicy, DailySnapshot, EventKind, ScoreEvent, ScoringEngine
from .telemetry import SensorReading, TelemetryEngine, ThresholdRule
from .timeutil import parse_day

logger = logging.getLogger(__name__)


def read_jsonl(path: Path) -> list[tuple[int, dict]]:
    """Strict line-delimited JSON reader; torn lines raise CorruptLedger."""
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


class _AppendLog:
    def __init__(self, path: Path) -> None:
        self.path = path
        self._handle: IO[str] | None = None

    def append(self, record: Mapping[str, Any]) -> None:
        if self._handle is None:
            self._handle = self.path.open("a", encoding="utf-8")
        self._handle.write(json.dumps(record, separators=(",", ":")) + "\n")
        self._handle.flush()

    def close(self) -> None:
        if self._handle is not None:
            self._handle.close()
            self._handle = None


@dataclass
class IngestResult:
    applied: bool
    event_ids: list[str]


class Store:
    """Facade over the graph, scoring, telemetry and scheduling engines
    with everything durably logged and replayable."""

    def __init__(self, data_dir: str | Path, band_policy: BandPolicy | None = None,
                 categories: tuple[str, ...] | None = None) -> None:
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        (self.data_dir / "snapshots").mkdir(exist_ok=True)
        self.band_policy = band_policy or BandPolicy()
        # thread_local=False: the service acquires in the main thread and
        # releases from the event-loop thread at shutdown
        self._lock = FileLock(str(self.data_dir / ".lock"), thread_local=False)
        try:
            self._lock.acquire(timeout=0.1)
        except Timeout:
            raise DataDirLocked(f"data dir {self.data_dir} is locked by another writer")
        self._write_mutex = threading.Lock()
        self.graph = GraphStore(categories) if categories else GraphStore()
        self.engine = ScoringEngine(self.graph)
        self.telemetry = TelemetryEngine(self.graph)
        self.scheduler = DutyScheduler(self.graph)
        self._graph_log = _AppendLog(self.data_dir / "graph.jsonl")
        self._event_log = _AppendLog(self.data_dir / "events.jsonl")
        self._reading_log = _AppendLog(self.data_dir / "readings.jsonl")
        self._replay()

    def close(self) -> None:
        self._graph_log.close()
        self._event_log.close()
        self._reading_log.close()
        self._lock.release()

    def __enter__(self) -> "Store":
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()

    # -- replay -----------------------------------------------------------------

    def _replay(self) -> None:
        graph_records = read_jsonl(self.data_dir / "graph.jsonl")
        for _, entry in graph_records:
            self._apply_graph_entry(entry)
        event_records = read_jsonl(self.data_dir / "events.jsonl")
        for _, record in event_records:
            event = ScoreEvent.from_json(record)
            self.engine.apply_event(event)
            self._match_completion(event)
        for _, record in read_jsonl(self.data_dir / "readings.jsonl"):
            reading = SensorReading.from_json(record)
            for event in self.telemetry.ingest_reading(reading):
                if not self.engine.has_event(event.event_id):
                    # reading accepted before a crash ate its emissions
                    self.engine.apply_event(event)
                    self._event_log.append(event.to_json())
        closed: list[DailySnapshot] = []
        snapshot_dir = self.data_dir / "snapshots"
        for path in sorted(snapshot_dir.glob("*.json")):
            closed.append(DailySnapshot.from_json(
                json.loads(path.read_text(encoding="utf-8"))))
        # re-run the day pipeline so sweep/accrual state matches the original
        # run; deterministic event ids make every emission a dedup no-op.
        for snap in closed:
            self._run_sweep_and_accrual(snap.date)
            self.engine.load_snapshot(snap)
        if graph_records or event_records:
            logger.info("replayed %d graph mutations, %d events, %d closed days",
                        len(graph_records), len(event_records), len(closed))

    def _apply_graph_entry(self, entry: Mapping[str, Any]) -> None:
        op = entry.get("op")
        data = entry.get("data", {})
        if op == "add_company":
            self.graph.add_company(data["name"], id=data["id"])
        elif op == "add_personnel":
            self.graph.add_personnel(entry["company_id"], data["name"],
                                     Role(data["role"]), id=data["id"])
        elif op == "add_enterprise":
            self.graph.add_enterprise(entry["company_id"], data["name"],
                                      data["category"], id=data["id"])
        elif op == "add_station":
            self.graph.add_station(entry["enterprise_id"], data["name"],
                                   data["personnel_id"], id=data["id"])
        elif op == "add_list":
            self.graph.add_list(data["station_id"], data["list_weight"], id=data["id"])
        elif op == "add_item":
            rule = PeriodicRule.from_json(data["periodic_rule"]) \
                if data.get("periodic_rule") else None
            self.graph.add_item(data["list_id"], data["description"],
                                data["legal_basis"], data["weight"],
                                rule, id=data["id"])
        elif op == "delete_entity":
            self.graph.delete_entity(entry["id"])
        elif op == "register_template":
            self.graph.register_template(data)
        elif op == "derive_lists":
            self.graph.record_derived(entry["station_id"], entry["template_id"],
                                      entry["list_ids"])
        elif op == "register_rule":
            self.telemetry.register_rule(data)
        elif op == "generate_duties":
            self.scheduler.generate_instances(entry["item_id"],
                                              parse_day(entry["anchor"]),
                                              entry["horizon_days"])
        else:
            raise CorruptLedger(f"unknown graph log op {op!r}")

    def _match_completion(self, event: ScoreEvent) -> None:
        if event.kind is not EventKind.completion:
            return
        try:
            self.scheduler.mark_completed(event.item_id, event)
        except NoPendingInstance:
            # completion without a scheduled duty stays in the ledger
            # but discharges nothing
            pass

    # -- graph mutations -----------------------------------------------------------

    def _log_graph(self, entry: dict) -> None:
        self._graph_log.append(entry)

    def add_company(self, name: str, id: str | None = None):
        with self._write_mutex:
            company = self.graph.add_company(name, id=id)
            self._log_graph({"op": "add_company", "data": company.to_json()})
            return company

    def add_personnel(self, company_id: str, name: str, role: Role | str,
                      id: str | None = None):
        with self._write_mutex:
            person = self.graph.add_personnel(company_id, name, role, id=id)
            self._log_graph({"op": "add_personnel", "company_id": company_id,
                             "data": person.to_json()})
            return person

    def add_enterprise(self, company_id: str, name: str, category: str,
                       id: str | None = None):
        with self._write_mutex:
            enterprise = self.graph.add_enterprise(company_id, name, category, id=id)
            self._log_graph({"op": "add_enterprise", "company_id": company_id,
                             "data": enterprise.to_json()})
            return enterprise

    def add_station(self, enterprise_id: str, name: str, personnel_id: str,
                    id: str | None = None):
        with self._write_mutex:
            station = self.graph.add_station(enterprise_id, name, personnel_id, id=id)
            self._log_graph({"op": "add_station", "enterprise_id": enterprise_id,
                             "data": station.to_json()})
            return station

    def add_list(self, station_id: str, weight: float, id: str | None = None):
        with self._write_mutex:
            rlist = self.graph.add_list(station_id, weight, id=id)
            self._log_graph({"op": "add_list", "data": rlist.to_json()})
            return rlist

    def add_item(self, list_id: str, description: str, legal_basis: str,
                 weight: float, periodic_rule=None, id: str | None = None):
        with self._write_mutex:
            item = self.graph.add_item(list_id, description, legal_basis, weight,
                                       periodic_rule, id=id)
            self._log_graph({"op": "add_item", "data": item.to_json()})
            return item

    def delete_entity(self, entity_id: str) -> None:
        with self._write_mutex:
            self.graph.delete_entity(entity_id)
            self._log_graph({"op": "delete_entity", "id": entity_id})

    def register_template(self, template: Template | Mapping[str, Any]) -> Template:
        with self._write_mutex:
            if not isinstance(template, Template):
                template = parse_template(template, self.graph.categories)
            previous = self.graph.templates.get(template.template_id)
            parsed = self.graph.register_template(template)
            if previous != parsed:  # idempotent re-registration must not grow the log
                self._log_graph({"op": "register_template", "data": parsed.to_json()})
            return parsed

    def derive_station_lists(self, station_id: str, template_id: str) -> list[str]:
        with self._write_mutex:
            already = self.graph.derived_lists(station_id, template_id)
            if already is not None:
                return already
            created = self.graph.derive_station_lists(station_id, template_id)
            for lid in created:
                rlist = self.graph.lists[lid]
                self._log_graph({"op": "add_list", "data": rlist.to_json()})
                for iid in rlist.item_ids:
                    self._log_graph({"op": "add_item",
                                     "data": self.graph.items[iid].to_json()})
            self._log_graph({"op": "derive_lists", "station_id": station_id,
                             "template_id": template_id, "list_ids": created})
            return created

    def register_rule(self, rule: ThresholdRule | Mapping[str, Any]) -> str:
        with self._write_mutex:
            if not isinstance(rule, ThresholdRule):
                rule = ThresholdRule.from_json(rule)
            previous = self.telemetry.rules.get(rule.rule_id)
            rule_id = self.telemetry.register_rule(rule)
            if previous != rule:
                self._log_graph({"op": "register_rule", "data": rule.to_json()})
            return rule_id

    def generate_duties(self, item_id: str, anchor: date, horizon_days: int):
        with self._write_mutex:
            instances = self.scheduler.generate_instances(item_id, anchor, horizon_days)
            self._log_graph({"op": "generate_duties", "item_id": item_id,
                             "anchor": anchor.isoformat(),
                             "horizon_days": horizon_days})
            return instances

    # -- event / reading ingestion ----------------------------------------------------

    def ingest_event(self, event: ScoreEvent | Mapping[str, Any]) -> IngestResult:
        """Validate, apply and persist one score event; duplicates no-op."""
        if not isinstance(event, ScoreEvent):
            event = ScoreEvent.from_json(event)
        with self._write_mutex:
            if self.engine.has_event(event.event_id):
                return IngestResult(applied=False, event_ids=[event.event_id])
            self.engine.apply_event(event)
            self._event_log.append(event.to_json())
            self._match_completion(event)
            return IngestResult(applied=True, event_ids=[event.event_id])

    def ingest_reading(self, reading: SensorReading | Mapping[str, Any]) -> IngestResult:
        """Evaluate a reading against the rules; persists it plus any deductions."""
        if not isinstance(reading, SensorReading):
            reading = SensorReading.from_json(reading)
        with self._write_mutex:
            if self.telemetry.has_reading(reading.reading_id):
                return IngestResult(applied=False, event_ids=[])
            emitted = self.telemetry.ingest_reading(reading)
            self._reading_log.append(reading.to_json())
            event_ids = []
            for event in emitted:
                if not self.engine.has_event(event.event_id):
                    self.engine.apply_event(event)
                    self._event_log.append(event.to_json())
                event_ids.append(event.event_id)
            return IngestResult(applied=True, event_ids=event_ids)

    # -- day pipeline -----------------------------------------------------------------

    def _run_sweep_and_accrual(self, day: date) -> tuple[list[str], list[str]]:
        overdue_ids, breach_ids = [], []
        if not self.scheduler.is_swept(day):
            for event in self.scheduler.sweep_overdue(day):
                if not self.engine.has_event(event.event_id):
                    self.engine.apply_event(event)
                    self._event_log.append(event.to_json())
                overdue_ids.append(event.event_id)
        if not self.telemetry.is_accrued(day):
            for event in self.telemetry.accrue_daily_breaches(day):
                if not self.engine.has_event(event.event_id):
                    self.engine.apply_event(event)
                    self._event_log.append(event.to_json())
                breach_ids.append(event.event_id)
        return overdue_ids, breach_ids

    def close_day(self, day: date) -> DailySnapshot:
        """Sweep duties, accrue per-day breaches, then freeze the snapshot."""
        with self._write_mutex:
            if self.engine.is_closed(day):
                raise AlreadyClosed(f"day {day.isoformat()} is already closed")
            self._run_sweep_and_accrual(day)
            snap = self.engine.close_day(day)
            path = self.data_dir / "snapshots" / f"{day.isoformat()}.json"
            path.write_text(json.dumps(snap.to_json(), indent=2, sort_keys=True) + "\n",
                            encoding="utf-8")
            return snap

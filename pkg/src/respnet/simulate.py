"""Deterministic synthetic workloads: seeded traces driven day by day.

``run_scenario`` generates event and reading traces from an explicit RNG
seed, ingests them in chronological order with a close-day after each
simulated day, and reports the final scores at every level. Identical
(seed, spec) pairs produce byte-identical traces and reports; there is no
ambient randomness and no wall-clock access anywhere in the pipeline.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import asdict, dataclass
from datetime import date, datetime, time, timedelta
from pathlib import Path

from .errors import InvalidSpec
from .scoring import EventKind
from .storage import Store
from .timeutil import UTC, format_instant

DEFAULT_START = date(2024, 1, 1)

_DEDUCTION_REASONS = (
    "blocked emergency exit",
    "housekeeping lapse in equipment room",
    "expired inspection tag",
    "obstructed sprinkler head",
    "unlogged contractor hot work",
)
_AWARD_REASONS = (
    "hazard reported proactively",
    "drill completed ahead of schedule",
)


@dataclass(frozen=True)
class ScenarioSpec:
    seed: int = 42
    days: int = 30
    enterprises: int = 2
    stations_per_enterprise: int = 2
    items_per_list: int = 3
    event_rate: float = 2.0
    breach_rate: float = 0.6

    def __post_init__(self) -> None:
        if self.days < 1 or self.enterprises < 1 or self.stations_per_enterprise < 1 \
                or self.items_per_list < 1:
            raise InvalidSpec("scenario counts must be >= 1", field="spec")
        if self.event_rate < 0 or self.breach_rate < 0:
            raise InvalidSpec("scenario rates must be >= 0", field="spec")


def _poisson(rng: random.Random, lam: float) -> int:
    if lam <= 0:
        return 0
    threshold = math.exp(-lam)
    k, p = 0, 1.0
    while True:
        p *= rng.random()
        if p <= threshold:
            return k
        k += 1


def build_scenario_graph(store: Store, spec: ScenarioSpec) -> None:
    """Uniform synthetic graph sized by the spec counts, with periodic rules
    on every third item and one sensor rule per enterprise."""
    categories = store.graph.categories
    company = store.add_company("Scenario Safety Services", id="co-sim")
    methods = ("fixed_penalty", "per_day_penalty")
    modes = ("once_per_breach", "per_day_while_active", "per_occurrence")
    item_counter = 0
    for e in range(spec.enterprises):
        enterprise = store.add_enterprise(
            company.id, f"Enterprise {e + 1}", categories[e % len(categories)],
            id=f"en-sim-{e + 1}")
        first_item_of_enterprise = None
        for s in range(spec.stations_per_enterprise):
            role = "leader" if s == 0 else "staff"
            person = store.add_personnel(
                company.id, f"Person E{e + 1}S{s + 1}", role,
                id=f"pe-sim-{e + 1}-{s + 1}")
            station = store.add_station(
                enterprise.id, f"Station E{e + 1}S{s + 1}", person.id,
                id=f"st-sim-{e + 1}-{s + 1}")
            for l in range(2):
                rlist = store.add_list(station.id, weight=l + 1)
                for i in range(spec.items_per_list):
                    item_counter += 1
                    rule = None
                    if item_counter % 3 == 0:
                        rule = {
                            "cycle_days": 3 + (item_counter % 5),
                            "grace_days": item_counter % 3,
                            "score_method": methods[item_counter % 2],
                            "penalty_points": 2 + (item_counter % 7),
                        }
                    item = store.add_item(
                        rlist.id, f"duty {item_counter}", f"reg {item_counter}",
                        weight=1 + (item_counter % 4), periodic_rule=rule)
                    if first_item_of_enterprise is None:
                        first_item_of_enterprise = item.id
        store.register_rule({
            "rule_id": f"rule-sim-{e + 1}",
            "sensor_id": f"sensor-{e + 1}",
            "metric": "pressure",
            "comparator": "gt",
            "critical_value": 1.2,
            "unit": "MPa",
            "deduction_mode": modes[e % len(modes)],
            "penalty_points": 2 + e,
            "target_item_id": first_item_of_enterprise,
            "cooldown_hours": 6,
        })


def _station_items(store: Store, station_id: str) -> list[str]:
    items: list[str] = []
    for lid in store.graph.stations[station_id].list_ids:
        items.extend(store.graph.lists[lid].item_ids)
    return items


DUTY_COMPLETION_RATE = 0.75  # share of scheduled duties staff execute on time


def generate_traces(store: Store, spec: ScenarioSpec,
                    start: date = DEFAULT_START) -> tuple[list[dict], list[dict]]:
    """Seeded event/reading traces over the scenario window, in ingestion order.

    Two event layers: scheduled duties are completed on their due date with
    probability DUTY_COMPLETION_RATE (the rest lapse into overdue sweeps),
    and a random layer of manual deductions/awards/spontaneous completions
    arrives at ``event_rate`` per station per day.
    """
    rng = random.Random(spec.seed)
    station_ids = sorted(store.graph.stations)
    rule_ids = sorted(store.telemetry.rules)
    duties_by_day: dict[date, list[str]] = {}
    for inst in store.scheduler.instances():
        duties_by_day.setdefault(inst.due_date, []).append(inst.item_id)
    events: list[dict] = []
    readings: list[dict] = []
    for day_index in range(spec.days):
        day = start + timedelta(days=day_index)
        day_readings: list[dict] = []
        for rule_id in rule_ids:
            rule = store.telemetry.rules[rule_id]
            samples = 4
            per_sample = min(1.0, spec.breach_rate / samples)
            for sample in range(samples):
                ts = datetime.combine(day, time(hour=2 + sample * 5,
                                                minute=rng.randrange(60)), tzinfo=UTC)
                breaching = rng.random() < per_sample
                magnitude = round(rng.uniform(0.05, 0.4), 3)
                if rule.comparator.value in ("gt", "ge"):
                    value = rule.critical_value + (magnitude if breaching else -magnitude)
                else:
                    value = rule.critical_value - (magnitude if breaching else -magnitude)
                day_readings.append({
                    "reading_id": f"rd-{spec.seed}-{day_index:03d}-{len(day_readings):03d}",
                    "sensor_id": rule.sensor_id,
                    "metric": rule.metric,
                    "value": round(value, 3),
                    "unit": rule.unit,
                    "timestamp": format_instant(ts),
                })
        day_events: list[tuple[datetime, dict]] = []
        for item_id in sorted(duties_by_day.get(day, [])):
            if rng.random() < DUTY_COMPLETION_RATE:
                ts = datetime.combine(day, time(hour=rng.randrange(8, 18),
                                                minute=rng.randrange(60)), tzinfo=UTC)
                day_events.append((ts, {
                    "timestamp": format_instant(ts),
                    "item_id": item_id,
                    "kind": "completion",
                    "points": 0.0,
                    "reason": "scheduled duty executed",
                    "source": "perception",
                }))
        for station_id in station_ids:
            item_ids = _station_items(store, station_id)
            if not item_ids:
                continue
            # the first item of each station draws double traffic, so some
            # items reliably sink below the yellow band over a month
            weights = [2 if i == 0 else 1 for i in range(len(item_ids))]
            for _ in range(_poisson(rng, spec.event_rate)):
                item_id = rng.choices(item_ids, weights=weights, k=1)[0]
                ts = datetime.combine(day, time(hour=rng.randrange(8, 20),
                                                minute=rng.randrange(60)), tzinfo=UTC)
                roll = rng.random()
                if roll < 0.3:
                    kind, points = "completion", 0.0
                    reason = "duty executed"
                    source = "perception"
                elif roll < 0.8:
                    kind = "manual_deduction"
                    points = -float(rng.choice((1, 2, 3, 5, 8)))
                    reason = rng.choice(_DEDUCTION_REASONS)
                    source = "manual"
                else:
                    kind, points = "award", float(rng.choice((1, 2)))
                    reason = rng.choice(_AWARD_REASONS)
                    source = "manual"
                day_events.append((ts, {
                    "timestamp": format_instant(ts),
                    "item_id": item_id,
                    "kind": kind,
                    "points": points,
                    "reason": reason,
                    "source": source,
                }))
        day_events.sort(key=lambda pair: pair[0])
        for seq, (_, event) in enumerate(day_events):
            event["event_id"] = f"ev-{spec.seed}-{day_index:03d}-{seq:03d}"
            events.append(event)
        readings.extend(day_readings)
    return events, readings


def run_scenario(store: Store, spec: ScenarioSpec, start: date = DEFAULT_START,
                 write_traces: bool = True) -> dict:
    """Drive a full scenario: duties, traces, day-by-day ingestion and closes."""
    if not store.graph.companies:
        build_scenario_graph(store, spec)
    if not store.graph.stations:
        raise InvalidSpec("graph has no stations; seed it first", field="graph")

    for item_id in sorted(store.graph.items):
        if store.graph.items[item_id].periodic_rule is not None:
            store.generate_duties(item_id, anchor=start, horizon_days=spec.days)

    events, readings = generate_traces(store, spec, start)
    events_by_day: dict[str, list[dict]] = {}
    for event in events:
        events_by_day.setdefault(event["timestamp"][:10], []).append(event)
    readings_by_day: dict[str, list[dict]] = {}
    for reading in readings:
        readings_by_day.setdefault(reading["timestamp"][:10], []).append(reading)

    emitted_telemetry = 0
    overdue_before = _count_overdue_events(store)
    for day_index in range(spec.days):
        day = start + timedelta(days=day_index)
        key = day.isoformat()
        for reading in readings_by_day.get(key, []):
            emitted_telemetry += len(store.ingest_reading(reading).event_ids)
        for event in events_by_day.get(key, []):
            store.ingest_event(event)
        store.close_day(day)
    final_day = start + timedelta(days=spec.days - 1)
    snap = store.engine.snapshot(final_day)

    report = {
        "spec": asdict(spec),
        "start": start.isoformat(),
        "final_date": final_day.isoformat(),
        "events_ingested": len(events),
        "readings_ingested": len(readings),
        "telemetry_events": emitted_telemetry,
        "overdue_events": _count_overdue_events(store) - overdue_before,
        "scores": {
            "enterprises": snap.enterprise_scores,
            "stations": snap.station_scores,
            "lists": snap.list_scores,
            "items": snap.item_scores,
        },
    }
    if write_traces:
        traces_dir = store.data_dir / "traces"
        traces_dir.mkdir(exist_ok=True)
        _write_jsonl(traces_dir / f"events-{spec.seed}.jsonl", events)
        _write_jsonl(traces_dir / f"readings-{spec.seed}.jsonl", readings)
        report_path = traces_dir / f"report-{spec.seed}.json"
        report_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n",
                               encoding="utf-8")
    return report


def _count_overdue_events(store: Store) -> int:
    return sum(1 for e in store.engine.events_in_order()
               if e.kind is EventKind.overdue_duty)


def _write_jsonl(path: Path, records: list[dict]) -> None:
    with path.open("w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, sort_keys=True) + "\n")

"""Sensor-reading ingestion and threshold rules that emit score deductions.

A rule matches readings on (sensor_id, metric) and compares the value
against its critical value. Three deduction modes:

* ``once_per_breach``   - one event at breach onset; nothing more until a
                          non-breaching reading clears the breach. Missing
                          data never clears a breach (fail-safe).
* ``per_occurrence``    - one event per breaching reading, rate-limited so
                          consecutive emissions are >= cooldown_hours apart.
* ``per_day_while_active`` - no events at ingestion; ``accrue_daily_breaches``
                          emits one end-of-day event for every day the breach
                          was active at any instant.

Emitted events carry deterministic ids (``tb-<rule>-<reading>`` or
``tb-<rule>-<date>``), so re-processing a reading stream re-produces the
identical event set and the ledger's dedup makes replay a no-op.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from enum import Enum
from typing import Any, Mapping

from .errors import AlreadyAccrued, InvalidRule, InvalidSpec, UnitMismatch, UnknownTargetItem
from .model import GraphStore
from .scoring import EventKind, EventSource, ScoreEvent
from .timeutil import day_end, day_start, format_instant, parse_instant


class Comparator(str, Enum):
    gt = "gt"
    ge = "ge"
    lt = "lt"
    le = "le"

    def holds(self, value: float, critical: float) -> bool:
        if self is Comparator.gt:
            return value > critical
        if self is Comparator.ge:
            return value >= critical
        if self is Comparator.lt:
            return value < critical
        return value <= critical


class DeductionMode(str, Enum):
    once_per_breach = "once_per_breach"
    per_day_while_active = "per_day_while_active"
    per_occurrence = "per_occurrence"


@dataclass(frozen=True)
class SensorReading:
    reading_id: str
    sensor_id: str
    metric: str
    value: float
    unit: str
    timestamp: datetime

    def to_json(self) -> dict:
        return {
            "reading_id": self.reading_id,
            "sensor_id": self.sensor_id,
            "metric": self.metric,
            "value": self.value,
            "unit": self.unit,
            "timestamp": format_instant(self.timestamp),
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "SensorReading":
        missing = {"reading_id", "sensor_id", "metric", "value", "unit",
                   "timestamp"} - set(data)
        if missing:
            raise InvalidSpec(f"reading missing fields {sorted(missing)}", field="reading")
        try:
            value = float(data["value"])
        except (TypeError, ValueError):
            raise InvalidSpec("value must be a number", field="value")
        return cls(
            reading_id=str(data["reading_id"]),
            sensor_id=str(data["sensor_id"]),
            metric=str(data["metric"]),
            value=value,
            unit=str(data["unit"]),
            timestamp=parse_instant(data["timestamp"]),
        )


@dataclass(frozen=True)
class ThresholdRule:
    rule_id: str
    sensor_id: str
    metric: str
    comparator: Comparator
    critical_value: float
    unit: str
    deduction_mode: DeductionMode
    penalty_points: float
    target_item_id: str
    cooldown_hours: float = 0.0

    def to_json(self) -> dict:
        return {
            "rule_id": self.rule_id,
            "sensor_id": self.sensor_id,
            "metric": self.metric,
            "comparator": self.comparator.value,
            "critical_value": self.critical_value,
            "unit": self.unit,
            "deduction_mode": self.deduction_mode.value,
            "penalty_points": self.penalty_points,
            "target_item_id": self.target_item_id,
            "cooldown_hours": self.cooldown_hours,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "ThresholdRule":
        missing = {"rule_id", "sensor_id", "metric", "critical_value", "unit",
                   "penalty_points", "target_item_id"} - set(data)
        if missing:
            raise InvalidRule(f"rule missing fields {sorted(missing)}")
        try:
            comparator = Comparator(data.get("comparator", "gt"))
        except ValueError:
            raise InvalidRule(f"unknown comparator {data['comparator']!r}")
        try:
            mode = DeductionMode(data.get("deduction_mode", "once_per_breach"))
        except ValueError:
            raise InvalidRule(f"unknown deduction_mode {data['deduction_mode']!r}")
        return cls(
            rule_id=str(data["rule_id"]),
            sensor_id=str(data["sensor_id"]),
            metric=str(data["metric"]),
            comparator=comparator,
            critical_value=float(data["critical_value"]),
            unit=str(data["unit"]),
            deduction_mode=mode,
            penalty_points=float(data["penalty_points"]),
            target_item_id=str(data["target_item_id"]),
            cooldown_hours=float(data.get("cooldown_hours", 0.0)),
        )


@dataclass
class BreachState:
    rule_id: str
    active: bool = False
    since: datetime | None = None
    last_fired: datetime | None = None
    # closed and open activity windows, for day-level accrual
    intervals: list[tuple[datetime, datetime | None]] = field(default_factory=list)

    def active_during(self, day: date) -> bool:
        lo, hi = day_start(day), day_start(day + timedelta(days=1))
        for start, end in self.intervals:
            if start < hi and (end is None or end > lo):
                return True
        return False


class TelemetryEngine:
    """Evaluates registered rules against the reading stream."""

    def __init__(self, graph: GraphStore) -> None:
        self.graph = graph
        self.rules: dict[str, ThresholdRule] = {}
        self._states: dict[str, BreachState] = {}
        self._seen_readings: set[str] = set()
        self._accrued: set[date] = set()

    # -- rules -------------------------------------------------------------

    def register_rule(self, rule: ThresholdRule | Mapping[str, Any]) -> str:
        if not isinstance(rule, ThresholdRule):
            rule = ThresholdRule.from_json(rule)
        if rule.target_item_id not in self.graph.items:
            raise UnknownTargetItem(f"item {rule.target_item_id!r} does not exist")
        if not 0 < rule.penalty_points <= 100:
            raise InvalidRule(f"penalty_points must be in (0, 100], got {rule.penalty_points}")
        if rule.cooldown_hours < 0:
            raise InvalidRule("cooldown_hours must be non-negative")
        if not rule.sensor_id or not rule.metric or not rule.unit:
            raise InvalidRule("sensor_id, metric and unit must be non-empty")
        # replacement is atomic and resets the breach state
        self.rules[rule.rule_id] = rule
        self._states[rule.rule_id] = BreachState(rule_id=rule.rule_id)
        return rule.rule_id

    def state_of(self, rule_id: str) -> BreachState:
        return self._states[rule_id]

    def has_reading(self, reading_id: str) -> bool:
        return reading_id in self._seen_readings

    # -- ingestion ------------------------------------------------------------

    def ingest_reading(self, reading: SensorReading) -> list[ScoreEvent]:
        """Evaluate one reading; returns the deduction events it triggers.

        Duplicate reading_ids are a no-op. A UnitMismatch against any
        candidate rule rejects the reading before any state changes.
        """
        if reading.reading_id in self._seen_readings:
            return []
        candidates = [
            self.rules[rid] for rid in sorted(self.rules)
            if self.rules[rid].sensor_id == reading.sensor_id
            and self.rules[rid].metric == reading.metric
        ]
        for rule in candidates:
            if rule.unit != reading.unit:
                raise UnitMismatch(
                    f"reading unit {reading.unit!r} does not match rule "
                    f"{rule.rule_id!r} unit {rule.unit!r}")
        emitted = []
        for rule in candidates:
            state = self._states[rule.rule_id]
            if rule.comparator.holds(reading.value, rule.critical_value):
                onset = not state.active
                if onset:
                    state.active = True
                    state.since = reading.timestamp
                    state.intervals.append((reading.timestamp, None))
                if rule.deduction_mode is DeductionMode.once_per_breach and onset:
                    emitted.append(self._breach_event(rule, reading))
                elif rule.deduction_mode is DeductionMode.per_occurrence:
                    cooldown = timedelta(hours=rule.cooldown_hours)
                    if (state.last_fired is None
                            or reading.timestamp - state.last_fired >= cooldown):
                        emitted.append(self._breach_event(rule, reading))
                        state.last_fired = reading.timestamp
            else:
                if state.active:
                    state.active = False
                    start, _ = state.intervals[-1]
                    state.intervals[-1] = (start, reading.timestamp)
        self._seen_readings.add(reading.reading_id)
        return emitted

    def _breach_event(self, rule: ThresholdRule, reading: SensorReading) -> ScoreEvent:
        return ScoreEvent(
            event_id=f"tb-{rule.rule_id}-{reading.reading_id}",
            timestamp=reading.timestamp,
            item_id=rule.target_item_id,
            kind=EventKind.telemetry_breach,
            points=-rule.penalty_points,
            reason=(f"rule {rule.rule_id}: {rule.metric} {reading.value:g}{reading.unit} "
                    f"vs {rule.critical_value:g}"),
            source=EventSource.iot,
        )

    # -- daily accrual ------------------------------------------------------------

    def is_accrued(self, day: date) -> bool:
        return day in self._accrued

    def accrue_daily_breaches(self, day: date) -> list[ScoreEvent]:
        """One end-of-day deduction per per-day rule active at any instant of the day."""
        if day in self._accrued:
            raise AlreadyAccrued(f"daily breaches for {day.isoformat()} already accrued")
        emitted = []
        for rule_id in sorted(self.rules):
            rule = self.rules[rule_id]
            if rule.deduction_mode is not DeductionMode.per_day_while_active:
                continue
            if self._states[rule_id].active_during(day):
                emitted.append(ScoreEvent(
                    event_id=f"tb-{rule_id}-{day.isoformat()}",
                    timestamp=day_end(day),
                    item_id=rule.target_item_id,
                    kind=EventKind.telemetry_breach,
                    points=-rule.penalty_points,
                    reason=f"rule {rule_id}: {rule.metric} breach active on {day.isoformat()}",
                    source=EventSource.iot,
                ))
        self._accrued.add(day)
        return emitted

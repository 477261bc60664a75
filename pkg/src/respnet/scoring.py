"""Event-sourced scoring: fold reasoned deltas into clamped monthly scores.

Scoring model
-------------
Every responsibility item starts each UTC calendar month at 100 points.
Score deltas arrive as ``ScoreEvent`` records (append-only, deduplicated by
``event_id``) and the authoritative score of an item on day ``d`` is the
left fold

    score = clamp(... clamp(clamp(100 + p1) + p2) ... + pn, 0, 100)

over that month's events with timestamp <= end of ``d``, sorted by
``(timestamp, event_id)``. Sorting by the event's own key rather than by
arrival makes the fold independent of ingestion order, so replays and
out-of-order deliveries converge on the same state.

Aggregation uses the hierarchy's normalized weights: a list is the weighted
mean of its items, a station the weighted mean of its lists, an enterprise
the unweighted mean of its stations. Closing a day freezes all four levels
into an immutable ``DailySnapshot`` together with the day's reason ledger;
afterwards events timestamped on that day are rejected.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from enum import Enum
from typing import Any, Iterable, Mapping

from .errors import (
    AlreadyClosed,
    EmptyChildren,
    InvalidSpec,
    LateEvent,
    MissingSnapshot,
    NoLeader,
    OutOfRange,
    UnknownEnterprise,
    UnknownEntity,
    UnknownItem,
    UnknownList,
)
from .model import GraphStore, Role
from .timeutil import (
    format_instant,
    month_start,
    next_day_start,
    parse_day,
    parse_instant,
    same_month,
)

FULL_SCORE = 100.0


class EventKind(str, Enum):
    completion = "completion"
    manual_deduction = "manual_deduction"
    telemetry_breach = "telemetry_breach"
    overdue_duty = "overdue_duty"
    award = "award"


class EventSource(str, Enum):
    perception = "perception"
    iot = "iot"
    manual = "manual"


DEDUCTION_KINDS = frozenset(
    {EventKind.manual_deduction, EventKind.telemetry_breach, EventKind.overdue_duty}
)


def clamp(score: float) -> float:
    return min(FULL_SCORE, max(0.0, score))


@dataclass(frozen=True)
class ScoreEvent:
    event_id: str
    timestamp: datetime
    item_id: str
    kind: EventKind
    points: float
    reason: str
    source: EventSource

    def __post_init__(self) -> None:
        if not self.event_id:
            raise InvalidSpec("event_id must be non-empty", field="event_id")
        if self.kind in DEDUCTION_KINDS and self.points > 0:
            raise InvalidSpec(
                f"{self.kind.value} events carry points <= 0, got {self.points}",
                field="points")
        if self.kind is EventKind.award and self.points < 0:
            raise InvalidSpec(f"award events carry points >= 0, got {self.points}",
                              field="points")
        if self.kind is EventKind.completion and self.points != 0:
            raise InvalidSpec("completion events carry 0 points; pair an award "
                              "for bonuses", field="points")

    @property
    def sort_key(self) -> tuple[datetime, str]:
        return (self.timestamp, self.event_id)

    def to_json(self) -> dict:
        return {
            "event_id": self.event_id,
            "timestamp": format_instant(self.timestamp),
            "item_id": self.item_id,
            "kind": self.kind.value,
            "points": self.points,
            "reason": self.reason,
            "source": self.source.value,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "ScoreEvent":
        missing = {"event_id", "timestamp", "item_id", "kind", "points",
                   "reason", "source"} - set(data)
        if missing:
            raise InvalidSpec(f"event missing fields {sorted(missing)}", field="event")
        try:
            kind = EventKind(data["kind"])
        except ValueError:
            raise InvalidSpec(f"unknown event kind {data['kind']!r}", field="kind")
        try:
            source = EventSource(data["source"])
        except ValueError:
            raise InvalidSpec(f"unknown event source {data['source']!r}", field="source")
        try:
            points = float(data["points"])
        except (TypeError, ValueError):
            raise InvalidSpec("points must be a number", field="points")
        return cls(
            event_id=str(data["event_id"]),
            timestamp=parse_instant(data["timestamp"]),
            item_id=str(data["item_id"]),
            kind=kind,
            points=points,
            reason=str(data["reason"]),
            source=source,
        )


@dataclass(frozen=True)
class ScoreState:
    item_id: str
    period_anchor: date  # first day of the scoring month
    score: float


@dataclass(frozen=True)
class BandPolicy:
    green_min: float = 85.0
    yellow_min: float = 70.0
    reminder_threshold: float = 70.0

    def __post_init__(self) -> None:
        if not (0 <= self.yellow_min < self.green_min <= 100):
            raise InvalidSpec(
                "band policy requires 0 <= yellow_min < green_min <= 100",
                field="band_policy", green_min=self.green_min, yellow_min=self.yellow_min)
        if self.reminder_threshold < 0 or self.reminder_threshold > 100:
            raise InvalidSpec("reminder_threshold must be in [0, 100]",
                              field="reminder_threshold")

    def to_json(self) -> dict:
        return {
            "green_min": self.green_min,
            "yellow_min": self.yellow_min,
            "reminder_threshold": self.reminder_threshold,
        }


class Band(str, Enum):
    red = "red"
    yellow = "yellow"
    green = "green"


def classify_band(score: float, policy: BandPolicy) -> Band:
    """Map a score to its safety band; red < yellow < green."""
    if not 0 <= score <= 100:
        raise OutOfRange(f"score {score} outside [0, 100]")
    if score >= policy.green_min:
        return Band.green
    if score >= policy.yellow_min:
        return Band.yellow
    return Band.red


@dataclass(frozen=True)
class ReasonEntry:
    item_id: str
    points: float
    reason: str
    source: EventSource

    def to_json(self) -> dict:
        return {
            "item_id": self.item_id,
            "points": self.points,
            "reason": self.reason,
            "source": self.source.value,
        }


@dataclass(frozen=True)
class DailySnapshot:
    date: date
    item_scores: dict[str, float]
    list_scores: dict[str, float]
    station_scores: dict[str, float]
    enterprise_scores: dict[str, float]
    reasons: tuple[ReasonEntry, ...]

    def to_json(self) -> dict:
        return {
            "date": self.date.isoformat(),
            "item_scores": dict(self.item_scores),
            "list_scores": dict(self.list_scores),
            "station_scores": dict(self.station_scores),
            "enterprise_scores": dict(self.enterprise_scores),
            "reasons": [r.to_json() for r in self.reasons],
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "DailySnapshot":
        return cls(
            date=parse_day(data["date"]),
            item_scores=dict(data["item_scores"]),
            list_scores=dict(data["list_scores"]),
            station_scores=dict(data["station_scores"]),
            enterprise_scores=dict(data["enterprise_scores"]),
            reasons=tuple(
                ReasonEntry(r["item_id"], float(r["points"]), r["reason"],
                            EventSource(r.get("source", "manual")))
                for r in data["reasons"]
            ),
        )


@dataclass(frozen=True)
class Notification:
    personnel_id: str
    subject_id: str
    score: float

    def to_json(self) -> dict:
        return {"personnel_id": self.personnel_id, "subject_id": self.subject_id,
                "score": self.score}


@dataclass(frozen=True)
class AccountabilityRow:
    item_id: str
    score: float
    station_id: str
    leader_personnel_id: str

    def to_json(self) -> dict:
        return {
            "item_id": self.item_id,
            "score": self.score,
            "station_id": self.station_id,
            "leader_personnel_id": self.leader_personnel_id,
        }


@dataclass
class _ItemLedger:
    """Per-item event sequence kept sorted by (timestamp, event_id)."""

    keys: list[tuple[datetime, str]] = field(default_factory=list)
    events: list[ScoreEvent] = field(default_factory=list)

    def insert(self, event: ScoreEvent) -> None:
        index = bisect.bisect(self.keys, event.sort_key)
        self.keys.insert(index, event.sort_key)
        self.events.insert(index, event)


class ScoringEngine:
    """Folds the event ledger into scores and daily snapshots."""

    def __init__(self, graph: GraphStore) -> None:
        self.graph = graph
        self._events: dict[str, ScoreEvent] = {}
        self._by_item: dict[str, _ItemLedger] = {}
        self._snapshots: dict[date, DailySnapshot] = {}

    # -- ingestion -----------------------------------------------------------

    def has_event(self, event_id: str) -> bool:
        return event_id in self._events

    def events_in_order(self) -> list[ScoreEvent]:
        """All ingested events in global (timestamp, event_id) order."""
        return sorted(self._events.values(), key=lambda e: e.sort_key)

    def apply_event(self, event: ScoreEvent) -> ScoreState:
        """Ingest one event; duplicates are a no-op returning current state."""
        if event.item_id not in self.graph.items:
            raise UnknownItem(f"item {event.item_id!r} does not exist")
        event_day = event.timestamp.date()
        if event.event_id in self._events:
            return self._state_of(event.item_id, event_day)
        if event_day in self._snapshots:
            raise LateEvent(
                f"day {event_day.isoformat()} is closed; event {event.event_id!r} rejected")
        self._events[event.event_id] = event
        self._by_item.setdefault(event.item_id, _ItemLedger()).insert(event)
        return self._state_of(event.item_id, event_day)

    def _state_of(self, item_id: str, day: date) -> ScoreState:
        return ScoreState(item_id=item_id, period_anchor=month_start(day),
                          score=self.item_score(item_id, day))

    # -- scores --------------------------------------------------------------

    def item_score(self, item_id: str, as_of: date) -> float:
        if item_id not in self.graph.items:
            raise UnknownItem(f"item {item_id!r} does not exist")
        ledger = self._by_item.get(item_id)
        score = FULL_SCORE
        if ledger is None:
            return score
        cutoff = next_day_start(as_of)
        for event in ledger.events:
            if event.timestamp >= cutoff:
                break
            if same_month(event.timestamp.date(), as_of):
                score = clamp(score + event.points)
        return score

    def list_score(self, list_id: str, as_of: date) -> float:
        if list_id not in self.graph.lists:
            raise UnknownList(f"list {list_id!r} does not exist")
        weights = self.graph.normalized_item_weights(list_id)
        if not weights:
            raise EmptyChildren(f"list {list_id!r} has no items")
        return sum(w * self.item_score(iid, as_of) for iid, w in weights.items())

    def station_score(self, station_id: str, as_of: date) -> float:
        if station_id not in self.graph.stations:
            raise UnknownEntity(f"station {station_id!r} does not exist")
        weights = self.graph.normalized_list_weights(station_id)
        if not weights:
            raise EmptyChildren(f"station {station_id!r} has no lists")
        return sum(w * self.list_score(lid, as_of) for lid, w in weights.items())

    def enterprise_score(self, enterprise_id: str, as_of: date) -> float:
        enterprise = self.graph.enterprises.get(enterprise_id)
        if enterprise is None:
            raise UnknownEntity(f"enterprise {enterprise_id!r} does not exist")
        if not enterprise.station_ids:
            raise EmptyChildren(f"enterprise {enterprise_id!r} has no stations")
        scores = [self.station_score(sid, as_of) for sid in enterprise.station_ids]
        return sum(scores) / len(scores)

    # -- snapshots -----------------------------------------------------------

    def is_closed(self, day: date) -> bool:
        return day in self._snapshots

    def closed_days(self) -> list[date]:
        return sorted(self._snapshots)

    def snapshot(self, day: date) -> DailySnapshot:
        snap = self._snapshots.get(day)
        if snap is None:
            raise MissingSnapshot(f"no snapshot for {day.isoformat()}")
        return snap

    def load_snapshot(self, snap: DailySnapshot) -> None:
        """Replay hook: restore a persisted snapshot verbatim."""
        self._snapshots[snap.date] = snap

    def close_day(self, day: date) -> DailySnapshot:
        """Freeze the day: score all levels and collect the reason ledger.

        Entities without scoreable children (a station with no lists, an
        enterprise with no scored stations) are omitted from the maps rather
        than failing the close.
        """
        if day in self._snapshots:
            raise AlreadyClosed(f"day {day.isoformat()} is already closed")
        item_scores = {iid: self.item_score(iid, day) for iid in sorted(self.graph.items)}
        list_scores = {}
        for lid in sorted(self.graph.lists):
            if self.graph.lists[lid].item_ids:
                list_scores[lid] = self.list_score(lid, day)
        station_scores = {}
        for sid in sorted(self.graph.stations):
            if self.graph.stations[sid].list_ids:
                station_scores[sid] = self.station_score(sid, day)
        enterprise_scores = {}
        for eid in sorted(self.graph.enterprises):
            member_scores = [station_scores[sid]
                             for sid in self.graph.enterprises[eid].station_ids
                             if sid in station_scores]
            if member_scores:
                enterprise_scores[eid] = sum(member_scores) / len(member_scores)
        reasons = tuple(
            ReasonEntry(e.item_id, e.points, e.reason, e.source)
            for e in self.events_in_order()
            if e.timestamp.date() == day
        )
        snap = DailySnapshot(
            date=day,
            item_scores=item_scores,
            list_scores=list_scores,
            station_scores=station_scores,
            enterprise_scores=enterprise_scores,
            reasons=reasons,
        )
        self._snapshots[day] = snap
        return snap

    def score_series(self, subject_id: str, frm: date, to: date) -> list[tuple[date, float]]:
        """Daily closed-day values for one subject; never recomputed."""
        if frm > to:
            raise InvalidSpec("from must not be after to", field="from")
        level = self._level_of(subject_id)
        points = []
        day = frm
        while day <= to:
            snap = self._snapshots.get(day)
            if snap is None:
                raise MissingSnapshot(f"no snapshot for {day.isoformat()}")
            values: Mapping[str, float] = getattr(snap, f"{level}_scores")
            if subject_id not in values:
                raise UnknownEntity(
                    f"{subject_id!r} has no recorded score on {day.isoformat()}")
            points.append((day, values[subject_id]))
            day += timedelta(days=1)
        return points

    def _level_of(self, subject_id: str) -> str:
        if subject_id in self.graph.items:
            return "item"
        if subject_id in self.graph.lists:
            return "list"
        if subject_id in self.graph.stations:
            return "station"
        if subject_id in self.graph.enterprises:
            return "enterprise"
        raise UnknownEntity(f"{subject_id!r} is not a scoreable entity")

    # -- reports ---------------------------------------------------------------

    def low_score_reminders(self, as_of: date, policy: BandPolicy) -> list[Notification]:
        """One reminder per station under the threshold, worst first."""
        reminders = []
        for sid in sorted(self.graph.stations):
            station = self.graph.stations[sid]
            if not station.list_ids:
                continue
            score = self.station_score(sid, as_of)
            if score < policy.reminder_threshold:
                reminders.append(Notification(personnel_id=station.personnel_id,
                                              subject_id=sid, score=score))
        reminders.sort(key=lambda n: (n.score, n.subject_id))
        return reminders

    def enterprise_leader(self, enterprise_id: str) -> str:
        """The enterprise's accountable leader: the first leader-role personnel
        found scanning its stations in order."""
        enterprise = self.graph.enterprises.get(enterprise_id)
        if enterprise is None:
            raise UnknownEnterprise(f"enterprise {enterprise_id!r} does not exist")
        return self._find_leader(enterprise.station_ids)

    def accountability_report(self, enterprise_id: str, as_of: date,
                              policy: BandPolicy) -> list[AccountabilityRow]:
        """Items under yellow_min with their station and the enterprise leader."""
        enterprise = self.graph.enterprises.get(enterprise_id)
        if enterprise is None:
            raise UnknownEnterprise(f"enterprise {enterprise_id!r} does not exist")
        leader_id = self._find_leader(enterprise.station_ids)
        rows = []
        for sid in enterprise.station_ids:
            station = self.graph.stations.get(sid)
            if station is None:
                continue
            for lid in station.list_ids:
                for iid in self.graph.lists[lid].item_ids:
                    score = self.item_score(iid, as_of)
                    if score < policy.yellow_min:
                        rows.append(AccountabilityRow(item_id=iid, score=score,
                                                      station_id=sid,
                                                      leader_personnel_id=leader_id))
        rows.sort(key=lambda r: (r.score, r.item_id))
        return rows

    def _find_leader(self, station_ids: Iterable[str]) -> str:
        for sid in station_ids:
            station = self.graph.stations.get(sid)
            if station is None:
                continue
            person = self.graph.personnel.get(station.personnel_id)
            if person is not None and person.role is Role.leader:
                return person.id
        raise NoLeader("no personnel with role=leader among the enterprise's stations")

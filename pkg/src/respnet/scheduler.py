"""Periodic duty instances: generation, completion matching, overdue sweeps.

All operations take an explicit clock argument; nothing here reads wall-clock
time. Instance ids are derived from (item, due date), so regeneration and
replay are idempotent by construction.

Overdue semantics: an instance is overdue once ``due_date + grace_days <
clock``. For ``fixed_penalty`` items the single deduction is stamped on the
first overdue day, whatever day the sweep actually ran, so a belated batch
sweep emits exactly what daily sweeps would have. ``per_day_penalty`` items
accrue one deduction per overdue day up to the sweeping clock, stopping at
the end of the month in which the accrual started (the scoring period resets
monthly, and stale failures do not bleed into the next period).
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date, timedelta
from enum import Enum

from .errors import (
    AlreadySwept,
    InvalidHorizon,
    InvalidSpec,
    NoPendingInstance,
    NoPeriodicRule,
    UnknownItem,
)
from .model import GraphStore, PeriodicRule, ScoreMethod
from .scoring import EventKind, EventSource, ScoreEvent
from .timeutil import day_end, month_end


class DutyStatus(str, Enum):
    pending = "pending"
    completed = "completed"
    overdue = "overdue"


@dataclass
class DutyInstance:
    instance_id: str
    item_id: str
    due_date: date
    grace_days: int
    status: DutyStatus = DutyStatus.pending
    completed_by: str | None = None

    @property
    def deadline(self) -> date:
        return self.due_date + timedelta(days=self.grace_days)

    def to_json(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "item_id": self.item_id,
            "due_date": self.due_date.isoformat(),
            "grace_days": self.grace_days,
            "status": self.status.value,
            "completed_by": self.completed_by,
        }


def instance_id_for(item_id: str, due: date) -> str:
    return f"duty-{item_id}-{due.isoformat()}"


class DutyScheduler:
    def __init__(self, graph: GraphStore) -> None:
        self.graph = graph
        self._instances: dict[str, DutyInstance] = {}
        self._swept: set[date] = set()
        # last per-day penalty date already emitted, per overdue instance
        self._accrued_until: dict[str, date] = {}

    # -- queries ------------------------------------------------------------

    def instances(self, item_id: str | None = None,
                  status: DutyStatus | None = None) -> list[DutyInstance]:
        found = [
            inst for inst in self._instances.values()
            if (item_id is None or inst.item_id == item_id)
            and (status is None or inst.status is status)
        ]
        found.sort(key=lambda i: (i.item_id, i.due_date))
        return found

    def is_swept(self, clock: date) -> bool:
        return clock in self._swept

    # -- generation ------------------------------------------------------------

    def generate_instances(self, item_id: str, anchor: date,
                           horizon_days: int) -> list[DutyInstance]:
        """Instances due at anchor + k*cycle for k = 1..floor(horizon/cycle).

        A duty assigned on the anchor day is not already due, so the first
        due date is one full cycle out. Regeneration over an overlapping
        horizon returns the same instances without duplication.
        """
        item = self.graph.items.get(item_id)
        if item is None:
            raise UnknownItem(f"item {item_id!r} does not exist")
        rule = item.periodic_rule
        if rule is None:
            raise NoPeriodicRule(f"item {item_id!r} has no periodic rule")
        if not isinstance(horizon_days, int) or horizon_days < 1:
            raise InvalidHorizon(f"horizon_days must be a positive integer, got {horizon_days}")
        generated = []
        for k in range(1, horizon_days // rule.cycle_days + 1):
            due = anchor + timedelta(days=k * rule.cycle_days)
            iid = instance_id_for(item_id, due)
            if iid not in self._instances:
                self._instances[iid] = DutyInstance(
                    instance_id=iid, item_id=item_id, due_date=due,
                    grace_days=rule.grace_days)
            generated.append(self._instances[iid])
        return generated

    # -- completion ------------------------------------------------------------

    def mark_completed(self, item_id: str, completion_event: ScoreEvent) -> DutyInstance:
        """Discharge the earliest pending instance still completable at the event date."""
        if completion_event.kind is not EventKind.completion:
            raise InvalidSpec("only completion events discharge duties", field="kind")
        event_day = completion_event.timestamp.date()
        candidates = [
            inst for inst in self._instances.values()
            if inst.item_id == item_id and inst.status is DutyStatus.pending
            and inst.deadline >= event_day
        ]
        if not candidates:
            raise NoPendingInstance(
                f"no pending duty for item {item_id!r} completable on {event_day.isoformat()}")
        earliest = min(candidates, key=lambda i: i.due_date)
        earliest.status = DutyStatus.completed
        earliest.completed_by = completion_event.event_id
        return earliest

    # -- sweeping ------------------------------------------------------------

    def sweep_overdue(self, clock: date) -> list[ScoreEvent]:
        """Transition lapsed duties to overdue and emit their deduction events."""
        if clock in self._swept:
            raise AlreadySwept(f"sweep for {clock.isoformat()} already ran")
        self._swept.add(clock)
        emitted = []
        for iid in sorted(self._instances):
            inst = self._instances[iid]
            if inst.status is DutyStatus.completed:
                continue
            rule = self.graph.items[inst.item_id].periodic_rule
            if rule is None:
                continue
            if inst.status is DutyStatus.pending and inst.deadline < clock:
                inst.status = DutyStatus.overdue
                if rule.score_method is ScoreMethod.fixed_penalty:
                    emitted.append(self._fixed_event(inst, rule))
            if inst.status is DutyStatus.overdue and \
                    rule.score_method is ScoreMethod.per_day_penalty:
                emitted.extend(self._per_day_events(inst, rule, clock))
        return emitted

    def _fixed_event(self, inst: DutyInstance, rule: PeriodicRule) -> ScoreEvent:
        first_overdue_day = inst.deadline + timedelta(days=1)
        return ScoreEvent(
            event_id=f"od-{inst.instance_id}",
            timestamp=day_end(first_overdue_day),
            item_id=inst.item_id,
            kind=EventKind.overdue_duty,
            points=-rule.penalty_points,
            reason=f"duty {inst.instance_id} overdue (due {inst.due_date.isoformat()})",
            source=EventSource.perception,
        )

    def _per_day_events(self, inst: DutyInstance, rule: PeriodicRule,
                        clock: date) -> list[ScoreEvent]:
        first_day = inst.deadline + timedelta(days=1)
        last_allowed = min(clock, month_end(first_day))
        start = max(first_day,
                    self._accrued_until.get(inst.instance_id, first_day - timedelta(days=1))
                    + timedelta(days=1))
        events = []
        day = start
        while day <= last_allowed:
            events.append(ScoreEvent(
                event_id=f"od-{inst.instance_id}-{day.isoformat()}",
                timestamp=day_end(day),
                item_id=inst.item_id,
                kind=EventKind.overdue_duty,
                points=-rule.penalty_points,
                reason=(f"duty {inst.instance_id} overdue since "
                        f"{inst.due_date.isoformat()}, day {day.isoformat()}"),
                source=EventSource.perception,
            ))
            day += timedelta(days=1)
        if events:
            prior = self._accrued_until.get(inst.instance_id)
            if prior is None or last_allowed > prior:
                self._accrued_until[inst.instance_id] = last_allowed
        return events

from __future__ import annotations

from datetime import date, datetime, timezone

import pytest

from respnet.model import GraphStore
from respnet.scoring import EventKind, EventSource, ScoreEvent, ScoringEngine


def ts(day: str, hour: int = 12, minute: int = 0) -> datetime:
    d = date.fromisoformat(day)
    return datetime(d.year, d.month, d.day, hour, minute, tzinfo=timezone.utc)


def make_event(event_id: str, day: str, item_id: str, points: float,
               kind: EventKind | None = None, hour: int = 12,
               reason: str = "test reason") -> ScoreEvent:
    if kind is None:
        if points < 0:
            kind = EventKind.manual_deduction
        elif points > 0:
            kind = EventKind.award
        else:
            kind = EventKind.completion
    return ScoreEvent(
        event_id=event_id,
        timestamp=ts(day, hour=hour),
        item_id=item_id,
        kind=kind,
        points=points,
        reason=reason,
        source=EventSource.manual,
    )


def small_graph() -> GraphStore:
    """One company, one enterprise, two stations; known weights for hand checks.

    st-a: list la1 (weight 1): items a1 (w 0.7), a2 (w 0.3)
          list la2 (weight 3): item  a3 (w 1)
    st-b: list lb1 (weight 1): item  b1 (w 1)
    """
    graph = GraphStore()
    company = graph.add_company("TestCo", id="co-1")
    leader = graph.add_personnel(company.id, "Lee", "leader", id="pe-lead")
    staff = graph.add_personnel(company.id, "Sam", "staff", id="pe-staff")
    ent = graph.add_enterprise(company.id, "Plant", "other", id="en-1")
    st_a = graph.add_station(ent.id, "Post A", leader.id, id="st-a")
    st_b = graph.add_station(ent.id, "Post B", staff.id, id="st-b")
    la1 = graph.add_list(st_a.id, 1, id="la1")
    la2 = graph.add_list(st_a.id, 3, id="la2")
    lb1 = graph.add_list(st_b.id, 1, id="lb1")
    graph.add_item(la1.id, "item a1", "reg", 0.7, id="a1")
    graph.add_item(la1.id, "item a2", "reg", 0.3, id="a2")
    graph.add_item(la2.id, "item a3", "reg", 1, id="a3")
    graph.add_item(lb1.id, "item b1", "reg", 1, id="b1")
    return graph


@pytest.fixture
def graph() -> GraphStore:
    return small_graph()


@pytest.fixture
def engine(graph: GraphStore) -> ScoringEngine:
    return ScoringEngine(graph)

from __future__ import annotations

import random
from datetime import date, datetime, timedelta, timezone

import pytest

from respnet.errors import AlreadyAccrued, InvalidRule, UnitMismatch, UnknownTargetItem
from respnet.telemetry import (
    Comparator,
    DeductionMode,
    SensorReading,
    TelemetryEngine,
    ThresholdRule,
)

from conftest import small_graph

UTC = timezone.utc


def reading(rid: str, value: float, ts: datetime, sensor: str = "s1",
            metric: str = "pressure", unit: str = "MPa") -> SensorReading:
    return SensorReading(reading_id=rid, sensor_id=sensor, metric=metric,
                         value=value, unit=unit, timestamp=ts)


def rule(mode: str, rule_id: str = "r1", comparator: str = "gt", critical: float = 1.5,
         penalty: float = 5.0, cooldown: float = 0.0, sensor: str = "s1",
         metric: str = "pressure", target: str = "a1") -> ThresholdRule:
    return ThresholdRule(
        rule_id=rule_id, sensor_id=sensor, metric=metric,
        comparator=Comparator(comparator), critical_value=critical, unit="MPa",
        deduction_mode=DeductionMode(mode), penalty_points=penalty,
        target_item_id=target, cooldown_hours=cooldown,
    )


def fresh_engine() -> TelemetryEngine:
    return TelemetryEngine(small_graph())


T0 = datetime(2024, 1, 10, 8, 0, tzinfo=UTC)


class TestRegisterRule:
    def test_register_returns_id(self):
        engine = fresh_engine()
        assert engine.register_rule(rule("once_per_breach")) == "r1"

    def test_unknown_target(self):
        engine = fresh_engine()
        with pytest.raises(UnknownTargetItem):
            engine.register_rule(rule("once_per_breach", target="ghost"))

    def test_zero_penalty_rejected(self):
        engine = fresh_engine()
        with pytest.raises(InvalidRule):
            engine.register_rule(rule("once_per_breach", penalty=0))

    def test_reregister_replaces(self):
        engine = fresh_engine()
        engine.register_rule(rule("once_per_breach", critical=1.5))
        engine.register_rule(rule("once_per_breach", critical=9.9))
        assert engine.rules["r1"].critical_value == 9.9
        assert len(engine.rules) == 1


class TestIngestReading:
    def test_onset_emits_once(self):
        engine = fresh_engine()
        engine.register_rule(rule("once_per_breach"))
        events = engine.ingest_reading(reading("rd1", 1.6, T0))
        assert len(events) == 1
        assert events[0].points == -5.0
        assert events[0].item_id == "a1"
        assert events[0].kind.value == "telemetry_breach"
        # still breaching: no further events until cleared
        assert engine.ingest_reading(reading("rd2", 1.7, T0 + timedelta(hours=1))) == []
        # clear, then breach again: new onset fires
        assert engine.ingest_reading(reading("rd3", 1.0, T0 + timedelta(hours=2))) == []
        again = engine.ingest_reading(reading("rd4", 1.8, T0 + timedelta(hours=3)))
        assert len(again) == 1

    def test_boundary_is_strict_for_gt(self):
        engine = fresh_engine()
        engine.register_rule(rule("once_per_breach"))
        assert engine.ingest_reading(reading("rd1", 1.5, T0)) == []

    def test_cooldown_suppresses_second_occurrence(self):
        engine = fresh_engine()
        engine.register_rule(rule("per_occurrence", cooldown=24))
        first = engine.ingest_reading(reading("rd1", 1.6, T0))
        second = engine.ingest_reading(reading("rd2", 1.7, T0 + timedelta(hours=2)))
        assert len(first) == 1 and second == []
        third = engine.ingest_reading(reading("rd3", 1.7, T0 + timedelta(hours=24)))
        assert len(third) == 1

    def test_reason_format(self):
        engine = fresh_engine()
        engine.register_rule(rule("once_per_breach"))
        events = engine.ingest_reading(reading("rd1", 1.6, T0))
        assert events[0].reason == "rule r1: pressure 1.6MPa vs 1.5"

    def test_unit_mismatch_rejected(self):
        engine = fresh_engine()
        engine.register_rule(rule("once_per_breach"))
        with pytest.raises(UnitMismatch):
            engine.ingest_reading(reading("rd1", 1.6, T0, unit="kPa"))
        # rejected reading left no state behind
        assert not engine.has_reading("rd1")
        assert not engine.state_of("r1").active

    def test_duplicate_reading_noop(self):
        engine = fresh_engine()
        engine.register_rule(rule("once_per_breach"))
        engine.ingest_reading(reading("rd1", 1.6, T0))
        assert engine.ingest_reading(reading("rd1", 1.6, T0)) == []

    def test_non_matching_sensor_never_fires(self):
        engine = fresh_engine()
        engine.register_rule(rule("once_per_breach"))
        assert engine.ingest_reading(reading("rd1", 99.0, T0, sensor="other")) == []
        assert engine.ingest_reading(reading("rd2", 99.0, T0, metric="temp",
                                             unit="MPa")) == []

    def test_low_side_comparator(self):
        engine = fresh_engine()
        engine.register_rule(rule("once_per_breach", comparator="lt", critical=0.3))
        assert engine.ingest_reading(reading("rd1", 0.4, T0)) == []
        events = engine.ingest_reading(reading("rd2", 0.2, T0 + timedelta(hours=1)))
        assert len(events) == 1


class TestDailyAccrual:
    def test_three_active_days(self):
        engine = fresh_engine()
        engine.register_rule(rule("per_day_while_active", penalty=2))
        engine.ingest_reading(reading("rd1", 1.9, datetime(2024, 1, 10, 9, 0, tzinfo=UTC)))
        engine.ingest_reading(reading("rd2", 1.0, datetime(2024, 1, 12, 15, 0, tzinfo=UTC)))
        events = []
        for offset in range(4):  # days 10..13
            events += engine.accrue_daily_breaches(date(2024, 1, 10)
                                                   + timedelta(days=offset))
        assert len(events) == 3
        assert sum(e.points for e in events) == -6.0
        assert {e.timestamp.date().isoformat() for e in events} == {
            "2024-01-10", "2024-01-11", "2024-01-12"}

    def test_no_breach_no_events(self):
        engine = fresh_engine()
        engine.register_rule(rule("per_day_while_active", penalty=2))
        assert engine.accrue_daily_breaches(date(2024, 1, 10)) == []

    def test_double_accrual_rejected(self):
        engine = fresh_engine()
        engine.register_rule(rule("per_day_while_active", penalty=2))
        engine.accrue_daily_breaches(date(2024, 1, 10))
        with pytest.raises(AlreadyAccrued):
            engine.accrue_daily_breaches(date(2024, 1, 10))

    def test_missing_data_does_not_clear(self):
        engine = fresh_engine()
        engine.register_rule(rule("per_day_while_active", penalty=2))
        engine.ingest_reading(reading("rd1", 1.9, datetime(2024, 1, 10, 9, 0, tzinfo=UTC)))
        # no further readings at all: breach stays active (fail-safe)
        events = []
        for offset in range(5):
            events += engine.accrue_daily_breaches(date(2024, 1, 10)
                                                   + timedelta(days=offset))
        assert len(events) == 5


# --- randomized comparison against a brute-force interval scan ---------------------


def brute_force_onsets(flags: list[bool]) -> int:
    return sum(1 for i, f in enumerate(flags) if f and (i == 0 or not flags[i - 1]))


def brute_force_occurrences(times: list[datetime], flags: list[bool],
                            cooldown_hours: float) -> list[datetime]:
    fired: list[datetime] = []
    last = None
    for t, f in zip(times, flags):
        if f and (last is None or t - last >= timedelta(hours=cooldown_hours)):
            fired.append(t)
            last = t
    return fired


def brute_force_active_days(times: list[datetime], flags: list[bool],
                            window: list[date]) -> set[date]:
    intervals = []
    current_start = None
    for t, f in zip(times, flags):
        if f and current_start is None:
            current_start = t
        elif not f and current_start is not None:
            intervals.append((current_start, t))
            current_start = None
    if current_start is not None:
        intervals.append((current_start, None))
    active = set()
    for day in window:
        lo = datetime(day.year, day.month, day.day, tzinfo=UTC)
        hi = lo + timedelta(days=1)
        for start, end in intervals:
            if start < hi and (end is None or end > lo):
                active.add(day)
                break
    return active


def random_stream(rng: random.Random, days: int = 7) -> tuple[list[datetime], list[float]]:
    times, values = [], []
    t = datetime(2024, 3, 1, tzinfo=UTC) + timedelta(minutes=rng.randrange(600))
    for _ in range(rng.randrange(5, 60)):
        t = t + timedelta(minutes=rng.randrange(30, 60 * 18))
        if t >= datetime(2024, 3, 1, tzinfo=UTC) + timedelta(days=days):
            break
        times.append(t)
        values.append(round(rng.uniform(1.0, 2.0), 3))
    return times, values


@pytest.mark.parametrize("seed", range(25))
def test_modes_match_brute_force(seed):
    rng = random.Random(seed)
    times, values = random_stream(rng)
    if not times:
        return
    cooldown = rng.choice([0, 6, 24])
    engine = fresh_engine()
    engine.register_rule(rule("once_per_breach", rule_id="r-once", penalty=1))
    engine.register_rule(rule("per_occurrence", rule_id="r-each", penalty=1,
                              cooldown=cooldown))
    engine.register_rule(rule("per_day_while_active", rule_id="r-daily", penalty=1))
    emitted = []
    for i, (t, v) in enumerate(zip(times, values)):
        emitted += engine.ingest_reading(reading(f"rd{i:03d}", v, t))
    flags = [v > 1.5 for v in values]

    onset_events = [e for e in emitted if e.event_id.startswith("tb-r-once")]
    assert len(onset_events) == brute_force_onsets(flags)

    occ_events = [e for e in emitted if e.event_id.startswith("tb-r-each")]
    expected_times = brute_force_occurrences(times, flags, cooldown)
    assert [e.timestamp for e in occ_events] == expected_times
    for a, b in zip(occ_events, occ_events[1:]):
        assert b.timestamp - a.timestamp >= timedelta(hours=cooldown)

    window = [date(2024, 3, 1) + timedelta(days=k) for k in range(8)]
    daily_events = []
    for day in window:
        daily_events += engine.accrue_daily_breaches(day)
    assert {e.timestamp.date() for e in daily_events} == \
        brute_force_active_days(times, flags, window)
    # exactly penalty * active-days in total
    assert sum(e.points for e in daily_events) == -len(
        brute_force_active_days(times, flags, window))


@pytest.mark.parametrize("seed", range(10))
def test_replaying_stream_reproduces_event_multiset(seed):
    rng = random.Random(seed + 1000)
    times, values = random_stream(rng)
    streams = []
    for _ in range(2):
        engine = fresh_engine()
        engine.register_rule(rule("per_occurrence", cooldown=4))
        emitted = []
        for i, (t, v) in enumerate(zip(times, values)):
            emitted += engine.ingest_reading(reading(f"rd{i:03d}", v, t))
        streams.append(sorted(e.event_id for e in emitted))
    assert streams[0] == streams[1]

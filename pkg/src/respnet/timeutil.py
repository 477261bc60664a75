"""UTC instant and calendar-day helpers used across the engine.

All wire timestamps are ISO-8601; naive values are interpreted as UTC.
Day boundaries are UTC midnight and the scoring period is the UTC calendar
month.
"""

from __future__ import annotations

import calendar
from datetime import date, datetime, time, timedelta, timezone

from .errors import InvalidSpec

UTC = timezone.utc


def parse_instant(value: str | datetime) -> datetime:
    if isinstance(value, datetime):
        ts = value
    else:
        try:
            ts = datetime.fromisoformat(value.replace("Z", "+00:00"))
        except (ValueError, AttributeError, TypeError):
            raise InvalidSpec(f"not an ISO-8601 timestamp: {value!r}", field="timestamp")
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=UTC)
    return ts.astimezone(UTC)


def format_instant(ts: datetime) -> str:
    return ts.astimezone(UTC).isoformat().replace("+00:00", "Z")


def parse_day(value: str | date) -> date:
    if isinstance(value, date) and not isinstance(value, datetime):
        return value
    try:
        return date.fromisoformat(value)
    except (ValueError, TypeError):
        raise InvalidSpec(f"not an ISO-8601 date: {value!r}", field="date")


def day_start(day: date) -> datetime:
    return datetime.combine(day, time.min, tzinfo=UTC)


def day_end(day: date) -> datetime:
    """Last representable instant of the day; used to stamp end-of-day events."""
    return datetime.combine(day, time(23, 59, 59), tzinfo=UTC)


def next_day_start(day: date) -> datetime:
    return day_start(day + timedelta(days=1))


def month_start(day: date) -> date:
    return day.replace(day=1)


def month_end(day: date) -> date:
    return day.replace(day=calendar.monthrange(day.year, day.month)[1])


def same_month(a: date, b: date) -> bool:
    return (a.year, a.month) == (b.year, b.month)

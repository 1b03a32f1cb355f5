"""Injectable clocks. All instants are timezone-aware UTC datetimes."""

from __future__ import annotations

import threading
from datetime import datetime, timedelta, timezone

TS_FORMAT = "%Y-%m-%d %H:%M:%S"


def utc(year, month, day, hour=0, minute=0, second=0) -> datetime:
    return datetime(year, month, day, hour, minute, second, tzinfo=timezone.utc)


def format_ts(dt: datetime) -> str:
    """Wire format ``YYYY-MM-DD HH:MM:SS`` (UTC, whole seconds)."""
    return dt.astimezone(timezone.utc).strftime(TS_FORMAT)


def parse_ts(text: str) -> datetime:
    return datetime.strptime(text, TS_FORMAT).replace(tzinfo=timezone.utc)


class SystemClock:
    def now(self) -> datetime:
        return datetime.now(timezone.utc)


class SimulatedClock:
    """Manually advanced clock used for validity-period and condition tests."""

    def __init__(self, start: datetime | None = None):
        self._now = start or utc(2021, 12, 22, 15, 0, 0)
        self._lock = threading.Lock()

    def now(self) -> datetime:
        with self._lock:
            return self._now

    def advance(self, seconds: float) -> datetime:
        with self._lock:
            self._now += timedelta(seconds=seconds)
            return self._now

    def set(self, when: datetime) -> None:
        with self._lock:
            self._now = when

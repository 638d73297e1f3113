"""Calendar helpers: month arithmetic, weekend adjustment, day counts and schedules."""

from __future__ import annotations

import calendar
from datetime import date, timedelta

import numpy as np

VALUATION_DATE = date(2018, 12, 28)
DAYS_PER_YEAR = 365.0


def add_months(d: date, months: int) -> date:
    y, m = divmod(d.month - 1 + months, 12)
    y += d.year
    m += 1
    return date(y, m, min(d.day, calendar.monthrange(y, m)[1]))


def adjust(d: date, roll: str = "modifiedfollowing") -> date:
    """Roll a date off weekends (no holiday calendar)."""
    if roll == "none":
        return d
    out = np.busday_offset(np.datetime64(d, "D"), 0, roll=roll)
    return out.astype(object)


def day_offset(d: date, origin: date = VALUATION_DATE) -> int:
    return (d - origin).days


def from_offset(days: int, origin: date = VALUATION_DATE) -> date:
    return origin + timedelta(days=int(days))


def year_fraction(days) -> np.ndarray | float:
    """Model time: ACT/365F from the valuation date."""
    return np.asarray(days, dtype=float) / DAYS_PER_YEAR


def accrual(d1: date, d2: date, convention: str) -> float:
    if convention == "ACT/360":
        return (d2 - d1).days / 360.0
    if convention == "ACT/365F":
        return (d2 - d1).days / 365.0
    if convention == "30/360":
        day1 = min(d1.day, 30)
        day2 = 30 if (d2.day == 31 and day1 == 30) else d2.day
        return ((d2.year - d1.year) * 360 + (d2.month - d1.month) * 30 + (day2 - day1)) / 360.0
    raise ValueError(f"unknown day count {convention!r}")


def schedule(start: date, total_months: int, step_months: int, roll: str = "modifiedfollowing") -> list[date]:
    """Forward-generated schedule start, start+step, ..., start+total (adjusted)."""
    if total_months % step_months:
        raise ValueError("tenor must be a multiple of the period length")
    unadjusted = [add_months(start, k) for k in range(0, total_months + 1, step_months)]
    return [adjust(d, roll) for d in unadjusted]

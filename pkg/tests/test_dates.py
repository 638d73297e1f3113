from datetime import date

import pytest

from xva_engine import dates as dt


def test_add_months_clamps_to_month_end():
    assert dt.add_months(date(2019, 1, 31), 1) == date(2019, 2, 28)
    assert dt.add_months(date(2018, 12, 28), 6) == date(2019, 6, 28)


def test_modified_following_rolls_weekends():
    # 2019-12-28 is a Saturday -> Monday 30th
    assert dt.adjust(date(2019, 12, 28)) == date(2019, 12, 30)
    # 2019-08-31 is a Saturday; following would cross the month, so roll back
    assert dt.adjust(date(2019, 8, 31)) == date(2019, 8, 30)
    assert dt.adjust(date(2019, 1, 2)) == date(2019, 1, 2)


def test_day_offset_roundtrip():
    for n in (0, 1, 365, 5479):
        assert dt.day_offset(dt.from_offset(n)) == n


@pytest.mark.parametrize("conv,expected", [("ACT/360", 181 / 360), ("ACT/365F", 181 / 365), ("30/360", 0.5)])
def test_accrual_conventions(conv, expected):
    assert dt.accrual(date(2019, 1, 1), date(2019, 7, 1), conv) == pytest.approx(expected, abs=1e-15)


def test_schedule_is_monthly_forward_and_adjusted():
    s = dt.schedule(dt.VALUATION_DATE, 24, 6)
    assert len(s) == 5
    assert all(d.weekday() < 5 for d in s)
    assert all(a < b for a, b in zip(s, s[1:]))

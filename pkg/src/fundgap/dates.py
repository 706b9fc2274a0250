"""Fiscal-year and month arithmetic helpers."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

from dateutil.relativedelta import relativedelta


@dataclass(frozen=True)
class FiscalCalendar:
    """Fiscal year whose first day is the first of ``start_month``.

    The default is the US federal fiscal year (October 1 to September 30),
    labelled by the calendar year in which it ends.
    """

    start_month: int = 10

    def __post_init__(self) -> None:
        if not 1 <= self.start_month <= 12:
            raise ValueError(f"start_month must be in 1..12, got {self.start_month}")

    def fiscal_year(self, day: dt.date) -> int:
        if self.start_month == 1:
            return day.year
        return day.year + 1 if day.month >= self.start_month else day.year

    def start_of(self, fiscal_year: int) -> dt.date:
        if self.start_month == 1:
            return dt.date(fiscal_year, 1, 1)
        return dt.date(fiscal_year - 1, self.start_month, 1)

    def day_of_year(self, day: dt.date, fiscal_year: int | None = None) -> int:
        """1-based day within ``fiscal_year`` (defaults to the FY containing ``day``)."""
        fy = self.fiscal_year(day) if fiscal_year is None else fiscal_year
        return (day - self.start_of(fy)).days + 1


FEDERAL = FiscalCalendar()


def add_months(day: dt.date, months: int) -> dt.date:
    """Shift by whole months, clamping to the end of shorter months."""
    return day + relativedelta(months=months)


def parse_date(value: str) -> dt.date:
    return dt.date.fromisoformat(value.strip())

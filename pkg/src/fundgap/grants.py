"""Project periods, renewal pairs and funding-gap classification from ExPORTER rows.

ExPORTER publishes one row per budget period. A project period opens at a row
whose application type is new (1), renewal (2) or change of institute (9);
every later row attaches to the open period until the next opener.
"""

from __future__ import annotations

import datetime as dt
import enum
import logging
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .dates import FEDERAL, FiscalCalendar, add_months

logger = logging.getLogger(__name__)

OPENER_TYPES = frozenset({1, 2, 9})
CONTINUATION_TYPE = 5
KNOWN_APPLICATION_TYPES = frozenset(range(1, 10))

R01_EQUIVALENT_CODES = frozenset(
    {"DP1", "DP2", "DP5", "R01", "R37", "R56", "RF1", "RL1", "U01", "R35"}
)

DEFAULT_SHORT_DAYS = 30
DEFAULT_LONG_DAYS = 90


class MalformedProjectError(ValueError):
    """Raised when a core project's budget rows cannot be split into periods."""

    def __init__(self, core_project_num: str, reason: str):
        super().__init__(f"{core_project_num}: {reason}")
        self.core_project_num = core_project_num
        self.reason = reason


class InterruptionStatus(str, enum.Enum):
    CONTINUOUS = "Continuous"
    SHORT = "InterruptedShort"
    LONG = "InterruptedLong"

    @property
    def interrupted(self) -> bool:
        return self is not InterruptionStatus.CONTINUOUS


@dataclass(frozen=True)
class BudgetRecord:
    core_project_num: str
    full_project_num: str
    fiscal_year: int
    application_type: int
    budget_start: dt.date
    budget_end: dt.date
    pi_ids: frozenset[str]
    activity_code: str
    awarding_institute: str = ""
    total_cost: float | None = None

    def __post_init__(self) -> None:
        if self.budget_start > self.budget_end:
            raise ValueError(
                f"{self.full_project_num}: budget_start {self.budget_start} after budget_end {self.budget_end}"
            )
        if self.application_type not in KNOWN_APPLICATION_TYPES:
            raise ValueError(f"{self.full_project_num}: unknown application type {self.application_type}")

    @property
    def opens_period(self) -> bool:
        return self.application_type in OPENER_TYPES


@dataclass(frozen=True)
class ProjectPeriod:
    core_project_num: str
    period_index: int
    start: dt.date
    end: dt.date
    pi_ids: frozenset[str]
    budget_rows: tuple[BudgetRecord, ...]
    opening_application_type: int

    @property
    def activity_code(self) -> str:
        return self.budget_rows[0].activity_code

    @property
    def opening_full_project_num(self) -> str:
        return self.budget_rows[0].full_project_num


@dataclass(frozen=True)
class RenewalPair:
    core_project_num: str
    expiring: ProjectPeriod
    renewed: ProjectPeriod
    adjusted_expiry: dt.date
    gap_days: int
    status: InterruptionStatus
    resubmissions: int
    pi_id: str
    n_r01_equivalents: int
    expiry_fiscal_year: int

    @property
    def renewal_id(self) -> str:
        return f"{self.core_project_num}-{self.expiring.period_index}"

    @property
    def pair_id(self) -> str:
        return f"{self.renewal_id}:{self.pi_id}"

    @property
    def treated(self) -> bool:
        return self.status.interrupted

    @property
    def stratum(self) -> str:
        return stratum_label(self.n_r01_equivalents)


def stratum_label(n_r01_equivalents: int) -> str:
    return "SingleR01" if n_r01_equivalents == 1 else "MultipleR01"


def _row_order(row: BudgetRecord):
    return (row.budget_start, row.budget_end, row.fiscal_year, row.full_project_num)


def reconstruct_project_periods(rows: Sequence[BudgetRecord]) -> list[ProjectPeriod]:
    """Split one core project's budget rows into project periods.

    Raises
    ------
    MalformedProjectError
        If the earliest row (by budget start) does not open a period, or if the
        rows do not share a single core project number.
    """
    if not rows:
        raise ValueError("no budget rows")
    core = rows[0].core_project_num
    if any(r.core_project_num != core for r in rows):
        raise MalformedProjectError(core, "rows span several core projects")

    ordered = sorted(rows, key=_row_order)
    if not ordered[0].opens_period:
        reason = "left_censored" if ordered[0].application_type == CONTINUATION_TYPE else "first_row_not_opener"
        raise MalformedProjectError(core, reason)

    groups: list[list[BudgetRecord]] = []
    for row in ordered:
        if row.opens_period:
            groups.append([row])
            continue
        prev = groups[-1][-1]
        if row.budget_start <= prev.budget_end:
            logger.info("%s: overlapping budget dates %s..%s and %s..%s", core,
                        prev.budget_start, prev.budget_end, row.budget_start, row.budget_end)
        groups[-1].append(row)

    periods = []
    for k, group in enumerate(groups):
        pis = frozenset().union(*(r.pi_ids for r in group))
        periods.append(
            ProjectPeriod(
                core_project_num=core,
                period_index=k,
                start=group[0].budget_start,
                end=max(r.budget_end for r in group),
                pi_ids=pis,
                budget_rows=tuple(group),
                opening_application_type=group[0].application_type,
            )
        )
    return periods


@dataclass
class ReconstructionResult:
    periods: dict[str, list[ProjectPeriod]]
    malformed: dict[str, str] = field(default_factory=dict)

    def all_periods(self) -> list[ProjectPeriod]:
        return [p for core in sorted(self.periods) for p in self.periods[core]]


def reconstruct_all(records: Iterable[BudgetRecord]) -> ReconstructionResult:
    by_core: dict[str, list[BudgetRecord]] = defaultdict(list)
    for r in records:
        by_core[r.core_project_num].append(r)
    result = ReconstructionResult(periods={})
    for core in sorted(by_core):
        try:
            result.periods[core] = reconstruct_project_periods(by_core[core])
        except MalformedProjectError as exc:
            logger.warning("excluding project %s", exc)
            result.malformed[core] = exc.reason
    return result


def compute_renewal_gap(expiring: ProjectPeriod, renewed: ProjectPeriod) -> tuple[int, dt.date]:
    """Return ``(gap_days, adjusted_expiry)`` for consecutive periods.

    An expiry on or after the renewal start is moved to the day before it, so
    the gap is always at least one day.
    """
    expiry = expiring.end
    if expiry >= renewed.start:
        expiry = renewed.start - dt.timedelta(days=1)
    return (renewed.start - expiry).days, expiry


def classify_interruption(
    gap_days: int, short_days: int = DEFAULT_SHORT_DAYS, long_days: int = DEFAULT_LONG_DAYS
) -> InterruptionStatus:
    if gap_days < 0:
        raise ValueError(f"negative gap {gap_days}")
    if not 0 < short_days < long_days:
        raise ValueError(f"thresholds must satisfy 0 < short < long, got {short_days}, {long_days}")
    if gap_days < short_days:
        return InterruptionStatus.CONTINUOUS
    if gap_days < long_days:
        return InterruptionStatus.SHORT
    return InterruptionStatus.LONG


_FULL_NUM = re.compile(
    r"^\s*(?P<type>\d)?(?P<activity>[A-Z]\d{2}|[A-Z]{2}\d)(?P<ic>[A-Z]{2})(?P<serial>\d{6})"
    r"(?:-(?P<year>\d{2})(?P<suffix>(?:[AS]\d+)*)?)?\s*$"
)
_AMENDMENT = re.compile(r"A(\d+)")


def parse_resubmission_count(full_project_num: str) -> int:
    """Amendment number from an ``A<k>`` suffix such as ``2R01GM012345-06A1``; else 0."""
    m = _FULL_NUM.match(full_project_num or "")
    if m is None:
        logger.warning("unparseable full project number %r; assuming 0 resubmissions", full_project_num)
        return 0
    amendments = _AMENDMENT.findall(m.group("suffix") or "")
    return int(amendments[-1]) if amendments else 0


def lookup_window(
    adjusted_expiry: dt.date, months_before: int, months_after: int
) -> tuple[dt.date, dt.date]:
    return add_months(adjusted_expiry, -months_before), add_months(adjusted_expiry, months_after)


def count_r01_equivalents(
    pi_id: str,
    adjusted_expiry: dt.date,
    all_periods: Iterable[ProjectPeriod],
    codes: Iterable[str] = R01_EQUIVALENT_CODES,
    *,
    focal_core: str | None = None,
    months_before: int = 11,
    months_after: int = 12,
) -> int:
    """Distinct R01-equivalent core projects of ``pi_id`` overlapping the portfolio window.

    The focal project is always counted, so the result is at least 1.
    """
    lo, hi = lookup_window(adjusted_expiry, months_before, months_after)
    codes = frozenset(codes)
    held = {
        p.core_project_num
        for p in all_periods
        if pi_id in p.pi_ids and p.activity_code in codes and p.start <= hi and p.end >= lo
    }
    if focal_core is not None:
        held.add(focal_core)
    return max(len(held), 1)


@dataclass
class PairingResult:
    pairs: list[RenewalPair]
    dropped: Counter = field(default_factory=Counter)


def pair_renewals(
    periods: Mapping[str, Sequence[ProjectPeriod]] | ReconstructionResult,
    fiscal_calendar: FiscalCalendar = FEDERAL,
    *,
    short_days: int = DEFAULT_SHORT_DAYS,
    long_days: int = DEFAULT_LONG_DAYS,
    focal_codes: Iterable[str] = ("R01",),
    r01_codes: Iterable[str] = R01_EQUIVALENT_CODES,
) -> PairingResult:
    """Match each expiring focal project period to its renewal.

    A pair is kept when the renewal starts in the same fiscal year as the
    (adjusted) expiry, and one pair is emitted per PI listed on both periods.
    """
    if isinstance(periods, ReconstructionResult):
        periods = periods.periods
    focal_codes = frozenset(focal_codes)
    r01_codes = frozenset(r01_codes)

    by_pi: dict[str, list[ProjectPeriod]] = defaultdict(list)
    for core in sorted(periods):
        for p in periods[core]:
            for pi in p.pi_ids:
                by_pi[pi].append(p)

    out = PairingResult(pairs=[])
    for core in sorted(periods):
        plist = periods[core]
        for expiring, renewed in zip(plist, plist[1:]):
            if expiring.activity_code not in focal_codes:
                continue
            gap, adjusted = compute_renewal_gap(expiring, renewed)
            fy = fiscal_calendar.fiscal_year(adjusted)
            if fiscal_calendar.fiscal_year(renewed.start) != fy:
                out.dropped["different_fiscal_year"] += 1
                continue
            common = sorted(expiring.pi_ids & renewed.pi_ids)
            if not common:
                out.dropped["no_common_pi"] += 1
                continue
            status = classify_interruption(gap, short_days, long_days)
            resub = parse_resubmission_count(renewed.opening_full_project_num)
            for pi in common:
                n_eq = count_r01_equivalents(pi, adjusted, by_pi[pi], r01_codes, focal_core=core)
                out.pairs.append(
                    RenewalPair(
                        core_project_num=core,
                        expiring=expiring,
                        renewed=renewed,
                        adjusted_expiry=adjusted,
                        gap_days=gap,
                        status=status,
                        resubmissions=resub,
                        pi_id=pi,
                        n_r01_equivalents=n_eq,
                        expiry_fiscal_year=fy,
                    )
                )
    return out


def reclassify(pairs: Iterable[RenewalPair], short_days: int, long_days: int) -> list[RenewalPair]:
    from dataclasses import replace

    return [replace(p, status=classify_interruption(p.gap_days, short_days, long_days)) for p in pairs]


_CATEGORY = {1: "New", 2: "Renewed", 5: "Ongoing"}


def budget_timing_summary(
    records: Iterable[BudgetRecord],
    federal_budget_dates: Mapping[int, dt.date],
    fiscal_calendar: FiscalCalendar = FEDERAL,
) -> pd.DataFrame:
    """Mean day-of-fiscal-year of budget starts by fiscal year and category.

    Day 1 is the first day of the row's fiscal year. Fiscal years without a
    budget-passage date get a null ``passage_date``.
    """
    rows = [
        (r.fiscal_year, _CATEGORY[r.application_type], fiscal_calendar.day_of_year(r.budget_start, r.fiscal_year))
        for r in records
        if r.application_type in _CATEGORY
    ]
    df = pd.DataFrame(rows, columns=["fiscal_year", "category", "day"])
    if df.empty:
        return pd.DataFrame(columns=["fiscal_year", "category", "mean_start_day", "n_budgets",
                                     "passage_date", "passage_day"])
    out = (
        df.groupby(["fiscal_year", "category"], sort=True)["day"]
        .agg(mean_start_day="mean", n_budgets="size")
        .reset_index()
    )
    passage = out["fiscal_year"].map(lambda fy: federal_budget_dates.get(int(fy)))
    out["passage_date"] = passage.map(lambda d: d.isoformat() if d is not None else None)
    out["passage_day"] = [
        fiscal_calendar.day_of_year(d, int(fy)) if d is not None else np.nan
        for fy, d in zip(out["fiscal_year"], passage)
    ]
    return out


def pairs_frame(pairs: Sequence[RenewalPair]) -> pd.DataFrame:
    """Flat table of renewal pairs (one row per pair)."""
    cols = [
        "pair_id", "renewal_id", "core_project_num", "pi_id", "expiring_period", "renewed_period",
        "expiring_start", "expiring_end", "renewed_start", "adjusted_expiry", "gap_days", "status",
        "treated", "resubmissions", "n_r01_equivalents", "stratum", "expiry_fiscal_year",
    ]
    records = [
        (
            p.pair_id, p.renewal_id, p.core_project_num, p.pi_id, p.expiring.period_index,
            p.renewed.period_index, p.expiring.start.isoformat(), p.expiring.end.isoformat(),
            p.renewed.start.isoformat(), p.adjusted_expiry.isoformat(), p.gap_days, p.status.value,
            int(p.treated), p.resubmissions, p.n_r01_equivalents, p.stratum, p.expiry_fiscal_year,
        )
        for p in pairs
    ]
    return pd.DataFrame(records, columns=cols)


def periods_frame(periods: Iterable[ProjectPeriod]) -> pd.DataFrame:
    cols = ["core_project_num", "period_index", "start", "end", "activity_code",
            "opening_application_type", "pi_ids", "n_budgets"]
    return pd.DataFrame(
        [
            (p.core_project_num, p.period_index, p.start.isoformat(), p.end.isoformat(), p.activity_code,
             p.opening_application_type, ";".join(sorted(p.pi_ids)), len(p.budget_rows))
            for p in periods
        ],
        columns=cols,
    )

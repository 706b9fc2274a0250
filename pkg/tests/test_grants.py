import datetime as dt

import pandas as pd
import pytest
from hypothesis import given, strategies as st

from fundgap.dates import FEDERAL, FiscalCalendar, add_months
from fundgap.grants import (InterruptionStatus, MalformedProjectError, ProjectPeriod, budget_timing_summary,
                            classify_interruption, compute_renewal_gap, count_r01_equivalents, pair_renewals,
                            pairs_frame, parse_resubmission_count, reconstruct_all, reconstruct_project_periods,
                            stratum_label)

from conftest import budget, yearly

D = dt.date


def period(core, k, start, end, pis=("P1",), activity="R01", full=None, app=1):
    row = budget(core, FEDERAL.fiscal_year(D.fromisoformat(start)), app, start, end, pis, activity, full=full)
    return ProjectPeriod(core, k, row.budget_start, row.budget_end, frozenset(pis), (row,), app)


# --- fiscal calendar ------------------------------------------------------------


def test_federal_fiscal_year_boundaries():
    assert FEDERAL.fiscal_year(D(2000, 9, 30)) == 2000
    assert FEDERAL.fiscal_year(D(2000, 10, 1)) == 2001
    assert FEDERAL.start_of(2001) == D(2000, 10, 1)
    assert FEDERAL.day_of_year(D(2000, 10, 1)) == 1
    assert FEDERAL.day_of_year(D(2000, 10, 10)) == 10


def test_calendar_year_calendar():
    cal = FiscalCalendar(1)
    assert cal.fiscal_year(D(2000, 12, 31)) == 2000
    assert cal.start_of(2000) == D(2000, 1, 1)
    with pytest.raises(ValueError):
        FiscalCalendar(13)


def test_add_months_clamps_to_month_end():
    assert add_months(D(2001, 3, 31), -1) == D(2001, 2, 28)
    assert add_months(D(2000, 2, 29), 12) == D(2001, 2, 28)


# --- reconstruction ---------------------------------------------------------------


def test_two_period_example(exporter_example):
    periods = reconstruct_project_periods(exporter_example)
    assert len(periods) == 2
    fys = [[r.fiscal_year for r in p.budget_rows] for p in periods]
    assert fys == [[1996, 1997, 1998, 1999], [2000, 2001, 2002, 2003]]
    assert [p.opening_application_type for p in periods] == [1, 2]
    assert periods[0].start == exporter_example[0].budget_start
    assert periods[0].end == exporter_example[3].budget_end


def test_single_row_is_one_period():
    rows = [budget("R01X", 2000, 1, "2000-01-01", "2000-12-31")]
    (p,) = reconstruct_project_periods(rows)
    assert (p.start, p.end) == (D(2000, 1, 1), D(2000, 12, 31))


def test_type_nine_opens_period():
    rows = yearly("R01X", 2000, [1, 5, 9, 5])
    periods = reconstruct_project_periods(rows)
    assert [len(p.budget_rows) for p in periods] == [2, 2]


def test_input_order_irrelevant(exporter_example):
    a = reconstruct_project_periods(exporter_example)
    b = reconstruct_project_periods(list(reversed(exporter_example)))
    assert a == b


def test_left_censored_project_flagged():
    rows = yearly("R01X", 2000, [5, 5, 2, 5])
    with pytest.raises(MalformedProjectError) as err:
        reconstruct_project_periods(rows)
    assert err.value.reason == "left_censored"
    res = reconstruct_all(rows + yearly("R01Y", 2000, [1, 5]))
    assert res.malformed == {"R01X": "left_censored"}
    assert list(res.periods) == ["R01Y"]


def test_mixed_core_numbers_rejected():
    rows = yearly("R01X", 2000, [1]) + yearly("R01Y", 2000, [5])
    with pytest.raises(MalformedProjectError):
        reconstruct_project_periods(rows)


def test_period_end_is_max_budget_end():
    rows = [budget("R01X", 2000, 1, "2000-01-01", "2000-12-31"),
            budget("R01X", 2000, 5, "2000-02-01", "2001-06-30"),
            budget("R01X", 2001, 5, "2000-03-01", "2000-04-30")]
    (p,) = reconstruct_project_periods(rows)
    assert p.end == D(2001, 6, 30)


@given(st.lists(st.sampled_from([1, 2, 5, 9]), min_size=1, max_size=12))
def test_rows_partition_into_periods(types):
    types = [1] + types
    rows = yearly("R01X", 1990, types)
    periods = reconstruct_project_periods(rows)
    flat = [r for p in periods for r in p.budget_rows]
    assert flat == sorted(rows, key=lambda r: r.budget_start)
    assert len(periods) == sum(t in (1, 2, 9) for t in types)
    for p in periods:
        assert p.start == p.budget_rows[0].budget_start
        assert p.end == max(r.budget_end for r in p.budget_rows)


# --- gaps and classification ------------------------------------------------------


@pytest.mark.parametrize("expiry,renewal,gap,adjusted", [
    ("2001-06-30", "2001-09-26", 88, "2001-06-30"),
    ("2002-01-15", "2002-01-01", 1, "2001-12-31"),
    ("2001-06-30", "2001-07-01", 1, "2001-06-30"),
    ("2001-07-01", "2001-07-01", 1, "2001-06-30"),
])
def test_renewal_gap(expiry, renewal, gap, adjusted):
    a = period("C", 0, "1997-07-01", expiry)
    b = period("C", 1, renewal, "2005-06-30", app=2)
    assert compute_renewal_gap(a, b) == (gap, D.fromisoformat(adjusted))


@given(st.integers(0, 2000), st.integers(-400, 400))
def test_gap_always_positive(start_offset, delta):
    renewal = D(2001, 1, 1) + dt.timedelta(days=start_offset)
    expiry = renewal + dt.timedelta(days=delta)
    a = period("C", 0, "1990-01-01", expiry.isoformat())
    b = period("C", 1, renewal.isoformat(), "2010-01-01", app=2)
    gap, adj = compute_renewal_gap(a, b)
    assert gap >= 1 and adj < renewal
    assert gap == (renewal - adj).days
    if expiry >= renewal:
        assert gap == 1


@pytest.mark.parametrize("gap,status", [
    (0, InterruptionStatus.CONTINUOUS), (1, InterruptionStatus.CONTINUOUS), (29, InterruptionStatus.CONTINUOUS),
    (30, InterruptionStatus.SHORT), (88, InterruptionStatus.SHORT), (89, InterruptionStatus.SHORT),
    (90, InterruptionStatus.LONG), (365, InterruptionStatus.LONG),
])
def test_classification_thresholds(gap, status):
    assert classify_interruption(gap) is status
    assert status.interrupted == (gap >= 30)


def test_classification_custom_thresholds_and_errors():
    assert classify_interruption(45, 60, 120) is InterruptionStatus.CONTINUOUS
    with pytest.raises(ValueError):
        classify_interruption(-1)
    with pytest.raises(ValueError):
        classify_interruption(10, 90, 30)


@given(st.integers(0, 1000), st.integers(1, 200), st.integers(1, 200))
def test_classification_is_function_of_gap(gap, a, b):
    short, long_ = min(a, b), max(a, b) + 1
    s = classify_interruption(gap, short, long_)
    expected = "Continuous" if gap < short else "InterruptedShort" if gap < long_ else "InterruptedLong"
    assert s.value == expected


# --- resubmissions -----------------------------------------------------------------


@pytest.mark.parametrize("num,k", [
    ("2R01GM012345-06A1", 1), ("2R01GM012345-06", 0), ("1R01AI000001-01A2", 2), ("R01GM012345", 0),
    ("2R01GM012345-06S1A1", 1), ("garbage", 0), ("", 0),
])
def test_resubmission_parse(num, k):
    assert parse_resubmission_count(num) == k


# --- portfolio counts ----------------------------------------------------------------


def test_r01_equivalent_counts():
    adj = D(2005, 6, 30)
    focal = period("FOCAL", 0, "2001-07-01", "2005-06-30")
    r37 = period("R37A", 0, "2005-01-01", "2009-12-31", activity="R37")
    r21 = period("R21A", 0, "2005-01-01", "2006-12-31", activity="R21")
    far = period("R01FAR", 0, "1990-01-01", "2004-07-01")  # ends before adj - 11 months
    edge = period("R01EDGE", 0, "2004-07-30", "2004-08-01")  # touches the window start
    late = period("R01LATE", 0, "2006-06-30", "2008-01-01")  # starts on the window end
    assert count_r01_equivalents("P1", adj, [focal], focal_core="FOCAL") == 1
    assert count_r01_equivalents("P1", adj, [focal, r37], focal_core="FOCAL") == 2
    assert count_r01_equivalents("P1", adj, [focal, r21], focal_core="FOCAL") == 1
    assert count_r01_equivalents("P1", adj, [focal, far], focal_core="FOCAL") == 1
    assert count_r01_equivalents("P1", adj, [focal, edge, late], focal_core="FOCAL") == 3
    assert count_r01_equivalents("P2", adj, [r37], focal_core="FOCAL") == 1
    assert stratum_label(1) == "SingleR01" and stratum_label(2) == "MultipleR01"


@given(st.lists(st.tuples(st.integers(-1500, 1500), st.integers(1, 1500), st.sampled_from(["R01", "R21", "U01"])),
                max_size=8),
       st.integers(0, 24), st.integers(0, 24))
def test_portfolio_monotone(layouts, extra_before, extra_after):
    adj = D(2005, 6, 30)
    periods = [period(f"C{i}", 0, (adj + dt.timedelta(days=s)).isoformat(),
                      (adj + dt.timedelta(days=s + n)).isoformat(), activity=a) for i, (s, n, a) in enumerate(layouts)]
    base = count_r01_equivalents("P1", adj, periods, focal_core="F")
    wider = count_r01_equivalents("P1", adj, periods, focal_core="F", months_before=11 + extra_before,
                                  months_after=12 + extra_after)
    more_codes = count_r01_equivalents("P1", adj, periods, ["R01", "U01", "R21", "R37"], focal_core="F")
    assert 1 <= base <= wider and base <= more_codes


# --- pairing ---------------------------------------------------------------------------


def _project(core, expiry, renewal, pis_a=("P1",), pis_b=("P1",), full_b=None):
    a = period(core, 0, "1997-07-01", expiry, pis_a)
    b = period(core, 1, renewal, "2006-06-30", pis_b, full=full_b, app=2)
    return [a, b]


def test_pairing_same_fiscal_year_kept():
    res = pair_renewals({"C": _project("C", "2001-06-30", "2001-09-26", full_b="2R01GM000001-05A1")})
    (p,) = res.pairs
    assert p.gap_days == 88 and p.status is InterruptionStatus.SHORT and p.treated
    assert p.expiry_fiscal_year == 2001 and p.resubmissions == 1
    assert p.pair_id == "C-0:P1" and p.renewal_id == "C-0"
    assert p.adjusted_expiry < p.renewed.start


def test_pairing_different_fiscal_year_dropped():
    res = pair_renewals({"C": _project("C", "2001-06-30", "2002-10-15")})
    assert res.pairs == [] and res.dropped["different_fiscal_year"] == 1


def test_pairing_requires_common_pi():
    res = pair_renewals({"C": _project("C", "2001-06-30", "2001-07-15", ("A",), ("B",))})
    assert res.pairs == [] and res.dropped["no_common_pi"] == 1


def test_pairing_one_pair_per_common_pi():
    res = pair_renewals({"C": _project("C", "2001-06-30", "2001-07-15", ("A", "B", "C"), ("B", "C", "D"))})
    assert [p.pi_id for p in res.pairs] == ["B", "C"]
    assert {p.renewal_id for p in res.pairs} == {"C-0"}


def test_pairing_only_focal_activity():
    a = period("R21X", 0, "1999-07-01", "2001-06-30", activity="R21")
    b = period("R21X", 1, "2001-07-15", "2003-06-30", activity="R21", app=2)
    assert pair_renewals({"R21X": [a, b]}).pairs == []


def test_pairing_overlap_adjusts_expiry():
    res = pair_renewals({"C": _project("C", "2002-01-15", "2002-01-01")})
    (p,) = res.pairs
    assert p.gap_days == 1 and p.adjusted_expiry == D(2001, 12, 31) and p.expiry_fiscal_year == 2002


def test_pairs_frame_columns():
    res = pair_renewals({"C": _project("C", "2001-06-30", "2001-09-26")})
    df = pairs_frame(res.pairs)
    for c in ("pair_id", "renewal_id", "core_project_num", "adjusted_expiry", "gap_days", "status", "resubmissions",
              "pi_id", "n_r01_equivalents", "expiry_fiscal_year", "treated", "stratum"):
        assert c in df.columns
    assert df.loc[0, "gap_days"] == 88


# --- budget timing -----------------------------------------------------------------------


def test_budget_timing_means():
    rows = [budget("A", 2001, 1, "2000-10-10", "2001-09-30"), budget("B", 2001, 1, "2000-10-20", "2001-09-30"),
            budget("C", 2001, 5, "2000-10-01", "2001-09-30"), budget("D", 2002, 2, "2001-10-01", "2002-09-30")]
    out = budget_timing_summary(rows, {2001: D(2001, 1, 5)}, FEDERAL)
    new = out[(out["fiscal_year"] == 2001) & (out["category"] == "New")].iloc[0]
    assert new["mean_start_day"] == 15 and new["n_budgets"] == 2
    assert new["passage_day"] == FEDERAL.day_of_year(D(2001, 1, 5))
    ongoing = out[(out["category"] == "Ongoing")].iloc[0]
    assert ongoing["mean_start_day"] == 1
    renewed = out[(out["fiscal_year"] == 2002)].iloc[0]
    assert pd.isna(renewed["passage_date"])

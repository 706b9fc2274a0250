"""Lab assembly around each expiring R01 and the person-by-cohort roster."""

from __future__ import annotations

import logging
import warnings
from collections import defaultdict
from typing import Iterable, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from .dates import add_months
from .grants import BudgetRecord, ProjectPeriod, RenewalPair

logger = logging.getLogger(__name__)

OCCUPATION_GROUP = {
    "Faculty": "Faculty",
    "Postdoc": "Trainee",
    "GradStudent": "Trainee",
    "Staff": "Other",
    "Undergrad": "Other",
    "Other": "Other",
}

_US_BORN = {"US", "USBORN", "US-BORN", "US_BORN", "NATIVE"}
_FOREIGN = {"FOREIGN", "FOREIGNBORN", "FOREIGN-BORN", "FOREIGN_BORN", "NONUS", "NON-US"}

LAB_WINDOW_MONTHS = 12

ROSTER_COLUMNS = [
    "person_id", "cohort", "pair_id", "renewal_id", "pi_id", "treated", "status", "stratum",
    "occupation", "occupation_detail", "birthplace", "home_university_id", "resubmissions",
    "dosage", "gap_days", "lab_size",
]


def normalize_birthplace(value) -> str:
    key = str(value or "").strip().upper().replace(" ", "")
    if key in _US_BORN:
        return "USBorn"
    if key in _FOREIGN:
        return "ForeignBorn"
    return "Unknown"


def lab_window(pair: RenewalPair) -> tuple[pd.Timestamp, pd.Timestamp]:
    """Half-open ``(expiry - 12 months, expiry]`` window."""
    lo = add_months(pair.adjusted_expiry, -LAB_WINDOW_MONTHS)
    return pd.Timestamp(lo), pd.Timestamp(pair.adjusted_expiry)


def pi_grants_in_window(pair: RenewalPair, pi_periods: Iterable[ProjectPeriod]) -> list[str]:
    lo, hi = lab_window(pair)
    lo, hi = lo.date(), hi.date()
    return sorted({p.core_project_num for p in pi_periods
                   if pair.pi_id in p.pi_ids and p.start <= hi and p.end > lo})


def _periods_by_pi(all_periods: Iterable[ProjectPeriod]) -> dict[str, list[ProjectPeriod]]:
    by_pi: dict[str, list[ProjectPeriod]] = defaultdict(list)
    for p in all_periods:
        for pi in p.pi_ids:
            by_pi[pi].append(p)
    return by_pi


def assemble_labs(
    pairs: Sequence[RenewalPair],
    all_periods: Iterable[ProjectPeriod],
    payments: pd.DataFrame,
    crosswalk: pd.DataFrame,
) -> pd.DataFrame:
    """Personnel paid by any of the PI's grants in the 12 months before expiry.

    Returns one row per (pair, person) with the occupation and university of
    the person's latest in-window payment. The PI is always part of a lab and
    is recorded as faculty. Pairs with no paid personnel are left out.
    """
    by_pi = _periods_by_pi(all_periods)
    grant_rows = []
    for p in pairs:
        lo, hi = lab_window(p)
        for core in pi_grants_in_window(p, by_pi.get(p.pi_id, ())):
            grant_rows.append((p.pair_id, core, lo, hi))
    grants = pd.DataFrame(grant_rows, columns=["pair_id", "core_project_num", "lo", "hi"])

    pay = payments.merge(crosswalk, on="award_id", how="inner")
    merged = grants.merge(pay, on="core_project_num", how="inner")
    merged = merged[(merged["date"] > merged["lo"]) & (merged["date"] <= merged["hi"])]
    merged = merged.sort_values(["pair_id", "person_id", "date", "award_id", "occupation"], kind="mergesort")
    latest = merged.groupby(["pair_id", "person_id"], sort=True).tail(1)
    labs = latest[["pair_id", "person_id", "occupation", "university_id"]].reset_index(drop=True)
    labs["is_pi"] = False

    pi_of = {p.pair_id: p.pi_id for p in pairs}
    linked = set(labs["pair_id"])
    empty = [p.pair_id for p in pairs if p.pair_id not in linked]
    if empty:
        logger.info("%d pair(s) have no paid personnel and are excluded", len(empty))

    labs["is_pi"] = labs["person_id"].to_numpy() == labs["pair_id"].map(pi_of).to_numpy()
    labs.loc[labs["is_pi"], "occupation"] = "Faculty"
    has_pi = set(labs.loc[labs["is_pi"], "pair_id"])
    missing_pi = sorted(linked - has_pi)
    if missing_pi:
        # modal university of the paid personnel, ties to the smallest id
        counts = (labs[labs["pair_id"].isin(missing_pi)].groupby(["pair_id", "university_id"]).size()
                  .rename("n").reset_index()
                  .sort_values(["pair_id", "n", "university_id"], ascending=[True, False, True], kind="mergesort"))
        home = counts.drop_duplicates("pair_id").set_index("pair_id")["university_id"]
        extra = pd.DataFrame({
            "pair_id": missing_pi,
            "person_id": [pi_of[k] for k in missing_pi],
            "occupation": "Faculty",
            "university_id": [home[k] for k in missing_pi],
            "is_pi": True,
        })
        labs = pd.concat([labs, extra], ignore_index=True)
    return labs.sort_values(["pair_id", "person_id"], kind="mergesort").reset_index(drop=True)


def assemble_lab(pair: RenewalPair, pi_grants: Iterable[ProjectPeriod], payments: pd.DataFrame,
                 crosswalk: pd.DataFrame) -> pd.DataFrame:
    return assemble_labs([pair], pi_grants, payments, crosswalk)


def build_roster(pairs: Sequence[RenewalPair], labs: pd.DataFrame, demographics: pd.DataFrame | None = None
                 ) -> pd.DataFrame:
    """One entry per (person, cohort).

    A person linked to several pairs in the same cohort keeps a treated
    membership over a continuous one, then the smallest ``pair_id``.
    """
    pinfo = pd.DataFrame(
        [
            (p.pair_id, p.renewal_id, p.pi_id, p.expiry_fiscal_year, p.treated, p.status.value, p.stratum,
             p.resubmissions, p.gap_days)
            for p in pairs
        ],
        columns=["pair_id", "renewal_id", "pi_id", "cohort", "treated", "status", "stratum",
                 "resubmissions", "gap_days"],
    )
    lab_size = labs.groupby("pair_id").size().rename("lab_size")
    df = labs.merge(pinfo, on="pair_id", how="inner").merge(lab_size, left_on="pair_id", right_index=True)
    df = df.rename(columns={"occupation": "occupation_detail", "university_id": "home_university_id"})
    df["occupation"] = df["occupation_detail"].map(OCCUPATION_GROUP)
    df["dosage"] = df["status"]

    df = df.sort_values(["person_id", "cohort", "treated", "pair_id"], ascending=[True, True, False, True],
                        kind="mergesort")
    df = df.drop_duplicates(["person_id", "cohort"], keep="first")

    if demographics is not None and len(demographics):
        bp = demographics.set_index("person_id")["birthplace"]
        df["birthplace"] = df["person_id"].map(bp).map(normalize_birthplace)
    else:
        df["birthplace"] = "Unknown"
    df["treated"] = df["treated"].astype(bool)
    return df[ROSTER_COLUMNS].sort_values(["cohort", "pair_id", "person_id"], kind="mergesort").reset_index(drop=True)


def treated_cohorts(roster: pd.DataFrame) -> dict[str, set[int]]:
    out: dict[str, set[int]] = defaultdict(set)
    for pid, g in zip(roster.loc[roster["treated"], "person_id"], roster.loc[roster["treated"], "cohort"]):
        out[pid].add(int(g))
    return out


# --- balance -----------------------------------------------------------------


def _share(values: pd.Series, match) -> pd.Series:
    return values.fillna("").astype(str).str.strip().str.lower().map(match).astype(float)


def lab_characteristics(
    pairs: Sequence[RenewalPair],
    labs: pd.DataFrame,
    demographics: pd.DataFrame | None = None,
    person_years: pd.DataFrame | None = None,
    records: Iterable[BudgetRecord] | None = None,
    pre_years: int = 5,
) -> pd.DataFrame:
    """Lab-level characteristics at renewal, one row per pair."""
    pinfo = {p.pair_id: p for p in pairs}
    df = labs[labs["pair_id"].isin(pinfo)].copy()
    df["group"] = df["occupation"].map(OCCUPATION_GROUP)
    if demographics is not None and len(demographics):
        df = df.merge(demographics, on="person_id", how="left")
    else:
        for c in ("birthplace", "gender", "race", "ethnicity"):
            df[c] = ""
    df["female"] = _share(df["gender"], lambda s: s in ("f", "female"))
    df["asian"] = _share(df["race"], lambda s: s == "asian")
    df["black"] = _share(df["race"], lambda s: s in ("black", "african american"))
    df["white"] = _share(df["race"], lambda s: s == "white")
    df["hispanic"] = _share(df["ethnicity"], lambda s: s in ("hispanic", "latino", "hispanic or latino"))
    df["us_born"] = (df["birthplace"].map(normalize_birthplace) == "USBorn").astype(float)

    agg = df.groupby("pair_id").agg(
        lab_size=("person_id", "size"),
        pct_faculty=("group", lambda s: float((s == "Faculty").mean())),
        pct_trainee=("group", lambda s: float((s == "Trainee").mean())),
        pct_other=("group", lambda s: float((s == "Other").mean())),
        pct_female=("female", "mean"),
        pct_asian=("asian", "mean"),
        pct_black=("black", "mean"),
        pct_white=("white", "mean"),
        pct_hispanic=("hispanic", "mean"),
        pct_us_born=("us_born", "mean"),
    )
    agg["treated"] = [pinfo[k].treated for k in agg.index]
    agg["stratum"] = [pinfo[k].stratum for k in agg.index]
    cohort = pd.Series({k: pinfo[k].expiry_fiscal_year for k in agg.index})

    if person_years is not None and len(person_years):
        py = df[["pair_id", "person_id"]].merge(person_years[["person_id", "year", "pubs"]], on="person_id")
        g = py["pair_id"].map(cohort)
        py = py[(py["year"] >= g - pre_years) & (py["year"] <= g - 1)]
        agg["pubs_per_year"] = (py.groupby("pair_id")["pubs"].sum() / pre_years).reindex(agg.index).fillna(0.0)
    else:
        agg["pubs_per_year"] = np.nan

    costs = [r for r in (records or ()) if r.total_cost is not None]
    if costs:
        by_pi: dict[str, list[BudgetRecord]] = defaultdict(list)
        for r in costs:
            for pi in r.pi_ids:
                by_pi[pi].append(r)
        funding = []
        for k in agg.index:
            p = pinfo[k]
            g = p.expiry_fiscal_year
            total = sum(r.total_cost for r in by_pi.get(p.pi_id, ()) if g - pre_years <= r.fiscal_year <= g - 1)
            funding.append(total / pre_years / 1e6)
        agg["funding_per_year"] = funding
    else:
        agg["funding_per_year"] = np.nan
    return agg.reset_index()


BALANCE_VARIABLES = ["pct_faculty", "pct_trainee", "pct_other", "lab_size", "pct_female", "pct_asian",
                     "pct_black", "pct_white", "pct_hispanic", "pct_us_born", "pubs_per_year",
                     "funding_per_year"]


def balance_table(lab_chars: pd.DataFrame, roster: pd.DataFrame | None = None) -> pd.DataFrame:
    """Interrupted vs continuously funded means by stratum with Welch t-tests."""
    rows = []
    for stratum in ("SingleR01", "MultipleR01"):
        sub = lab_chars[lab_chars["stratum"] == stratum]
        t, c = sub[sub["treated"]], sub[~sub["treated"]]
        for var in BALANCE_VARIABLES:
            a, b = t[var].dropna(), c[var].dropna()
            diff = a.mean() - b.mean() if len(a) and len(b) else np.nan
            se = np.sqrt(a.var(ddof=1) / len(a) + b.var(ddof=1) / len(b)) if len(a) > 1 and len(b) > 1 else np.nan
            if len(a) > 1 and len(b) > 1 and np.isfinite(se) and se > 0:
                with warnings.catch_warnings():
                    # near-constant columns trip scipy's precision check; the p-value is still usable
                    warnings.simplefilter("ignore", RuntimeWarning)
                    p = float(stats.ttest_ind(a, b, equal_var=False).pvalue)
            else:
                p = np.nan
            rows.append((stratum, var, diff, se, b.mean() if len(b) else np.nan,
                         a.mean() if len(a) else np.nan, p))
        if roster is not None:
            r = roster[roster["stratum"] == stratum]
            rows.append((stratum, "personnel_count", np.nan, np.nan,
                         float(r.loc[~r["treated"], "person_id"].nunique()),
                         float(r.loc[r["treated"], "person_id"].nunique()), np.nan))
    return pd.DataFrame(rows, columns=["stratum", "variable", "difference", "se", "continuously_funded",
                                       "interrupted", "p_value"])

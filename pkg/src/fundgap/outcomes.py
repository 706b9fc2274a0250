"""Person-year outcome variables: earnings, sector, job changes, census presence, publications."""

from __future__ import annotations

import logging
import math
from typing import Mapping

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

NONEMPLOYED, UNIVERSITY, INDUSTRY = "Nonemployed", "University", "Industry"
SECTORS = (NONEMPLOYED, UNIVERSITY, INDUSTRY)
SECTOR_COLUMNS = ("nonemployed", "university", "industry")
CENSUS_YEARS = (2000, 2010, 2020)
DECOMPOSITION_COLUMNS = (
    "nonemp_in2020", "nonemp_notin2020", "nonemp_pub", "nonemp_nopub",
    "nonemp_in2020_pub", "nonemp_in2020_nopub", "nonemp_notin2020_pub", "nonemp_notin2020_nopub",
)
ATTACHMENT_YEARS = tuple(range(-1, 6))


def total_earnings(w2: int, lehd: int, ilbd: int) -> int:
    """Self-employment earnings plus the larger of W-2 and UI earnings."""
    w2, lehd, ilbd = (0 if v is None else v for v in (w2, lehd, ilbd))
    if min(w2, lehd, ilbd) < 0:
        raise ValueError("negative earnings component")
    return ilbd + max(w2, lehd)


def sector_indicator(employer_eins: Mapping[str, bool], total: int) -> str:
    """Sector from employer EINs (``ein -> is_university``) and total earnings.

    Any university EIN makes the year a university year. Earnings without an
    employer EIN (self-employment only) count as industry.
    """
    if any(employer_eins.values()):
        return UNIVERSITY
    if employer_eins or total > 0:
        return INDUSTRY
    return NONEMPLOYED


def arcsinh(x: float) -> float:
    return math.log(x + math.sqrt(x * x + 1.0))


def new_ein_counts(eins_t: Mapping[str, bool], eins_t_minus_1: Mapping[str, bool] | None) -> tuple[int, int]:
    """EINs present in year t but not t-1, split into (university, non-university).

    ``None`` for t-1 marks the first observed year, which has no new jobs.
    """
    if eins_t_minus_1 is None:
        return 0, 0
    new = [u for e, u in eins_t.items() if e not in eins_t_minus_1]
    return sum(new), len(new) - sum(new)


def decompose_nonemployment(sector: str, in_census_2020: bool, published: bool) -> dict[str, int]:
    n = sector == NONEMPLOYED
    c, p = bool(in_census_2020), bool(published)
    return {
        "nonemp_in2020": int(n and c),
        "nonemp_notin2020": int(n and not c),
        "nonemp_pub": int(n and p),
        "nonemp_nopub": int(n and not p),
        "nonemp_in2020_pub": int(n and c and p),
        "nonemp_in2020_nopub": int(n and c and not p),
        "nonemp_notin2020_pub": int(n and not c and p),
        "nonemp_notin2020_nopub": int(n and not c and not p),
    }


def university_split(employer_eins: Mapping[str, bool], home_ein: str | None) -> tuple[bool, bool]:
    if not home_ein:
        logger.info("unknown home university EIN")
        return False, False
    univ = {e for e, u in employer_eins.items() if u}
    return home_ein in univ, bool(univ - {home_ein})


def fully_attached(person_id: str, cohort: int, panel: pd.DataFrame) -> bool:
    """Positive earnings in every event year -1..5; missing years count as zero."""
    rows = panel[(panel["person_id"] == person_id) & (panel["cohort"] == cohort)]
    positive = set(rows.loc[rows["total_earnings"] > 0, "event_time"])
    return all(e in positive for e in ATTACHMENT_YEARS)


def parse_eins(value: str) -> dict[str, bool]:
    out: dict[str, bool] = {}
    for tok in (value or "").split(";"):
        tok = tok.strip()
        if tok:
            ein, _, flag = tok.rpartition(":")
            out[ein] = out.get(ein, False) or flag == "U"
    return out


def derive_outcomes(person_years: pd.DataFrame) -> pd.DataFrame:
    """Add derived outcome columns to typed person-year rows (see :func:`fundgap.io.read_person_years`)."""
    py = person_years.sort_values(["person_id", "year"], kind="mergesort").reset_index(drop=True)
    w2, lehd, ilbd = (py[c].to_numpy(np.int64) for c in ("w2", "lehd", "ilbd"))
    if (w2 < 0).any() or (lehd < 0).any() or (ilbd < 0).any():
        raise ValueError("negative earnings component")
    total = ilbd + np.maximum(w2, lehd)

    parsed = [parse_eins(v) for v in py["eins"]]
    any_univ = np.array([any(d.values()) for d in parsed])
    any_ein = np.array([bool(d) for d in parsed])
    sector = np.where(any_univ, UNIVERSITY, np.where(any_ein | (total > 0), INDUSTRY, NONEMPLOYED))

    persons = py["person_id"].to_numpy()
    years = py["year"].to_numpy()
    new_u = np.zeros(len(py), dtype=np.int64)
    new_n = np.zeros(len(py), dtype=np.int64)
    for i in range(1, len(py)):
        if persons[i] != persons[i - 1]:
            continue
        prev = parsed[i - 1] if years[i - 1] == years[i] - 1 else {}
        new_u[i], new_n[i] = new_ein_counts(parsed[i], prev)

    out = py[["person_id", "year", "w2", "lehd", "ilbd", "pubs"]].copy()
    out["total_earnings"] = total
    out["asinh_earnings"] = np.arcsinh(total / 100.0)
    out["sector"] = sector
    out["univ_eins"] = [";".join(sorted(e for e, u in d.items() if u)) for d in parsed]
    out["n_eins"] = [len(d) for d in parsed]
    out["new_univ_jobs"] = new_u
    out["new_nonuniv_jobs"] = new_n
    out["pub_count"] = py["pubs"].to_numpy(np.int64)
    out["published"] = (out["pub_count"] >= 1).astype(np.int64)
    for y in CENSUS_YEARS:
        out[f"in_census_{y}"] = py.groupby("person_id")[f"in_census_{y}"].transform("max").astype(bool)
    return out.drop(columns=["pubs"])


def build_panel(
    roster: pd.DataFrame,
    outcomes: pd.DataFrame,
    window: tuple[int, int] = (-5, 5),
    university_eins: Mapping[str, str] | None = None,
) -> pd.DataFrame:
    """Rectangular person-by-cohort-by-event-year panel.

    Years with no input record become nonemployed rows with zero earnings.
    ``university_eins`` maps university ids to EINs; ids are used as EINs when
    it is omitted.
    """
    lo, hi = window
    events = np.arange(lo, hi + 1)
    base = roster[["person_id", "cohort", "pair_id", "home_university_id"]]
    n = len(base)
    panel = base.loc[base.index.repeat(len(events))].reset_index(drop=True)
    panel["event_time"] = np.tile(events, n)
    panel["year"] = panel["cohort"].to_numpy() + panel["event_time"].to_numpy()

    panel = panel.merge(outcomes, on=["person_id", "year"], how="left", sort=False)
    missing = panel["sector"].isna().to_numpy()
    for c in ("w2", "lehd", "ilbd", "total_earnings", "n_eins", "new_univ_jobs", "new_nonuniv_jobs",
              "pub_count", "published"):
        panel[c] = panel[c].fillna(0).astype(np.int64)
    panel["asinh_earnings"] = panel["asinh_earnings"].fillna(0.0)
    panel["sector"] = panel["sector"].fillna(NONEMPLOYED)
    panel["univ_eins"] = panel["univ_eins"].fillna("")
    person_census = outcomes.groupby("person_id")[[f"in_census_{y}" for y in CENSUS_YEARS]].max()
    for y in CENSUS_YEARS:
        col = f"in_census_{y}"
        panel[col] = panel["person_id"].map(person_census[col]).fillna(False).astype(bool).astype(np.int64)
    panel["imputed"] = missing.astype(np.int64)

    for name, col in zip(SECTORS, SECTOR_COLUMNS):
        panel[col] = (panel["sector"] == name).astype(np.int64)

    n_ = panel["nonemployed"].to_numpy(bool)
    c_ = panel["in_census_2020"].to_numpy(bool)
    p_ = panel["published"].to_numpy(bool)
    decomp = {
        "nonemp_in2020": n_ & c_, "nonemp_notin2020": n_ & ~c_,
        "nonemp_pub": n_ & p_, "nonemp_nopub": n_ & ~p_,
        "nonemp_in2020_pub": n_ & c_ & p_, "nonemp_in2020_nopub": n_ & c_ & ~p_,
        "nonemp_notin2020_pub": n_ & ~c_ & p_, "nonemp_notin2020_nopub": n_ & ~c_ & ~p_,
    }
    for k, v in decomp.items():
        panel[k] = v.astype(np.int64)

    home = panel["home_university_id"].fillna("").astype(str)
    if university_eins is not None:
        home = home.map(lambda u: university_eins.get(u, ""))
    at_home, at_other = [], []
    for h, ue in zip(home, panel["univ_eins"]):
        s = set(ue.split(";")) if ue else set()
        at_home.append(bool(h) and h in s)
        at_other.append(bool(s - {h}) if h else False)
    if (home == "").any():
        logger.info("%d panel rows lack a home university EIN", int((home == "").sum()))
    panel["at_home_university"] = np.array(at_home, dtype=np.int64)
    panel["at_other_university"] = np.array(at_other, dtype=np.int64)

    in_att = panel["event_time"].between(ATTACHMENT_YEARS[0], ATTACHMENT_YEARS[-1])
    pos = (panel["total_earnings"] > 0) & in_att
    counts = pos.groupby([panel["person_id"], panel["cohort"]]).transform("sum")
    panel["fully_attached"] = (counts == len(ATTACHMENT_YEARS)).astype(np.int64)
    return panel.sort_values(["cohort", "pair_id", "person_id", "event_time"], kind="mergesort").reset_index(drop=True)

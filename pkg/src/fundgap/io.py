"""CSV schemas for pipeline inputs and outputs.

Every reader accepts a path or an already-loaded frame (as produced by the
simulator) and returns typed data. Problems are collected per row and raised
together as a :class:`SchemaError`.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .grants import KNOWN_APPLICATION_TYPES, BudgetRecord

EXPORTER_COLUMNS = ["CORE_PROJECT_NUM", "FULL_PROJECT_NUM", "FY", "APPLICATION_TYPE", "BUDGET_START",
                    "BUDGET_END", "PI_IDS", "ACTIVITY", "IC"]
PASSAGE_COLUMNS = ["FY", "DATE"]
PAYMENT_COLUMNS = ["PERSON_ID", "AWARD_ID", "DATE", "OCCUPATION", "UNIVERSITY_ID"]
CROSSWALK_COLUMNS = ["AWARD_ID", "CORE_PROJECT_NUM"]
DEMOGRAPHIC_COLUMNS = ["PERSON_ID", "BIRTHPLACE", "GENDER", "RACE", "ETHNICITY"]
PERSON_YEAR_COLUMNS = ["PERSON_ID", "YEAR", "W2", "LEHD", "ILBD", "EINS", "IN_CENSUS_2000",
                       "IN_CENSUS_2010", "IN_CENSUS_2020", "PUBS"]
UNIVERSITY_COLUMNS = ["UNIVERSITY_ID", "EIN"]

OCCUPATIONS = ("Faculty", "Postdoc", "GradStudent", "Staff", "Undergrad", "Other")


@dataclass(frozen=True)
class RowError:
    source: str
    line: int
    column: str
    message: str

    def __str__(self) -> str:
        return f"{self.source}:{self.line}: {self.column}: {self.message}"


class SchemaError(ValueError):
    def __init__(self, errors: Sequence[RowError]):
        self.errors = list(errors)
        head = "\n".join(str(e) for e in self.errors[:20])
        more = f"\n... {len(self.errors) - 20} more" if len(self.errors) > 20 else ""
        super().__init__(f"{len(self.errors)} schema error(s)\n{head}{more}")


def _load(src, name: str) -> tuple[pd.DataFrame, str]:
    if isinstance(src, pd.DataFrame):
        return src.reset_index(drop=True), name
    path = Path(src)
    try:
        return pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8"), path.name
    except FileNotFoundError:
        raise SchemaError([RowError(name, 0, "*", f"file not found: {path}")]) from None


class _Checker:
    """Accumulates row errors while coercing columns."""

    def __init__(self, df: pd.DataFrame, source: str, required: Iterable[str]):
        self.df = df
        self.source = source
        self.errors: list[RowError] = []
        missing = [c for c in required if c not in df.columns]
        for c in missing:
            self.errors.append(RowError(source, 1, c, "missing column"))
        self.ok = not missing

    def _flag(self, mask: np.ndarray, column: str, message: str) -> None:
        for i in np.flatnonzero(mask)[:100]:
            self.errors.append(RowError(self.source, int(i) + 2, column, message))

    def text(self, column: str, allow_empty: bool = False) -> pd.Series:
        s = self.df[column].astype(str).str.strip()
        if not allow_empty:
            self._flag((s == "").to_numpy(), column, "empty value")
        return s

    def integer(self, column: str, nonneg: bool = False) -> pd.Series:
        raw = self.df[column]
        vals = pd.to_numeric(raw, errors="coerce")
        bad = vals.isna() | (vals != np.floor(vals))
        self._flag(bad.to_numpy(), column, "not an integer")
        if nonneg:
            self._flag((vals < 0).to_numpy(), column, "negative value")
        return vals.fillna(0).astype(np.int64)

    def number(self, column: str, nonneg: bool = False, missing_as_zero: bool = False) -> pd.Series:
        raw = self.df[column]
        if missing_as_zero:
            raw = raw.replace("", "0")
        vals = pd.to_numeric(raw, errors="coerce")
        self._flag(vals.isna().to_numpy(), column, "not a number")
        if nonneg:
            self._flag((vals < 0).to_numpy(), column, "negative value")
        return vals.fillna(0.0)

    def date(self, column: str) -> list[dt.date | None]:
        out = []
        for i, v in enumerate(self.df[column]):
            if isinstance(v, dt.date):
                out.append(v)
                continue
            try:
                out.append(dt.date.fromisoformat(str(v).strip()))
            except ValueError:
                self.errors.append(RowError(self.source, i + 2, column, f"bad ISO date {v!r}"))
                out.append(None)
        return out

    def flag(self, column: str) -> pd.Series:
        vals = self.integer(column)
        self._flag((~vals.isin([0, 1])).to_numpy(), column, "must be 0 or 1")
        return vals.astype(bool)

    def choice(self, column: str, allowed: Iterable[str]) -> pd.Series:
        s = self.text(column)
        allowed = set(allowed)
        self._flag((~s.isin(allowed)).to_numpy(), column, f"must be one of {sorted(allowed)}")
        return s

    def finish(self) -> None:
        if self.errors:
            raise SchemaError(self.errors)


def read_exporter(src) -> list[BudgetRecord]:
    df, name = _load(src, "exporter.csv")
    ck = _Checker(df, name, EXPORTER_COLUMNS)
    ck.finish()
    core = ck.text("CORE_PROJECT_NUM")
    full = ck.text("FULL_PROJECT_NUM")
    fy = ck.integer("FY")
    app = ck.integer("APPLICATION_TYPE")
    ck._flag((~app.isin(list(KNOWN_APPLICATION_TYPES))).to_numpy(), "APPLICATION_TYPE", "unknown code")
    start = ck.date("BUDGET_START")
    end = ck.date("BUDGET_END")
    for i, (s, e) in enumerate(zip(start, end)):
        if s is not None and e is not None and s > e:
            ck.errors.append(RowError(name, i + 2, "BUDGET_END", "budget end before budget start"))
    pis = ck.text("PI_IDS")
    activity = ck.text("ACTIVITY")
    ic = ck.text("IC", allow_empty=True)
    cost = ck.number("TOTAL_COST", nonneg=True, missing_as_zero=True) if "TOTAL_COST" in df.columns else None
    ck.finish()
    cost_l = [None] * len(df) if cost is None else [float(c) for c in cost.tolist()]
    return [
        BudgetRecord(
            core_project_num=c,
            full_project_num=f,
            fiscal_year=int(y),
            application_type=int(a),
            budget_start=s,
            budget_end=e,
            pi_ids=frozenset(p.strip() for p in pi.split(";") if p.strip()),
            activity_code=act,
            awarding_institute=i,
            total_cost=tc,
        )
        for c, f, y, a, s, e, pi, act, i, tc in zip(core.tolist(), full.tolist(), fy.tolist(), app.tolist(), start,
                                                    end, pis.tolist(), activity.tolist(), ic.tolist(), cost_l)
    ]


def read_passage_dates(src) -> dict[int, dt.date]:
    df, name = _load(src, "budget_passage.csv")
    ck = _Checker(df, name, PASSAGE_COLUMNS)
    ck.finish()
    fy = ck.integer("FY")
    dates = ck.date("DATE")
    ck.finish()
    return {int(f): d for f, d in zip(fy, dates)}


def read_payments(src) -> pd.DataFrame:
    df, name = _load(src, "payments.csv")
    ck = _Checker(df, name, PAYMENT_COLUMNS)
    ck.finish()
    out = pd.DataFrame({
        "person_id": ck.text("PERSON_ID"),
        "award_id": ck.text("AWARD_ID"),
        "date": pd.to_datetime(pd.Series(ck.date("DATE"), dtype=object)),
        "occupation": ck.choice("OCCUPATION", OCCUPATIONS),
        "university_id": ck.text("UNIVERSITY_ID", allow_empty=True),
    })
    ck.finish()
    return out


def read_crosswalk(src) -> pd.DataFrame:
    df, name = _load(src, "crosswalk.csv")
    ck = _Checker(df, name, CROSSWALK_COLUMNS)
    ck.finish()
    out = pd.DataFrame({"award_id": ck.text("AWARD_ID"), "core_project_num": ck.text("CORE_PROJECT_NUM")})
    ck.finish()
    return out.drop_duplicates()


def read_demographics(src) -> pd.DataFrame:
    df, name = _load(src, "demographics.csv")
    ck = _Checker(df, name, DEMOGRAPHIC_COLUMNS)
    ck.finish()
    out = pd.DataFrame({
        "person_id": ck.text("PERSON_ID"),
        "birthplace": ck.text("BIRTHPLACE", allow_empty=True),
        "gender": ck.text("GENDER", allow_empty=True),
        "race": ck.text("RACE", allow_empty=True),
        "ethnicity": ck.text("ETHNICITY", allow_empty=True),
    })
    ck.finish()
    return out.drop_duplicates("person_id", keep="first")


def to_cents(dollars: pd.Series) -> pd.Series:
    return np.round(dollars.to_numpy(dtype=float) * 100.0).astype(np.int64)


def read_person_years(src) -> pd.DataFrame:
    """Typed person-year inputs; earnings are integer cents."""
    df, name = _load(src, "person_years.csv")
    ck = _Checker(df, name, PERSON_YEAR_COLUMNS)
    ck.finish()
    out = pd.DataFrame({
        "person_id": ck.text("PERSON_ID"),
        "year": ck.integer("YEAR"),
        "w2": to_cents(ck.number("W2", nonneg=True, missing_as_zero=True)),
        "lehd": to_cents(ck.number("LEHD", nonneg=True, missing_as_zero=True)),
        "ilbd": to_cents(ck.number("ILBD", nonneg=True, missing_as_zero=True)),
        "eins": ck.text("EINS", allow_empty=True),
        "in_census_2000": ck.flag("IN_CENSUS_2000"),
        "in_census_2010": ck.flag("IN_CENSUS_2010"),
        "in_census_2020": ck.flag("IN_CENSUS_2020"),
        "pubs": ck.integer("PUBS", nonneg=True),
    })
    for i, v in enumerate(out["eins"]):
        for tok in filter(None, (t.strip() for t in v.split(";"))):
            ein, sep, flag = tok.rpartition(":")
            if not sep or not ein or flag not in ("U", "N"):
                ck.errors.append(RowError(name, i + 2, "EINS", f"bad EIN token {tok!r}"))
    dup = out.duplicated(["person_id", "year"]).to_numpy()
    ck._flag(dup, "YEAR", "duplicate person-year")
    ck.finish()
    return out


def read_universities(src) -> dict[str, str]:
    df, name = _load(src, "universities.csv")
    ck = _Checker(df, name, UNIVERSITY_COLUMNS)
    ck.finish()
    return dict(zip(ck.text("UNIVERSITY_ID"), ck.text("EIN")))


# --- outputs -------------------------------------------------------------------


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def write_csv(df: pd.DataFrame, path: Path, stamp: dict | None = None) -> Path:
    """Write a CSV deterministically, optionally stamping constant columns."""
    df = df.copy()
    for k, v in (stamp or {}).items():
        df[k] = v
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, lineterminator="\n", float_format="%.17g")
    return path


def _jsonable(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return None if not np.isfinite(obj) else float(obj)
    if isinstance(obj, (dt.date,)):
        return obj.isoformat()
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    return obj


def write_json(obj, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


# --- intermediate tables written by the pipeline ------------------------------------

_TEXT_COLUMNS = ("person_id", "pair_id", "renewal_id", "pi_id", "status", "stratum", "occupation",
                 "occupation_detail", "birthplace", "home_university_id", "dosage", "sector", "univ_eins")


def read_table(src, name: str, required: Sequence[str], bool_columns: Sequence[str] = ()) -> pd.DataFrame:
    """Load a roster or panel CSV previously written by this package."""
    df, source = _load(src, name)
    ck = _Checker(df, source, required)
    ck.finish()
    out = df.copy()
    for c in out.columns:
        if c in _TEXT_COLUMNS or c in ("config_hash",):
            continue
        if c in bool_columns:
            low = out[c].astype(str).str.strip().str.lower()
            bad = ~low.isin(["true", "false", "1", "0"])
            ck._flag(bad.to_numpy(), c, "not a boolean")
            out[c] = low.isin(["true", "1"])
            continue
        raw = out[c].replace("", np.nan)
        conv = pd.to_numeric(raw, errors="coerce")
        if conv.notna().sum() == raw.notna().sum():
            out[c] = conv
    ck.finish()
    return out.drop(columns=["config_hash", "seed"], errors="ignore")


ROSTER_REQUIRED = ("person_id", "cohort", "pair_id", "treated", "stratum", "occupation", "dosage")
PANEL_REQUIRED = ("person_id", "cohort", "event_time", "year")


def read_roster(src) -> pd.DataFrame:
    return read_table(src, "roster.csv", ROSTER_REQUIRED, bool_columns=("treated",))


def read_panel(src) -> pd.DataFrame:
    return read_table(src, "panel.csv", PANEL_REQUIRED)

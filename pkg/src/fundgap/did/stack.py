"""Stacking expiry-year cohorts with clean controls."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from ..cohorts import treated_cohorts

logger = logging.getLogger(__name__)

CONTROL_GROUPS = ("continuous", "interrupted_multiple")
REQUIRED_COLUMNS = ("cohort", "person_id", "event_time", "treated", "y")


@dataclass
class StackedData:
    """Long person-by-cohort-by-event-year rows ready for estimation.

    ``frame`` holds one row per observation with at least ``cohort``,
    ``person_id``, ``event_time``, ``treated`` and ``y``; optional columns are
    the cluster key (``pair_id`` by default), ``dosage``, ``weight``,
    ``shifted_time`` and any covariates.
    """

    frame: pd.DataFrame
    window: tuple[int, int] = (-5, 5)
    outcome: str = "y"
    covariates: tuple[str, ...] = ()
    dropped_cohorts: dict[int, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        missing = [c for c in REQUIRED_COLUMNS if c not in self.frame.columns]
        if missing:
            raise ValueError(f"stacked frame lacks columns {missing}")
        lo, hi = self.window
        if not lo <= -1 < 0 <= hi:
            raise ValueError(f"window {self.window} must contain event times -1 and 0")
        f = self.frame
        if "weight" not in f.columns:
            f = f.assign(weight=1.0)
        if "pair_id" not in f.columns:
            f = f.assign(pair_id=f["cohort"].astype(str) + ":" + f["person_id"].astype(str))
        if "shifted_time" not in f.columns:
            f = f.assign(shifted_time=shifted_times(f["cohort"], f["event_time"], stride=100))
        f = f[f["event_time"].between(lo, hi)]
        if f.duplicated(["cohort", "person_id", "event_time"]).any():
            raise ValueError("a (cohort, person) contributes more than one row per event time")
        self.frame = f.reset_index(drop=True)

    @property
    def cohorts(self) -> list[int]:
        return sorted(int(g) for g in self.frame["cohort"].unique())

    def subset(self, mask: pd.Series | np.ndarray) -> "StackedData":
        return StackedData(self.frame[np.asarray(mask)], self.window, self.outcome, self.covariates,
                           dict(self.dropped_cohorts))


def shifted_times(cohort: pd.Series, event_time: pd.Series, stride: int = 100) -> np.ndarray:
    """Calendar year plus ``stride`` times the cohort's rank, keeping cohorts apart in time."""
    cohort = np.asarray(cohort)
    ranks = {g: i for i, g in enumerate(sorted(set(cohort.tolist())))}
    rank = np.array([ranks[g] for g in cohort.tolist()], dtype=np.int64)
    return cohort + np.asarray(event_time) + stride * rank


def _apply_subsample(df: pd.DataFrame, subsample: Mapping[str, object] | None) -> pd.DataFrame:
    if not subsample:
        return df
    keep = np.ones(len(df), dtype=bool)
    for col, allowed in subsample.items():
        if col == "dosage":
            continue
        if col not in df.columns:
            raise KeyError(f"unknown subsample column {col!r}")
        vals = allowed if isinstance(allowed, (list, tuple, set, frozenset)) else [allowed]
        vals = [_coerce_like(df[col], v) for v in vals]
        keep &= df[col].isin(vals).to_numpy()
    if "dosage" in subsample:
        allowed = subsample["dosage"]
        vals = allowed if isinstance(allowed, (list, tuple, set, frozenset)) else [allowed]
        keep &= (~df["treated"].to_numpy(bool)) | df["dosage"].isin(list(vals)).to_numpy()
    return df[keep]


def _coerce_like(series: pd.Series, value):
    if pd.api.types.is_bool_dtype(series) or pd.api.types.is_integer_dtype(series):
        if isinstance(value, str):
            low = value.strip().lower()
            if low in ("true", "yes"):
                return 1
            if low in ("false", "no"):
                return 0
            return int(low)
    return value


def stack_cohorts(
    roster: pd.DataFrame,
    panel: pd.DataFrame,
    outcome: str,
    *,
    clean_window: int = 2,
    window: tuple[int, int] = (-5, 5),
    offset_stride: int = 100,
    covariates: Sequence[str] = (),
    control_group: str = "continuous",
    subsample: Mapping[str, object] | None = None,
    extra_columns: Sequence[str] = (),
) -> StackedData:
    """Stack expiry-year cohorts into one estimation sample.

    Treated rows are personnel of interrupted labs in cohort g. Controls are
    personnel of continuously funded labs in g who are not treated in any
    cohort within ``clean_window`` years of g. With
    ``control_group="interrupted_multiple"`` the comparison is instead
    interrupted single-R01 (treated) against interrupted multiple-R01 labs.

    Clean-control eligibility is judged on the full roster before
    ``subsample`` filters apply.
    """
    lo, hi = window
    if offset_stride <= hi - lo:
        raise ValueError(f"offset_stride {offset_stride} must exceed the window span {hi - lo}")
    if control_group not in CONTROL_GROUPS:
        raise ValueError(f"control_group must be one of {CONTROL_GROUPS}")

    treated_in = treated_cohorts(roster)
    r = roster.copy()
    if "fully_attached" not in r.columns and "fully_attached" in panel.columns:
        fa = panel.groupby(["person_id", "cohort"])["fully_attached"].max().rename("fully_attached")
        r = r.merge(fa, left_on=["person_id", "cohort"], right_index=True, how="left")
        r["fully_attached"] = r["fully_attached"].fillna(0).astype(np.int64)
    r = _apply_subsample(r, subsample)

    if control_group == "continuous":
        arm_t = r["treated"].to_numpy(bool)
        clean = np.array([
            not any(abs(h - g) <= clean_window for h in treated_in.get(p, ()))
            for p, g in zip(r["person_id"], r["cohort"])
        ], dtype=bool)
        arm_c = ~arm_t & clean
    else:
        single = (r["stratum"] == "SingleR01").to_numpy()
        arm_t = r["treated"].to_numpy(bool) & single
        arm_c = r["treated"].to_numpy(bool) & ~single
    r = r.assign(arm_treated=arm_t)[arm_t | arm_c]

    dropped: dict[int, str] = {}
    counts = r.groupby("cohort")["arm_treated"].agg(["sum", "size"])
    for g, row in counts.iterrows():
        if row["sum"] == 0:
            dropped[int(g)] = "no treated units"
        elif row["sum"] == row["size"]:
            dropped[int(g)] = "no clean controls"
    if dropped:
        logger.info("dropping cohorts %s", dropped)
        r = r[~r["cohort"].isin(list(dropped))]

    for c in covariates:
        if c not in r.columns:
            raise KeyError(f"covariate {c!r} not in roster")
    unit_cols = ["person_id", "cohort", "pair_id", "arm_treated"] + [
        c for c in ("renewal_id", "pi_id", "stratum", "occupation", "birthplace", "dosage", "status")
        if c in r.columns
    ] + list(covariates)
    units = r[list(dict.fromkeys(unit_cols))]

    pcols = ["person_id", "cohort", "event_time", "year", outcome] + [
        c for c in extra_columns if c != outcome
    ]
    if "weight" in panel.columns:
        pcols.append("weight")
    rows = panel.loc[panel["event_time"].between(lo, hi), list(dict.fromkeys(pcols))]
    df = units.merge(rows, on=["person_id", "cohort"], how="inner")
    df = df.rename(columns={"arm_treated": "treated"})
    df["y"] = df[outcome].astype(float)
    if "weight" not in df.columns:
        df["weight"] = 1.0
    df["shifted_time"] = shifted_times(df["cohort"], df["event_time"], offset_stride)
    df = df.sort_values(["cohort", "treated", "pair_id", "person_id", "event_time"],
                        ascending=[True, False, True, True, True], kind="mergesort").reset_index(drop=True)
    return StackedData(df, window, outcome, tuple(covariates), dropped)

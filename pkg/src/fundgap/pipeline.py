"""End-to-end runs: grant records and person-years in, estimates and tables out."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Mapping

import numpy as np
import pandas as pd

from . import effects, io
from .cohorts import assemble_labs, balance_table, build_roster, lab_characteristics
from .dates import FEDERAL
from .did.estimator import EstimateSet, estimate, raw_means
from .did.stack import CONTROL_GROUPS, StackedData, stack_cohorts
from .did.twfe import twfe_stacked
from .grants import (DEFAULT_LONG_DAYS, DEFAULT_SHORT_DAYS, PairingResult, ReconstructionResult,
                     budget_timing_summary, pair_renewals, pairs_frame, reconstruct_all)
from .outcomes import SECTOR_COLUMNS, build_panel, derive_outcomes

logger = logging.getLogger(__name__)

INPUT_FILES = {
    "exporter": "exporter.csv",
    "passage": "budget_passage.csv",
    "payments": "payments.csv",
    "crosswalk": "crosswalk.csv",
    "demographics": "demographics.csv",
    "person_years": "person_years.csv",
    "universities": "universities.csv",
}
OPTIONAL_INPUTS = ("passage", "demographics", "universities")
SUBSAMPLE_KEYS = ("stratum", "occupation", "birthplace", "fully_attached", "dosage")
REPORT_REQUIRED = ("renewal_pairs.csv", "estimates.json", "rawmeans.csv")


class NoCohortsError(RuntimeError):
    """Nothing left to estimate after pairing, linking and stacking."""


class MissingArtifacts(FileNotFoundError):
    def __init__(self, missing):
        self.missing = list(missing)
        super().__init__("missing artifacts: " + ", ".join(self.missing))


@dataclass
class RunConfig:
    short_days: int = DEFAULT_SHORT_DAYS
    long_days: int = DEFAULT_LONG_DAYS
    clean_window: int = 2
    event_window: tuple[int, int] = (-5, 5)
    bootstrap_reps: int = 999
    seed: int = 0
    cluster_level: str = "pair_id"
    subsample: dict = field(default_factory=dict)
    covariates: list = field(default_factory=list)
    outcome: str = "nonemployed"
    control_group: str = "continuous"
    min_cell: int = 3
    offset_stride: int = 100
    twfe: bool = False

    def __post_init__(self):
        self.event_window = tuple(int(v) for v in self.event_window)
        self.covariates = list(self.covariates)
        self.subsample = {k: v for k, v in sorted(dict(self.subsample).items())}
        self.validate()

    def validate(self) -> None:
        if not 0 < self.short_days < self.long_days:
            raise ValueError("thresholds must satisfy 0 < short_days < long_days")
        lo, hi = self.event_window
        if not lo <= -1 < 0 <= hi:
            raise ValueError("event window must contain -1 and 0")
        if self.cluster_level not in ("pair_id", "renewal_id"):
            raise ValueError("cluster_level must be pair_id or renewal_id")
        if self.control_group not in CONTROL_GROUPS:
            raise ValueError(f"control_group must be one of {CONTROL_GROUPS}")
        bad = set(self.subsample) - set(SUBSAMPLE_KEYS)
        if bad:
            raise ValueError(f"unknown subsample filters {sorted(bad)}")
        if self.bootstrap_reps == 1 or self.bootstrap_reps < 0:
            raise ValueError("bootstrap_reps must be 0 or at least 2")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["event_window"] = list(self.event_window)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "RunConfig":
        d = dict(d.get("config", d))
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)

    @property
    def hash(self) -> str:
        return io.config_hash(self.to_dict())


@dataclass
class Inputs:
    """Raw inputs, as paths or already-loaded frames with the CSV columns."""

    exporter: object
    payments: object
    crosswalk: object
    person_years: object
    passage: object = None
    demographics: object = None
    universities: object = None

    @classmethod
    def from_dir(cls, directory) -> "Inputs":
        d = Path(directory)
        kw = {}
        for key, name in INPUT_FILES.items():
            p = d / name
            if p.exists():
                kw[key] = p
            elif key not in OPTIONAL_INPUTS:
                kw[key] = p  # let the reader report it
        return cls(**kw)

    @classmethod
    def from_simulation(cls, sim) -> "Inputs":
        return cls(sim.exporter, sim.payments, sim.crosswalk, sim.person_years, sim.passage, sim.demographics,
                   sim.universities)


@dataclass
class GrantStage:
    records: list
    reconstruction: ReconstructionResult
    pairing: PairingResult
    passage: dict | None


@dataclass
class PipelineResult:
    config: RunConfig
    grants: GrantStage
    roster: pd.DataFrame
    panel: pd.DataFrame
    stacked: StackedData
    estimates: EstimateSet
    rawmeans: pd.DataFrame
    balance: pd.DataFrame | None
    effects: dict
    diagnostics: dict
    twfe: dict | None = None


# --- stages ------------------------------------------------------------------------


def run_grants(cfg: RunConfig, inputs: Inputs) -> GrantStage:
    records = io.read_exporter(inputs.exporter)
    passage = io.read_passage_dates(inputs.passage) if inputs.passage is not None else None
    recon = reconstruct_all(records)
    pairing = pair_renewals(recon, FEDERAL, short_days=cfg.short_days, long_days=cfg.long_days)
    return GrantStage(records, recon, pairing, passage)


def run_roster(cfg: RunConfig, inputs: Inputs, grants: GrantStage):
    if not grants.pairing.pairs:
        raise NoCohortsError("no renewal pairs")
    payments = io.read_payments(inputs.payments)
    crosswalk = io.read_crosswalk(inputs.crosswalk)
    demo = io.read_demographics(inputs.demographics) if inputs.demographics is not None else None
    labs = assemble_labs(grants.pairing.pairs, grants.reconstruction.all_periods(), payments, crosswalk)
    if labs.empty:
        raise NoCohortsError("no pair could be linked to paid personnel")
    roster = build_roster(grants.pairing.pairs, labs, demo)
    return labs, roster, demo


def run_panel(cfg: RunConfig, inputs: Inputs, roster: pd.DataFrame):
    py = io.read_person_years(inputs.person_years)
    uni = io.read_universities(inputs.universities) if inputs.universities is not None else None
    outcomes = derive_outcomes(py)
    panel = build_panel(roster, outcomes, cfg.event_window, uni)
    return py, panel


def run_stack(cfg: RunConfig, roster: pd.DataFrame, panel: pd.DataFrame) -> StackedData:
    if cfg.outcome not in panel.columns:
        raise ValueError(f"unknown outcome {cfg.outcome!r}")
    extra = [c for c in SECTOR_COLUMNS if c != cfg.outcome]
    stacked = stack_cohorts(roster, panel, cfg.outcome, clean_window=cfg.clean_window, window=cfg.event_window,
                            offset_stride=cfg.offset_stride, covariates=cfg.covariates,
                            control_group=cfg.control_group, subsample=cfg.subsample, extra_columns=extra)
    if stacked.frame.empty:
        raise NoCohortsError(f"no estimable cohorts (dropped: {stacked.dropped_cohorts})")
    return stacked


def benchmark_from_means(coef: float, rawmeans: pd.DataFrame, outcome: str) -> dict:
    rm = rawmeans[(rawmeans["outcome"] == outcome) & (rawmeans["arm"] == "continuous")].set_index("event_time")
    hi = int(rm.index.max()) if len(rm) else 5
    if -1 not in rm.index or hi not in rm.index:
        return {"defined": False}
    b = effects.BenchmarkInput(coef, float(rm.loc[-1, "mean"]), float(rm.loc[hi, "mean"]))
    v = effects.benchmark_effect_size(b)
    return {"inputs": asdict(b), "effect_size": v if np.isfinite(v) else None, "percent": effects.format_percent(v),
            "defined": bool(np.isfinite(v))}


def run_pipeline(cfg: RunConfig, inputs: Inputs, out_dir=None, *, threads: int | None = None,
                 balance: bool = True) -> PipelineResult:
    """Run every stage; write the artifact set to ``out_dir`` when given."""
    grants = run_grants(cfg, inputs)
    labs, roster, demo = run_roster(cfg, inputs, grants)
    py, panel = run_panel(cfg, inputs, roster)
    stacked = run_stack(cfg, roster, panel)
    est = estimate(stacked, cfg.covariates, min_cell=cfg.min_cell, bootstrap_reps=cfg.bootstrap_reps,
                   seed=cfg.seed, cluster=cfg.cluster_level, threads=threads)
    outs = list(dict.fromkeys([cfg.outcome, *SECTOR_COLUMNS]))
    rm = raw_means(stacked, ["y"] + [c for c in outs if c != cfg.outcome])
    rm["outcome"] = rm["outcome"].replace({"y": cfg.outcome})
    bal = None
    if balance:
        chars = lab_characteristics(grants.pairing.pairs, labs, demo, py, grants.records)
        bal = balance_table(chars, roster)
    eff = {"benchmark": benchmark_from_means(est.overall.coef, rm, cfg.outcome)}
    tw = None
    if cfg.twfe:
        r = twfe_stacked(stacked)
        tw = {"coef": {str(k): v for k, v in sorted(r.coef.items())}, "dropped": r.dropped, "sweeps": r.sweeps}
    diag = {
        "reconstruction": {"n_records": len(grants.records), "n_projects": len(grants.reconstruction.periods),
                           "malformed": dict(sorted(grants.reconstruction.malformed.items()))},
        "pairing": {"n_pairs": len(grants.pairing.pairs), "dropped": dict(sorted(grants.pairing.dropped.items()))},
        "labs": {"n_linked_pairs": int(labs["pair_id"].nunique()),
                 "n_unlinked_pairs": len({p.pair_id for p in grants.pairing.pairs} - set(labs["pair_id"]))},
        "roster": {"n_rows": len(roster), "n_persons": int(roster["person_id"].nunique())},
        "panel": {"n_rows": len(panel), "imputed_rows": int(panel["imputed"].sum())},
        "estimation": est.diagnostics,
    }
    result = PipelineResult(cfg, grants, roster, panel, stacked, est, rm, bal, eff, diag, tw)
    if out_dir is not None:
        write_artifacts(result, out_dir)
    return result


# --- artifacts ---------------------------------------------------------------------


def _stamp(cfg: RunConfig) -> dict:
    return {"config_hash": cfg.hash, "seed": cfg.seed}


def estimates_frame(est: EstimateSet) -> pd.DataFrame:
    rows = [("att_gt", a.cohort, a.event_time, a.estimate, np.nan, np.nan, np.nan, a.n_treated, a.n_control)
            for a in est.att_gts]
    rows += [("event_study", np.nan, e, c.coef, c.se, c.ci_lo, c.ci_hi, np.nan, np.nan)
             for e, c in sorted(est.event_study.items())]
    o = est.overall
    rows.append(("overall", np.nan, np.nan, o.coef, o.se, o.ci_lo, o.ci_hi, np.nan, np.nan))
    df = pd.DataFrame(rows, columns=["kind", "cohort", "event_time", "coef", "se", "ci_lo", "ci_hi", "n_treated",
                                     "n_control"])
    for c in ("cohort", "event_time"):
        df[c] = df[c].astype("Int64")
    return df


def write_artifacts(result: PipelineResult, out_dir) -> dict[str, Path]:
    cfg = result.config
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stamp = _stamp(cfg)
    paths = {}
    est = result.estimates.to_dict()
    o = result.estimates.overall
    payload = {
        "config": cfg.to_dict(),
        **stamp,
        "att_gt": est["att_gt"],
        "event_study": est["event_study"],
        "overall": {"coef": o.coef, "se": o.se, "ci": [o.ci_lo, o.ci_hi]},
        "bootstrap_reps": est["bootstrap_reps"],
        "cluster_level": est["cluster_level"],
        "diagnostics": est["diagnostics"],
    }
    if result.twfe is not None:
        payload["twfe"] = result.twfe
    paths["estimates.json"] = io.write_json(payload, out / "estimates.json")
    paths["estimates.csv"] = io.write_csv(estimates_frame(result.estimates), out / "estimates.csv", stamp)
    paths["rawmeans.csv"] = io.write_csv(result.rawmeans, out / "rawmeans.csv", stamp)
    if result.balance is not None:
        paths["balance.csv"] = io.write_csv(result.balance, out / "balance.csv", stamp)
    paths["renewal_pairs.csv"] = io.write_csv(pairs_frame(result.grants.pairing.pairs), out / "renewal_pairs.csv",
                                              stamp)
    paths["roster.csv"] = io.write_csv(result.roster, out / "roster.csv", stamp)
    if result.grants.passage:
        bt = budget_timing_summary(result.grants.records, result.grants.passage, FEDERAL)
        paths["budget_timing.csv"] = io.write_csv(bt, out / "budget_timing.csv", stamp)
    paths["effects.json"] = io.write_json({"config": cfg.to_dict(), **stamp, **result.effects}, out / "effects.json")
    paths["diagnostics.json"] = io.write_json({"config": cfg.to_dict(), **stamp, **result.diagnostics},
                                              out / "diagnostics.json")
    return paths


# --- report --------------------------------------------------------------------------


def interruption_summary(pairs: pd.DataFrame) -> dict:
    n = len(pairs)
    treated = pairs["treated"].astype(str).str.lower().isin(["true", "1"]) if pairs["treated"].dtype == object \
        else pairs["treated"].astype(bool)
    gaps = pairs.loc[treated, "gap_days"].astype(int)
    return {
        "n_pairs": n,
        "share_interrupted": float(treated.mean()) if n else None,
        "n_interrupted": int(treated.sum()),
        "median_conditional_delay": float(gaps.median()) if len(gaps) else None,
        "delay_distribution": "empty" if gaps.empty else {str(k): int(v) for k, v in
                                                         gaps.value_counts().sort_index().items()},
    }


def report(artifact_dir, out_dir=None) -> dict:
    """Summaries and plot-data CSVs from a finished run directory."""
    d = Path(artifact_dir)
    missing = [f for f in REPORT_REQUIRED if not (d / f).exists()]
    if missing:
        raise MissingArtifacts(missing)
    out = Path(out_dir) if out_dir is not None else d
    pairs = pd.read_csv(d / "renewal_pairs.csv")
    est = json.loads((d / "estimates.json").read_text(encoding="utf-8"))
    rm = pd.read_csv(d / "rawmeans.csv")
    stamp = {"config_hash": est.get("config_hash"), "seed": est.get("seed")}

    summary = interruption_summary(pairs)
    gaps = pairs.loc[pairs["treated"].astype(bool), ["gap_days"]]
    io.write_csv(gaps.value_counts().sort_index().rename("n").reset_index(), out / "plot_delay_distribution.csv",
                 stamp)
    es = pd.DataFrame(est["event_study"])
    io.write_csv(es, out / "plot_event_study.csv", stamp)
    wide = rm.pivot_table(index=["event_time", "arm"], columns="outcome", values="mean", sort=True).reset_index()
    io.write_csv(wide, out / "plot_rawmeans.csv", stamp)
    if (d / "budget_timing.csv").exists():
        bt = pd.read_csv(d / "budget_timing.csv").drop(columns=["config_hash", "seed"], errors="ignore")
        io.write_csv(bt, out / "plot_budget_timing.csv", stamp)

    lines = [
        f"config hash {stamp['config_hash']}, seed {stamp['seed']}",
        f"renewal pairs: {summary['n_pairs']}",
        f"share interrupted: {summary['share_interrupted']}",
        f"median delay among interrupted (days): {summary['median_conditional_delay']}",
        "delay distribution: " + ("empty" if summary["delay_distribution"] == "empty" else
                                  f"{len(summary['delay_distribution'])} distinct values"),
        f"overall ATT: {est['overall']['coef']} (se {est['overall']['se']})",
        "event study:",
    ]
    for row in est["event_study"]:
        lines.append(f"  e={row['e']:>3}  coef={row['coef']:.6g}  se={row['se']}")
    text = "\n".join(lines) + "\n"
    (out / "report.txt").write_text(text, encoding="utf-8")
    io.write_json({**stamp, "interruptions": summary}, out / "report.json")
    return {"summary": summary, "text": text}

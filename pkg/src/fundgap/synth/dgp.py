"""Synthetic grant records and person-year outcomes with known effects.

Each cohort g is a fiscal year in which ``labs_per_cohort`` R01 project
periods expire and are renewed. A lab is the PI plus ``persons_per_lab - 1``
paid personnel. Interrupted renewals start ``gap`` days after expiry, with
the gap drawn from the short or long band. Outcomes follow a linear model on
top of a common event-time path, so parallel trends hold by construction
unless ``pre_trend_slope`` or ``resubmission_effect_on_outcome`` is set.

Potential outcomes are coupled: treated and untreated outcomes share their
noise, so the realized (finite-sample) effect is known exactly.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
import pandas as pd

from ..dates import FEDERAL

EVENT_TIMES = tuple(range(-5, 6))
# Nonemployment path of continuously funded personnel, event times -5..5.
BASELINE_NONEMPLOYMENT = (0.21, 0.16, 0.12, 0.08, 0.04, 0.04, 0.07, 0.09, 0.11, 0.12, 0.12)
OCCUPATION_MIX = (("Postdoc", 0.3), ("GradStudent", 0.35), ("Staff", 0.2), ("Undergrad", 0.1), ("Faculty", 0.05))
RESUBMISSION_MIX = (0.6, 0.3, 0.1)
BINS = ("InterruptedShort", "InterruptedLong")
LATENT_COLUMNS = ("cohort", "person_id", "pair_id", "treated", "dosage", "resubmissions", "stratum", "event_time",
                  "year", "y", "y0", "y1")


class InfeasibleConfig(ValueError):
    pass


@dataclass
class DgpConfig:
    n_cohorts: int = 4
    labs_per_cohort: int = 20
    persons_per_lab: int = 6
    treated_fraction: float = 0.3
    stratum_mix: float = 0.5
    true_att_path: dict[int, float] = field(default_factory=lambda: {e: 0.03 for e in range(6)})
    pre_trend_slope: float = 0.0
    outcome_kind: str = "binary"
    noise_sd: float = 0.005
    person_sd: float = 0.02
    cohort_level_shifts: float = 0.0
    resubmission_effect_on_treatment: float = 0.0
    resubmission_effect_on_outcome: float = 0.0
    dosage_att: dict[str, float] | None = None
    long_share: float = 0.3
    first_cohort: int = 2001
    n_universities: int = 8
    r21_rate: float = 0.2
    omit_nonemployed_rows: float = 0.5
    seed: int = 0

    def __post_init__(self):
        self.true_att_path = {int(k): float(v) for k, v in self.true_att_path.items()}
        if self.dosage_att is not None:
            self.dosage_att = {_bin_name(k): float(v) for k, v in self.dosage_att.items()}

    @classmethod
    def from_dict(cls, d: Mapping) -> "DgpConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise InfeasibleConfig(f"unknown config keys {sorted(unknown)}")
        return cls(**dict(d))

    def validate(self) -> None:
        if not 0 < self.treated_fraction < 1:
            raise InfeasibleConfig("treated_fraction must lie in (0, 1)")
        n_t = self.n_treated_per_cohort
        if n_t < 1 or n_t > self.labs_per_cohort - 1:
            raise InfeasibleConfig(
                f"treated_fraction {self.treated_fraction} with {self.labs_per_cohort} labs leaves an empty arm")
        if self.n_cohorts < 1 or self.persons_per_lab < 1:
            raise InfeasibleConfig("need at least one cohort and one person per lab")
        if not 0 <= self.stratum_mix <= 1 or not 0 <= self.long_share <= 1:
            raise InfeasibleConfig("stratum_mix and long_share must lie in [0, 1]")
        if self.outcome_kind not in ("binary", "continuous"):
            raise InfeasibleConfig("outcome_kind must be binary or continuous")
        if set(self.true_att_path) - set(range(6)):
            raise InfeasibleConfig("true_att_path keys must be event times 0..5")

    @property
    def n_treated_per_cohort(self) -> int:
        return int(round(self.treated_fraction * self.labs_per_cohort))

    @property
    def outcome(self) -> str:
        return "nonemployed" if self.outcome_kind == "binary" else "asinh_earnings"

    def effect(self, status: str, e: int) -> float:
        if e < 0:
            return 0.0
        if self.dosage_att is not None:
            return self.dosage_att.get(status, 0.0)
        return self.true_att_path.get(e, 0.0)


def _bin_name(k: str) -> str:
    return {"Short": "InterruptedShort", "Long": "InterruptedLong"}.get(k, k)


@dataclass
class SimulatedData:
    config: DgpConfig
    exporter: pd.DataFrame
    passage: pd.DataFrame
    payments: pd.DataFrame
    crosswalk: pd.DataFrame
    demographics: pd.DataFrame
    person_years: pd.DataFrame
    universities: pd.DataFrame
    latent: pd.DataFrame
    truth: dict

    FILES = {
        "exporter": "exporter.csv",
        "passage": "budget_passage.csv",
        "payments": "payments.csv",
        "crosswalk": "crosswalk.csv",
        "demographics": "demographics.csv",
        "person_years": "person_years.csv",
        "universities": "universities.csv",
    }

    def stacked(self, window: tuple[int, int] = (-5, 5)):
        """The latent panel as stacked estimation data (every control is clean by construction)."""
        from ..did.stack import StackedData

        cols = ["cohort", "person_id", "pair_id", "treated", "dosage", "resubmissions", "stratum", "event_time",
                "year", "y"]
        return StackedData(self.latent[cols], window, self.config.outcome)

    def write(self, out_dir) -> dict[str, Path]:
        if self.exporter is None:
            raise ValueError("simulated without files")
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {}
        for attr, name in self.FILES.items():
            p = out / name
            getattr(self, attr).to_csv(p, index=False, lineterminator="\n")
            paths[attr] = p
        p = out / "truth.json"
        p.write_text(json.dumps(self.truth, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        paths["truth"] = p
        return paths


def _iso(d: dt.date) -> str:
    return d.isoformat()


def _shift_years(d: dt.date, k: int) -> dt.date:
    # same as add_months(d, 12 * k), including the Feb 29 clamp
    try:
        return d.replace(year=d.year + k)
    except ValueError:
        return d.replace(year=d.year + k, day=28)


def _budget_rows(core, serial_code, start, n_years, first_type, pis, activity, ic, first_year_num, resub=0,
                 cost=250_000.0):
    rows = []
    for k in range(n_years):
        s = _shift_years(start, k)
        e = _shift_years(start, k + 1) - dt.timedelta(days=1)
        app = first_type if k == 0 else 5
        suffix = f"A{resub}" if (k == 0 and resub) else ""
        full = f"{app}{activity}{serial_code}-{first_year_num + k:02d}{suffix}"
        rows.append((core, full, FEDERAL.fiscal_year(s), app, _iso(s), _iso(e), pis, activity, ic, cost))
    return rows


def simulate(config: DgpConfig, files: bool = True) -> SimulatedData:
    """Draw one synthetic dataset; identical configs give identical output.

    With ``files=False`` only the latent panel and truth are built; the random
    draws are the same, so the latent panel matches the full simulation.
    """
    cfg = config
    cfg.validate()
    seed = int(cfg.seed)
    cohorts = [cfg.first_cohort + i for i in range(cfg.n_cohorts)]
    L, Pn = cfg.labs_per_cohort, cfg.persons_per_lab
    base = np.array(BASELINE_NONEMPLOYMENT)
    events = np.array(EVENT_TIMES)
    E = len(events)
    occ_names = [o for o, _ in OCCUPATION_MIX]
    occ_p = np.array([p for _, p in OCCUPATION_MIX])

    rng_fy = np.random.default_rng([seed, 2])
    fys = sorted({fy for g in cohorts for fy in range(g - 5, g + 6)})
    passage = {fy: FEDERAL.start_of(fy) + dt.timedelta(days=int(rng_fy.integers(120, 241))) for fy in fys}
    cohort_shift = {g: float(rng_fy.normal(0, cfg.cohort_level_shifts)) if cfg.cohort_level_shifts else 0.0
                    for g in cohorts}

    exporter, payments, crosswalk, demo, py_rows = [], [], [], [], []
    latent: dict[str, list] = {k: [] for k in LATENT_COLUMNS}
    pair_meta = []
    for gi, g in enumerate(cohorts):
        rng_g = np.random.default_rng([seed, 0, gi])
        resub = rng_g.choice(3, size=L, p=RESUBMISSION_MIX)
        w = np.exp(cfg.resubmission_effect_on_treatment * resub)
        treated_labs = set(rng_g.choice(L, size=cfg.n_treated_per_cohort, replace=False, p=w / w.sum()).tolist())
        n_long = int(round(cfg.long_share * len(treated_labs)))
        long_labs = set(rng_g.permutation(sorted(treated_labs))[:n_long].tolist())
        fy_start = FEDERAL.start_of(g)
        fy_end = FEDERAL.start_of(g + 1) - dt.timedelta(days=1)

        for l in range(L):
            rng = np.random.default_rng([seed, 1, gi, l])
            serial = gi * 10_000 + l + 1
            core = f"R01GM{serial:06d}"
            code = f"GM{serial:06d}"
            pi = f"PI{g}-{l:03d}"
            uni = f"U{int(rng.integers(cfg.n_universities)):02d}"
            treated = l in treated_labs
            status = ("InterruptedLong" if l in long_labs else "InterruptedShort") if treated else "Continuous"

            renewal = passage[g] + dt.timedelta(days=int(rng.integers(0, 31)))
            room = (renewal - fy_start).days
            overlap = False
            if status == "Continuous":
                gap = int(rng.integers(1, 30))
                overlap = rng.random() < 0.1
            elif status == "InterruptedShort":
                gap = int(rng.integers(30, 90))
            else:
                gap = int(rng.integers(90, min(200, room) + 1))
            expiry = renewal - dt.timedelta(days=gap)
            if overlap:
                expiry = renewal + dt.timedelta(days=int(rng.integers(0, 15)))
                gap = 1
            adjusted = min(expiry, renewal - dt.timedelta(days=1))
            assert fy_start <= adjusted <= fy_end
            r = int(resub[l])
            multiple = bool(rng.random() < cfg.stratum_mix)
            extra_start = int(rng.integers(200, 700)) if multiple else 0
            has_r21 = bool(Pn > 1 and rng.random() < cfg.r21_rate)
            occs = ["Faculty"] + list(rng.choice(occ_names, size=Pn - 1, p=occ_p))
            pi_unpaid = bool(Pn > 1 and rng.random() < 0.5)
            pay_days = np.sort(rng.integers(1, 331, size=(Pn, 2)), axis=1)
            stratum = "MultipleR01" if multiple else "SingleR01"
            pair_id = f"{core}-0:{pi}"
            pair_meta.append((g, pair_id, treated, status, gap, stratum, r))
            persons = [pi] + [f"S{g}-{l:03d}-{j}" for j in range(1, Pn)]

            # outcomes
            a_i = rng.uniform(-cfg.person_sd, cfg.person_sd, size=Pn)
            lab_shock = rng.normal(0, cfg.noise_sd, size=E)
            u = rng.random((Pn, E))
            tau = np.array([cfg.effect(status, int(e)) for e in events]) if treated else np.zeros(E)
            trend = cfg.resubmission_effect_on_outcome * r * events
            if treated:
                trend = trend + cfg.pre_trend_slope * events
            if cfg.outcome_kind == "binary":
                p0 = np.clip(base[None, :] + a_i[:, None] + lab_shock[None, :] + cohort_shift[g] + trend[None, :],
                             0.0, 1.0)
                p1 = np.clip(p0 + tau[None, :], 0.0, 1.0)
                y0 = (u < p0).astype(float)
                y1 = (u < p1).astype(float)
                nonemp = y1 if treated else y0
                earn_log = 10.5 + rng.normal(0, 0.3, size=(Pn, E))
                cents = np.where(nonemp > 0, 0, np.round(np.exp(earn_log) * 100).astype(np.int64))
            else:
                z = rng.normal(0, 1, size=(Pn, E))
                lp0 = (10.5 + 10 * a_i[:, None] + 0.05 * events[None, :] + lab_shock[None, :] + cohort_shift[g]
                       + trend[None, :] + cfg.noise_sd * 10 * z)
                c0 = np.round(np.exp(lp0) * 100).astype(np.int64)
                c1 = np.round(np.exp(lp0 + tau[None, :]) * 100).astype(np.int64)
                y0, y1 = np.arcsinh(c0 / 100.0), np.arcsinh(c1 / 100.0)
                cents = c1 if treated else c0
            y_obs = y1 if treated else y0

            census = rng.random((Pn, 3)) < np.array([0.85, 0.9, 0.9])
            pubs = rng.poisson(0.8, size=(Pn, E))
            univ_job = rng.random((Pn, E)) < 0.6
            omit = rng.random((Pn, E)) < cfg.omit_nonemployed_rows
            ind = rng.integers(0, 50, size=(Pn, E))
            lehd_short = rng.random((Pn, E)) < 0.2
            demo_u = rng.random((Pn, 3))
            race = rng.choice(["White", "Asian", "Black"], size=Pn)

            n = Pn * E
            latent["cohort"].append(np.full(n, g))
            latent["person_id"].append(np.repeat(np.array(persons, dtype=object), E))
            latent["pair_id"].append(np.full(n, pair_id, dtype=object))
            latent["treated"].append(np.full(n, treated))
            latent["dosage"].append(np.full(n, status, dtype=object))
            latent["resubmissions"].append(np.full(n, r))
            latent["stratum"].append(np.full(n, stratum, dtype=object))
            latent["event_time"].append(np.tile(events, Pn))
            latent["year"].append(np.tile(events + g, Pn))
            latent["y"].append(y_obs.ravel())
            latent["y0"].append(y0.ravel())
            latent["y1"].append(y1.ravel())
            if not files:
                continue

            # expiring period: four budget years ending on the raw expiry
            p1_start = _shift_years(expiry, -4) + dt.timedelta(days=1)
            exporter += _budget_rows(core, code, p1_start, 4, 1, pi, "R01", "GM", 1)
            exporter += _budget_rows(core, code, renewal, 4, 2, pi, "R01", "GM", 5, resub=r)
            award = f"A{serial:06d}"
            crosswalk.append((award, core))
            if multiple:
                xcore, xcode = f"R01CA{serial:06d}", f"CA{serial:06d}"
                xs = adjusted - dt.timedelta(days=extra_start)
                exporter += _budget_rows(xcore, xcode, xs, 4, 1, pi, "R01", "CA", 1)
                crosswalk.append((f"X{serial:06d}", xcore))
            r21_award = None
            if has_r21:
                rcore, rcode = f"R21NS{serial:06d}", f"NS{serial:06d}"
                exporter += _budget_rows(rcore, rcode, adjusted - dt.timedelta(days=400), 2, 1, pi, "R21", "NS", 1)
                r21_award = f"T{serial:06d}"
                crosswalk.append((r21_award, rcore))

            for j, (pid, occ) in enumerate(zip(persons, occs)):
                if j == 0 and pi_unpaid:
                    continue  # PI often absent from payroll
                a = r21_award if (r21_award and j == Pn - 1) else award
                for d in pay_days[j].tolist():
                    payments.append((pid, a, _iso(adjusted - dt.timedelta(days=d)), occ, uni))

            for j, pid in enumerate(persons):
                demo.append((pid, "US" if demo_u[j, 0] < 0.6 else "Foreign", "F" if demo_u[j, 1] < 0.45 else "M",
                             str(race[j]), "Hispanic" if demo_u[j, 2] < 0.1 else "NotHispanic"))
                for k, e in enumerate(events.tolist()):
                    c = int(cents[j, k])
                    if c == 0:
                        if omit[j, k]:
                            continue
                        eins = ""
                        w2 = lehd = "0"
                    else:
                        eins = f"E{uni}:U" if univ_job[j, k] else f"EI{int(ind[j, k]):02d}:N"
                        w2 = f"{c // 100}.{c % 100:02d}"
                        lc = c - 1000 if (lehd_short[j, k] and c > 1000) else c
                        lehd = f"{lc // 100}.{lc % 100:02d}"
                    py_rows.append((pid, g + e, w2, lehd, "0", eins, int(census[j, 0]), int(census[j, 1]),
                                    int(census[j, 2]), int(pubs[j, k])))

    latent_df = pd.DataFrame({k: np.concatenate(v) for k, v in latent.items()})
    truth = _truth(cfg, latent_df, pair_meta)
    if not files:
        return SimulatedData(cfg, None, None, None, None, None, None, None, latent_df, truth)
    exporter_df = pd.DataFrame(exporter, columns=["CORE_PROJECT_NUM", "FULL_PROJECT_NUM", "FY", "APPLICATION_TYPE",
                                                  "BUDGET_START", "BUDGET_END", "PI_IDS", "ACTIVITY", "IC",
                                                  "TOTAL_COST"])
    passage_df = pd.DataFrame([(fy, _iso(d)) for fy, d in sorted(passage.items())], columns=["FY", "DATE"])
    payments_df = pd.DataFrame(payments, columns=["PERSON_ID", "AWARD_ID", "DATE", "OCCUPATION", "UNIVERSITY_ID"])
    crosswalk_df = pd.DataFrame(crosswalk, columns=["AWARD_ID", "CORE_PROJECT_NUM"])
    demo_df = pd.DataFrame(demo, columns=["PERSON_ID", "BIRTHPLACE", "GENDER", "RACE", "ETHNICITY"])
    py_df = pd.DataFrame(py_rows, columns=["PERSON_ID", "YEAR", "W2", "LEHD", "ILBD", "EINS", "IN_CENSUS_2000",
                                           "IN_CENSUS_2010", "IN_CENSUS_2020", "PUBS"])
    uni_df = pd.DataFrame([(f"U{k:02d}", f"EU{k:02d}") for k in range(cfg.n_universities)],
                          columns=["UNIVERSITY_ID", "EIN"])
    return SimulatedData(cfg, exporter_df, passage_df, payments_df, crosswalk_df, demo_df, py_df, uni_df,
                         latent_df, truth)


def _realized(latent: pd.DataFrame, mask=None) -> dict:
    t = latent[latent["treated"]] if mask is None else latent[latent["treated"] & mask]
    if t.empty:
        return {"att_path": {}, "overall": None}
    eff = (t["y1"] - t["y0"]).groupby([t["cohort"], t["event_time"]]).mean()
    n_g = t[t["event_time"] == 0].groupby("cohort").size()
    path = {}
    for e in range(0, 6):
        cells = eff.xs(e, level="event_time")
        path[str(e)] = float((cells * n_g.reindex(cells.index)).sum() / n_g.reindex(cells.index).sum())
    post = eff[eff.index.get_level_values("event_time") >= 0]
    cohort_mean = post.groupby(level="cohort").mean()
    overall = float((cohort_mean * n_g.reindex(cohort_mean.index)).sum() / n_g.reindex(cohort_mean.index).sum())
    return {"att_path": path, "overall": overall}


def _truth(cfg: DgpConfig, latent: pd.DataFrame, pair_meta) -> dict:
    meta = pd.DataFrame(pair_meta, columns=["cohort", "pair_id", "treated", "status", "gap_days", "stratum",
                                            "resubmissions"])
    configured = {str(e): cfg.effect("InterruptedShort", e) for e in range(6)}
    if cfg.dosage_att is None:
        cfg_overall = float(np.mean([cfg.true_att_path.get(e, 0.0) for e in range(6)]))
    else:
        cfg_overall = None
    realized = _realized(latent)
    by_bin = {}
    for b in BINS:
        m = latent["dosage"] == b
        if (latent["treated"] & m).any():
            by_bin[b] = {"configured": (cfg.dosage_att or {}).get(b), **_realized(latent, m)}
    interrupted = meta[meta["treated"]]
    return {
        "config": _config_dict(cfg),
        "outcome": cfg.outcome,
        "configured": {"att_path": configured if cfg.dosage_att is None else None, "overall": cfg_overall,
                       "pre_trend_slope": cfg.pre_trend_slope},
        "realized": realized,
        "dosage": by_bin,
        "assignment": {
            "treated_pairs": sorted(interrupted["pair_id"].tolist()),
            "n_treated_by_cohort": {str(g): int(n) for g, n in meta.groupby("cohort")["treated"].sum().items()},
            "interrupted_share": float(meta["treated"].mean()),
            "median_interrupted_gap": float(interrupted["gap_days"].median()) if len(interrupted) else None,
        },
    }


def _config_dict(cfg: DgpConfig) -> dict:
    d = asdict(cfg)
    d["true_att_path"] = {str(k): v for k, v in cfg.true_att_path.items()}
    return d


def load_config(path) -> DgpConfig:
    return DgpConfig.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def config_json(cfg: DgpConfig) -> str:
    return json.dumps(_config_dict(cfg), sort_keys=True)


__all__ = ["DgpConfig", "SimulatedData", "InfeasibleConfig", "simulate", "load_config", "EVENT_TIMES",
           "BASELINE_NONEMPLOYMENT"]

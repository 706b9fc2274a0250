"""Group-time ATTs within stacked cohorts and their aggregation.

Within cohort g, the post-period effect at event time e compares mean changes
``y_e - y_{-1}`` of treated units with those of the cohort's clean controls.
Pre-period placebos at e use consecutive changes ``y_{e+1} - y_e``. With
covariates, the control change is replaced by the prediction from a linear
regression of the change on the covariates fit among controls.

All cell statistics are built from per-cluster moments, so a cluster
bootstrap replicate only needs its cluster multiplicities.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .. import kernels
from .stack import StackedData

MIN_CELL = 3


@dataclass(frozen=True)
class AttGt:
    cohort: int
    event_time: int
    estimate: float
    n_treated: float
    n_control: float
    group_size: float


@dataclass(frozen=True)
class Coefficient:
    coef: float
    se: float = math.nan
    ci_lo: float = math.nan
    ci_hi: float = math.nan


@dataclass
class EstimateSet:
    att_gts: list[AttGt]
    event_study: dict[int, Coefficient]
    overall: Coefficient
    bootstrap_reps: int = 0
    seed: int | None = None
    cluster_level: str = "pair_id"
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "att_gt": [asdict(a) for a in self.att_gts],
            "event_study": [
                {"e": e, "coef": c.coef, "se": c.se, "ci_lo": c.ci_lo, "ci_hi": c.ci_hi}
                for e, c in sorted(self.event_study.items())
            ],
            "overall": asdict(self.overall),
            "bootstrap_reps": self.bootstrap_reps,
            "seed": self.seed,
            "cluster_level": self.cluster_level,
            "diagnostics": self.diagnostics,
        }

    def to_frame(self) -> pd.DataFrame:
        rows = [("event_study", e, c.coef, c.se, c.ci_lo, c.ci_hi) for e, c in sorted(self.event_study.items())]
        o = self.overall
        rows.append(("overall", None, o.coef, o.se, o.ci_lo, o.ci_hi))
        return pd.DataFrame(rows, columns=["kind", "event_time", "coef", "se", "ci_lo", "ci_hi"])


class CohortEstimator:
    """Cell-level DiD machinery for one stacked sample.

    Units are (cohort, person) pairs. Clusters nest within strata, a stratum
    being one (cohort, arm) combination, and are ordered by stratum.
    """

    def __init__(
        self,
        stacked: StackedData,
        covariates: Sequence[str] | None = None,
        min_cell: int = MIN_CELL,
        cluster: str = "pair_id",
    ):
        f = stacked.frame
        lo, hi = stacked.window
        self.window = (lo, hi)
        self.min_cell = min_cell
        self.cluster_level = cluster
        self.covariates = tuple(stacked.covariates if covariates is None else covariates)
        self.pre_events = list(range(lo, -1))
        self.post_events = list(range(0, hi + 1))
        self.events = self.pre_events + self.post_events
        if cluster not in f.columns:
            raise KeyError(f"cluster column {cluster!r} not in stacked data")

        units = f.drop_duplicates(["cohort", "person_id"])
        chk = f.groupby(["cohort", "person_id"])["treated"].nunique()
        if (chk > 1).any():
            raise ValueError("treatment status varies within a (cohort, person)")
        self.cohorts = sorted(int(g) for g in units["cohort"].unique())
        gpos = {g: i for i, g in enumerate(self.cohorts)}
        G = len(self.cohorts)

        ucohort = units["cohort"].map(gpos).to_numpy(np.int64)
        utreated = units["treated"].to_numpy(bool)
        ustratum = 2 * ucohort + (~utreated).astype(np.int64)
        ukey = units[cluster].astype(str).to_numpy()
        order = np.lexsort((units["person_id"].astype(str).to_numpy(), ukey, ustratum))
        units = units.iloc[order].reset_index(drop=True)
        ustratum, ukey = ustratum[order], ukey[order]
        self.unit_index = pd.MultiIndex.from_frame(units[["cohort", "person_id"]])

        ckeys = pd.Series(list(zip(ustratum.tolist(), ukey.tolist())))
        codes, uniq = pd.factorize(ckeys, sort=False)
        self.unit_cluster = codes.astype(np.int64)
        self.n_clusters = len(uniq)
        self.cluster_stratum = np.array([s for s, _ in uniq], dtype=np.int64)
        if np.any(np.diff(self.cluster_stratum) < 0):
            raise AssertionError("clusters not ordered by stratum")
        present, starts = np.unique(self.cluster_stratum, return_index=True)
        self.present_strata = present
        self.starts = starts.astype(np.int64)
        self.n_groups = G

        U = len(units)
        E = hi - lo + 1
        row_unit = pd.MultiIndex.from_frame(f[["cohort", "person_id"]])
        uidx = self.unit_index.get_indexer(row_unit)
        Y = np.full((U, E), np.nan)
        Y[uidx, f["event_time"].to_numpy(np.int64) - lo] = f["y"].to_numpy(float)
        col = lambda e: e - lo
        D = np.empty((U, len(self.events)))
        for k, e in enumerate(self.events):
            if e < 0:
                D[:, k] = Y[:, col(e + 1)] - Y[:, col(e)]
            else:
                D[:, k] = Y[:, col(e)] - Y[:, col(-1)]
        V = np.isfinite(D)
        X = np.ones((U, 1 + len(self.covariates)))
        for j, c in enumerate(self.covariates):
            X[:, j + 1] = units[c].to_numpy(float)
        w = units["weight"].to_numpy(float) if "weight" in units.columns else np.ones(U)
        self.Y, self.D, self.V, self.X, self.w = Y, D, V, X, w
        self.unit_treated = units["treated"].to_numpy(bool)
        self.unit_cohort = units["cohort"].to_numpy(np.int64)

        A, b, n = kernels.cluster_moments(self.unit_cluster, D, V, X, w, self.n_clusters)
        gw = np.bincount(self.unit_cluster, weights=w, minlength=self.n_clusters)
        self._P = X.shape[1]
        self._K = len(self.events)
        self.features = np.ascontiguousarray(
            np.concatenate([A.reshape(self.n_clusters, -1), b.reshape(self.n_clusters, -1), n, gw[:, None]], axis=1)
        )

    # --- cell statistics ----------------------------------------------------

    def cells(self, M: np.ndarray) -> dict[str, np.ndarray]:
        """Cell estimates for each row of cluster multiplicities ``M`` (R, C)."""
        M = np.ascontiguousarray(np.atleast_2d(M), dtype=np.float64)
        R = M.shape[0]
        G, K, P = self.n_groups, self._K, self._P
        S = kernels.stratum_sums(M, self.starts, self.features)
        full = np.zeros((R, 2 * G, S.shape[2]))
        full[:, self.present_strata] = S
        o1 = K * P * P
        o2 = o1 + K * P
        A = full[:, :, :o1].reshape(R, 2 * G, K, P, P)
        b = full[:, :, o1:o2].reshape(R, 2 * G, K, P)
        n = full[:, :, o2:o2 + K]
        gsize = full[:, 0::2, o2 + K]
        At, Ac = A[:, 0::2], A[:, 1::2]
        bt, bc = b[:, 0::2], b[:, 1::2]
        nt, nc = n[:, 0::2], n[:, 1::2]

        with np.errstate(divide="ignore", invalid="ignore"):
            if P == 1:
                beta = bc / Ac[..., 0]
            else:
                beta = np.einsum("...ij,...j->...i", np.linalg.pinv(Ac, rcond=1e-10), bc)
            fitted = np.einsum("...j,...j->...", At[..., 0, :], beta)
            att = (bt[..., 0] - fitted) / At[..., 0, 0]
        valid = (nt >= self.min_cell) & (nc >= self.min_cell) & np.isfinite(att)
        return {"att": att, "n_treated": nt, "n_control": nc, "group_size": gsize, "valid": valid}

    def coefficients(self, M: np.ndarray, mask: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Event-study coefficients (one per reported event time) then the overall ATT.

        Returns ``(coef (R, K + 1), ok (R,))``; ``ok`` is False where a cell
        valid under ``mask`` is not estimable in that replicate.
        """
        c = self.cells(M)
        valid = c["valid"]
        ok = np.ones(valid.shape[0], dtype=bool)
        if mask is not None:
            ok = np.all(valid | ~mask[None], axis=(1, 2))
            valid = valid & mask[None]
        return _aggregate_arrays(c["att"], valid, c["group_size"], len(self.pre_events)), ok

    def point(self) -> tuple[np.ndarray, np.ndarray, dict[str, np.ndarray]]:
        ones = np.ones((1, self.n_clusters))
        c = self.cells(ones)
        coef = _aggregate_arrays(c["att"], c["valid"], c["group_size"], len(self.pre_events))[0]
        return coef, c["valid"][0], c

    def att_gts(self, c: Mapping[str, np.ndarray] | None = None) -> list[AttGt]:
        if c is None:
            c = self.cells(np.ones((1, self.n_clusters)))
        out = []
        for gi, g in enumerate(self.cohorts):
            for k, e in enumerate(self.events):
                if c["valid"][0, gi, k]:
                    out.append(AttGt(g, e, float(c["att"][0, gi, k]), float(c["n_treated"][0, gi, k]),
                                     float(c["n_control"][0, gi, k]), float(c["group_size"][0, gi])))
        return out


def _aggregate_arrays(att, valid, gsize, n_pre):
    """Treated-size weighted event-study coefficients and overall ATT.

    att, valid : (R, G, K); gsize : (R, G). Post-period cells start at ``n_pre``.
    """
    w = np.where(valid, gsize[:, :, None], 0.0)
    a = np.where(valid, att, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        es = (w * a).sum(axis=1) / w.sum(axis=1)
        post_v = valid[:, :, n_pre:]
        cnt = post_v.sum(axis=2)
        cohort_mean = np.where(post_v, att[:, :, n_pre:], 0.0).sum(axis=2) / cnt
        cw = np.where(cnt > 0, gsize, 0.0)
        overall = (cw * np.where(cnt > 0, cohort_mean, 0.0)).sum(axis=1) / cw.sum(axis=1)
    es = np.where(w.sum(axis=1) > 0, es, np.nan)
    return np.concatenate([es, overall[:, None]], axis=1)


# --- public operations -----------------------------------------------------------


def _single_cohort(stacked: StackedData, g: int) -> StackedData:
    return stacked.subset(stacked.frame["cohort"] == g)


def att_gt(stacked: StackedData, g: int, e: int, covariates: Sequence[str] | None = None,
           min_cell: int = MIN_CELL) -> AttGt | None:
    """ATT for cohort g at post-period event time e (base period -1); None if the cell is too small."""
    if e < 0:
        raise ValueError("att_gt covers post-treatment event times; use pre_trend_gt for e < 0")
    return _cell(stacked, g, e, covariates, min_cell)


def pre_trend_gt(stacked: StackedData, g: int, e: int, covariates: Sequence[str] | None = None,
                 min_cell: int = MIN_CELL) -> AttGt | None:
    """Placebo comparing changes from e to e+1 for a pre-period e < -1."""
    if not e < -1:
        raise ValueError("pre-trend cells need e < -1")
    return _cell(stacked, g, e, covariates, min_cell)


def _cell(stacked, g, e, covariates, min_cell):
    est = CohortEstimator(_single_cohort(stacked, g), covariates, min_cell)
    for a in est.att_gts():
        if a.event_time == e:
            return a
    return None


def aggregate(att_gts: Iterable[AttGt], mode: str = "event_study",
              group_sizes: Mapping[int, float] | None = None) -> dict[int, float] | float:
    """Combine cells across cohorts with weights proportional to treated group size.

    ``mode="event_study"`` returns ``{e: coef}``; ``mode="overall"`` averages
    each cohort's post-period cells (e >= 0) equally and then weights cohorts.
    """
    cells = list(att_gts)
    sizes = dict(group_sizes) if group_sizes is not None else {a.cohort: a.group_size for a in cells}
    if mode == "event_study":
        out: dict[int, float] = {}
        for e in sorted({a.event_time for a in cells}):
            at_e = [a for a in cells if a.event_time == e]
            tot = sum(sizes[a.cohort] for a in at_e)
            out[e] = sum(sizes[a.cohort] * a.estimate for a in at_e) / tot
        return out
    if mode == "overall":
        by_g: dict[int, list[float]] = {}
        for a in cells:
            if a.event_time >= 0:
                by_g.setdefault(a.cohort, []).append(a.estimate)
        if not by_g:
            return math.nan
        tot = sum(sizes[g] for g in by_g)
        return sum(sizes[g] * (sum(v) / len(v)) for g, v in by_g.items()) / tot
    raise ValueError(f"unknown aggregation mode {mode!r}")


def estimate(
    stacked: StackedData,
    covariates: Sequence[str] | None = None,
    *,
    min_cell: int = MIN_CELL,
    bootstrap_reps: int = 999,
    seed: int = 0,
    cluster: str = "pair_id",
    threads: int | None = None,
) -> EstimateSet:
    """Cells, event study and overall ATT, with cluster-bootstrap inference when ``bootstrap_reps > 0``."""
    from .bootstrap import cluster_bootstrap

    est = CohortEstimator(stacked, covariates, min_cell, cluster)
    coef, mask, cells = est.point()
    se = lo = hi = np.full_like(coef, np.nan)
    attempts = 0
    if bootstrap_reps > 0:
        boot = cluster_bootstrap(est, bootstrap_reps, seed, threads=threads)
        se, lo, hi, attempts = boot.se, boot.ci_lo, boot.ci_hi, boot.attempts
    es = {
        e: Coefficient(float(coef[k]), float(se[k]), float(lo[k]), float(hi[k]))
        for k, e in enumerate(est.events)
        if np.isfinite(coef[k])
    }
    overall = Coefficient(float(coef[-1]), float(se[-1]), float(lo[-1]), float(hi[-1]))
    gts = est.att_gts(cells)
    nt = [a.n_treated for a in gts]
    nc = [a.n_control for a in gts]
    diagnostics = {
        "dropped_cohorts": {str(k): v for k, v in sorted(stacked.dropped_cohorts.items())},
        "cohorts": est.cohorts,
        "n_units": int(len(est.unit_index)),
        "n_clusters": int(est.n_clusters),
        "cells_estimated": len(gts),
        "cells_omitted": int(mask.size - mask.sum()),
        "n_treated_range": [min(nt), max(nt)] if nt else None,
        "n_control_range": [min(nc), max(nc)] if nc else None,
        "bootstrap_draws": int(attempts),
        "covariates": list(est.covariates),
        "min_cell": min_cell,
    }
    return EstimateSet(gts, es, overall, bootstrap_reps, seed if bootstrap_reps > 0 else None, cluster, diagnostics)


def dosage_estimates(
    stacked: StackedData,
    bins: Sequence[str] = ("InterruptedShort", "InterruptedLong"),
    **kwargs,
) -> dict[str, EstimateSet]:
    """Separate estimates per interruption-length bin against the shared control pool.

    Treated units of the other bins are left out; bins without treated units
    are omitted from the result.
    """
    f = stacked.frame
    if "dosage" not in f.columns:
        raise KeyError("stacked data has no dosage column")
    out = {}
    treated = f["treated"].to_numpy(bool)
    for b in bins:
        keep = ~treated | (f["dosage"] == b).to_numpy()
        if not (treated & keep).any():
            continue
        out[b] = estimate(stacked.subset(keep), **kwargs)
    return out


def raw_means(stacked: StackedData, outcomes: Sequence[str] | None = None) -> pd.DataFrame:
    """Weighted outcome means by event time and arm (long format)."""
    f = stacked.frame
    outcomes = list(outcomes) if outcomes else ["y"]
    rows = []
    arm = np.where(f["treated"].to_numpy(bool), "interrupted", "continuous")
    w = f["weight"].to_numpy(float)
    for o in outcomes:
        v = f[o].to_numpy(float)
        df = pd.DataFrame({"event_time": f["event_time"].to_numpy(), "arm": arm, "wy": w * v, "w": w})
        g = df.groupby(["event_time", "arm"], sort=True).agg(wy=("wy", "sum"), w=("w", "sum"), n=("w", "size"))
        for (e, a), r in g.iterrows():
            rows.append((int(e), a, o, r["wy"] / r["w"], int(r["n"])))
    return pd.DataFrame(rows, columns=["event_time", "arm", "outcome", "mean", "n"])

"""Brute-force reference estimators for validating :mod:`fundgap.did`.

Everything here works row by row on plain Python mappings and shares no code
with the estimation package. It is slow on purpose.
"""

from __future__ import annotations

from collections import defaultdict
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd


def _rows(raw) -> list[dict]:
    if isinstance(raw, pd.DataFrame):
        return raw.to_dict("records")
    return [dict(r) for r in raw]


def _index(rows: list[dict], g) -> dict:
    """person -> {'treated', 'weight', 'x', 'y': {event: value}} for cohort g."""
    units: dict = {}
    for r in rows:
        if int(r["cohort"]) != int(g):
            continue
        u = units.setdefault(r["person_id"], {"treated": bool(r["treated"]), "weight": float(r.get("weight", 1.0)),
                                              "row": r, "y": {}})
        y = float(r["y"])
        if y == y:
            u["y"][int(r["event_time"])] = y
    return units


def _change(u, e):
    if e >= 0:
        a, b = e, -1
    else:
        a, b = e + 1, e
    if a in u["y"] and b in u["y"]:
        return u["y"][a] - u["y"][b]
    return None


def brute_force_cell(raw, g, e, covariates: Sequence[str] = (), min_cell: int = 1):
    """``(estimate, n_treated, n_control)`` for cohort g at event time e, or None.

    Post-treatment cells (e >= 0) use changes from e = -1; pre-period cells
    (e < -1) use the change from e to e + 1.
    """
    if e == -1:
        return None
    units = _index(_rows(raw), g)
    treated, control = [], []
    for pid in sorted(units, key=str):
        u = units[pid]
        d = _change(u, e)
        if d is None:
            continue
        x = [1.0] + [float(u["row"][c]) for c in covariates]
        (treated if u["treated"] else control).append((d, u["weight"], x))
    if len(treated) < max(min_cell, 1) or len(control) < max(min_cell, 1):
        return None

    if covariates:
        Xc = np.array([x for _, _, x in control])
        yc = np.array([d for d, _, _ in control])
        sw = np.sqrt(np.array([w for _, w, _ in control]))
        beta = np.linalg.lstsq(Xc * sw[:, None], yc * sw, rcond=None)[0]
        num = den = 0.0
        for d, w, x in treated:
            pred = sum(b * xi for b, xi in zip(beta, x))
            num += w * (d - pred)
            den += w
        return num / den, len(treated), len(control)

    def wmean(items):
        return sum(d * w for d, w, _ in items) / sum(w for _, w, _ in items)

    return wmean(treated) - wmean(control), len(treated), len(control)


def brute_force_att(raw, g, e, covariates: Sequence[str] = (), min_cell: int = 1) -> float:
    """Difference of mean changes for cohort g at post-period event time e; nan when undefined."""
    c = brute_force_cell(raw, g, e, covariates, min_cell)
    return float("nan") if c is None else c[0]


def brute_force_pre_trend(raw, g, e, min_cell: int = 1) -> float:
    c = brute_force_cell(raw, g, e, (), min_cell)
    return float("nan") if c is None else c[0]


def _group_sizes(rows: list[dict]) -> dict:
    seen: dict = defaultdict(dict)
    for r in rows:
        if bool(r["treated"]):
            seen[int(r["cohort"])][r["person_id"]] = float(r.get("weight", 1.0))
    return {g: sum(v.values()) for g, v in seen.items()}


def brute_force_event_study(raw, events: Iterable[int] = range(-5, 6), covariates: Sequence[str] = (),
                            min_cell: int = 1) -> dict:
    """Treated-count weighted event-study coefficients and the overall ATT.

    Returns ``{"event_study": {e: coef}, "overall": value}``. The overall ATT
    averages each cohort's estimable post-period cells and weights cohorts by
    their number of treated persons.
    """
    rows = _rows(raw)
    sizes = _group_sizes(rows)
    cohorts = sorted({int(r["cohort"]) for r in rows})
    cells = {}
    for g in cohorts:
        for e in events:
            c = brute_force_cell(rows, g, e, covariates, min_cell)
            if c is not None:
                cells[(g, e)] = c[0]
    es = {}
    for e in events:
        num = den = 0.0
        for g in cohorts:
            if (g, e) in cells:
                num += sizes[g] * cells[(g, e)]
                den += sizes[g]
        if den > 0:
            es[e] = num / den
    num = den = 0.0
    for g in cohorts:
        post = [cells[(g, e)] for e in events if e >= 0 and (g, e) in cells]
        if post:
            num += sizes[g] * (sum(post) / len(post))
            den += sizes[g]
    return {"event_study": es, "overall": num / den if den > 0 else float("nan"), "cells": cells}


def brute_force_twfe(raw, events: Iterable[int]) -> dict:
    """Dense least squares with explicit unit and time dummies (small instances only)."""
    rows = [r for r in _rows(raw) if float(r["y"]) == float(r["y"])]
    units = sorted({(int(r["cohort"]), str(r["person_id"])) for r in rows})
    times = sorted({int(r["shifted_time"]) for r in rows})
    ev = [e for e in events if e != -1]
    ui = {u: i for i, u in enumerate(units)}
    ti = {t: i for i, t in enumerate(times)}
    X = np.zeros((len(rows), len(ev) + len(units) + len(times) - 1))
    y = np.zeros(len(rows))
    for i, r in enumerate(rows):
        y[i] = float(r["y"])
        for j, e in enumerate(ev):
            X[i, j] = float(bool(r["treated"]) and int(r["event_time"]) == e)
        X[i, len(ev) + ui[(int(r["cohort"]), str(r["person_id"]))]] = 1.0
        t = ti[int(r["shifted_time"])]
        if t > 0:
            X[i, len(ev) + len(units) + t - 1] = 1.0
    beta = np.linalg.lstsq(X, y, rcond=None)[0]
    return {e: float(beta[j]) for j, e in enumerate(ev)}


def mean_by(rows: Iterable[Mapping], keys: Sequence[str], value: str) -> dict:
    acc: dict = defaultdict(lambda: [0.0, 0])
    for r in rows:
        k = tuple(r[c] for c in keys)
        acc[k][0] += float(r[value])
        acc[k][1] += 1
    return {k: s / n for k, (s, n) in acc.items()}

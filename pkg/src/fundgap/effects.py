"""Closed-form post-estimation calculations.

Every function is pure. Undefined results (zero denominators) come back as
``nan`` rather than raising, so batch reports can still be written.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

REGIONS = ("China", "India", "RoW")


@dataclass(frozen=True)
class BenchmarkInput:
    beta_hat: float
    ybar_c_minus1: float
    ybar_c_5: float


@dataclass(frozen=True)
class SelectionBoundInput:
    beta_true: float
    beta_hat: float
    n_b: float

    def __post_init__(self):
        if not 0.0 < self.n_b < 1.0:
            raise ValueError("n_b must lie in (0, 1)")


def benchmark_effect_size(b: BenchmarkInput) -> float:
    """Estimate relative to the control group's change from event year -1 to 5."""
    gap = abs(b.ybar_c_5 - b.ybar_c_minus1)
    if gap == 0:
        return math.nan
    return b.beta_hat / gap


def nonemployment_contribution(att: float, treated_share: float, base_rate: float) -> float:
    """Share of the base nonemployment rate attributable to interruptions."""
    if base_rate == 0:
        return math.nan
    return att * treated_share / base_rate


def selection_bias_differential(s: SelectionBoundInput) -> float:
    """Treated-control outcome gap among the non-fully-attached implied by a true effect ``beta_true``."""
    return (s.beta_true - s.beta_hat) / s.n_b


def green_card_share(coef: float, n: Mapping[str, float], stay: Mapping[str, float]) -> float:
    """Departures attributable to green-card delays as a share of all expected departures."""
    missing = [r for r in REGIONS if r not in n or r not in stay]
    if missing:
        raise KeyError(f"missing regions {missing}")
    for r, s in stay.items():
        if not 0.0 <= s <= 1.0:
            raise ValueError(f"stay rate for {r} outside [0, 1]")
    departures = sum(n[r] * (1.0 - stay[r]) for r in n)
    if departures == 0:
        return math.nan
    return coef * (n["China"] + n["India"]) / departures


def format_percent(x: float, digits: int = 1) -> str:
    if x is None or not math.isfinite(x):
        return "undefined"
    return f"{100 * x:.{digits}f}%"


def compute_effects(inputs: Mapping) -> dict:
    """Evaluate whichever calculations have inputs in ``inputs`` (the ``effects`` CLI payload).

    Recognized keys: ``benchmark``, ``nonemployment_contribution``,
    ``selection_bias`` and ``green_card``, each holding the keyword arguments
    of the matching function (a list of such objects is also accepted).
    """
    out: dict = {}

    def many(key, fn):
        val = inputs.get(key)
        if val is None:
            return
        items = val if isinstance(val, list) else [val]
        res = []
        for kw in items:
            v = fn(kw)
            res.append({"inputs": kw, "value": None if not math.isfinite(v) else v,
                        "percent": format_percent(v), "defined": math.isfinite(v)})
        out[key] = res if isinstance(val, list) else res[0]

    many("benchmark", lambda kw: benchmark_effect_size(BenchmarkInput(**kw)))
    many("nonemployment_contribution", lambda kw: nonemployment_contribution(**kw))
    many("selection_bias", lambda kw: selection_bias_differential(SelectionBoundInput(**kw)))
    many("green_card", lambda kw: green_card_share(**kw))
    unknown = set(inputs) - {"benchmark", "nonemployment_contribution", "selection_bias", "green_card"}
    if unknown:
        raise KeyError(f"unknown effect inputs {sorted(unknown)}")
    return out

"""Two-way fixed-effects event study on stacked data.

Unit-by-cohort and shifted-time fixed effects are swept out by alternating
projections; the event-time-by-treated dummies (e = -1 omitted) are then fit
by least squares on the residualized data.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .. import kernels
from .stack import StackedData

logger = logging.getLogger(__name__)

COLLINEAR_TOL = 1e-9


@dataclass
class TwfeResult:
    coef: dict[int, float]
    dropped: list[int] = field(default_factory=list)
    sweeps: int = 0
    n_obs: int = 0


def twfe_stacked(stacked: StackedData, tol: float = 1e-10, maxiter: int = 10_000) -> TwfeResult:
    """Event-study coefficients from the stacked two-way fixed-effects regression.

    Dummies that are empty or collinear with the fixed effects and the
    remaining dummies are dropped and listed in ``dropped``. Observation
    weights are not used.
    """
    f = stacked.frame
    f = f[np.isfinite(f["y"].to_numpy(float))]
    if (f["weight"] != 1.0).any():
        logger.warning("twfe_stacked ignores observation weights")
    lo, hi = stacked.window
    events = [e for e in range(lo, hi + 1) if e != -1]

    g1, _ = pd.factorize(pd.MultiIndex.from_frame(f[["cohort", "person_id"]]))
    g2, _ = pd.factorize(f["shifted_time"])
    g1, g2 = g1.astype(np.int64), g2.astype(np.int64)
    treated = f["treated"].to_numpy(bool)
    et = f["event_time"].to_numpy(np.int64)
    Z = np.column_stack([f["y"].to_numpy(float)] + [(treated & (et == e)).astype(float) for e in events])

    R, sweeps = kernels.demean_two_way(np.ascontiguousarray(Z), g1, g2, int(g1.max()) + 1, int(g2.max()) + 1,
                                       tol, maxiter)
    y, X = R[:, 0], R[:, 1:]

    # greedy rank check: keep a dummy only if it adds a direction
    keep: list[int] = []
    dropped: list[int] = []
    Q = np.zeros((len(y), 0))
    for j, e in enumerate(events):
        v = X[:, j]
        scale = np.linalg.norm(Z[:, 1 + j])
        if scale == 0:
            dropped.append(e)
            continue
        r = v - Q @ (Q.T @ v) if Q.shape[1] else v
        nr = np.linalg.norm(r)
        if nr <= COLLINEAR_TOL * scale:
            dropped.append(e)
            continue
        Q = np.column_stack([Q, r / nr])
        keep.append(j)
    if dropped:
        logger.warning("dropping collinear event dummies %s", dropped)
    coef: dict[int, float] = {}
    if keep:
        beta, *_ = np.linalg.lstsq(X[:, keep], y, rcond=None)
        coef = {events[j]: float(b) for j, b in zip(keep, beta)}
    return TwfeResult(coef, dropped, int(sweeps), len(y))

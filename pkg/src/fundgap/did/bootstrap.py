"""Stratified pairs-cluster bootstrap over cohort-arm strata.

Each replicate resamples whole clusters with replacement within every
(cohort, arm) stratum, so treated and control counts per cohort stay fixed.
A replicate that leaves a cell estimable in the point estimate without enough
units is redrawn. Replicate r, attempt a always uses the generator seeded by
``(seed, r, a)``, so results do not depend on thread count or chunking.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .._accel import thread_count

logger = logging.getLogger(__name__)

CHUNK = 25
MAX_ATTEMPT_FACTOR = 10


class BootstrapError(RuntimeError):
    pass


class Resamplable(Protocol):
    n_clusters: int
    starts: np.ndarray

    def point(self): ...

    def coefficients(self, M: np.ndarray, mask: np.ndarray | None = None): ...


@dataclass
class BootstrapResult:
    point: np.ndarray
    replicates: np.ndarray
    se: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    attempts: int


def draw_multiplicities(rng: np.random.Generator, starts: np.ndarray, n_clusters: int) -> np.ndarray:
    """How many times each cluster is drawn when resampling within strata."""
    starts = np.asarray(starts, dtype=np.int64)
    sizes = np.diff(np.append(starts, n_clusters))
    owner = np.repeat(np.arange(len(starts)), sizes)
    u = rng.random(n_clusters)
    idx = starts[owner] + np.floor(u * sizes[owner]).astype(np.int64)
    return np.bincount(idx, minlength=n_clusters).astype(np.float64)


def _draw(seed: int, r: int, attempt: int, starts, C) -> np.ndarray:
    return draw_multiplicities(np.random.default_rng([seed, r, attempt]), starts, C)


def cluster_bootstrap(
    pipeline: Resamplable,
    reps: int,
    seed: int,
    *,
    threads: int | None = None,
    alpha: float = 0.05,
    chunk: int = CHUNK,
) -> BootstrapResult:
    """Bootstrap standard errors and percentile intervals for ``pipeline``'s coefficients.

    Parameters
    ----------
    pipeline
        Object exposing clusters sorted by stratum (``n_clusters``, ``starts``),
        ``point()`` and ``coefficients(M, mask)``, e.g. a
        :class:`~fundgap.did.estimator.CohortEstimator`.
    reps : int
        Number of accepted replicates (at least 2).
    seed : int
        Base seed.
    """
    if reps < 2:
        raise ValueError("need at least two bootstrap replicates")
    point, mask, _ = pipeline.point()
    C, starts = pipeline.n_clusters, pipeline.starts
    cap = MAX_ATTEMPT_FACTOR * reps

    def run(rs: range):
        ids = list(rs)
        attempt = {r: 0 for r in ids}
        M = np.stack([_draw(seed, r, 0, starts, C) for r in ids])
        coef, ok = pipeline.coefficients(M, mask)
        coef = coef.copy()
        pending = [r for r, good in zip(ids, ok) if not good]
        extra = 0
        while pending:
            extra += len(pending)
            if extra > cap:
                raise BootstrapError("too many replicates could not estimate every cell")
            for r in pending:
                attempt[r] += 1
            Mr = np.stack([_draw(seed, r, attempt[r], starts, C) for r in pending])
            cr, okr = pipeline.coefficients(Mr, mask)
            nxt = []
            for i, r in enumerate(pending):
                if okr[i]:
                    coef[r - rs.start] = cr[i]
                else:
                    nxt.append(r)
            pending = nxt
        return coef, len(ids) + sum(attempt.values())

    chunks = [range(s, min(s + chunk, reps)) for s in range(0, reps, chunk)]
    n_threads = min(thread_count(threads), len(chunks))
    if n_threads > 1:
        with ThreadPoolExecutor(n_threads) as ex:
            results = list(ex.map(run, chunks))
    else:
        results = [run(c) for c in chunks]
    reps_arr = np.concatenate([c for c, _ in results], axis=0)
    attempts = sum(a for _, a in results)
    if attempts > cap:
        raise BootstrapError("too many replicates could not estimate every cell")
    if attempts > reps:
        logger.info("bootstrap redrew %d replicates", attempts - reps)

    defined = np.isfinite(point)
    se = np.full_like(point, np.nan)
    lo = np.full_like(point, np.nan)
    hi = np.full_like(point, np.nan)
    if defined.any():
        sub = reps_arr[:, defined]
        se[defined] = sub.std(axis=0, ddof=1)
        lo[defined] = np.percentile(sub, 100 * alpha / 2, axis=0)
        hi[defined] = np.percentile(sub, 100 * (1 - alpha / 2), axis=0)
    return BootstrapResult(point, reps_arr, se, lo, hi, attempts)

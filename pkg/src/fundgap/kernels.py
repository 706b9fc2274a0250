"""Hot numeric loops, each with a numba and a numpy implementation.

The public names dispatch on :data:`fundgap._accel.USE_NUMBA`. Both variants
are kept importable (``*_numba`` / ``*_numpy``) so they can be tested and
benchmarked against each other. Summation order is fixed per output element,
so results never depend on how replicates are chunked across threads.
"""

from __future__ import annotations

import numpy as np

from ._accel import USE_NUMBA, njit


# --- per-cluster moments ------------------------------------------------------


def cluster_moments_numpy(cluster, D, V, X, w, n_clusters):
    """Accumulate weighted regression moments by cluster.

    Parameters
    ----------
    cluster : (U,) int64
        Cluster index of each unit.
    D : (U, K) float64
        Outcome contrast per unit and reported event time (NaN where invalid).
    V : (U, K) bool
        Contrast is observed.
    X : (U, P) float64
        Unit design including the intercept column.
    w : (U,) float64
        Unit weights.

    Returns
    -------
    A : (C, K, P, P) sum of w x x'
    b : (C, K, P) sum of w x d
    n : (C, K) number of valid units
    """
    U, K = D.shape
    P = X.shape[1]
    wv = np.where(V, w[:, None], 0.0)
    d0 = np.where(V, D, 0.0)
    A = np.zeros((n_clusters, K, P, P))
    b = np.zeros((n_clusters, K, P))
    n = np.zeros((n_clusters, K))
    xx = X[:, :, None] * X[:, None, :]
    np.add.at(A, cluster, wv[:, :, None, None] * xx[:, None, :, :])
    np.add.at(b, cluster, (wv * d0)[:, :, None] * X[:, None, :])
    np.add.at(n, cluster, V.astype(np.float64))
    return A, b, n


@njit(cache=True)
def cluster_moments_numba(cluster, D, V, X, w, n_clusters):
    U, K = D.shape
    P = X.shape[1]
    A = np.zeros((n_clusters, K, P, P))
    b = np.zeros((n_clusters, K, P))
    n = np.zeros((n_clusters, K))
    for u in range(U):
        c = cluster[u]
        for k in range(K):
            if not V[u, k]:
                continue
            wu = w[u]
            n[c, k] += 1.0
            for i in range(P):
                b[c, k, i] += wu * X[u, i] * D[u, k]
                for j in range(P):
                    A[c, k, i, j] += wu * X[u, i] * X[u, j]
    return A, b, n


# --- replicate sums over strata -----------------------------------------------


def stratum_sums_numpy(M, starts, F):
    """Multiplicity-weighted sums of cluster features within each stratum.

    Clusters must be sorted by stratum; ``starts`` holds the first cluster of
    each stratum (strictly increasing, first entry 0).

    Parameters
    ----------
    M : (R, C) float64
        Cluster multiplicities per replicate.
    starts : (S,) int64
    F : (C, L) float64

    Returns
    -------
    (R, S, L) float64
    """
    R = M.shape[0]
    out = np.empty((R, len(starts), F.shape[1]))
    for r in range(R):
        out[r] = np.add.reduceat(M[r][:, None] * F, starts, axis=0)
    return out


@njit(cache=True)
def stratum_sums_numba(M, starts, F):
    R, C = M.shape
    S = starts.shape[0]
    L = F.shape[1]
    out = np.zeros((R, S, L))
    for r in range(R):
        for s in range(S):
            lo = starts[s]
            hi = starts[s + 1] if s + 1 < S else C
            for c in range(lo, hi):
                m = M[r, c]
                if m == 0.0:
                    continue
                for l in range(L):
                    out[r, s, l] += m * F[c, l]
    return out


# --- two-way demeaning -----------------------------------------------------------


def demean_two_way_numpy(X, g1, g2, n1, n2, tol=1e-10, maxiter=10_000):
    """Residualize columns of ``X`` on two sets of group dummies.

    Alternates group-mean sweeps until the largest change in a sweep falls
    below ``tol``. Returns ``(residuals, sweeps)``.
    """
    R = np.array(X, dtype=np.float64, copy=True)
    c1 = np.bincount(g1, minlength=n1).astype(np.float64)
    c2 = np.bincount(g2, minlength=n2).astype(np.float64)
    c1[c1 == 0] = 1.0
    c2[c2 == 0] = 1.0
    for it in range(1, maxiter + 1):
        delta = 0.0
        for j in range(R.shape[1]):
            col = R[:, j]
            m1 = np.bincount(g1, weights=col, minlength=n1) / c1
            col -= m1[g1]
            m2 = np.bincount(g2, weights=col, minlength=n2) / c2
            col -= m2[g2]
            delta = max(delta, float(np.max(np.abs(m1))), float(np.max(np.abs(m2))))
        if delta < tol:
            return R, it
    return R, maxiter


@njit(cache=True)
def demean_two_way_numba(X, g1, g2, n1, n2, tol=1e-10, maxiter=10_000):
    N, P = X.shape
    R = X.copy()
    c1 = np.zeros(n1)
    c2 = np.zeros(n2)
    for i in range(N):
        c1[g1[i]] += 1.0
        c2[g2[i]] += 1.0
    for g in range(n1):
        if c1[g] == 0.0:
            c1[g] = 1.0
    for g in range(n2):
        if c2[g] == 0.0:
            c2[g] = 1.0
    s1 = np.zeros(n1)
    s2 = np.zeros(n2)
    for it in range(1, maxiter + 1):
        delta = 0.0
        for j in range(P):
            s1[:] = 0.0
            for i in range(N):
                s1[g1[i]] += R[i, j]
            for g in range(n1):
                s1[g] /= c1[g]
                if abs(s1[g]) > delta:
                    delta = abs(s1[g])
            for i in range(N):
                R[i, j] -= s1[g1[i]]
            s2[:] = 0.0
            for i in range(N):
                s2[g2[i]] += R[i, j]
            for g in range(n2):
                s2[g] /= c2[g]
                if abs(s2[g]) > delta:
                    delta = abs(s2[g])
            for i in range(N):
                R[i, j] -= s2[g2[i]]
        if delta < tol:
            return R, it
    return R, maxiter


BACKENDS = {
    "numpy": {
        "cluster_moments": cluster_moments_numpy,
        "stratum_sums": stratum_sums_numpy,
        "demean_two_way": demean_two_way_numpy,
    },
    "numba": {
        "cluster_moments": cluster_moments_numba,
        "stratum_sums": stratum_sums_numba,
        "demean_two_way": demean_two_way_numba,
    },
}

BACKEND = "numba" if USE_NUMBA else "numpy"
cluster_moments = BACKENDS[BACKEND]["cluster_moments"]
stratum_sums = BACKENDS[BACKEND]["stratum_sums"]
demean_two_way = BACKENDS[BACKEND]["demean_two_way"]

"""Slow, independent reference computations used as test oracles.

Nothing here calls the dynamic-programming code under test: values come
from summing over explicit state paths, and Monte Carlo uses its own
vectorised sampler.
"""
import itertools

import numpy as np


def all_det_policies(S, A, H):
    for flat in itertools.product(range(A), repeat=S * H):
        yield np.array(flat, dtype=np.int64).reshape(H, S)


def path_value(P, R, acts, s0=0, h0=0):
    """Expected return from (h0, s0) by summing over every state path."""
    H, S = acts.shape
    total = 0.0
    for tail in itertools.product(range(S), repeat=H - h0 - 1):
        path = (s0,) + tail
        prob, ret = 1.0, 0.0
        for i, s in enumerate(path):
            h = h0 + i
            a = acts[h, s]
            ret += R[h, s, a]
            if i + 1 < len(path):
                prob *= P[h, s, a, path[i + 1]]
        total += prob * ret
    return total


def path_occupancy(P, acts, s0=0):
    H, S = acts.shape
    A = P.shape[2]
    d = np.zeros((H, S, A))
    for tail in itertools.product(range(S), repeat=H - 1):
        path = (s0,) + tail
        prob = 1.0
        for h, s in enumerate(path):
            d[h, s, acts[h, s]] += prob
            if h + 1 < H:
                prob *= P[h, s, acts[h, s], path[h + 1]]
    # each path adds its prefix probability at every layer, which overcounts
    # layer h by the number of tails beyond h; normalise that away
    for h in range(H):
        d[h] /= S ** (H - 1 - h)
    return d


def brute_optimal_q(P, R):
    """Q*[h, s, a] by maximising path values over every policy tail."""
    H, S, A = R.shape
    pols = list(all_det_policies(S, A, H))
    q = np.zeros((H, S, A))
    for h in range(H):
        for s in range(S):
            for a in range(A):
                best = -np.inf
                for pi in pols:
                    pi = pi.copy()
                    pi[h, s] = a
                    best = max(best, path_value(P, R, pi, s, h))
                q[h, s, a] = best
    return q


def monte_carlo_value(P, R, acts, n, rng, s0=0):
    """Mean and standard error of the return over ``n`` vectorised rollouts."""
    H, S = acts.shape
    cum = np.cumsum(P, axis=-1)
    s = np.full(n, s0)
    ret = np.zeros(n)
    for h in range(H):
        a = acts[h, s]
        ret += R[h, s, a]
        u = rng.random(n)
        s = (u[:, None] >= cum[h, s, a]).sum(axis=1)
        s = np.minimum(s, S - 1)
    return ret.mean(), ret.std(ddof=1) / np.sqrt(n)


def k_sup_brute(c1, c2, d_delta, upper=10**7):
    k = np.arange(1, upper + 1, dtype=float)
    ok = k <= (c1 + c2 * np.log(k)) / d_delta
    idx = np.flatnonzero(ok)
    return int(idx[-1] + 1) if idx.size else 0

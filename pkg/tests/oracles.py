"""Independent brute-force references used by the unit and acceptance tests."""

from __future__ import annotations

import itertools
import math

import numpy as np


# ----------------------------------------------------------------- closed patterns


def _subsequences(seq, max_len):
    out = set()
    n = len(seq)
    for r in range(1, min(n, max_len) + 1):
        for idx in itertools.combinations(range(n), r):
            out.add(tuple(seq[i] for i in idx))
    return out


def is_subsequence(p, s) -> bool:
    it = iter(s)
    return all(any(x == y for y in it) for x in p)


def brute_closed(db, min_support, len_min, len_max):
    """{pattern: support} of closed frequent subsequences, closedness checked without length bound."""
    if not db or min_support > len(db):
        return {}
    longest = max(len(s) for s in db)
    support: dict[tuple, int] = {}
    for s in db:
        for p in _subsequences(s, longest):
            support[p] = support.get(p, 0) + 1
    freq = {p: c for p, c in support.items() if c >= min_support}
    closed = {}
    for p, c in freq.items():
        if not len_min <= len(p) <= len_max:
            continue
        if any(len(q) > len(p) and cq == c and is_subsequence(p, q) for q, cq in freq.items()):
            continue
        closed[p] = c
    return closed


# ------------------------------------------------------------------------ k-means


def exhaustive_kmeans(values, k):
    """Minimum SSE over every contiguous k-partition of the sorted values.

    Identical values must share a cluster, matching the DP's contract.
    Returns (sse, centroids).
    """
    v = np.sort(np.asarray(values, dtype=np.float64))
    n = len(v)
    best = (math.inf, None)
    for cuts in itertools.combinations(range(1, n), k - 1):
        bounds = (0,) + cuts + (n,)
        if any(v[c - 1] == v[c] for c in cuts):
            continue
        groups = [v[a:b] for a, b in zip(bounds[:-1], bounds[1:])]
        sse = sum(float(np.sum((g - g.mean()) ** 2)) for g in groups)
        if sse < best[0] - 1e-12:
            best = (sse, np.array([g.mean() for g in groups]))
    return best


def bic_curve(values, k_lo, k_hi):
    """n ln(SSE/n) + k ln n from exhaustive search, for tiny inputs only."""
    n = len(values)
    return {k: n * math.log(max(exhaustive_kmeans(values, k)[0], 1e-300) / n) + k * math.log(n)
            for k in range(k_lo, k_hi + 1)}


# ---------------------------------------------------------------------- gradients


def numeric_grad(f, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central differences of scalar f with respect to every entry of x (modified in place)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + eps
        fp = f()
        x[i] = old - eps
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * eps)
    return g


def rel_error(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-12))

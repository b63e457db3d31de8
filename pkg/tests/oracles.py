"""Independent reference implementations used to check the package."""

from __future__ import annotations

import itertools

import numpy as np


def brute_force_qvec(r: np.ndarray) -> float:
    """Best total correlation over every assignment of features to dimensions."""
    F, d = r.shape
    return max(sum(r[f, a[f]] for f in range(F)) for a in itertools.product(range(d), repeat=F))


def pearson(a, b) -> float:
    a, b = a - a.mean(), b - b.mean()
    if not a.any() or not b.any():
        return 0.0
    return float(a @ b / np.sqrt((a @ a) * (b @ b)))


def otsu_exact(gray: np.ndarray) -> int:
    """First threshold t maximizing between-class variance of {v <= t} vs {v > t}.

    Integer arithmetic only: n^4 * sigma_b^2 = (n0*S1 - n1*S0)^2 / (n0*n1), and the
    fractions are compared by cross-multiplication.
    """
    hist = np.bincount(np.asarray(gray, dtype=np.int64).ravel(), minlength=256).tolist()
    n = sum(hist)
    total = sum(v * c for v, c in enumerate(hist))
    best_t, best_num, best_den = 0, -1, 1
    n0 = s0 = 0
    for t in range(256):
        n0 += hist[t]
        s0 += t * hist[t]
        n1, s1 = n - n0, total - s0
        if n0 == 0 or n1 == 0:
            num, den = 0, 1
        else:
            num, den = (n0 * s1 - n1 * s0) ** 2, n0 * n1
        if num * best_den > best_num * den:
            best_t, best_num, best_den = t, num, den
    return best_t

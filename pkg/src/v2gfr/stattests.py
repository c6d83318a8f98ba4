"""Normality and unimodality tests for empirical connection-change samples.

``dip_statistic`` follows Hartigan & Hartigan's algorithm (AS 217): alternate
greatest-convex-minorant / least-concave-majorant fits of the empirical CDF
until the modal interval stops shrinking. The p-value is calibrated by Monte
Carlo against uniform samples of the same size.
"""

from __future__ import annotations

import functools

import numba
import numpy as np
from scipy import stats


class DegenerateSample(ValueError):
    pass


@numba.njit(cache=True)
def _dip_sorted(x):
    """Dip of sorted sample ``x`` (ties allowed)."""
    n = x.shape[0]
    dip = 1.0
    if n < 2 or x[n - 1] == x[0]:
        return dip / (2.0 * n) if n > 0 else 0.0
    # 1-based work arrays, index 0 unused
    xs = np.empty(n + 1)
    xs[1:] = x
    mn = np.zeros(n + 1, dtype=np.int64)
    mj = np.zeros(n + 1, dtype=np.int64)
    lcm = np.zeros(n + 1, dtype=np.int64)
    gcm = np.zeros(n + 1, dtype=np.int64)

    # convex minorant support links
    mn[1] = 1
    for j in range(2, n + 1):
        mn[j] = j - 1
        while True:
            mnj = mn[j]
            mnmnj = mn[mnj]
            if mnj == 1 or (xs[j] - xs[mnj]) * (mnj - mnmnj) < (xs[mnj] - xs[mnmnj]) * (j - mnj):
                break
            mn[j] = mnmnj
    # concave majorant support links
    mj[n] = n
    for k in range(n - 1, 0, -1):
        mj[k] = k + 1
        while True:
            mjk = mj[k]
            mjmjk = mj[mjk]
            if mjk == n or (xs[k] - xs[mjk]) * (mjk - mjmjk) < (xs[mjk] - xs[mjmjk]) * (k - mjk):
                break
            mj[k] = mjmjk

    low = 1
    high = n
    while True:
        gcm[1] = high
        i = 1
        while gcm[i] > low:
            gcm[i + 1] = mn[gcm[i]]
            i += 1
        l_gcm = i
        ig = l_gcm
        ix = ig - 1

        lcm[1] = low
        i = 1
        while lcm[i] < high:
            lcm[i + 1] = mj[lcm[i]]
            i += 1
        l_lcm = i
        ih = l_lcm
        iv = 2

        d = 0.0
        if l_gcm != 2 or l_lcm != 2:
            while True:
                gcmix = gcm[ix]
                lcmiv = lcm[iv]
                if gcmix > lcmiv:
                    gcmi1 = gcm[ix + 1]
                    dx = (lcmiv - gcmi1 + 1) - (xs[lcmiv] - xs[gcmi1]) * (gcmix - gcmi1) / (xs[gcmix] - xs[gcmi1])
                    iv += 1
                    if dx >= d:
                        d = dx
                        ig = ix + 1
                        ih = iv - 1
                else:
                    lcmiv1 = lcm[iv - 1]
                    dx = (xs[gcmix] - xs[lcmiv1]) * (lcmiv - lcmiv1) / (xs[lcmiv] - xs[lcmiv1]) - (gcmix - lcmiv1 - 1)
                    ix -= 1
                    if dx >= d:
                        d = dx
                        ig = ix + 1
                        ih = iv
                if ix < 1:
                    ix = 1
                if iv > l_lcm:
                    iv = l_lcm
                if gcm[ix] == lcm[iv]:
                    break
        else:
            d = 1.0

        if d < dip:
            break

        dip_l = 0.0
        for j in range(ig, l_gcm):
            max_t = 1.0
            jb = gcm[j + 1]
            je = gcm[j]
            if je - jb > 1 and xs[je] != xs[jb]:
                C = (je - jb) / (xs[je] - xs[jb])
                for jj in range(jb, je + 1):
                    t = (jj - jb + 1) - (xs[jj] - xs[jb]) * C
                    if max_t < t:
                        max_t = t
            if dip_l < max_t:
                dip_l = max_t

        dip_u = 0.0
        for j in range(ih, l_lcm):
            max_t = 1.0
            jb = lcm[j]
            je = lcm[j + 1]
            if je - jb > 1 and xs[je] != xs[jb]:
                C = (je - jb) / (xs[je] - xs[jb])
                for jj in range(jb, je + 1):
                    t = (xs[jj] - xs[jb]) * C - (jj - jb - 1)
                    if max_t < t:
                        max_t = t
            if dip_u < max_t:
                dip_u = max_t

        if dip < dip_u:
            dip = dip_u
        if dip < dip_l:
            dip = dip_l

        if low == gcm[ig] and high == lcm[ih]:
            break
        low = gcm[ig]
        high = lcm[ih]
    return dip / (2.0 * n)


@numba.njit(cache=True)
def _null_dips(n, n_boot, seed):
    np.random.seed(seed)
    out = np.empty(n_boot)
    for b in range(n_boot):
        out[b] = _dip_sorted(np.sort(np.random.random(n)))
    return out


def dip_statistic(samples) -> float:
    x = np.sort(np.asarray(samples, dtype=float))
    if x.size < 4:
        raise DegenerateSample(f"dip test needs >= 4 samples, got {x.size}")
    if x[0] == x[-1]:
        raise DegenerateSample("all samples identical")
    return float(_dip_sorted(x))


@functools.lru_cache(maxsize=64)
def _null_distribution(n: int, n_boot: int, seed: int) -> np.ndarray:
    return np.sort(_null_dips(n, n_boot, seed))


def dip_test(samples, n_boot: int = 10_000, seed: int = 0):
    """Return ``(dip, p_value)``; small p rejects unimodality."""
    d = dip_statistic(samples)
    n = len(samples)
    null = _null_distribution(n, n_boot, seed)
    # count of null dips >= d, via the sorted null
    n_ge = n_boot - np.searchsorted(null, d, side="left")
    return d, float(n_ge / n_boot)


def shapiro_wilk(samples) -> float:
    """Shapiro-Wilk p-value (Royston's approximation); small p rejects normality."""
    x = np.asarray(samples, dtype=float)
    if x.size < 8:
        raise DegenerateSample(f"Shapiro-Wilk needs >= 8 samples, got {x.size}")
    if np.ptp(x) == 0:
        raise DegenerateSample("all samples identical")
    return float(stats.shapiro(x).pvalue)

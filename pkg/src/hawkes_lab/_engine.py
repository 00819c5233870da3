"""Compiled inner loops of the two simulators.

Kernels and baselines are passed as family codes plus parameter arrays so
that one compiled function handles every model.
"""
import math

import numpy as np
from numba import njit

K_ZERO, K_EXP, K_GAMMA, K_STEP, K_BETA, K_TAB = 0, 1, 2, 3, 4, 5
B_ZERO, B_CONST, B_SIN, B_TAB = 0, 1, 2, 3


@njit(cache=True)
def _tab_value(x, y, n, s):
    if s > x[n - 1] or s < 0.0:
        return 0.0
    if s <= x[0]:
        return y[0]
    lo, hi = 0, n - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if x[mid] <= s:
            lo = mid
        else:
            hi = mid
    f = (s - x[lo]) / (x[hi] - x[lo])
    return y[lo] + f * (y[hi] - y[lo])


@njit(cache=True)
def _tab_max(x, y, n, s0, s1):
    m = max(_tab_value(x, y, n, s0), _tab_value(x, y, n, s1))
    for k in range(n):
        if s0 < x[k] < s1 and y[k] > m:
            m = y[k]
    return m


@njit(cache=True)
def kernel_value(code, p, x, y, n, s):
    if code == K_ZERO:
        return 0.0
    if code == K_EXP:
        return p[0] * math.exp(-p[1] * s)
    if code == K_GAMMA:
        if s <= 0.0:
            if p[1] < 1.0:
                return math.inf
            if p[1] == 1.0:
                return p[0] / p[2]
            return 0.0
        return p[0] * math.exp((p[1] - 1.0) * math.log(s) - s / p[2] + p[3])
    if code == K_STEP:
        return p[0]
    if code == K_BETA:
        if s < 0.0 or s > p[2]:
            return 0.0
        if (s == 0.0 and p[1] < 0.0) or (s == p[2] and p[3] < 0.0):
            return math.inf
        return p[0] * s ** p[1] * (p[2] - s) ** p[3]
    return _tab_value(x, y, n, s)


@njit(cache=True)
def kernel_max(code, p, x, y, n, s0, s1):
    """Upper bound of the kernel over lags ``[s0, s1]``."""
    if code == K_ZERO:
        return 0.0
    if code == K_EXP:
        return p[0] * math.exp(-p[1] * s0)
    if code == K_STEP:
        return p[0]
    if code == K_GAMMA:
        if p[1] <= 1.0:
            return kernel_value(code, p, x, y, n, s0)
        mode = (p[1] - 1.0) * p[2]
        return kernel_value(code, p, x, y, n, min(max(mode, s0), s1))
    if code == K_BETA:
        if s0 > p[2]:
            return 0.0
        hi = min(s1, p[2])
        if p[1] >= 0.0 and p[3] >= 0.0:
            mode = 0.0 if p[1] + p[3] == 0.0 else p[1] * p[2] / (p[1] + p[3])
            return kernel_value(code, p, x, y, n, min(max(mode, s0), hi))
        return max(kernel_value(code, p, x, y, n, s0), kernel_value(code, p, x, y, n, hi))
    return _tab_max(x, y, n, s0, s1)


@njit(cache=True)
def baseline_value(code, p, x, y, n, t):
    if code == B_ZERO:
        return 0.0
    if code == B_CONST:
        return p[0]
    if code == B_SIN:
        return p[0] + p[1] * math.sin(p[2] * t)
    return _tab_value(x, y, n, t)


@njit(cache=True)
def baseline_max(code, p, x, y, n, t0, t1):
    if code == B_ZERO:
        return 0.0
    if code == B_CONST:
        return p[0]
    if code == B_SIN:
        return p[0] + abs(p[1])
    return _tab_max(x, y, n, t0, t1)


@njit(cache=True)
def _grow(a, n):
    out = np.empty(2 * len(a), dtype=a.dtype)
    out[:n] = a[:n]
    return out


@njit(cache=True, nogil=True)
def thinning(seed, T, window, kc, kp, kx, ky, kn, bc, bp, bx, by, bn, cutoff, max_events):
    """Ogata thinning with a certified bound on each look-ahead window.

    Returns (times, marks, candidates, accepted).
    """
    np.random.seed(seed)
    d = len(bc)
    times = np.empty(64)
    marks = np.empty(64, dtype=np.int64)
    lam = np.empty(d)
    n = 0
    first = 0
    cut_all = np.max(cutoff) if d > 0 else 0.0
    t = 0.0
    cand = 0
    while t < T:
        t_end = min(t + window, T)
        while first < n and t - times[first] > cut_all:
            first += 1
        bound = 0.0
        for i in range(d):
            bound += baseline_max(bc[i], bp[i], bx[i], by[i], bn[i], t, t_end)
            for e in range(first, n):
                j = marks[e]
                age = t - times[e]
                if age > cutoff[j]:
                    continue
                bound += kernel_max(kc[i, j], kp[i, j], kx[i, j], ky[i, j], kn[i, j],
                                    age, t_end - times[e])
        if not math.isfinite(bound):
            raise ValueError("intensity bound is infinite; use the branching simulator")
        if bound <= 0.0:
            t = t_end
            continue
        s = t + np.random.exponential(1.0 / bound)
        if s > t_end:
            t = t_end
            continue
        cand += 1
        total = 0.0
        for i in range(d):
            v = baseline_value(bc[i], bp[i], bx[i], by[i], bn[i], s)
            for e in range(first, n):
                j = marks[e]
                age = s - times[e]
                if age - (s - t) > cutoff[j]:
                    continue
                v += kernel_value(kc[i, j], kp[i, j], kx[i, j], ky[i, j], kn[i, j], age)
            lam[i] = v
            total += v
        if total > bound * (1.0 + 1e-9) + 1e-12:
            raise ValueError("intensity exceeded its certified bound")
        u = np.random.random() * bound
        if u < total:
            mark = d - 1
            acc = 0.0
            for i in range(d):
                acc += lam[i]
                if u < acc:
                    mark = i
                    break
            if n == len(times):
                times = _grow(times, n)
                marks = _grow(marks, n)
            times[n] = s
            marks[n] = mark
            n += 1
            if n > max_events:
                raise ValueError("event count exceeded the explosion limit")
        t = s
    return times[:n].copy(), marks[:n].copy(), cand, n


@njit(cache=True)
def _draw_offset(code, p, x, y, n, ymax):
    if code == K_EXP:
        return np.random.exponential(1.0 / p[1])
    if code == K_GAMMA:
        return np.random.gamma(p[1], p[2])
    if code == K_BETA:
        return p[2] * np.random.beta(p[1] + 1.0, p[3] + 1.0)
    # tabulated: rejection from the bounding box of the support
    while True:
        s = np.random.random() * x[n - 1]
        if np.random.random() * ymax < _tab_value(x, y, n, s):
            return s


@njit(cache=True, nogil=True)
def branching(seed, T, kc, kp, kx, ky, kn, bc, bp, bx, by, bn, base_mass, base_sup,
              mass, kmax_tab, max_events):
    """Cluster construction: immigrants then Poisson offspring, generation by generation.

    Returns (times, marks, generations) sorted by time.
    """
    np.random.seed(seed)
    d = len(bc)
    times = np.empty(64)
    marks = np.empty(64, dtype=np.int64)
    gens = np.empty(64, dtype=np.int64)
    n = 0
    for i in range(d):
        if base_mass[i] <= 0.0:
            continue
        k = np.random.poisson(base_mass[i])
        for _ in range(k):
            while True:
                s = (1.0 - np.random.random()) * T          # (0, T]
                if np.random.random() * base_sup[i] < baseline_value(
                        bc[i], bp[i], bx[i], by[i], bn[i], s):
                    break
            if n == len(times):
                times = _grow(times, n)
                marks = _grow(marks, n)
                gens = _grow(gens, n)
            times[n] = s
            marks[n] = i
            gens[n] = 0
            n += 1
    head = 0
    while head < n:
        s = times[head]
        j = marks[head]
        g = gens[head]
        head += 1
        rest = T - s
        for i in range(d):
            code = kc[i, j]
            if code == K_ZERO:
                continue
            if code == K_STEP:
                k = np.random.poisson(kp[i, j][0] * rest)
            else:
                k = np.random.poisson(mass[i, j])
            for _ in range(k):
                if code == K_STEP:
                    off = (1.0 - np.random.random()) * rest
                else:
                    off = _draw_offset(code, kp[i, j], kx[i, j], ky[i, j], kn[i, j],
                                       kmax_tab[i, j])
                if off > rest or off <= 0.0:
                    continue
                if n == len(times):
                    times = _grow(times, n)
                    marks = _grow(marks, n)
                    gens = _grow(gens, n)
                times[n] = s + off
                marks[n] = i
                gens[n] = g + 1
                n += 1
                if n > max_events:
                    raise ValueError("event count exceeded the explosion limit")
    order = np.argsort(times[:n], kind="mergesort")
    return times[:n][order], marks[:n][order], gens[:n][order]


@njit(cache=True, nogil=True)
def batch_counts(seeds, method, T, window, obs, kc, kp, kx, ky, kn, bc, bp, bx, by, bn,
                 cutoff, base_mass, base_sup, mass, kmax_tab, max_events):
    """Counts ``N_i(obs_k)`` for one trajectory per seed, shape (R, len(obs), d)."""
    d = len(bc)
    R = len(seeds)
    nobs = len(obs)
    out = np.zeros((R, nobs, d), dtype=np.int64)
    for r in range(R):
        if method == 0:
            times, marks, _, _ = thinning(seeds[r], T, window, kc, kp, kx, ky, kn,
                                          bc, bp, bx, by, bn, cutoff, max_events)
        else:
            times, marks, _ = branching(seeds[r], T, kc, kp, kx, ky, kn, bc, bp, bx, by, bn,
                                        base_mass, base_sup, mass, kmax_tab, max_events)
        for e in range(len(times)):
            k = np.searchsorted(obs, times[e])      # first obs >= time
            if k < nobs:
                out[r, k, marks[e]] += 1
        for k in range(1, nobs):
            for i in range(d):
                out[r, k, i] += out[r, k - 1, i]
    return out

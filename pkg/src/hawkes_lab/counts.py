"""Count probabilities on the integer lattice.

The count vector of every base process and of the full process is
infinitely divisible, ``p_k = p_0 * beta_k`` where ``beta`` are the
exponential-series coefficients of the lattice coefficients ``alpha``.  The
coefficients of level ``|k| = n`` follow from base pmfs of level ``n - 1``:

    alpha[jp]_k(t) = sum_j int_0^t p[j]_{k - e_j}(t - s) phi[j <- jp](s) ds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from .convolve import conv1, sample_baseline, sample_kernels
from .model import Grid, ModelSpec


def lattice_points(d: int, L: int) -> list:
    """All ``k`` in N^d with ``0 < |k| <= L``, ordered by level then lexicographically."""
    pts = []
    for n in range(1, L + 1):
        pts.extend(level_points(d, n))
    return pts


def level_points(d: int, n: int) -> list:
    if d == 1:
        return [(n,)]
    out = []
    for first in range(n, -1, -1):
        for rest in level_points(d - 1, n - first):
            out.append((first,) + rest)
    return out


def _sub(k, l):
    return tuple(a - b for a, b in zip(k, l))


def _le(l, k):
    return all(a <= b for a, b in zip(l, k))


class CompositionSums:
    """Memoized ``C_r(k) = sum over ordered r-part compositions of k`` of
    ``prod coeff[part]``, extended one lattice level at a time.

    Coefficients may be floats or numpy arrays (evaluated pointwise).
    """

    def __init__(self, d: int):
        self.d = d
        self.coeff = {}
        self.sums = {}       # (r, k) -> value
        self.level = 0

    def add_level(self, coeffs: dict):
        n = self.level + 1
        pts = level_points(self.d, n)
        for k in pts:
            self.coeff[k] = coeffs[k]
        for k in pts:
            self.sums[(1, k)] = self.coeff[k]
            for r in range(2, n + 1):
                acc = None
                for l, c in self.coeff.items():
                    rest = sum(k) - sum(l)
                    if rest < r - 1 or not _le(l, k):
                        continue
                    prev = self.sums.get((r - 1, _sub(k, l)))
                    if prev is None:
                        continue
                    term = c * prev
                    acc = term if acc is None else acc + term
                if acc is not None:
                    self.sums[(r, k)] = acc
        self.level = n

    def series(self, k, weight) -> object:
        total = 0.0
        for r in range(1, sum(k) + 1):
            v = self.sums.get((r, k))
            if v is not None:
                total = total + weight(r) * v
        return total


def _exp_weight(r):
    return 1.0 / math.factorial(r)


def _log_weight(r):
    return (-1.0) ** (r - 1) / r


def _transform(coeffs: dict, d: int, L: int, weight) -> dict:
    for k in coeffs:
        if sum(k) > L:
            raise ValueError(f"point {k} exceeds the cutoff {L}")
    zero = 0.0 * next(iter(coeffs.values())) if coeffs else 0.0
    sums = CompositionSums(d)
    out = {}
    for n in range(1, L + 1):
        pts = level_points(d, n)
        sums.add_level({k: coeffs.get(k, zero) for k in pts})
        for k in pts:
            out[k] = sums.series(k, weight)
    return out


def exp_coeffs(alpha: dict, L: int, d: int | None = None) -> dict:
    """``beta_k = sum_r (1/r!) sum_{l1+..+lr = k, li != 0} prod alpha_li`` for ``0 < |k| <= L``.

    ``alpha`` maps lattice tuples to values; missing points count as zero.
    """
    d = d if d is not None else len(next(iter(alpha)))
    return _transform(alpha, d, L, _exp_weight)


def log_coeffs(beta: dict, L: int, d: int | None = None) -> dict:
    """Inverse of :func:`exp_coeffs` (logarithmic series)."""
    d = d if d is not None else len(next(iter(beta)))
    return _transform(beta, d, L, _log_weight)


# ------------------------------------------------------------- grid pmfs

def _driving(model: ModelSpec, grid: Grid):
    """Per-igniter driving rates, shape (M+1, j, jp) with jp = 0 the baseline, and
    their primitives."""
    phi = sample_kernels(model, grid).values
    lam = sample_baseline(model, grid).values
    rates = np.concatenate([lam[:, :, None], phi], axis=2)
    Phi = model.kernel_primitives(grid.nodes)
    Lam = model.baseline_primitives(grid.nodes)
    prims = np.concatenate([Lam[:, :, None], Phi], axis=2)
    return rates, prims


def zero_probability(model: ModelSpec, grid: Grid) -> np.ndarray:
    """``p_0[jp](t) = exp(-sum_j Phi[j <- jp](t))``, shape (d+1, M+1)."""
    _, prims = _driving(model, grid)
    return np.exp(-prims.sum(axis=1)).T


def _grid_log_p0(rates: np.ndarray, tau: float) -> np.ndarray:
    """``-sum_j Phi[j <- jp]`` with the primitives taken by the rectangle rule of
    the recursion, shape (d+1, M+1).

    Using the same quadrature for ``p_0`` and for the coefficients keeps the
    grid pmf's total mass at one (up to the lattice cutoff).
    """
    ones = np.ones(rates.shape[0])
    return -np.array([sum(conv1(rates[:, j, jp], ones, tau) for j in range(rates.shape[1]))
                      for jp in range(rates.shape[2])])


def _gauss_conv(f_left, g_right, grid: Grid, order: int = 8):
    """High-order quadrature of ``int_0^t f(t - s) g(s) ds`` at every node.

    Each grid cell is split with Gauss-Legendre nodes; the sum over cells is a
    discrete convolution for each abscissa.
    """
    x, w = leggauss(order)
    xi = 0.5 * (x + 1.0)
    tau = grid.tau
    n = grid.M + 1
    out = np.zeros(n)
    cells = np.arange(n - 1)
    for q in range(order):
        gq = g_right((cells + xi[q]) * tau)                   # cell r: s = (r + xi) tau
        fq = f_left((np.arange(1, n) - xi[q]) * tau)          # lag (p - xi) tau, p >= 1
        out[1:] += 0.5 * w[q] * tau * np.convolve(gq, fq)[: n - 1]
    return out


def zero_one_probs(model: ModelSpec, grid: Grid, order: int = 8):
    """Probabilities of no event and of exactly one event.

    Returns ``(p0, p1)`` with ``p0`` of shape (d+1, M+1) and ``p1[jp, i]`` the
    probability of a single event, in component ``i``, up to time ``t``:

        p1[jp, i](t) = p0[jp](t) int_0^t p0[i](t - s) phi[i <- jp](s) ds,

    the lone event itself must have no offspring by time ``t``.  The integral
    is evaluated with Gauss-Legendre cells, independently of the grid
    recursion in :func:`count_pmf`.
    """
    d = model.d
    p0 = zero_probability(model, grid)
    p1 = np.zeros((d + 1, d, grid.M + 1))
    for i in range(d):
        def p0_i(x, i=i):
            return np.exp(-sum(model.excitation[j][i].primitive(x) for j in range(d)))
        for jp in range(d + 1):
            drive = model.baseline[i] if jp == 0 else model.excitation[i][jp - 1]
            if not np.any(drive.value(grid.nodes)):
                continue
            p1[jp, i] = p0[jp] * _gauss_conv(p0_i, drive.value, grid, order)
    return p0, p1


@dataclass(frozen=True)
class LatticePmf:
    """``values[b, jp, m]`` is the probability of count vector ``points[b]`` at
    node ``m`` for igniter ``jp`` (0 = full process).  ``points[0]`` is 0."""
    grid: Grid
    L_max: int
    points: tuple
    values: np.ndarray
    residual: np.ndarray            # (d+1, M+1)
    alpha: dict

    def prob(self, point, jp: int = 0) -> np.ndarray:
        return self.values[self.points.index(tuple(point)), jp]

    def mean(self, jp: int = 0) -> np.ndarray:
        """Truncated mean ``sum_l l p_l``, shape (M+1, d)."""
        pts = np.array(self.points, dtype=float)
        return np.einsum("bi,bm->mi", pts, self.values[:, jp])


def default_cutoff(d: int) -> int:
    return 8 if d == 1 else 5


def count_pmf(model: ModelSpec, grid: Grid, L_max: int | None = None) -> LatticePmf:
    """Level-by-level recursion for the count pmf of every process up to ``|l| = L_max``.

    ``p_0`` is taken from the same rectangle-rule primitives as the
    coefficients, so the grid pmf loses no mass below the cutoff.
    """
    d = model.d
    L = default_cutoff(d) if L_max is None else int(L_max)
    if L < 1:
        raise ValueError("L_max must be >= 1")
    rates, _ = _driving(model, grid)
    log_p0 = _grid_log_p0(rates, grid.tau)     # (d+1, M+1)
    if np.min(log_p0) < math.log(1e-300):
        raise FloatingPointError("probability of no event underflows; shorten the horizon")
    p0 = np.exp(log_p0)
    tau = grid.tau
    live = np.any(rates != 0, axis=0)          # (j, jp)
    pmf = {(0,) * d: p0}
    alpha = {}
    sums = CompositionSums(d)
    for n in range(1, L + 1):
        pts = level_points(d, n)
        level_alpha = {}
        for k in pts:
            a = np.zeros_like(p0)
            for j in range(d):
                if k[j] == 0:
                    continue
                below = pmf[tuple(k[i] - (i == j) for i in range(d))][j + 1]
                for jp in range(d + 1):
                    if live[j, jp]:
                        a[jp] += conv1(rates[:, j, jp], below, tau)
            level_alpha[k] = a
        sums.add_level(level_alpha)
        for k in pts:
            pmf[k] = p0 * sums.series(k, _exp_weight)
        alpha.update(level_alpha)
    points = tuple([(0,) * d] + lattice_points(d, L))
    values = np.stack([pmf[k] for k in points])
    residual = 1.0 - values.sum(axis=0)
    return LatticePmf(grid, L, points, values, residual, alpha)


def two_event_probability(model: ModelSpec, grid: Grid, quadrature: str = "grid") -> np.ndarray:
    """Probability of exactly two events for a one-component model, shape (2, M+1).

    ``p_2 = p_0 (alpha_1^2 / 2 + alpha_2)`` with

        alpha_1 = int p0[1](t - u) phi[jp](u) du,
        alpha_2 = int p1[1](t - u) phi[jp](u) du.

    ``quadrature="grid"`` uses the rectangle rule of the recursion,
    ``"gauss"`` the Gauss-Legendre cells of :func:`zero_one_probs`.
    """
    if model.d != 1:
        raise ValueError("closed form implemented for d = 1")
    drives = [model.baseline[0], model.excitation[0][0]]
    if quadrature == "grid":
        p0 = np.exp(_grid_log_p0(_driving(model, grid)[0], grid.tau))
        rates = [d.value(grid.nodes) for d in drives]
        a1 = [conv1(r, p0[1], grid.tau) for r in rates]
        p1_base = p0[1] * a1[1]
        a2 = [conv1(r, p1_base, grid.tau) for r in rates]
    elif quadrature == "gauss":
        p0 = zero_probability(model, grid)
        kern = model.excitation[0][0]
        p0_fn = lambda x: np.exp(-kern.primitive(x))
        a1 = [_gauss_conv(p0_fn, d.value, grid) for d in drives]
        # p1 of the base process is needed off-grid; interpolate its smooth
        # integral of exp(-Phi) phi on a finer grid
        fine = Grid(grid.T, grid.M * 4)
        a1_fine = _gauss_conv(p0_fn, kern.value, fine)
        p1_fine = np.exp(-kern.primitive(fine.nodes)) * a1_fine
        p1_fn = lambda x: np.interp(x, fine.nodes, p1_fine)
        a2 = [_gauss_conv(p1_fn, d.value, grid) for d in drives]
    else:
        raise ValueError(f"unknown quadrature {quadrature!r}")
    return np.stack([p0[jp] * (0.5 * a1[jp] ** 2 + a2[jp]) for jp in range(2)])

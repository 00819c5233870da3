"""Two-time covariance structure of the base processes and the full process.

For igniter ``jp`` (0 = full process) the covariance of components ``k, l``
at times ``t1 <= t2`` is

    C[jp]_kl(t1, t2) = sum_j int_0^t1 h_j(u) R[j]_kl(t1 - u, t2 - u) du,
    R[j]_kl(u, v)    = (delta_jk + M[j]_k(u)) (delta_jl + M[j]_l(v)),

with ``h = psi[:, :, jp]`` for a base process and ``h = m_full`` for the full
process.  ``R`` is a product of one-time factors, so every block is a single
matrix product of Toeplitz factors.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .convolve import (FundamentalSeries, GridMatrixFn, Separable, conv1, diag_conv_terms,
                       sample_kernels)
from .model import Grid, ModelSpec


@dataclass
class CovarianceTable:
    """Dense two-time blocks keyed by ``(jp, k, l)`` with 0-based ``k, l``
    and ``jp`` in 0..d (0 = full process, ``jp >= 1`` = base process ``jp``)."""
    grid: Grid
    d: int
    blocks: dict = field(default_factory=dict)

    def block(self, jp: int, k: int, l: int) -> np.ndarray:
        if (jp, k, l) in self.blocks:
            return self.blocks[(jp, k, l)]
        if (jp, l, k) in self.blocks:
            return self.blocks[(jp, l, k)].T
        raise KeyError(f"block ({jp}, {k}, {l}) not computed")

    def variance(self, jp: int, k: int) -> np.ndarray:
        return np.diagonal(self.block(jp, k, k)).copy()

    def merge(self, other: "CovarianceTable") -> "CovarianceTable":
        if other.grid != self.grid:
            raise ValueError("grid mismatch")
        return CovarianceTable(self.grid, self.d, {**self.blocks, **other.blocks})


def rhs_R(M_base: GridMatrixFn, j: int, k: int, l: int) -> Separable:
    """Factors of ``R[j]_kl(u, v) = (delta_jk + M[j]_k(u)) (delta_jl + M[j]_l(v))``."""
    M = M_base.values
    a = M[:, k, j] + (1.0 if j == k else 0.0)
    b = M[:, l, j] + (1.0 if j == l else 0.0)
    return Separable(((a, b),))


def _pairs(d, pairs):
    if pairs is None:
        return [(k, l) for k in range(d) for l in range(k, d)]
    return [tuple(p) for p in pairs]


def _block(weights: np.ndarray, M_base: GridMatrixFn, k: int, l: int, tau: float) -> np.ndarray:
    """``sum_j`` diagonal convolution of ``weights[:, j]`` with ``R[j]_kl``."""
    terms = []
    for j in range(weights.shape[1]):
        if not np.any(weights[:, j]):
            continue
        (a, b), = rhs_R(M_base, j, k, l).factors
        terms.append((weights[:, j], a, b))
    n = len(weights)
    if not terms:
        return np.zeros((n, n))
    return diag_conv_terms(terms, tau)


def covariance_base(model: ModelSpec, series: FundamentalSeries, M_base: GridMatrixFn,
                    igniters=None, pairs=None) -> CovarianceTable:
    """Base-process blocks for ``igniters`` (1-based, default all) and component
    ``pairs`` (0-based, default ``k <= l``; the rest follow by transposition)."""
    grid = series.grid
    d = model.d
    psi = series.psi.values
    table = CovarianceTable(grid, d)
    for jp in (igniters or range(1, d + 1)):
        if not 1 <= jp <= d:
            raise ValueError("base igniters are numbered 1..d")
        for k, l in _pairs(d, pairs):
            table.blocks[(jp, k, l)] = _block(psi[:, :, jp - 1], M_base, k, l, grid.tau)
    return table


def covariance_full(model: ModelSpec, series: FundamentalSeries, M_base: GridMatrixFn,
                    m_full: GridMatrixFn, pairs=None) -> CovarianceTable:
    """Full-process blocks (``jp = 0``)."""
    grid = series.grid
    table = CovarianceTable(grid, model.d)
    for k, l in _pairs(model.d, pairs):
        table.blocks[(0, k, l)] = _block(m_full.values, M_base, k, l, grid.tau)
    return table


def single_time_covariance(weights: np.ndarray, M_base: GridMatrixFn, k: int, l: int,
                           tau: float) -> np.ndarray:
    """``C_kl(t, t)`` from a one-dimensional grid convolution (independent of the
    two-time matrix-product path)."""
    M = M_base.values
    out = np.zeros(len(weights))
    for j in range(weights.shape[1]):
        r = (M[:, k, j] + (j == k)) * (M[:, l, j] + (j == l))
        out += conv1(weights[:, j], r, tau)
    return out


def _trap_diag(weight: np.ndarray, F: np.ndarray, m1: int, m2: int, tau: float) -> float:
    """Trapezoidal ``int_0^t1 weight(u) F(t1 - u, t2 - u) du``."""
    if m1 == 0:
        return 0.0
    r = np.arange(m1 + 1)
    vals = weight[r] * F[m1 - r, m2 - r]
    return tau * (vals.sum() - 0.5 * (vals[0] + vals[-1]))


def covariance_residual(model: ModelSpec, table: CovarianceTable, M_base: GridMatrixFn,
                        k: int, l: int, nodes) -> float:
    """Max residual of the base-process integral equation

        C[jp]_kl(t) = sum_j int_0^t1 phi[j <- jp](u) (R[j]_kl + C[j]_kl)(t1 - u, t2 - u) du

    at the node pairs ``nodes`` (``m1 <= m2``), using trapezoidal quadrature.
    """
    grid = table.grid
    phi = sample_kernels(model, grid).values
    d = model.d
    R = {j: rhs_R(M_base, j, k, l).dense() for j in range(d)}
    C = {j: table.block(j + 1, k, l) for j in range(d)}
    worst = 0.0
    for jp in range(1, d + 1):
        Cjp = C[jp - 1]
        for m1, m2 in nodes:
            rhs = sum(_trap_diag(phi[:, j, jp - 1], R[j] + C[j], m1, m2, grid.tau)
                      for j in range(d))
            worst = max(worst, abs(Cjp[m1, m2] - rhs))
    return worst


def correlation_surface(table: CovarianceTable, jp: int, k: int, l: int) -> np.ndarray:
    """``C_kl(t1, t2) / sqrt(C_kk(t1, t1) C_ll(t2, t2))``; NaN at zero variance."""
    C = table.block(jp, k, l)
    vk = table.variance(jp, k)
    vl = table.variance(jp, l)
    denom = np.sqrt(np.outer(vk, vl))
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(denom > 0, C / np.where(denom > 0, denom, 1.0), np.nan)


@dataclass(frozen=True)
class DecompositionTable:
    """Diagonal density ``singular(u)`` and off-diagonal density ``ac(u, v)`` for
    one ``(jp, k, l)``, valid for ``t1 <= t2``."""
    grid: Grid
    jp: int
    k: int
    l: int
    singular: np.ndarray
    ac: np.ndarray

    def reconstruct(self) -> np.ndarray:
        """``int_0^t1 singular + iint_{[0,t1]x[0,t2]} ac`` by trapezoidal sums."""
        tau = self.grid.tau
        s = self.singular
        S = np.concatenate(([0.0], np.cumsum(0.5 * tau * (s[1:] + s[:-1]))))
        a = self.ac
        A = np.zeros_like(a)
        cell = 0.25 * tau * tau * (a[1:, 1:] + a[:-1, 1:] + a[1:, :-1] + a[:-1, :-1])
        A[1:, 1:] = np.cumsum(np.cumsum(cell, axis=0), axis=1)
        return S[:, None] + A


def _shift(x: np.ndarray) -> np.ndarray:
    return np.append(x[1:], x[-1])


def decompose(m_base: GridMatrixFn, m_full: GridMatrixFn, jp: int, k: int, l: int
              ) -> DecompositionTable:
    """Split ``C[jp]_kl`` into its diagonal (singular) and off-diagonal parts."""
    grid = m_base.grid
    tau = grid.tau
    mb = m_base.values
    h = m_full.values if jp == 0 else mb[:, :, jp - 1]
    n = grid.M + 1
    singular = conv1(h[:, l], mb[:, k, l], tau)
    if k == l:
        singular = singular + h[:, k]
    # h_k(u) m[k]_l(v - u) on v >= u
    idx = np.arange(n)
    lag = idx[None, :] - idx[:, None]
    ac = np.where(lag >= 0, h[:, k][:, None] * mb[np.clip(lag, 0, None), l, k], 0.0)
    terms = [(h[:, j], _shift(mb[:, k, j]), _shift(mb[:, l, j]))
             for j in range(h.shape[1]) if np.any(h[:, j])]
    if terms:
        ac = ac + diag_conv_terms(terms, tau)
    return DecompositionTable(grid, jp, k, l, singular, ac)


def covariance_at(weights: np.ndarray, M_base: GridMatrixFn, k: int, l: int,
                  m1: int, m2: int, tau: float) -> float:
    """One entry ``C_kl(m1, m2)`` in O(M), without forming the two-time block."""
    if m1 > m2:
        m1, m2, k, l = m2, m1, l, k
    M = M_base.values
    r = np.arange(1, m1 + 1)
    total = 0.0
    for j in range(weights.shape[1]):
        a = M[m1 - r, k, j] + (j == k)
        b = M[m2 - r, l, j] + (j == l)
        total += float(np.sum(weights[r, j] * a * b))
    return tau * total

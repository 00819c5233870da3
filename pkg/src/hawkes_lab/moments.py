"""First moments of the base processes and of the full process.

Base process ``j'`` is the cluster ignited by a single type-``j'`` event at
time 0 (descendants only); its intensity matrix is the fundamental series
``psi`` (column ``j'``) and its cumulative mean is ``Phi + psi * Phi``.  The
full process adds the baseline: ``m_full = lam0 + psi * lam0``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .convolve import (FundamentalSeries, GridMatrixFn, SeriesDivergence, baseline_primitives,
                       conv, kernel_primitives, sample_baseline)
from .model import Grid, ModelSpec


@dataclass(frozen=True)
class MomentTable:
    grid: Grid
    m_base: GridMatrixFn     # (M+1, d, d), column = igniter
    M_base: GridMatrixFn
    m_full: GridMatrixFn     # (M+1, d)
    M_full: GridMatrixFn


def _check(series: FundamentalSeries, grid: Grid):
    if not series.converged:
        raise SeriesDivergence("fundamental series did not converge")
    if series.grid != grid:
        raise ValueError("series and grid differ")


def base_moments(model: ModelSpec, series: FundamentalSeries):
    """Return ``(m_base, M_base)``."""
    grid = series.grid
    _check(series, grid)
    Phi = kernel_primitives(model, grid)
    return series.psi, Phi + conv(series.psi, Phi, rule=series.rule)


def full_moments(model: ModelSpec, series: FundamentalSeries):
    """Return ``(m_full, M_full)``; rows are d-vectors."""
    grid = series.grid
    _check(series, grid)
    lam = sample_baseline(model, grid)
    Lam = baseline_primitives(model, grid)
    m_full = lam + conv(series.psi, lam, rule=series.rule)
    M_full = Lam + conv(series.psi, Lam, rule=series.rule)
    return m_full, M_full


def moment_table(model: ModelSpec, series: FundamentalSeries) -> MomentTable:
    m_base, M_base = base_moments(model, series)
    m_full, M_full = full_moments(model, series)
    return MomentTable(series.grid, m_base, M_base, m_full, M_full)


def intensity_ratios(m_base: GridMatrixFn) -> np.ndarray:
    """Share of each component in the intensity of each base process.

    ``out[m, j, jp] = m_base[m, j, jp] / sum_i m_base[m, i, jp]``; NaN where the
    denominator vanishes.
    """
    v = m_base.values
    total = v.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(total > 0, v / np.where(total > 0, total, 1.0), np.nan)


def mean_residual(model: ModelSpec, grid: Grid, M_base: np.ndarray) -> float:
    """Sup-norm residual of ``M = Phi + M * phi`` with an independent trapezoidal
    quadrature of the continuous convolution."""
    from .convolve import conv_arrays, sample_kernels
    phi = sample_kernels(model, grid).values
    Phi = model.kernel_primitives(grid.nodes)
    rhs = Phi + conv_arrays(M_base, phi, grid.tau, rule="trapezoid")
    return float(np.max(np.abs(M_base - rhs)))

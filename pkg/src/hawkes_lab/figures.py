"""Data tables behind the seven reference-model figures.

Each builder returns ``{filename: (header, rows)}``; the CLI writes them
as CSV and the validation suite checks their shape properties.

=====  =========================================================
fig1   baselines and kernels on the grid
fig2   fundamental series, plus last-term norms
fig3   intensity ratios and cumulative means of the base processes
fig4   intensity and mean of the full process
fig5   single-time variance / covariance of base process 1
fig6   two-time correlation surfaces of base process 1
fig7   two-time correlation surfaces of the full process
=====  =========================================================
"""
from __future__ import annotations

from functools import cached_property

import numpy as np

from .convolve import sample_baseline, sample_kernels, series_for
from .covariance import (CovarianceTable, correlation_surface, covariance_base, covariance_full,
                         single_time_covariance)
from .model import Grid, ModelSpec
from .moments import intensity_ratios, moment_table
from .presets import REFERENCE_GRID, reference_model

FIGURES = tuple(f"fig{n}" for n in range(1, 8))
MOMENT_FIGURES = FIGURES[:4]
COVARIANCE_FIGURES = FIGURES[4:]


class FigureData:
    """Lazily computed quantities shared by the figure builders."""

    def __init__(self, model: ModelSpec | None = None, grid: Grid | None = None,
                 K: int | None = None, tol: float = 1e-10):
        self.model = model or reference_model()
        self.grid = grid or REFERENCE_GRID
        self.K = K
        self.tol = tol

    @cached_property
    def series(self):
        return series_for(self.model, self.grid, K=self.K, tol=self.tol)

    @cached_property
    def moments(self):
        return moment_table(self.model, self.series)

    @cached_property
    def base_cov(self) -> CovarianceTable:
        return covariance_base(self.model, self.series, self.moments.M_base, igniters=[1])

    @cached_property
    def full_cov(self) -> CovarianceTable:
        return covariance_full(self.model, self.series, self.moments.M_base, self.moments.m_full)

    def table(self, name: str) -> dict:
        if name not in FIGURES:
            raise ValueError(f"unknown figure {name!r}")
        return getattr(self, f"_{name}")()

    # ------------------------------------------------------------ builders

    def _columns(self, prefix, values, first=None):
        t = self.grid.nodes
        v = values.reshape(len(t), -1)
        d = self.model.d
        if values.ndim == 3:
            names = [f"{prefix}_{i + 1}_{j + 1}" for i in range(d) for j in range(d)]
        else:
            names = [f"{prefix}_{i + 1}" for i in range(v.shape[1])]
        header = ["t"] + (first or []) + names
        return header, np.column_stack([t, v]).tolist()

    def _surface(self, C):
        t = self.grid.nodes
        header = ["t1"] + [format(x, ".17g") for x in t]
        return header, np.column_stack([t, C]).tolist()

    def _fig1(self):
        lam = sample_baseline(self.model, self.grid).values
        phi = sample_kernels(self.model, self.grid).values
        return {"fig1_baseline.csv": self._columns("lambda", lam),
                "fig1_kernels.csv": self._columns("phi", phi)}

    def _fig2(self):
        s = self.series
        d = self.model.d
        tail = (["receiver", "igniter", "terms", "last_term_norm"],
                [[i + 1, j + 1, s.K, float(s.tail_estimate[i, j])]
                 for i in range(d) for j in range(d)])
        return {"fig2_series.csv": self._columns("psi", s.psi.values),
                "fig2_tail.csv": tail}

    def _fig3(self):
        m = self.moments
        return {"fig3_ratios.csv": self._columns("ratio", intensity_ratios(m.m_base)),
                "fig3_means.csv": self._columns("M", m.M_base.values)}

    def _fig4(self):
        m = self.moments
        return {"fig4_intensity.csv": self._columns("m", m.m_full.values),
                "fig4_mean.csv": self._columns("M", m.M_full.values)}

    def _fig5(self):
        m = self.moments
        psi = self.series.psi.values[:, :, 0]
        tau = self.grid.tau
        var = single_time_covariance(psi, m.M_base, 0, 0, tau)
        cov = single_time_covariance(psi, m.M_base, 0, 1, tau)
        t = self.grid.nodes
        return {"fig5_variance.csv": (["t", "C1_1_1"], np.column_stack([t, var]).tolist()),
                "fig5_covariance.csv": (["t", "C1_1_2"], np.column_stack([t, cov]).tolist())}

    def _fig6(self):
        c = self.base_cov
        return {"fig6_corr_1_1.csv": self._surface(correlation_surface(c, 1, 0, 0)),
                "fig6_corr_1_2.csv": self._surface(correlation_surface(c, 1, 0, 1))}

    def _fig7(self):
        c = self.full_cov
        return {"fig7_corr_2_2.csv": self._surface(correlation_surface(c, 0, 1, 1)),
                "fig7_corr_2_1.csv": self._surface(correlation_surface(c, 0, 1, 0))}

"""Discrete convolution engine on a uniform grid.

The default quadrature is the left-shifted rectangle rule

    (f * g)[m] = tau * sum_{r=1..m} f[r] g[m+1-r],   (f * g)[0] = 0,

which is exactly commutative and associative on the grid (it is the product
of generating functions divided by ``z``).  ``rule="trapezoid"`` selects the
trapezoidal rule instead.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import toeplitz

from .model import Grid, ModelSpec

RULES = ("rectangle", "trapezoid")
DEFAULT_TOL = 1e-10
HARD_CAP = 10_000


class SeriesDivergence(RuntimeError):
    """The fundamental series hit the hard cap without meeting its tolerance."""


@dataclass(frozen=True)
class GridMatrixFn:
    """Samples of a matrix (or vector) function on the grid: ``values[m]`` at ``t = m tau``."""
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape[0] != self.grid.M + 1:
            raise ValueError(f"expected {self.grid.M + 1} samples, got {v.shape[0]}")
        object.__setattr__(self, "values", v)

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def __add__(self, other: "GridMatrixFn") -> "GridMatrixFn":
        _same_grid(self, other)
        return GridMatrixFn(self.grid, self.values + other.values)


def _same_grid(f, g):
    if f.grid != g.grid:
        raise ValueError(f"grid mismatch: {f.grid} vs {g.grid}")


def _regularize_origin(v0, v1, P1, tau):
    """Replace an infinite value at lag 0 by the value making the first
    trapezoid panel integrate exactly to the primitive at ``tau``."""
    return np.where(np.isfinite(v0), v0, np.maximum(2.0 * P1 / tau - v1, 0.0))


def sample(spec, grid: Grid) -> np.ndarray:
    """Kernel spec sampled at the grid nodes.

    Kernels that are infinite at lag 0 (Gamma with shape < 1, BetaLike with
    beta < 0) get a finite surrogate at node 0; the rectangle rule never
    reads that node.
    """
    v = np.asarray(spec.value(grid.nodes), dtype=float)
    if not np.isfinite(v[0]):
        v = v.copy()
        v[0] = _regularize_origin(v[0], v[1], spec.primitive(grid.tau), grid.tau)
    return v


def sample_kernels(model: ModelSpec, grid: Grid) -> GridMatrixFn:
    """Excitation matrix on the grid, shape ``(M+1, d, d)`` indexed [m, receiver, igniter]."""
    d = model.d
    vals = np.empty((grid.M + 1, d, d))
    for i in range(d):
        for j in range(d):
            vals[:, i, j] = sample(model.excitation[i][j], grid)
    return GridMatrixFn(grid, vals)


def sample_baseline(model: ModelSpec, grid: Grid) -> GridMatrixFn:
    return GridMatrixFn(grid, model.baseline_values(grid.nodes))


def kernel_primitives(model: ModelSpec, grid: Grid) -> GridMatrixFn:
    return GridMatrixFn(grid, model.kernel_primitives(grid.nodes))


def baseline_primitives(model: ModelSpec, grid: Grid) -> GridMatrixFn:
    return GridMatrixFn(grid, model.baseline_primitives(grid.nodes))


def conv1(f: np.ndarray, g: np.ndarray, tau: float, rule: str = "rectangle") -> np.ndarray:
    """Scalar grid convolution of two sampled functions of equal length."""
    n = len(f)
    out = np.zeros(n)
    if rule == "rectangle":
        if n > 1:
            out[1:] = tau * np.convolve(f[1:], g[1:])[: n - 1]
    elif rule == "trapezoid":
        full = np.convolve(f, g)[:n]
        out = tau * (full - 0.5 * (f[0] * g + f * g[0]))
        out[0] = 0.0
    else:
        raise ValueError(f"unknown quadrature rule {rule!r}")
    return out


def conv_arrays(f: np.ndarray, g: np.ndarray, tau: float, rule: str = "rectangle") -> np.ndarray:
    """Grid convolution with the matrix product inside the sum.

    ``f`` has shape (n,), (n, a) or (n, a, b); ``g`` has shape (n,), (n, b) or
    (n, b, c).  Vector-by-vector inputs are convolved entry-wise.
    """
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.ndim == 1 and g.ndim == 1:
        return conv1(f, g, tau, rule)
    if f.ndim == 2 and g.ndim == 2:
        return np.stack([conv1(f[:, i], g[:, i], tau, rule) for i in range(f.shape[1])], axis=1)
    vec = g.ndim == 2
    g3 = g[:, :, None] if vec else g
    a, b = f.shape[1], f.shape[2]
    if g3.shape[1] != b:
        raise ValueError("inner dimensions do not match")
    c = g3.shape[2]
    out = np.zeros((f.shape[0], a, c))
    live_f = np.any(f != 0, axis=0)
    live_g = np.any(g3 != 0, axis=0)
    for i in range(a):
        for l in range(b):
            if not live_f[i, l]:
                continue
            for j in range(c):
                if live_g[l, j]:
                    out[:, i, j] += conv1(f[:, i, l], g3[:, l, j], tau, rule)
    return out[:, :, 0] if vec else out


def conv(f: GridMatrixFn, g: GridMatrixFn, rule: str = "rectangle") -> GridMatrixFn:
    """Grid convolution ``f * g``; result at node 0 is 0."""
    _same_grid(f, g)
    return GridMatrixFn(f.grid, conv_arrays(f.values, g.values, f.grid.tau, rule))


@dataclass(frozen=True)
class FundamentalSeries:
    """Truncated sum ``psi = sum_{r=1..K} phi^{*r}`` with the sup-norm of the last term."""
    psi: GridMatrixFn
    K: int
    tail_estimate: np.ndarray
    converged: bool = True
    rule: str = "rectangle"

    @property
    def grid(self) -> Grid:
        return self.psi.grid


def fundamental_series(phi: GridMatrixFn, K: int | None = None, tol: float = DEFAULT_TOL,
                       cap: int = HARD_CAP, rule: str = "rectangle") -> FundamentalSeries:
    """Sum the convolution powers of ``phi``.

    With ``K`` given, exactly ``K`` terms are summed.  Otherwise terms are
    added until one has max-entry sup-norm below ``tol``; if ``cap`` terms
    do not get there the result is flagged as not converged.
    """
    if K is not None and K < 1:
        raise ValueError("K must be >= 1")
    if K is None and not tol > 0:
        raise ValueError("tolerance must be positive")
    term = phi.values
    psi = term.copy()
    r = 1
    converged = True
    limit = K if K is not None else cap
    while True:
        norm = np.max(np.abs(term), axis=0)
        if K is None and norm.max() < tol:
            break
        if r >= limit:
            converged = K is not None
            break
        term = conv_arrays(term, phi.values, phi.grid.tau, rule)
        psi += term
        r += 1
    if not converged:
        warnings.warn(f"fundamental series did not reach tolerance {tol} within {cap} terms",
                      RuntimeWarning, stacklevel=2)
    return FundamentalSeries(GridMatrixFn(phi.grid, psi), r, norm, converged, rule)


def series_for(model: ModelSpec, grid: Grid, K: int | None = None, tol: float = DEFAULT_TOL,
               rule: str = "rectangle") -> FundamentalSeries:
    return fundamental_series(sample_kernels(model, grid), K=K, tol=tol, rule=rule)


# ----------------------------------------------------------- two-time grids

@dataclass(frozen=True)
class Separable:
    """Two-time function ``f2(u, v) = sum_k A_k(u) B_k(v)`` stored by its factors."""
    factors: tuple

    def dense(self) -> np.ndarray:
        return sum(np.outer(a, b) for a, b in self.factors)


def _lower_toeplitz(x: np.ndarray) -> np.ndarray:
    """Matrix ``T[i, j] = x[i - j]`` for ``i >= j``, zero above the diagonal."""
    return toeplitz(x, np.zeros_like(x))


def diag_conv_terms(terms, tau: float) -> np.ndarray:
    """Sum over ``terms = [(psi, a, b), ...]`` of the diagonal convolution

        tau * sum_{r=1..min(m1, m2)} psi[r] a[m1 - r] b[m2 - r]

    evaluated on the full grid square as one matrix product.
    """
    P = np.hstack([_lower_toeplitz(a)[:, 1:] * psi[1:] for psi, a, b in terms])
    Q = np.vstack([_lower_toeplitz(b)[:, 1:].T for psi, a, b in terms])
    return tau * (P @ Q)


def diag_conv(f2, psi: np.ndarray, grid: Grid) -> np.ndarray:
    """Convolution of a two-time function against ``psi`` lifted to the diagonal.

    ``result(m1, m2) = tau * sum_{r=1..m1} psi[r] f2(m1 - r, m2 - r)`` for
    ``m1 <= m2``.  ``f2`` is either a dense ``(M+1, M+1)`` array (read on and
    above the diagonal only; the strict lower triangle of the result is NaN)
    or a :class:`Separable`, in which case the whole square is returned.
    """
    psi = np.asarray(psi, dtype=float)
    n = grid.M + 1
    if psi.shape != (n,):
        raise ValueError("psi must be a scalar grid function")
    if isinstance(f2, Separable):
        for a, b in f2.factors:
            if len(a) != n or len(b) != n:
                raise ValueError("grid mismatch")
        return diag_conv_terms([(psi, np.asarray(a, float), np.asarray(b, float))
                                for a, b in f2.factors], grid.tau)
    f2 = np.asarray(f2, dtype=float)
    if f2.shape != (n, n):
        raise ValueError("grid mismatch")
    out = np.full((n, n), np.nan)
    for off in range(n):
        g = np.diagonal(f2, off)
        res = np.zeros(len(g))
        res[1:] = grid.tau * np.convolve(psi[1:], g)[: len(g) - 1]
        idx = np.arange(len(g))
        out[idx, idx + off] = res
    return out


def grid_fn_columns(fn: GridMatrixFn, prefix: str):
    """Header names and 2-D column block (row-major entries) for CSV output."""
    v = fn.values
    if v.ndim == 2:
        names = [f"{prefix}_{i + 1}" for i in range(v.shape[1])]
        return names, v
    d1, d2 = v.shape[1], v.shape[2]
    names = [f"{prefix}_{i + 1}_{j + 1}" for i in range(d1) for j in range(d2)]
    return names, v.reshape(v.shape[0], d1 * d2)

"""Grid recursions for Laplace transforms of the counting vector.

Notation: ``L[jp](a, t) = E exp(-a . N[jp](t))`` where ``N[jp]`` is base
process ``jp`` (1..d) or the full process (``jp = 0``).  All public functions
return arrays whose first axis is the igniter ``jp`` in 0..d.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import toeplitz

from .convolve import conv1, sample_baseline, sample_kernels
from .model import Grid, ModelSpec

# sign of the transform variable inside the recursion; -1 is correct, the
# validation suite flips it as a negative control
_EXP_SIGN = -1.0
MAX_SEGMENTS = 16


def _as_vector(a, d: int, check: bool = True) -> np.ndarray:
    a = np.broadcast_to(np.asarray(a, dtype=float), (d,)).copy()
    if check and np.any(a < 0):
        raise ValueError("transform variables must be non-negative")
    if not np.all(np.isfinite(a) | (a == np.inf)):
        raise ValueError("transform variables must be numbers")
    return a


def _weights(a: np.ndarray) -> np.ndarray:
    return np.exp(_EXP_SIGN * a)


def _base_recursion(phi: np.ndarray, w: np.ndarray, tau: float) -> np.ndarray:
    """Base transforms ``L[j](m)`` (shape (d, M+1)) for weights ``w = exp(-a)``."""
    n, d, _ = phi.shape
    L = np.ones((n, d))
    X = np.zeros((n, d))            # w_j L_j(r) - 1
    X[0] = w - 1.0
    for m in range(1, n):
        # sum_{r<m} sum_j X[r, j] phi[m - r, j, jp]
        s = np.einsum("rj,rjk->k", X[:m], phi[m:0:-1])
        L[m] = np.exp(tau * s)
        X[m] = w * L[m] - 1.0
    return L.T


def _full_from_base(lam: np.ndarray, base: np.ndarray, w: np.ndarray, tau: float) -> np.ndarray:
    """Full-process transform from base transforms: baseline replaces the kernel column."""
    n = base.shape[1]
    s = np.zeros(n)
    for j in range(base.shape[0]):
        x = w[j] * base[j] - 1.0
        full = np.convolve(x, lam[:, j])[:n]
        s += full - x * lam[0, j]
    return np.exp(tau * s)


def _laplace1(model: ModelSpec, a: np.ndarray, grid: Grid) -> np.ndarray:
    phi = sample_kernels(model, grid).values
    lam = sample_baseline(model, grid).values
    w = _weights(a)
    base = _base_recursion(phi, w, grid.tau)
    return np.vstack([_full_from_base(lam, base, w, grid.tau), base])


def laplace1(model: ModelSpec, a, grid: Grid) -> np.ndarray:
    """Single-time transforms on the grid, shape ``(d+1, M+1)``; row 0 is the
    full process, row ``jp`` the base process ignited by component ``jp``."""
    return _laplace1(model, _as_vector(a, model.d), grid)


# ------------------------------------------------------------ two-time grids

@dataclass(frozen=True)
class LaplaceBands:
    """Two-time transforms along bands ``m2 - m1 = offset``.

    ``values[jp, b, r]`` is the transform at ``(m1, m2) = (r, r + offsets[b])``;
    entries with ``r + offset > M`` are NaN.
    """
    grid: Grid
    offsets: np.ndarray
    values: np.ndarray

    def at(self, m1: int, m2: int) -> np.ndarray:
        if m1 > m2:
            raise ValueError("need m1 <= m2")
        hits = np.nonzero(self.offsets == m2 - m1)[0]
        if not len(hits):
            raise KeyError(f"offset {m2 - m1} not computed")
        return self.values[:, hits[0], m1]

    def surface(self) -> np.ndarray:
        """Dense ``(d+1, M+1, M+1)`` array, NaN where not computed or below the diagonal."""
        n = self.grid.M + 1
        out = np.full((self.values.shape[0], n, n), np.nan)
        for b, off in enumerate(self.offsets):
            r = np.arange(n - off)
            out[:, r, r + off] = self.values[:, b, : n - off]
        return out


def _tail_forcing(x: np.ndarray, kern: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """``G[b, r] = sum_{q < off_b} x[q] kern[off_b + r - q]`` for ``r = 0..M - off_b``."""
    n = len(x)
    out = np.zeros((len(offsets), n))
    if len(offsets) > 32:
        first_col = np.zeros(n)
        first_col[0] = kern[0]
        Y = x[:, None] * toeplitz(first_col, kern)       # Y[q, p] = x[q] kern[p - q]
        cum = np.cumsum(Y, axis=0)
        for b, off in enumerate(offsets):
            if off:
                out[b, : n - off] = cum[off - 1, off:]
    else:
        for b, off in enumerate(offsets):
            if off:
                out[b, : n - off] = np.convolve(x[:off], kern)[off:n]
    return out


def _laplace2(model: ModelSpec, a1: np.ndarray, a2: np.ndarray, grid: Grid,
              offsets: np.ndarray) -> LaplaceBands:
    phi = sample_kernels(model, grid).values
    lam = sample_baseline(model, grid).values
    tau = grid.tau
    n, d = grid.M + 1, model.d
    w2 = _weights(a2)
    w12 = _weights(a1 + a2)
    L1 = _base_recursion(phi, w2, tau)     # (d, n)
    x2 = w2[:, None] * L1 - 1.0
    nb = len(offsets)
    # forcing from the second time interval, per (igniter, band, r)
    G = np.zeros((d, nb, n))
    G0 = np.zeros((nb, n))
    for j in range(d):
        for jp in range(d):
            if np.any(phi[:, j, jp]):
                G[jp] += _tail_forcing(x2[j], phi[:, j, jp], offsets)
        G0 += _tail_forcing(x2[j], lam[:, j], offsets)
    # diagonal recursion, vectorized across bands; E[r, j, b] = w12 D - 1
    E = np.zeros((n, d, nb))
    D = np.ones((d, nb, n))
    D[:, :, 0] = L1[:, offsets].reshape(d, nb)
    E[0] = w12[:, None] * D[:, :, 0] - 1.0
    valid = (n - offsets)               # number of valid r per band
    for r in range(1, n):
        Wr = phi[r:0:-1].reshape(r * d, d)                   # rows (r', j), cols jp
        s = Wr.T @ E[:r].reshape(r * d, nb) + G[:, :, r]
        D[:, :, r] = np.exp(tau * s)
        E[r] = w12[:, None] * D[:, :, r] - 1.0
    # full process: baseline in place of the kernel column
    s0 = G0.copy()
    if nb:
        for j in range(d):
            Tl = np.tril(toeplitz(lam[:, j], np.zeros(n)), -1)    # Tl[r, r'] = lam[r - r']
            s0 += (Tl @ E[:, j, :]).T
    D0 = np.exp(tau * s0)
    values = np.concatenate([D0[None], D], axis=0)
    r_idx = np.arange(n)[None, :]
    mask = r_idx >= valid[:, None]
    values[:, mask] = np.nan
    return LaplaceBands(grid, offsets, values)


def laplace2(model: ModelSpec, a, grid: Grid, offsets=None) -> LaplaceBands:
    """Two-time transforms ``E exp(-a[:,0].N(t1) - a[:,1].N(t2))`` for ``t1 <= t2``.

    ``a`` is a ``(d, 2)`` matrix whose columns act at ``t1`` and ``t2``.  ``offsets`` selects
    bands ``m2 - m1``; by default every band is computed.
    """
    a = np.asarray(a, dtype=float)
    if model.d == 1 and a.shape == (2,):
        a = a.reshape(1, 2)
    if a.shape != (model.d, 2):
        raise ValueError(f"a must have shape ({model.d}, 2)")
    a1 = _as_vector(a[:, 0], model.d)
    a2 = _as_vector(a[:, 1], model.d)
    return _laplace2(model, a1, a2, grid, _offsets(offsets, grid))


def _offsets(offsets, grid: Grid) -> np.ndarray:
    if offsets is None:
        return np.arange(grid.M + 1)
    off = np.unique(np.asarray(offsets, dtype=int))
    if len(off) and (off[0] < 0 or off[-1] > grid.M):
        raise ValueError("offsets must lie in 0..M")
    return off


# ---------------------------------------------------- piecewise-constant cost

@dataclass(frozen=True)
class StepCost:
    """Cost ``psi(u) = values[p]`` for ``u`` in ``(breakpoints[p], breakpoints[p+1]]``,
    zero after the last breakpoint."""
    breakpoints: tuple
    values: tuple

    def __post_init__(self):
        c = np.asarray(self.breakpoints, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if c.ndim != 1 or len(c) < 2 or c[0] != 0 or np.any(np.diff(c) <= 0):
            raise ValueError("breakpoints must start at 0 and increase strictly")
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != len(c) - 1 or np.any(v < 0):
            raise ValueError("need one non-negative value vector per interval")
        object.__setattr__(self, "breakpoints", tuple(c))
        object.__setattr__(self, "values", tuple(map(tuple, v)))

    @property
    def segments(self) -> int:
        return len(self.breakpoints) - 1

    def on_grid(self, grid: Grid, d: int) -> np.ndarray:
        """Cost at each grid node, shape ``(M+1, d)``."""
        t = grid.nodes
        c = np.asarray(self.breakpoints)
        if c[-1] > grid.T * (1 + 1e-12):
            raise ValueError("last breakpoint exceeds the horizon")
        v = np.broadcast_to(np.asarray(self.values), (self.segments, d))
        seg = np.searchsorted(c, t - 1e-9 * grid.tau, side="left") - 1
        out = np.zeros((len(t), d))
        inside = (seg >= 0) & (seg < self.segments)
        out[inside] = v[seg[inside]]
        return out


def laplace_functional(model: ModelSpec, cost: StepCost, grid: Grid,
                       max_segments: int = MAX_SEGMENTS) -> np.ndarray:
    """``E exp(-int_0^t cost(u) . dN(u))`` at every grid time ``t``, shape ``(d+1, M+1)``.

    Uses the backward recursion on ``V(t, q)``, the transform of the cluster
    of an event at ``t - q tau`` observed until ``t``, vectorized over ``t``.
    """
    if cost.segments > max_segments:
        raise ValueError(f"at most {max_segments} cost segments are supported")
    phi = sample_kernels(model, grid).values
    lam = sample_baseline(model, grid).values
    tau = grid.tau
    n, d = grid.M + 1, model.d
    wnode = np.exp(_EXP_SIGN * cost.on_grid(grid, d))   # (n, d) weight at absolute node
    m = np.arange(n)
    V = np.ones((n, d, n))         # V[q, j, m]
    E = np.zeros((n, d, n))        # E[q, j, m] = w(m - q) V - 1, for q < m
    lag = m[None, :] - m[:, None]  # m - q
    wl = np.where(lag[:, :, None] >= 0, wnode[np.clip(lag, 0, None)], 1.0)   # (q, m, d)
    wl = np.transpose(wl, (0, 2, 1))      # (q, d, m)
    E[0] = wl[0] * V[0] - 1.0
    for q in range(1, n):
        Wq = phi[q:0:-1].reshape(q * d, d)
        s = Wq.T @ E[:q].reshape(q * d, n)
        V[q] = np.exp(tau * s)
        E[q] = wl[q] * V[q] - 1.0
    valid = lag > 0                # q < m
    base = np.ones((d, n))
    base[:, :] = V[m, :, m].T
    s0 = np.zeros(n)
    for j in range(d):
        lam_lag = np.where(valid, lam[np.clip(lag, 0, None), j], 0.0)
        s0 += np.sum(E[:, j, :] * lam_lag, axis=0)
    return np.vstack([np.exp(tau * s0), base])


# ------------------------------------------------------- fixed-point refinement

@dataclass(frozen=True)
class Refinement:
    values: np.ndarray       # (d+1, M+1)
    changes: list
    converged: bool
    diverged: bool


def poisson_initial(model: ModelSpec, a, grid: Grid) -> np.ndarray:
    """``exp(sum_j Phi[j <- jp](t) (exp(-a_j) - 1))`` with the baseline primitive for row 0."""
    a = _as_vector(a, model.d, check=False)
    w = np.exp(-a) - 1.0
    Phi = model.kernel_primitives(grid.nodes)         # (n, j, jp)
    Lam = model.baseline_primitives(grid.nodes)
    base = np.exp(np.einsum("njk,j->kn", Phi, w))
    return np.vstack([np.exp(Lam @ w), base])


def _trap_map(phi, lam, base, w, tau):
    d = base.shape[0]
    new = np.zeros_like(base)
    s0 = np.zeros(base.shape[1])
    for j in range(d):
        x = w[j] * base[j] - 1.0
        for jp in range(d):
            if np.any(phi[:, j, jp]):
                new[jp] += conv1(x, phi[:, j, jp], tau, "trapezoid")
        s0 += conv1(x, lam[:, j], tau, "trapezoid")
    return np.exp(s0), np.exp(new)


def fixed_point_refine(initial: np.ndarray, model: ModelSpec, a, grid: Grid,
                       iterations: int = 200, tol: float = 1e-10) -> Refinement:
    """Iterate the single-time integral map with trapezoidal quadrature.

    ``initial`` has shape ``(d+1, M+1)`` (row 0 is recomputed from the base
    rows at every iteration).  Stops when the sup-norm change drops below
    ``tol``; flags divergence when the change grows three times in a row.
    """
    a = _as_vector(a, model.d)
    initial = np.asarray(initial, dtype=float)
    if initial.shape != (model.d + 1, grid.M + 1):
        raise ValueError("initial arrays have the wrong shape")
    if np.any(initial <= 0) or np.any(initial > 1):
        raise ValueError("initial arrays must lie in (0, 1]")
    phi = sample_kernels(model, grid).values
    lam = sample_baseline(model, grid).values
    w = _weights(a)
    cur = initial.copy()
    changes = []
    growth = 0
    converged = diverged = False
    for _ in range(iterations):
        full, base = _trap_map(phi, lam, cur[1:], w, grid.tau)
        nxt = np.vstack([full, base])
        change = float(np.max(np.abs(nxt - cur)))
        if changes and change > changes[-1]:
            growth += 1
        else:
            growth = 0
        changes.append(change)
        cur = nxt
        if change < tol:
            converged = True
            break
        if growth >= 3:
            diverged = True
            break
    return Refinement(cur, changes, converged, diverged)

"""Trajectory generators and Monte Carlo estimators.

Two independent samplers: Ogata thinning on the conditional intensity, and
the cluster (immigrant + offspring) construction.  Per-run random streams
depend only on ``(seed, run index)``, so batches can be split across
threads without changing results.
"""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _engine as eng
from .model import (BetaLike, Constant, ConstantStep, Exponential, Gamma, ModelSpec, Sinusoidal,
                    TabulatedBaseline, TabulatedKernel, ZeroKernel)

log = logging.getLogger(__name__)

DEFAULT_WINDOW = 0.05
MAX_EVENTS = 1_000_000
ENVELOPE_FLOOR = 1e-12
METHODS = ("thinning", "branching")


@dataclass(frozen=True)
class Trajectory:
    """Events on ``(0, T]``: times, 0-based component marks and generation tags
    (``-1`` for thinning runs, where generations are not observed)."""
    times: np.ndarray
    marks: np.ndarray
    generations: np.ndarray
    T: float
    seed: int
    method: str
    d: int
    stats: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    def counts_at(self, t) -> np.ndarray:
        """Right-continuous counts ``N_i(t)``, shape ``(len(t), d)``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.zeros((len(t), self.d), dtype=np.int64)
        for i in range(self.d):
            out[:, i] = np.searchsorted(self.times[self.marks == i], t, side="right")
        return out

    def intensity(self, model: ModelSpec, t) -> np.ndarray:
        """Conditional intensity ``lam0(t) + sum_{events s < t} phi(t - s)``, shape (len(t), d)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = model.baseline_values(t)
        for s, j in zip(self.times, self.marks):
            after = t > s
            if not np.any(after):
                continue
            lag = t[after] - s
            for i in range(self.d):
                out[after, i] += model.excitation[i][j].value(lag)
        return out


# ------------------------------------------------------------- encoding

def _tables(specs):
    n = max([len(s.times) for s in specs if hasattr(s, "times")] + [1])
    return n


def _kernel_cutoff(k) -> float:
    """Lag beyond which the kernel stays below the envelope floor."""
    if isinstance(k, ZeroKernel):
        return 0.0
    if isinstance(k, Exponential):
        return max(math.log(max(k.alpha, ENVELOPE_FLOOR) / ENVELOPE_FLOOR) / k.beta, 0.0)
    if isinstance(k, BetaLike):
        return k.gamma
    if isinstance(k, TabulatedKernel):
        return k.times[-1]
    if isinstance(k, Gamma):
        x = max((k.kappa - 1) * k.theta, 0.0) + k.theta
        while k.value(x) >= ENVELOPE_FLOOR:
            x *= 2.0
        return x
    return math.inf


def encode(model: ModelSpec, T: float) -> dict:
    """Flatten a model into the arrays consumed by the compiled loops."""
    d = model.d
    nk = _tables([k for row in model.excitation for k in row])
    nb = _tables(model.baseline)
    kc = np.zeros((d, d), dtype=np.int64)
    kp = np.zeros((d, d, 4))
    kx = np.zeros((d, d, nk))
    ky = np.zeros((d, d, nk))
    kn = np.ones((d, d), dtype=np.int64)
    mass = np.zeros((d, d))
    kmax_tab = np.zeros((d, d))
    cutoff = np.zeros(d)
    for i in range(d):
        for j in range(d):
            k = model.excitation[i][j]
            if isinstance(k, Exponential):
                kc[i, j] = eng.K_EXP
                kp[i, j, :2] = (k.alpha, k.beta)
            elif isinstance(k, Gamma):
                kc[i, j] = eng.K_GAMMA
                kp[i, j] = (k.w, k.kappa, k.theta,
                            -math.lgamma(k.kappa) - k.kappa * math.log(k.theta))
            elif isinstance(k, ConstantStep):
                kc[i, j] = eng.K_STEP
                kp[i, j, 0] = k.w
            elif isinstance(k, BetaLike):
                kc[i, j] = eng.K_BETA
                kp[i, j] = (k.alpha, k.beta, k.gamma, k.rho)
            elif isinstance(k, TabulatedKernel):
                kc[i, j] = eng.K_TAB
                m = len(k.times)
                kx[i, j, :m] = k.times
                ky[i, j, :m] = k.values
                kn[i, j] = m
                kmax_tab[i, j] = max(k.values)
            if isinstance(k, ZeroKernel) or k.mass() == 0:
                kc[i, j] = eng.K_ZERO
            if kc[i, j] != eng.K_ZERO and kc[i, j] != eng.K_STEP:
                mass[i, j] = k.mass()
            cutoff[j] = max(cutoff[j], _kernel_cutoff(k) if kc[i, j] else 0.0)
    bc = np.zeros(d, dtype=np.int64)
    bp = np.zeros((d, 3))
    bx = np.zeros((d, nb))
    by = np.zeros((d, nb))
    bn = np.ones(d, dtype=np.int64)
    base_mass = np.zeros(d)
    base_sup = np.zeros(d)
    for i, b in enumerate(model.baseline):
        if isinstance(b, Constant):
            bc[i] = eng.B_CONST
            bp[i, 0] = b.level
        elif isinstance(b, Sinusoidal):
            bc[i] = eng.B_SIN
            bp[i] = (b.a, b.b, b.c)
        elif isinstance(b, TabulatedBaseline):
            bc[i] = eng.B_TAB
            m = len(b.times)
            bx[i, :m] = b.times
            by[i, :m] = b.values
            bn[i] = m
        base_mass[i] = float(b.primitive(T))
        base_sup[i] = b.upper_bound(0.0, T)
    return dict(kc=kc, kp=kp, kx=kx, ky=ky, kn=kn, bc=bc, bp=bp, bx=bx, by=by, bn=bn,
                cutoff=cutoff, base_mass=base_mass, base_sup=base_sup, mass=mass,
                kmax_tab=kmax_tab)


def _check_thinning(model: ModelSpec):
    for row in model.excitation:
        for k in row:
            if isinstance(k, Gamma) and k.kappa < 1 and k.w > 0:
                raise ValueError("thinning needs bounded kernels: gamma shape < 1 is unbounded; "
                                 "use method='branching'")
            if isinstance(k, BetaLike) and (k.beta < 0 or k.rho < 0) and k.alpha > 0:
                raise ValueError("thinning needs bounded kernels: beta_like with a negative "
                                 "exponent is unbounded; use method='branching'")


def _check(model: ModelSpec, code: int):
    if code == 0:
        _check_thinning(model)


def run_seeds(seed: int, R: int, start: int = 0) -> np.ndarray:
    """Seeds of runs ``start .. start + R - 1``: a counter offset from a key
    derived from ``seed`` with the Philox counter-based generator."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    key = int(np.random.Philox(key=int(seed) % 2**64).random_raw()) & 0xFFFFFFFF
    return (key + start + np.arange(R, dtype=np.int64)) % 2**32


def _method_code(method: str) -> int:
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    return METHODS.index(method)


def simulate(model: ModelSpec, T: float, seed: int, method: str = "thinning",
             window: float = DEFAULT_WINDOW, run: int = 0) -> Trajectory:
    if not T > 0:
        raise ValueError("horizon must be positive")
    code = _method_code(method)
    _check(model, code)
    enc = encode(model, T)
    s = int(run_seeds(seed, 1, run)[0])
    if code == 0:
        times, marks, cand, acc = eng.thinning(
            s, float(T), float(window), enc["kc"], enc["kp"], enc["kx"], enc["ky"], enc["kn"],
            enc["bc"], enc["bp"], enc["bx"], enc["by"], enc["bn"], enc["cutoff"], MAX_EVENTS)
        gens = np.full(len(times), -1, dtype=np.int64)
        ratio = acc / cand if cand else float("nan")
        log.info("thinning: %d candidates, %d accepted (ratio %.3f)", cand, acc, ratio)
        stats = {"candidates": int(cand), "accepted": int(acc), "acceptance_ratio": ratio}
    else:
        times, marks, gens = eng.branching(
            s, float(T), enc["kc"], enc["kp"], enc["kx"], enc["ky"], enc["kn"],
            enc["bc"], enc["bp"], enc["bx"], enc["by"], enc["bn"], enc["base_mass"],
            enc["base_sup"], enc["mass"], enc["kmax_tab"], MAX_EVENTS)
        stats = {"generations": int(gens.max()) + 1 if len(gens) else 0}
    return Trajectory(times, marks, gens, float(T), int(seed), method, model.d, stats)


def simulate_thinning(model: ModelSpec, T: float, seed: int, **kw) -> Trajectory:
    return simulate(model, T, seed, "thinning", **kw)


def simulate_branching(model: ModelSpec, T: float, seed: int, **kw) -> Trajectory:
    return simulate(model, T, seed, "branching", **kw)


def default_threads() -> int:
    env = os.environ.get("HAWKES_LAB_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def simulate_counts(model: ModelSpec, T: float, obs, R: int, seed: int,
                    method: str = "thinning", threads: int | None = None,
                    window: float = DEFAULT_WINDOW) -> np.ndarray:
    """Counts at observation times for ``R`` independent runs, shape (R, len(obs), d)."""
    code = _method_code(method)
    _check(model, code)
    obs = np.asarray(obs, dtype=float)
    if np.any(np.diff(obs) < 0) or obs.max() > T:
        raise ValueError("observation times must be sorted and within the horizon")
    enc = encode(model, T)
    seeds = run_seeds(seed, R)
    threads = threads or default_threads()

    def work(chunk):
        return eng.batch_counts(chunk, code, float(T), float(window), obs, enc["kc"], enc["kp"],
                                enc["kx"], enc["ky"], enc["kn"], enc["bc"], enc["bp"],
                                enc["bx"], enc["by"], enc["bn"], enc["cutoff"],
                                enc["base_mass"], enc["base_sup"], enc["mass"],
                                enc["kmax_tab"], MAX_EVENTS)

    if threads <= 1 or R < 1000:
        return work(seeds)
    chunks = np.array_split(seeds, threads)
    with ThreadPoolExecutor(threads) as pool:
        return np.concatenate(list(pool.map(work, chunks)))


# --------------------------------------------------------- Monte Carlo stats

@dataclass(frozen=True)
class MeanCurve:
    times: tuple


@dataclass(frozen=True)
class CovariancePair:
    k: int
    l: int
    t1: float
    t2: float


@dataclass(frozen=True)
class CountPmf:
    t: float


@dataclass(frozen=True)
class EmpiricalLaplace:
    a: tuple
    t: float


@dataclass(frozen=True)
class McEstimate:
    statistic: str
    value: object
    se: object
    R: int
    seed: int
    labels: tuple = ()


def _obs_times(statistic) -> list:
    if isinstance(statistic, MeanCurve):
        return list(statistic.times)
    if isinstance(statistic, CovariancePair):
        return [statistic.t1, statistic.t2]
    if isinstance(statistic, (CountPmf, EmpiricalLaplace)):
        return [statistic.t]
    raise ValueError(f"unsupported statistic {statistic!r}")


def summarize(counts: np.ndarray, obs, statistic, seed: int = 0) -> McEstimate:
    """Estimate ``statistic`` from counts of shape (R, len(obs), d) observed at ``obs``."""
    R = counts.shape[0]
    if R < 2:
        raise ValueError("need at least two runs")
    obs = [float(t) for t in obs]

    def at(t):
        return counts[:, obs.index(float(t))]

    if isinstance(statistic, MeanCurve):
        c = np.stack([at(t) for t in statistic.times], axis=1).astype(float)
        return McEstimate("mean", c.mean(0), c.std(0, ddof=1) / math.sqrt(R), R, seed)
    if isinstance(statistic, CovariancePair):
        s = statistic
        x = at(s.t1)[:, s.k].astype(float)
        y = at(s.t2)[:, s.l].astype(float)
        prod = (x - x.mean()) * (y - y.mean())
        value = prod.sum() / (R - 1)
        return McEstimate("covariance", value, prod.std(ddof=1) / math.sqrt(R), R, seed)
    if isinstance(statistic, CountPmf):
        pts, freq = np.unique(at(statistic.t), axis=0, return_counts=True)
        p = freq / R
        return McEstimate("pmf", p, np.sqrt(p * (1 - p) / R), R, seed,
                          tuple(tuple(int(v) for v in row) for row in pts))
    if isinstance(statistic, EmpiricalLaplace):
        c = at(statistic.t)
        a = np.broadcast_to(np.asarray(statistic.a, dtype=float), (c.shape[1],))
        z = np.exp(-(c * a).sum(axis=1))
        return McEstimate("laplace", z.mean(), z.std(ddof=1) / math.sqrt(R), R, seed)
    raise ValueError(f"unsupported statistic {statistic!r}")


def mc_estimate(model: ModelSpec, T: float, statistic, R: int, seed: int,
                method: str = "thinning", threads: int | None = None) -> McEstimate:
    """Sample statistic with standard error ``std / sqrt(R)`` from ``R`` runs."""
    if R < 2:
        raise ValueError("need at least two runs")
    obs = sorted(set(float(t) for t in _obs_times(statistic)))
    counts = simulate_counts(model, T, obs, R, seed, method, threads)
    return summarize(counts, obs, statistic, seed)


def interaction_suite(patterns=None, T: float = 10.0, seed: int = 0, method: str = "thinning",
                      params: dict | None = None, decay: float = 1.2) -> dict:
    """One trajectory per d=4 interaction pattern, all with the same seed."""
    from .presets import (INTERACTION_PARAMS, INTERACTION_PATTERNS, interaction_matrix,
                          interaction_model, interaction_mu)
    out = {}
    for p in patterns or INTERACTION_PATTERNS:
        a, b, c, C = (params or {}).get(p, INTERACTION_PARAMS[p])
        model = interaction_model(interaction_matrix(p, a, b), interaction_mu(p, c, C), decay)
        out[p] = simulate(model, T, seed, method)
    return out

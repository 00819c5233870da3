"""Acceptance suite: nine criteria checked against independent oracles.

Each criterion returns a :class:`CriterionReport` made of :class:`Check`
rows (name, observed, expected, tolerance, verdict).  Checks flagged
``info`` are reported but do not affect the verdict.
"""
from __future__ import annotations

import contextlib
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm
from scipy.special import gammainc
from scipy.stats import chi2_contingency, poisson

from . import laplace as lap
from .convolve import sample_kernels, series_for
from .counts import count_pmf, exp_coeffs, lattice_points, log_coeffs, two_event_probability
from .covariance import (covariance_at, covariance_base, covariance_full, covariance_residual,
                         decompose, rhs_R)
from .figures import FigureData
from .model import (Constant, ConstantStep, Gamma, Grid, ModelSpec, poisson_model)
from .moments import base_moments, full_moments, mean_residual, moment_table
from .presets import REFERENCE_GRID, exponential_model, reference_model
from .simulate import (CountPmf, CovariancePair, EmpiricalLaplace, MeanCurve, simulate_counts,
                       summarize)


@dataclass
class Check:
    name: str
    observed: float
    expected: float
    tolerance: float
    passed: bool
    info: bool = False

    def as_dict(self) -> dict:
        return {"name": self.name, "observed": self.observed, "expected": self.expected,
                "tolerance": self.tolerance,
                "verdict": "info" if self.info else ("pass" if self.passed else "fail")}


@dataclass
class CriterionReport:
    number: int
    title: str
    checks: list = field(default_factory=list)
    seconds: float = 0.0
    notes: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if not c.info)

    def as_dict(self) -> dict:
        return {"criterion": self.number, "title": self.title, "seconds": round(self.seconds, 3),
                "verdict": "pass" if self.passed else "fail", "notes": self.notes,
                "checks": [c.as_dict() for c in self.checks]}

    def line(self) -> str:
        failed = [c.name for c in self.checks if not c.info and not c.passed]
        tail = "" if not failed else f"  failing: {', '.join(failed[:4])}" + \
            (" ..." if len(failed) > 4 else "")
        return (f"[{'PASS' if self.passed else 'FAIL'}] criterion {self.number}: {self.title}"
                f" ({self.seconds:.1f} s){tail}")


def at_most(name, observed, tolerance, expected=0.0, info=False) -> Check:
    observed = float(observed)
    return Check(name, observed, float(expected), float(tolerance),
                 bool(observed <= tolerance), info)


def within(name, lo, hi, observed) -> Check:
    """Pass when ``lo <= observed <= hi``; tolerance reports the interval width."""
    observed = float(observed)
    return Check(f"{name} in [{lo}, {hi}]", observed, 0.5 * (lo + hi), 0.5 * (hi - lo),
                 bool(lo <= observed <= hi))


def runtime(budget: float, seconds: float) -> Check:
    return at_most(f"runtime under {budget:g} s", seconds, budget)


SCALES = {
    # mc_runs: Monte Carlo paths per model; chi_runs: paths per simulator
    "quick": dict(mc_runs=10_000, chi_runs=10_000, fd_M=1000, decomp_M=1000, threads=None),
    "full": dict(mc_runs=100_000, chi_runs=10_000, fd_M=2000, decomp_M=2000, threads=None),
}


@contextlib.contextmanager
def mis_signed_laplace():
    """Flip the sign of the transform variable inside the Laplace recursions."""
    old = lap._EXP_SIGN
    lap._EXP_SIGN = -old
    try:
        yield
    finally:
        lap._EXP_SIGN = old


# ------------------------------------------------------------------ 1

def criterion_1(scale: dict) -> CriterionReport:
    rep = CriterionReport(1, "Poisson reduction")
    t0 = time.perf_counter()
    grid = Grid(10.0, 2000)
    t = grid.nodes
    for d in (1, 2):
        model = poisson_model(d, 1.0)
        series = series_for(model, grid)
        m_full, M_full = full_moments(model, series)
        _, M_base = base_moments(model, series)
        rep.checks.append(at_most(f"d={d} mean minus t", np.abs(M_full.values - t[:, None]).max(),
                                  5e-3))
        cov = covariance_full(model, series, M_base, m_full)
        ref = np.minimum.outer(t, t)
        err = max(np.abs(cov.block(0, k, l) - (ref if k == l else 0.0)).max()
                  for k in range(d) for l in range(k, d))
        rep.checks.append(at_most(f"d={d} covariance minus min(t1,t2) I", err, 1e-2))
        for a in ([0.5] * d, [1.0, 0.25][:d], [2.0] * d):
            a = np.asarray(a)
            L = lap.laplace1(model, a, grid)[0]
            exact = np.exp(t * np.sum(np.exp(-a) - 1.0))
            rep.checks.append(at_most(f"d={d} laplace a={a.tolist()}", np.abs(L - exact).max(),
                                      1e-3))
        pmf = count_pmf(model, grid, 5)
        err = 0.0
        for b, pt in enumerate(pmf.points):
            exact = np.prod([poisson.pmf(k, t) for k in pt], axis=0)
            err = max(err, np.abs(pmf.values[b, 0] - exact).max())
        rep.checks.append(at_most(f"d={d} pmf minus product Poisson, |l|<=5", err, 1e-4))
    rep.seconds = time.perf_counter() - t0
    rep.checks.append(runtime(30, rep.seconds))
    return rep


# ------------------------------------------------------------------ 2

STEP_MATRIX = np.array([[0.15, 0.05], [0.08, 0.12]])
GAMMA_MATRIX = 3 * STEP_MATRIX
GAMMA_THETA = 1.0


def _matrix_model(W, kernel) -> ModelSpec:
    d = len(W)
    return ModelSpec(tuple(Constant(1.0) for _ in range(d)),
                     tuple(tuple(kernel(W[i, j]) for j in range(d)) for i in range(d)))


def gamma1_intensity(W, theta, t):
    """``psi(t) = (W / theta) exp(-t / theta) exp(W t / theta)`` for unit-shape Gamma kernels."""
    return np.array([np.exp(-x / theta) / theta * W @ expm(W * x / theta) for x in t])


def gamma1_mean(W, theta, t, terms=120):
    """``sum_r W^r P(r, t / theta)`` with the regularized lower incomplete gamma ``P``."""
    out = np.zeros((len(t),) + W.shape)
    Wr = np.eye(len(W))
    for r in range(1, terms + 1):
        Wr = Wr @ W
        out += Wr[None] * gammainc(r, t / theta)[:, None, None]
    return out


def criterion_2(scale: dict) -> CriterionReport:
    rep = CriterionReport(2, "exponential and constant-kernel closed forms")
    t0 = time.perf_counter()
    T = 10.0
    rep.notes["spectral_radius_WT"] = float(np.abs(np.linalg.eigvals(STEP_MATRIX)).max() * T)
    grid = Grid(T, 2000)
    t = grid.nodes[1:]
    tau = grid.tau
    step = _matrix_model(STEP_MATRIX, ConstantStep)
    _, M_base = base_moments(step, series_for(step, grid))
    exact = np.array([expm(STEP_MATRIX * x) - np.eye(2) for x in t])
    rep.checks.append(at_most("constant kernel: mean vs expm(tW) - I, max relative",
                              np.abs(M_base.values[1:] / exact - 1).max(), 3 * tau))

    gam = _matrix_model(GAMMA_MATRIX, lambda w: Gamma(w, 1.0, GAMMA_THETA))
    errs = []
    for M in (1000, 2000):
        g = Grid(T, M)
        m_base, M_b = base_moments(gam, series_for(gam, g))
        tt = g.nodes[1:]
        e_m = np.abs(m_base.values[1:] / gamma1_intensity(GAMMA_MATRIX, GAMMA_THETA, tt) - 1).max()
        e_M = np.abs(M_b.values[1:] / gamma1_mean(GAMMA_MATRIX, GAMMA_THETA, tt) - 1).max()
        errs.append((e_m, e_M, g.tau))
    e_m, e_M, _ = errs[-1]
    rep.checks.append(at_most("gamma shape 1: mean vs incomplete-gamma series, max relative",
                              e_M, 3 * tau))
    rep.checks.append(within("gamma shape 1: intensity error ratio tau=0.01 / tau=0.005",
                             1.5, 2.5, errs[0][0] / errs[1][0]))
    rep.checks.append(at_most("gamma shape 1: intensity vs closed form, max relative", e_m,
                              3 * tau, info=True))
    rep.seconds = time.perf_counter() - t0
    rep.checks.append(runtime(60, rep.seconds))
    return rep


# ------------------------------------------------------------------ 3

def _variation_constant(phi: np.ndarray) -> float:
    """``max phi + total variation of phi`` over the grid, worst entry."""
    return float((np.abs(phi).max(axis=0) + np.abs(np.diff(phi, axis=0)).sum(axis=0)).max())


def criterion_3(scale: dict) -> CriterionReport:
    rep = CriterionReport(3, "Volterra residuals, first-order scheme")
    t0 = time.perf_counter()
    model = reference_model()
    res = {}
    for M in (1000, 2000):
        grid = Grid(10.0, M)
        tau = grid.tau
        series = series_for(model, grid)
        _, M_base = base_moments(model, series)
        phi = sample_kernels(model, grid).values
        cphi = _variation_constant(phi)
        r_mean = mean_residual(model, grid, M_base.values)
        c_mean = cphi * (1.0 + np.abs(M_base.values).max())
        table = covariance_base(model, series, M_base)
        idx = np.linspace(0, M, 6).astype(int)
        nodes = [(a, b) for a in idx for b in idx if a <= b]
        r_cov = 0.0
        size = 0.0
        for k in range(model.d):
            for l in range(k, model.d):
                r_cov = max(r_cov, covariance_residual(model, table, M_base, k, l, nodes))
                for j in range(model.d):
                    f = rhs_R(M_base, j, k, l).dense() + table.block(j + 1, k, l)
                    size = max(size, np.abs(f).max())
        c_cov = cphi * size
        rep.notes[f"tau={tau:g}"] = {"mean_constant": c_mean, "covariance_constant": c_cov}
        rep.checks.append(at_most(f"mean equation residual, tau={tau:g}", r_mean,
                                  10 * tau * c_mean))
        rep.checks.append(at_most(f"covariance equation residual, tau={tau:g}", r_cov,
                                  10 * tau * c_cov))
        res[M] = (r_mean, r_cov)
    rep.checks.append(within("mean residual ratio", 1.5, 2.5, res[1000][0] / res[2000][0]))
    rep.checks.append(within("covariance residual ratio", 1.5, 2.5, res[1000][1] / res[2000][1]))
    rep.seconds = time.perf_counter() - t0
    return rep


# ------------------------------------------------------------------ 4

FD_STEP = 1e-4


def criterion_4(scale: dict) -> CriterionReport:
    rep = CriterionReport(4, "Laplace transform vs moments (finite differences)")
    t0 = time.perf_counter()
    model = reference_model()
    d = model.d
    M = scale["fd_M"]
    grid = Grid(10.0, M)
    h = FD_STEP
    series = series_for(model, grid)
    tab = moment_table(model, series)
    means = tab.M_full.values
    mask = grid.nodes > 0
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        plus = np.log(lap._laplace1(model, e, grid)[0])
        minus = np.log(lap._laplace1(model, -e, grid)[0])
        fd = -(plus - minus) / (2 * h)
        rel = np.abs(fd[mask] / means[mask, k] - 1).max()
        rep.checks.append(at_most(f"first derivative, component {k + 1}, max relative", rel,
                                  1e-3))
    pairs = [(M // 4, M // 2), (M // 2, M // 2), (M // 2, M)]
    offsets = sorted({m2 - m1 for m1, m2 in pairs})
    for k in range(d):
        for l in range(d):
            vals = {}
            for s1 in (1, -1):
                for s2 in (1, -1):
                    a1 = np.zeros(d)
                    a2 = np.zeros(d)
                    a1[k] = s1 * h
                    a2[l] = s2 * h
                    vals[s1, s2] = lap._laplace2(model, a1, a2, grid, np.array(offsets))
            worst = 0.0
            for m1, m2 in pairs:
                v = {key: b.at(m1, m2)[0] for key, b in vals.items()}
                fd = (v[1, 1] - v[1, -1] - v[-1, 1] + v[-1, -1]) / (4 * h * h)
                second = (covariance_at(tab.m_full.values, tab.M_base, k, l, m1, m2, grid.tau)
                          + means[m1, k] * means[m2, l])
                worst = max(worst, abs(fd / second - 1))
            rep.checks.append(at_most(f"mixed derivative, components ({k + 1},{l + 1}), "
                                      "max relative", worst, 1e-2))
    rep.notes["grid"] = {"T": grid.T, "M": M, "step": h}
    rep.seconds = time.perf_counter() - t0
    return rep


# ------------------------------------------------------------------ 5

MC_LAPLACE = (0.05, 0.2, 0.5)
PMF_TIME = 2.0


def _pmf_checks(rep, name, pmf, counts, obs, t, R, seed) -> int:
    """One 3-SE check per lattice point with probability >= 0.01."""
    emp = summarize(counts, obs, CountPmf(t), seed)
    freq = dict(zip(emp.labels, emp.value))
    n = 0
    for b, pt in enumerate(pmf.points):
        p = float(pmf.values[b, 0, -1])
        if p < 0.01:
            continue
        n += 1
        rep.checks.append(at_most(f"{name}: pmf {pt} at t={t:g}", abs(p - freq.get(pt, 0.0)),
                                  3 * math.sqrt(p * (1 - p) / R), expected=p))
    return n


def _mc_model(rep, name, model, R, seed, threads, pmf_L, T=10.0, M=2000):
    d = model.d
    obs = sorted({PMF_TIME, T / 2, T})
    counts = simulate_counts(model, T, obs, R, seed, "thinning", threads)
    grid = Grid(T, M)
    tau = grid.tau
    tab = moment_table(model, series_for(model, grid))
    mid = M // 2

    def add(label, analytic, value, se):
        rep.checks.append(at_most(f"{name}: {label}", abs(analytic - value), 3 * se,
                                  expected=analytic))

    mean = summarize(counts, obs, MeanCurve((T / 2, T)), seed)
    for k in range(d):
        add(f"mean N{k + 1}(T/2)", tab.M_full.values[mid, k], mean.value[0, k], mean.se[0, k])
        add(f"mean N{k + 1}(T)", tab.M_full.values[-1, k], mean.value[1, k], mean.se[1, k])
    for k in range(d):
        for l in range(d):
            if l >= k:
                est = summarize(counts, obs, CovariancePair(k, l, T, T), seed)
                add(f"cov N{k + 1}(T),N{l + 1}(T)",
                    covariance_at(tab.m_full.values, tab.M_base, k, l, M, M, tau),
                    est.value, est.se)
            est = summarize(counts, obs, CovariancePair(k, l, T / 2, T), seed)
            add(f"cov N{k + 1}(T/2),N{l + 1}(T)",
                covariance_at(tab.m_full.values, tab.M_base, k, l, mid, M, tau),
                est.value, est.se)
    for a in MC_LAPLACE:
        est = summarize(counts, obs, EmpiricalLaplace((a,) * d, T), seed)
        add(f"laplace a={a} at T", lap.laplace1(model, a, grid)[0, -1], est.value, est.se)
    pmf = count_pmf(model, Grid(PMF_TIME, int(round(PMF_TIME / tau))), pmf_L)
    n = _pmf_checks(rep, name, pmf, counts, obs, PMF_TIME, R, seed)
    rep.notes[f"{name}_pmf_points"] = n
    rep.notes[f"{name}_pmf_residual"] = float(pmf.residual[0, -1])
    return counts, obs, tab


def criterion_5(scale: dict, seed: int = 20261014) -> CriterionReport:
    rep = CriterionReport(5, "Monte Carlo cross-validation")
    t0 = time.perf_counter()
    R = scale["mc_runs"]
    threads = scale.get("threads")
    rep.notes["runs"] = R
    exp_model = exponential_model()
    counts, obs, _ = _mc_model(rep, "exponential", exp_model, R, seed, threads, pmf_L=30)
    _mc_model(rep, "reference", reference_model(), R, seed + 1, threads, pmf_L=10)
    # the 1-D model's pmf is also checked at the horizon; the 2-D model's mass
    # at T lies beyond any enumerable lattice cutoff
    pmf = count_pmf(exp_model, REFERENCE_GRID, 70)
    rep.notes["exponential_pmf_points_at_T"] = _pmf_checks(
        rep, "exponential", pmf, counts, obs, REFERENCE_GRID.T, R, seed)
    rep.notes["exponential_pmf_residual_at_T"] = float(pmf.residual[0, -1])
    rep.seconds = time.perf_counter() - t0
    rep.checks.append(runtime(600, rep.seconds))
    return rep


# ------------------------------------------------------------------ 6

def gamma2_model() -> ModelSpec:
    """2-D Gamma(shape 2) model used for the cross-simulator test."""
    W = np.array([[0.3, 0.15], [0.1, 0.25]])
    return ModelSpec((Constant(0.8), Constant(0.6)),
                     tuple(tuple(Gamma(W[i, j], 2.0, 0.5) for j in range(2)) for i in range(2)))


def binned_table(x: np.ndarray, y: np.ndarray, min_count: int = 10) -> np.ndarray:
    """2 x B contingency table of integer samples, adjacent values merged until
    every pooled bin holds at least ``min_count`` observations."""
    hi = int(max(x.max(), y.max()))
    cx = np.bincount(x, minlength=hi + 1)
    cy = np.bincount(y, minlength=hi + 1)
    bins = []
    acc = np.zeros(2, dtype=np.int64)
    for v in range(hi + 1):
        acc += (cx[v], cy[v])
        if acc.sum() >= min_count:
            bins.append(acc.copy())
            acc[:] = 0
    if acc.sum():
        if bins:
            bins[-1] += acc
        else:
            bins.append(acc.copy())
    return np.array(bins).T


def two_sample_pvalue(x, y) -> float:
    table = binned_table(np.asarray(x), np.asarray(y))
    if table.shape[1] < 2:
        return 1.0
    return float(chi2_contingency(table, correction=False)[1])


def criterion_6(scale: dict, seed: int = 61) -> CriterionReport:
    rep = CriterionReport(6, "thinning vs branching simulators")
    t0 = time.perf_counter()
    R = scale["chi_runs"]
    T = 10.0
    models = {"exponential": exponential_model(), "reference": reference_model(),
              "gamma2": gamma2_model()}
    for n, (name, model) in enumerate(models.items()):
        a = simulate_counts(model, T, [T], R, seed + 2 * n, "thinning", scale.get("threads"))
        b = simulate_counts(model, T, [T], R, seed + 2 * n + 1, "branching",
                            scale.get("threads"))
        for k in range(model.d):
            p = two_sample_pvalue(a[:, 0, k], b[:, 0, k])
            rep.checks.append(Check(f"{name}: component {k + 1} chi-square p-value", p, 1.0,
                                    0.01, p > 0.01))
    rep.notes["runs"] = R
    rep.seconds = time.perf_counter() - t0
    return rep


# ------------------------------------------------------------------ 7

def criterion_7(scale: dict) -> CriterionReport:
    rep = CriterionReport(7, "Lebesgue decomposition reconciliation")
    t0 = time.perf_counter()
    model = reference_model()
    M = scale["decomp_M"]
    grid = Grid(10.0, M)
    tau = grid.tau
    series = series_for(model, grid)
    tab = moment_table(model, series)
    idx = np.linspace(0, M, 5).astype(int)
    pairs = [(a, b) for a in idx for b in idx if a <= b]
    for jp in (1, 0):
        w = tab.m_full.values if jp == 0 else series.psi.values[:, :, jp - 1]
        for k in range(model.d):
            for l in range(model.d):
                rec = decompose(tab.m_base, tab.m_full, jp, k, l).reconstruct()
                direct = {p: covariance_at(w, tab.M_base, k, l, *p, tau) for p in pairs}
                gap = max(abs(rec[p] - direct[p]) for p in pairs)
                const = max(1.0, max(abs(v) for v in direct.values()) / grid.T)
                rep.checks.append(at_most(f"igniter {jp}, ({k + 1},{l + 1}): max gap on 5x5 "
                                          f"subgrid (constant {const:.3g})", gap,
                                          10 * tau * const))
    rep.seconds = time.perf_counter() - t0
    return rep


# ------------------------------------------------------------------ 8

def criterion_8(scale: dict, seed: int = 8) -> CriterionReport:
    rep = CriterionReport(8, "coefficient round trip and two-event formula")
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    pts = lattice_points(2, 6)
    worst_a = worst_b = 0.0
    for _ in range(100):
        beta = {k: float(v) for k, v in zip(pts, rng.uniform(-0.5, 0.5, len(pts)))}
        back = exp_coeffs(log_coeffs(beta, 6, 2), 6, 2)
        worst_a = max(worst_a, max(abs(back[k] - beta[k]) for k in pts))
        alpha = {k: float(v) for k, v in zip(pts, rng.uniform(-0.5, 0.5, len(pts)))}
        back = log_coeffs(exp_coeffs(alpha, 6, 2), 6, 2)
        worst_b = max(worst_b, max(abs(back[k] - alpha[k]) for k in pts))
    rep.checks.append(at_most("exp(log(beta)) = beta, 100 sets, d=2, |l|<=6", worst_a, 1e-12))
    rep.checks.append(at_most("log(exp(alpha)) = alpha, 100 sets, d=2, |l|<=6", worst_b, 1e-12))
    model = exponential_model()
    grid = REFERENCE_GRID
    pmf = count_pmf(model, grid, 2)
    rec = pmf.values[pmf.points.index((2,))]
    closed = two_event_probability(model, grid, "grid")
    rep.checks.append(at_most("two-event formula vs recursion", np.abs(closed - rec).max(), 1e-6))
    gauss = two_event_probability(model, grid, "gauss")
    rep.checks.append(at_most("two-event formula, Gauss quadrature vs recursion",
                              np.abs(gauss - rec).max(), 10 * grid.tau, info=True))
    rep.seconds = time.perf_counter() - t0
    return rep


# ------------------------------------------------------------------ 9

def criterion_9(scale: dict, data: FigureData | None = None) -> CriterionReport:
    rep = CriterionReport(9, "figure data shape checks")
    t0 = time.perf_counter()
    data = data or FigureData()
    s = data.series
    rep.checks.append(at_most("fig2: terms needed (< 500)", s.K, 499))
    rep.checks.append(at_most("fig2: last-term norm", float(np.max(s.tail_estimate)), 1e-10))
    ratios = np.array(data.table("fig3")["fig3_ratios.csv"][1])[:, 1:]
    i5, i10 = data.grid.index(5.0), data.grid.index(10.0)
    rep.checks.append(at_most("fig3: max |ratio(10) - ratio(5)|",
                              np.abs(ratios[i10] - ratios[i5]).max(), 0.05))
    means = np.array(data.table("fig4")["fig4_mean.csv"][1])[:, 1:]
    rep.checks.append(at_most("fig4: largest decrease of the mean curves",
                              max(0.0, -np.diff(means, axis=0).min()), 0.0))
    for fname, (_, rows) in data.table("fig6").items():
        C = np.array(rows)[:, 1:]
        ok = np.isfinite(C)
        below = max(0.0, -C[ok].min())
        above = max(0.0, C[ok].max() - 1.0)
        rep.checks.append(at_most(f"fig6 {fname}: distance outside [0, 1]", max(below, above),
                                  1e-12))
        if fname.endswith("1_1.csv"):
            diag = np.diagonal(C)[1:]
            rep.checks.append(at_most(f"fig6 {fname}: max |diagonal - 1|",
                                      np.abs(diag - 1).max(), 1e-12))
    rep.notes["terms"] = s.K
    rep.seconds = time.perf_counter() - t0
    return rep


CRITERIA = {n: globals()[f"criterion_{n}"] for n in range(1, 10)}


def run_suite(scale: str = "quick", criteria=None, negative_control: bool = False,
              echo=None) -> list:
    """Run the selected criteria (default all) and return their reports.

    ``negative_control`` flips the Laplace sign for the duration; the
    Laplace-dependent checks are then expected to fail.
    """
    if scale not in SCALES:
        raise ValueError(f"unknown scale {scale!r} (quick or full)")
    params = SCALES[scale]
    reports = []
    ctx = mis_signed_laplace() if negative_control else contextlib.nullcontext()
    with ctx:
        for n in criteria or sorted(CRITERIA):
            rep = CRITERIA[n](params)
            reports.append(rep)
            if echo:
                echo(rep.line())
    return reports

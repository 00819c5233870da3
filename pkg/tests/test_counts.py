import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from hawkes_lab.convolve import conv1, series_for
from hawkes_lab.counts import (count_pmf, exp_coeffs, lattice_points, level_points,
                               log_coeffs, two_event_probability, zero_one_probs,
                               zero_probability)
from hawkes_lab.laplace import laplace1
from hawkes_lab.model import Constant, Grid, ModelSpec, Sinusoidal, ZeroKernel, poisson_model
from hawkes_lab.moments import moment_table
from hawkes_lab.presets import REFERENCE_BASELINE, exponential_model, reference_model
from hawkes_lab.simulate import CountPmf, mc_estimate


def test_lattice_enumeration():
    assert level_points(2, 2) == [(2, 0), (1, 1), (0, 2)]
    assert len(lattice_points(2, 5)) == sum(n + 1 for n in range(1, 6))
    assert len(lattice_points(3, 3)) == 3 + 6 + 10


def test_exp_coeffs_single_atom():
    b = exp_coeffs({(1,): 0.7}, 6)
    for k in range(1, 7):
        assert b[(k,)] == pytest.approx(0.7 ** k / math.factorial(k), rel=1e-14)


def test_zero_coefficients():
    z = {k: 0.0 for k in lattice_points(2, 4)}
    assert all(v == 0 for v in exp_coeffs(z, 4).values())
    assert all(v == 0 for v in log_coeffs(z, 4).values())


def test_log_coeffs_of_exponential_series():
    beta = {(k,): 0.4 ** k / math.factorial(k) for k in range(1, 8)}
    a = log_coeffs(beta, 7)
    assert a[(1,)] == pytest.approx(0.4, rel=1e-14)
    assert all(abs(a[(k,)]) < 1e-15 for k in range(2, 8))


def test_poisson_pmf_coefficients():
    mu = 1.3
    pmf = stats.poisson.pmf(np.arange(9), mu)
    a = log_coeffs({(k,): pmf[k] / pmf[0] for k in range(1, 9)}, 8)
    assert a[(1,)] == pytest.approx(mu, rel=1e-13)
    assert max(abs(a[(k,)]) for k in range(2, 9)) < 1e-12


def test_exp_coeffs_brute_force_d2():
    alpha = {(1, 0): 0.3, (0, 1): 0.2, (1, 1): 0.1, (2, 0): 0.05, (0, 2): 0.07}
    b = exp_coeffs(alpha, 2)
    assert b[(1, 1)] == pytest.approx(0.1 + 0.3 * 0.2, rel=1e-14)
    assert b[(2, 0)] == pytest.approx(0.05 + 0.3 ** 2 / 2, rel=1e-14)


@given(st.lists(st.floats(-0.5, 0.5), min_size=27, max_size=27))
def test_round_trip(vals):
    pts = lattice_points(2, 6)
    alpha = dict(zip(pts, vals))
    back = log_coeffs(exp_coeffs(alpha, 6), 6)
    assert max(abs(back[k] - alpha[k]) for k in pts) < 1e-12
    fwd = exp_coeffs(log_coeffs(alpha, 6), 6)
    assert max(abs(fwd[k] - alpha[k]) for k in pts) < 1e-12


def test_cutoff_rejected():
    with pytest.raises(ValueError):
        exp_coeffs({(3,): 1.0}, 2)


def test_zero_one_at_origin():
    p0, p1 = zero_one_probs(reference_model(), Grid(2.0, 100))
    assert np.all(p0[:, 0] == 1) and np.all(p1[:, :, 0] == 0)


def test_poisson_zero_probability():
    g = Grid(2.0, 100)
    p0 = zero_probability(poisson_model(1), g)
    assert p0[0, -1] == pytest.approx(math.exp(-2), rel=1e-14)
    assert math.exp(-2) == pytest.approx(0.13534, abs=1e-5)
    _, p1 = zero_one_probs(poisson_model(1), g)
    assert p1[0, 0, -1] == pytest.approx(2 * math.exp(-2), rel=1e-10)


def test_reference_zero_probability_at_one():
    g = Grid(10.0, 2000)
    p0 = zero_probability(reference_model(), g)[0, g.index(1.0)]
    lam = sum(a + (b / c) * (1 - math.cos(c)) for a, b, c in REFERENCE_BASELINE)
    assert p0 == pytest.approx(math.exp(-lam), rel=1e-13)


def test_level_one_matches_zero_one():
    m = reference_model()
    g = Grid(5.0, 1000)
    pmf = count_pmf(m, g, L_max=2)
    _, p1 = zero_one_probs(m, g)
    for i in range(2):
        e = tuple(int(i == j) for j in range(2))
        for jp in range(3):
            assert np.max(np.abs(pmf.prob(e, jp) - p1[jp, i])) <= g.tau


def test_two_event_formula_matches_recursion():
    m = exponential_model()
    g = Grid(10.0, 2000)
    pmf = count_pmf(m, g, L_max=2)
    p2 = two_event_probability(m, g, "grid")
    assert np.max(np.abs(p2 - pmf.values[2])) <= 1e-6
    gauss = two_event_probability(m, g, "gauss")
    assert np.max(np.abs(gauss - pmf.values[2])) <= g.tau


def test_two_event_rejects_d2():
    with pytest.raises(ValueError):
        two_event_probability(reference_model(), Grid(1.0, 10))


def test_rearranged_recursion_agrees():
    # alpha from the recursion equals the logarithmic series of p / p0, |l| <= 3
    m = exponential_model()
    g = Grid(4.0, 400)
    pmf = count_pmf(m, g, L_max=3)
    p0 = pmf.values[0]
    for jp in range(2):
        beta = {(k,): pmf.values[k][jp][1:] / p0[jp][1:] for k in range(1, 4)}
        a = log_coeffs(beta, 3)
        for k in range(1, 4):
            assert np.allclose(a[(k,)], pmf.alpha[(k,)][jp][1:], rtol=1e-10, atol=1e-14)


def test_poisson_product_pmf_constant_baseline():
    m = ModelSpec((Constant(0.7), Constant(1.2)),
                  ((ZeroKernel(), ZeroKernel()), (ZeroKernel(), ZeroKernel())))
    g = Grid(3.0, 600)
    pmf = count_pmf(m, g, L_max=5)
    t = g.nodes
    for pt in pmf.points:
        ref = stats.poisson.pmf(pt[0], 0.7 * t) * stats.poisson.pmf(pt[1], 1.2 * t)
        assert np.max(np.abs(pmf.prob(pt) - ref)) <= 1e-12


def test_poisson_product_pmf_sinusoidal_baseline():
    # the coefficient integral of a varying baseline carries the rectangle rule's O(tau) error
    m = ModelSpec((Constant(0.7), Sinusoidal(1.0, 0.4, 2.0)),
                  ((ZeroKernel(), ZeroKernel()), (ZeroKernel(), ZeroKernel())))
    errs = []
    for M in (600, 1200):
        g = Grid(3.0, M)
        pmf = count_pmf(m, g, L_max=5)
        Lam = m.baseline_primitives(g.nodes)
        errs.append(max(np.max(np.abs(pmf.prob(pt) - stats.poisson.pmf(pt[0], Lam[:, 0])
                                      * stats.poisson.pmf(pt[1], Lam[:, 1])))
                        for pt in pmf.points))
        assert errs[-1] <= g.tau
    assert 1.8 <= errs[0] / errs[1] <= 2.2


@pytest.fixture(scope="module")
def ref_pmf():
    return count_pmf(reference_model(), Grid(4.0, 400))


def test_pmf_invariants(ref_pmf):
    v = ref_pmf.values
    assert np.all((v >= -1e-15) & (v <= 1))
    assert np.all(v.sum(axis=0) <= 1 + 1e-9)
    assert np.all(v[0, :, 0] == 1) and np.all(v[1:, :, 0] == 0)


def test_levy_mass_bound(ref_pmf):
    total = sum(ref_pmf.alpha.values())
    assert np.all(total <= -np.log(ref_pmf.values[0]) + 1e-9)
    for a in ref_pmf.alpha.values():
        assert np.all(a >= 0)


def test_truncated_mean_brackets_moments():
    m = exponential_model()
    g = Grid(1.0, 400)
    pmf = count_pmf(m, g, L_max=12)
    M = moment_table(m, series_for(m, g)).M_full.values[:, 0]
    assert np.max(pmf.residual[0]) < 1e-4
    assert np.max(np.abs(pmf.mean(0)[:, 0] - M)) <= 1e-3
    big = count_pmf(m, Grid(4.0, 400), L_max=8)
    M4 = moment_table(m, series_for(m, Grid(4.0, 400))).M_full.values[:, 0]
    assert np.all(big.mean(0)[:, 0] <= M4 + 1e-9)


def test_residual_is_lattice_truncation():
    # no mass is lost on the grid; the residual is the probability above the cutoff
    m = exponential_model()
    g = Grid(1.0, 400)
    res = [count_pmf(m, g, L_max=L).residual for L in (2, 4, 8)]
    assert np.all(res[0] >= res[1] - 1e-15) and np.all(res[1] >= res[2] - 1e-15)
    assert np.max(np.abs(res[2][:, :4])) < 1e-15


def test_laplace_bracket():
    m = reference_model()
    g = Grid(4.0, 400)
    pmf = count_pmf(m, g)
    pts = np.array(pmf.points, dtype=float)
    for a in ([1.0, 1.0], [2.0, 1.5]):
        a = np.array(a)
        S = np.einsum("b,bm->m", np.exp(-pts @ a), pmf.values[:, 0])
        L = laplace1(m, a, g)[0]
        tail = pmf.residual[0] * math.exp(-a.min() * (pmf.L_max + 1))
        assert np.all(S <= L + g.tau)
        assert np.all(L <= S + tail + g.tau)


def test_cutoff_and_underflow_errors():
    with pytest.raises(ValueError):
        count_pmf(exponential_model(), Grid(1.0, 10), L_max=0)
    with pytest.raises(FloatingPointError):
        count_pmf(poisson_model(1, rate=100.0), Grid(10.0, 10), L_max=1)


def test_default_cutoffs():
    assert count_pmf(exponential_model(), Grid(1.0, 10)).L_max == 8
    assert count_pmf(reference_model(), Grid(1.0, 10)).L_max == 5


def test_one_and_two_event_probabilities_by_simulation():
    """The corrected closed forms agree with simulation and the printed forms
    (which ignore that the counted events have no offspring yet) do not."""
    m = exponential_model(1.0, 0.8, 1.0)
    g = Grid(2.0, 400)
    R = 20_000
    est = mc_estimate(m, 2.0, CountPmf(2.0), R, seed=5)
    freq = dict(zip(est.labels, zip(est.value, est.se)))
    p0, p1 = zero_one_probs(m, g)
    p2 = two_event_probability(m, g)[0, -1]
    Lam = g.nodes
    Phi = m.excitation[0][0].primitive(g.nodes)
    printed1 = Lam[-1] * p0[0, -1]
    printed2 = p0[0, -1] * (0.5 * Lam[-1] ** 2
                            + conv1(np.ones_like(Lam), np.exp(-Phi) * Phi, g.tau)[-1])
    for k, corrected, printed in ((1, p1[0, 0, -1], printed1), (2, p2, printed2)):
        f, se = freq[(k,)]
        assert abs(corrected - f) <= 3 * se + g.tau
        assert abs(printed - f) > 10 * se

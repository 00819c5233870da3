import math
import warnings

import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import integrate

from hawkes_lab.convolve import (GridMatrixFn, Separable, conv, conv1, conv_arrays, diag_conv,
                                 fundamental_series, kernel_primitives, sample, sample_kernels,
                                 series_for)
from hawkes_lab.model import (BetaLike, Constant, ConstantStep, Exponential, Gamma, Grid,
                              ModelSpec, ZeroKernel, poisson_model)


def scalar(grid, values):
    return GridMatrixFn(grid, np.asarray(values, float).reshape(-1, 1, 1))


def one_d(kernel):
    return ModelSpec((Constant(1.0),), ((kernel,),))


def test_sample_examples():
    g = Grid(1.0, 2)
    assert np.all(sample(ZeroKernel(), g) == 0)
    assert np.all(sample(ConstantStep(1), Grid(3, 7)) == 1)
    assert sample(Exponential(1, 1), g)[2] == pytest.approx(math.exp(-1))


def test_sample_regularizes_infinite_origin():
    g = Grid(1.0, 100)
    k = Gamma(1.0, 0.5, 1.0)
    v = sample(k, g)
    assert np.isfinite(v[0]) and v[0] >= 0
    # first trapezoid panel carries the exact mass of the first cell
    assert 0.5 * g.tau * (v[0] + v[1]) == pytest.approx(float(k.primitive(g.tau)))


def test_conv_ones():
    g = Grid(3.0, 3)
    out = conv(scalar(g, np.ones(4)), scalar(g, np.ones(4)))
    assert out.values[3, 0, 0] == pytest.approx(3.0)
    assert out.values[0, 0, 0] == 0.0


def test_conv_annihilator():
    g = Grid(1.0, 10)
    f = GridMatrixFn(g, np.random.default_rng(0).random((11, 2, 2)))
    z = GridMatrixFn(g, np.zeros((11, 2, 2)))
    assert np.all(conv(f, z).values == 0)


def test_conv_matrix_brute_force():
    rng = np.random.default_rng(1)
    g = Grid(2.0, 9)
    f, h = rng.random((10, 2, 3)), rng.random((10, 3, 2))
    out = conv_arrays(f, h, g.tau)
    ref = np.zeros((10, 2, 2))
    for m in range(10):
        for r in range(1, m + 1):
            for i in range(2):
                for j in range(2):
                    for l in range(3):
                        ref[m, i, j] += g.tau * f[r, i, l] * h[m + 1 - r, l, j]
    assert np.allclose(out, ref, rtol=1e-13, atol=1e-15)


def test_conv_rejects_grid_mismatch():
    with pytest.raises(ValueError):
        conv(scalar(Grid(1, 4), np.ones(5)), scalar(Grid(2, 4), np.ones(5)))
    with pytest.raises(ValueError):
        conv1(np.ones(3), np.ones(3), 1.0, rule="simpson")


samples = arrays(np.float64, (12, 2, 2), elements=st.floats(0, 5))


@given(samples, samples)
def test_conv_commutes_on_grid(f, h):
    # exactly commutative for the shifted rectangle rule (entry-wise, scalar pairs)
    tau = 0.1
    for i in range(2):
        for j in range(2):
            a = conv1(f[:, i, j], h[:, i, j], tau)
            b = conv1(h[:, i, j], f[:, i, j], tau)
            assert np.allclose(a, b, rtol=1e-12, atol=1e-12)


@given(samples, samples, samples)
def test_conv_associative(f, h, k):
    tau = 0.1
    left = conv_arrays(conv_arrays(f, h, tau), k, tau)
    right = conv_arrays(f, conv_arrays(h, k, tau), tau)
    assert np.allclose(left, right, rtol=1e-10, atol=1e-9)


def test_primitive_kernel_commutation(ref_model):
    from hawkes_lab.presets import REFERENCE_GRID as g
    phi = sample_kernels(ref_model, g)
    Phi = kernel_primitives(ref_model, g)
    gap = np.max(np.abs(conv(Phi, phi).values - conv(phi, Phi).values))
    bound = np.max(phi.values) * np.max(Phi.values) * g.T
    assert gap <= 2 * g.tau * bound


def test_trapezoid_rule_is_second_order():
    errs = []
    for M in (50, 100, 200):
        g = Grid(2.0, M)
        t = g.nodes
        out = conv1(np.exp(-t), np.ones_like(t), g.tau, "trapezoid")
        errs.append(abs(out[-1] - (1 - math.exp(-2))))
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.05)
    assert errs[1] / errs[2] == pytest.approx(4, rel=0.05)


def test_series_zero_kernel():
    g = Grid(1.0, 10)
    s = fundamental_series(sample_kernels(poisson_model(2), g), K=7)
    assert s.K == 7 and np.all(s.psi.values == 0)


def test_series_monotone_in_K(ref_model):
    g = Grid(5.0, 500)
    phi = sample_kernels(ref_model, g)
    prev = None
    for K in (1, 2, 3, 5, 8):
        psi = fundamental_series(phi, K=K).psi.values
        if prev is not None:
            assert np.all(psi >= prev)
        prev = psi


def test_series_tolerance_stop():
    g = Grid(2.0, 200)
    s = series_for(one_d(Exponential(0.5, 1.0)), g)
    assert s.converged and s.tail_estimate.max() < 1e-10
    s_loose = series_for(one_d(Exponential(0.5, 1.0)), g, tol=1e-3)
    assert s_loose.K < s.K


def test_series_non_convergence_flag():
    g = Grid(10.0, 50)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        s = fundamental_series(sample_kernels(one_d(ConstantStep(3.0)), g), cap=5)
    assert not s.converged and s.K == 5
    with pytest.raises(ValueError):
        fundamental_series(sample_kernels(one_d(ConstantStep(3.0)), g), K=0)


def test_constant_step_closed_form_and_order():
    exact = 0.5 * math.exp(0.5)       # psi(1) = w e^{w t}
    assert exact == pytest.approx(0.82436, abs=1e-5)
    errs = []
    for M in (100, 200, 400):
        g = Grid(2.0, M)
        psi = series_for(one_d(ConstantStep(0.5)), g).psi.values[:, 0, 0]
        err = abs(psi[g.index(1.0)] - exact)
        assert err <= g.tau
        errs.append(err)
    order = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(order >= 0.8)


def test_constant_step_matrix_series_vs_expm():
    from scipy.linalg import expm
    W = np.array([[0.2, 0.1], [0.05, 0.3]])
    m = ModelSpec((Constant(1), Constant(1)),
                  tuple(tuple(ConstantStep(W[i, j]) for j in range(2)) for i in range(2)))
    g = Grid(2.0, 400)
    psi = series_for(m, g).psi.values[-1]
    assert np.allclose(psi, W @ expm(2.0 * W), atol=2 * g.tau)


def gamma1_psi_oracle(w, theta, t):
    """Series sum_r w^r t^(r-1) e^(-t/theta) / (theta^r (r-1)!) summed symbolically."""
    r = sp.symbols("r", integer=True, positive=True)
    W, T, TH = sp.Rational(w), sp.nsimplify(t), sp.nsimplify(theta)
    term = W ** r * T ** (r - 1) * sp.exp(-T / TH) / (TH ** r * sp.factorial(r - 1))
    return float(sp.simplify(sp.summation(term, (r, 1, sp.oo))))


def test_gamma_shape_one_series():
    exact = gamma1_psi_oracle("1/2", 1, 2)
    assert exact == pytest.approx(0.5 * math.exp(-1), rel=1e-12)
    assert exact == pytest.approx(0.18394, abs=1e-5)
    g = Grid(2.0, 400)
    psi = series_for(one_d(Gamma(0.5, 1.0, 1.0)), g).psi.values[-1, 0, 0]
    assert abs(psi - exact) <= g.tau


def test_diag_conv_examples():
    g = Grid(5.0, 5)
    assert np.all(diag_conv(np.ones((6, 6)), np.zeros(6), g)[np.triu_indices(6)] == 0)
    out = diag_conv(np.ones((6, 6)), np.ones(6), g)
    assert out[2, 5] == pytest.approx(2.0)
    sep = diag_conv(Separable(((np.ones(6), np.ones(6)),)), np.ones(6), g)
    assert sep[2, 5] == pytest.approx(2.0)
    assert np.isnan(out[3, 1])


def test_diag_conv_separable_matches_dense():
    rng = np.random.default_rng(3)
    g = Grid(1.0, 30)
    a, b, psi = rng.random(31), rng.random(31), rng.random(31)
    dense = diag_conv(np.outer(a, b), psi, g)
    sep = diag_conv(Separable(((a, b),)), psi, g)
    iu = np.triu_indices(31)
    assert np.allclose(dense[iu], sep[iu], rtol=1e-12)


def test_diag_conv_product_against_quadrature():
    g = Grid(2.0, 800)
    t = g.nodes
    psi = 0.5 * np.exp(-0.5 * t)                 # exponential series intensity
    out = diag_conv(Separable(((t, t),)), psi, g)
    for t1, t2 in ((0.5, 1.5), (1.0, 2.0), (2.0, 2.0)):
        ref, _ = integrate.quad(lambda w: 0.5 * math.exp(-0.5 * w) * (t1 - w) * (t2 - w), 0, t1)
        got = out[g.index(t1), g.index(t2)]
        assert abs(got - ref) <= 4 * g.tau * t2


def test_diag_conv_errors():
    g = Grid(1.0, 4)
    with pytest.raises(ValueError):
        diag_conv(np.ones((4, 4)), np.ones(5), g)
    with pytest.raises(ValueError):
        diag_conv(np.ones((5, 5)), np.ones(4), g)


def test_beta_like_series_converges_fast(ref_model):
    from hawkes_lab.presets import REFERENCE_GRID
    s = series_for(ref_model, REFERENCE_GRID)
    assert s.converged and s.K < 500
    assert np.all(s.psi.values >= sample_kernels(ref_model, REFERENCE_GRID).values)


def test_kernel_sampling_layout():
    m = ModelSpec((Constant(1), Constant(1)),
                  ((Exponential(1, 1), ZeroKernel()), (BetaLike(1, 1, 1, 1), ZeroKernel())))
    v = sample_kernels(m, Grid(1, 4)).values
    assert v.shape == (5, 2, 2)
    assert v[0, 0, 0] == 1.0 and np.all(v[:, :, 1] == 0)
    assert v[2, 1, 0] == pytest.approx(0.25)

import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from hawkes_lab.model import (BetaLike, Constant, ConstantStep, Exponential, Gamma, Grid,
                              ModelError, ModelSpec, Sinusoidal, TabulatedBaseline,
                              TabulatedKernel, ZeroBaseline, ZeroKernel, eval_baseline,
                              eval_kernel, kernel_primitive, load_model, model_from_dict,
                              model_to_dict, poisson_model, stability_margin, uniform_model)
from hawkes_lab.presets import reference_model


def test_baseline_examples():
    assert eval_baseline(Constant(1.0), 5) == 1.0
    assert eval_baseline(Sinusoidal(1.057, 0.031, 0.845), 0) == pytest.approx(1.057, abs=1e-15)
    assert eval_baseline(ZeroBaseline(), 3) == 0.0


def test_kernel_examples():
    assert eval_kernel(ConstantStep(0.5), 7) == 0.5
    assert eval_kernel(BetaLike(0.073, 0.060, 1.576, 0.598), 2) == 0.0
    assert eval_kernel(Exponential(2, 1), math.log(2)) == pytest.approx(1.0, rel=1e-14)


def test_primitive_examples():
    assert kernel_primitive(ConstantStep(0.5), 2) == pytest.approx(1.0)
    assert kernel_primitive(Exponential(1, 1), 1e3) == pytest.approx(1.0)
    g = Gamma(1, 1, 2)
    assert kernel_primitive(g, 2) == pytest.approx(1 - math.exp(-1), abs=1e-12)
    quad, _ = integrate.quad(lambda s: float(eval_kernel(g, s)), 0, 2)
    assert quad == pytest.approx(0.63212, abs=1e-5)


def test_negative_time_rejected():
    with pytest.raises(ValueError):
        eval_kernel(Exponential(1, 1), -0.1)
    with pytest.raises(ValueError):
        eval_baseline(Constant(1), -1)
    with pytest.raises(ValueError):
        kernel_primitive(ConstantStep(1), -2)


CLOSED_FORM = [Exponential(0.7, 1.3), Gamma(0.4, 2.5, 0.6), Gamma(0.5, 1.0, 1.0),
               ConstantStep(0.3)]
NUMERIC = [BetaLike(0.046, 1.254, 1.831, 0.897), BetaLike(0.073, 0.060, 1.576, 0.598),
           BetaLike(0.5, -0.4, 1.0, -0.3), TabulatedKernel((0.0, 1.0, 2.0), (1.0, 0.5, 0.0))]


@pytest.mark.parametrize("kern", CLOSED_FORM, ids=repr)
def test_primitive_matches_trapezoid(kern):
    t = np.linspace(0, 5.0, 100_001)
    trap = integrate.cumulative_trapezoid(eval_kernel(kern, t), t, initial=0.0)
    P = kernel_primitive(kern, t)
    assert np.max(np.abs(P - trap)) <= 1e-6 * P[-1]


@pytest.mark.parametrize("kern", CLOSED_FORM + NUMERIC, ids=repr)
def test_primitive_matches_quad(kern):
    for t in (0.3, 1.0, 1.7, 2.9):
        quad, _ = integrate.quad(lambda s: float(eval_kernel(kern, s)), 0, t, limit=200)
        assert float(kernel_primitive(kern, t)) == pytest.approx(quad, rel=1e-6, abs=1e-12)


def test_beta_like_total_mass(ref_model):
    for row in ref_model.excitation:
        for k in row:
            assert float(kernel_primitive(k, k.gamma + 1)) == pytest.approx(k.mass(), rel=1e-12)


kernels = st.one_of(
    st.builds(Exponential, st.floats(0, 5), st.floats(0.05, 5)),
    st.builds(Gamma, st.floats(0, 3), st.floats(0.3, 5), st.floats(0.1, 3)),
    st.builds(ConstantStep, st.floats(0, 2)),
    st.builds(BetaLike, st.floats(0, 2), st.floats(-0.9, 3), st.floats(0.1, 3),
              st.floats(-0.9, 3)),
)


@given(kernels)
def test_kernel_nonnegative_and_primitive_monotone(kern):
    t = np.linspace(1e-9, 6.0, 2001)
    v = eval_kernel(kern, t)
    assert np.all(np.nan_to_num(v, posinf=1.0) >= 0)
    P = kernel_primitive(kern, np.concatenate(([0.0], t)))
    assert P[0] == pytest.approx(0.0, abs=1e-15)
    assert np.all(np.diff(P) >= -1e-12 * max(1.0, abs(P[-1])))


@given(st.floats(0.01, 10), st.floats(0, 1), st.floats(-5, 5))
def test_sinusoidal_positive(a, frac, c):
    b = a * frac * 0.999
    lam = eval_baseline(Sinusoidal(a, b, c), np.linspace(0, 50, 5001))
    assert np.all(lam > 0)


@pytest.mark.parametrize("bad", [
    lambda: Constant(-1), lambda: Sinusoidal(1, 1, 1), lambda: Sinusoidal(0, 0, 1),
    lambda: Exponential(1, 0), lambda: Exponential(-1, 1), lambda: Gamma(1, 0, 1),
    lambda: Gamma(1, 1, -1), lambda: ConstantStep(-0.1), lambda: BetaLike(1, 1, 0, 1),
    lambda: BetaLike(1, 1, 1, -1), lambda: BetaLike(1, -1, 1, 1),
    lambda: TabulatedKernel((0, 1), (1, -1)), lambda: TabulatedBaseline((1, 0), (1, 1)),
])
def test_invalid_parameters(bad):
    with pytest.raises(ModelError):
        bad()


def test_tabulated_extrapolates_as_zero():
    k = TabulatedKernel((0.0, 1.0), (2.0, 1.0))
    assert eval_kernel(k, 0.5) == pytest.approx(1.5)
    assert eval_kernel(k, 1.5) == 0.0
    assert kernel_primitive(k, 5.0) == pytest.approx(1.5)
    b = TabulatedBaseline((0.5, 1.0), (1.0, 3.0))
    assert b.primitive(np.array([0.5, 1.0, 2.0])) == pytest.approx([0.5, 1.5, 1.5])


def test_stability_examples():
    s = stability_margin(poisson_model(2))
    assert (s.alpha_max, s.d_alpha, s.stable) == (0.0, 0.0, True)
    s = stability_margin(ModelSpec((Constant(1),), ((Exponential(0.5, 1),),)))
    assert (s.alpha_max, s.d_alpha, s.stable) == (0.5, 0.5, True)
    assert s.spectral_radius == pytest.approx(0.5)
    s = stability_margin(uniform_model([Constant(1), Constant(1)], ConstantStep(0.1)))
    assert math.isinf(s.alpha_max) and math.isinf(s.d_alpha) and not s.stable


def test_spectral_radius_is_sharper():
    W = np.array([[0.1, 0.6], [0.0, 0.1]])
    m = ModelSpec((Constant(1), Constant(1)),
                  tuple(tuple(Exponential(W[i, j], 1.0) for j in range(2)) for i in range(2)))
    s = stability_margin(m)
    assert not s.stable
    assert s.spectral_radius == pytest.approx(0.1)


def test_json_round_trip(tmp_path):
    m = ModelSpec((Sinusoidal(1, 0.2, 3), TabulatedBaseline((0, 1), (1, 2))),
                  ((Gamma(0.2, 2, 1), BetaLike(0.1, 1, 2, 0.5)),
                   (TabulatedKernel((0, 1), (1, 0)), ZeroKernel())))
    path = tmp_path / "m.json"
    path.write_text(json.dumps(model_to_dict(m)))
    back = load_model(path)
    assert back == m
    assert model_to_dict(reference_model())["excitation"][0][0] == {
        "type": "beta_like", "alpha": 0.073, "beta": 0.060, "gamma": 1.576, "rho": 0.598}


def test_json_syntax_error_has_position(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "d": 1,\n  "baseline": [\n}')
    with pytest.raises(ModelError, match=r"line 4, column 1"):
        load_model(path)


@pytest.mark.parametrize("data, msg", [
    ({"d": 1, "baseline": [{"type": "constant", "level": 1}]}, "excitation"),
    ({"d": 1, "baseline": [{"type": "cst", "level": 1}],
      "excitation": [[{"type": "zero"}]]}, "unknown type"),
    ({"d": 1, "baseline": [{"type": "constant"}], "excitation": [[{"type": "zero"}]]},
     "missing"),
    ({"d": 2, "baseline": [{"type": "zero"}], "excitation": [[{"type": "zero"}]]}, "2 entries"),
    ({"d": 1, "baseline": [{"type": "zero"}],
      "excitation": [[{"type": "beta_like", "alpha": 1, "beta": 1, "gamma": 1, "rho": -1}]]},
     r"excitation\[0\]\[0\]"),
])
def test_model_dict_errors(data, msg):
    with pytest.raises(ModelError, match=msg):
        model_from_dict(data)


def test_grid():
    g = Grid(10, 2000)
    assert g.tau == 0.005
    assert g.nodes[-1] == 10.0 and len(g.nodes) == 2001
    assert g.index(5.0) == 1000
    with pytest.raises(ValueError):
        g.index(5.0025)
    for bad in ((0, 10), (1, 0), (1, 1.5), (math.inf, 10)):
        with pytest.raises(ValueError):
            Grid(*bad)


def test_model_shape_errors():
    with pytest.raises(ModelError):
        ModelSpec((Constant(1),), ((ZeroKernel(), ZeroKernel()),))
    with pytest.raises(ModelError):
        ModelSpec((Constant(1),), ((Constant(1),),))

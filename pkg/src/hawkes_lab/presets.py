"""Built-in models: the 2-D sinusoidal/beta-like reference model, the four
simulation scenarios and the four d=4 interaction patterns."""
from __future__ import annotations

import numpy as np

from .model import (BetaLike, Constant, ConstantStep, Exponential, Gamma, Grid, ModelSpec,
                    Sinusoidal, ZeroKernel)

# (alpha, beta, gamma, rho) indexed [receiver][igniter]
REFERENCE_KERNELS = (
    ((0.073, 0.060, 1.576, 0.598), (0.046, 1.254, 1.831, 0.897)),
    ((0.050, 1.897, 0.369, 0.789), (0.096, 1.923, 0.182, 0.713)),
)
REFERENCE_BASELINE = ((1.057, 0.031, 0.845), (1.061, 0.093, 0.817))
REFERENCE_GRID = Grid(10.0, 2000)


def reference_model() -> ModelSpec:
    """2-D model with sinusoidal baselines and beta-like kernels on compact support."""
    baseline = tuple(Sinusoidal(*p) for p in REFERENCE_BASELINE)
    excitation = tuple(tuple(BetaLike(*p) for p in row) for row in REFERENCE_KERNELS)
    return ModelSpec(baseline, excitation)


def exponential_model(mu: float = 1.0, alpha: float = 0.5, beta: float = 1.0) -> ModelSpec:
    """1-D model with constant baseline and exponential kernel."""
    return ModelSpec((Constant(mu),), ((Exponential(alpha, beta),),))


_CASE_MATRIX = np.array([[0.6, 0.2, 0.1],
                         [0.1, 0.6, 0.2],
                         [0.2, 0.1, 0.6]])


def case_model(n: int) -> ModelSpec:
    """Scenario ``n`` in 1..4: exponential, gamma, constant-step and beta-like excitation
    of a 3-component process with constant baseline."""
    mu = tuple(Constant(0.5) for _ in range(3))
    if n == 1:
        make = lambda m: Exponential(1.5 * m, 1.5)          # mass m
    elif n == 2:
        make = lambda m: Gamma(m, 2.0, 0.5)
    elif n == 3:
        make = lambda m: ConstantStep(0.05 * m)
    elif n == 4:
        # alpha chosen so that the mass over [0, 2] equals m
        make = lambda m: BetaLike(0.75 * m, 1.0, 2.0, 2.0)
    else:
        raise ValueError("scenario number must be 1..4")
    return ModelSpec(mu, tuple(tuple(make(m) for m in row) for row in _CASE_MATRIX))


INTERACTION_PATTERNS = ("block_diagonal", "broadcast", "broadcast_chain", "overlapping_blocks")

# default (a, b, c, C) per pattern, chosen so every preset is subcritical
INTERACTION_PARAMS = {
    "block_diagonal": (0.4, 0.2, 0.5, 1.0),
    "broadcast": (0.1, 0.05, 0.2, 1.0),
    "broadcast_chain": (0.3, 0.15, 0.5, 1.0),
    "overlapping_blocks": (0.3, 0.1, 0.5, 1.0),
}


def interaction_matrix(pattern: str, a: float, b: float) -> np.ndarray:
    if pattern == "block_diagonal":
        W = [[a, a, 0, 0], [a, a, 0, 0], [0, 0, a, a], [0, 0, a, a]]
    elif pattern == "broadcast":
        W = [[a, a, a, a], [0, b, 0, 0], [0, 0, b, 0], [0, 0, 0, b]]
    elif pattern == "broadcast_chain":
        W = [[a, a, a, a], [0, b, b, 0], [0, 0, b, b], [0, 0, 0, b]]
    elif pattern == "overlapping_blocks":
        W = [[a, a, 0, 0], [a, a, b, 0], [0, b, a, a], [0, 0, a, a]]
    else:
        raise ValueError(f"unknown interaction pattern {pattern!r}")
    return np.array(W, dtype=float)


def interaction_mu(pattern: str, c: float, C: float) -> np.ndarray:
    if pattern in ("broadcast", "broadcast_chain"):
        return np.array([c, C, C, C])
    return np.full(4, c)


def interaction_model(W, mu, decay: float = 1.2) -> ModelSpec:
    """``lambda_i(t) = mu_i + sum_j W_ij sum_{events of j} exp(-decay (t - s))``."""
    W = np.asarray(W, dtype=float)
    d = len(mu)
    exc = tuple(tuple(Exponential(W[i, j], decay) if W[i, j] > 0 else ZeroKernel()
                      for j in range(d)) for i in range(d))
    return ModelSpec(tuple(Constant(float(m)) for m in mu), exc)


def interaction_preset(pattern: str) -> ModelSpec:
    a, b, c, C = INTERACTION_PARAMS[pattern]
    return interaction_model(interaction_matrix(pattern, a, b), interaction_mu(pattern, c, C))


PRESETS = {
    "reference": reference_model,
    "exponential": exponential_model,
    **{f"case{n}": (lambda n=n: case_model(n)) for n in range(1, 5)},
    **{f"interaction{i + 1}": (lambda p=p: interaction_preset(p))
       for i, p in enumerate(INTERACTION_PATTERNS)},
}


def get_preset(name: str) -> ModelSpec:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r} (available: {', '.join(PRESETS)})")
    return PRESETS[name]()

"""Functional parameters of a multivariate Hawkes process.

A model is the pair (baseline, excitation): a baseline intensity per component
and a d x d matrix of excitation kernels.  Entry ``excitation[i][j]`` is the
intensity added to component ``i`` at lag ``s`` after an event of component
``j`` (row = receiver, column = igniter).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from scipy import special


class ModelError(ValueError):
    """Raised for invalid model specifications."""


def _check_time(t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("time must be non-negative")
    return t


def _interp(times: np.ndarray, values: np.ndarray, t: np.ndarray) -> np.ndarray:
    # linear interpolation, zero past the last node
    out = np.interp(t, times, values, right=0.0)
    return np.where(t > times[-1], 0.0, out)


def _trapz_primitive(times: np.ndarray, values: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Exact integral of the piecewise-linear interpolant from 0 to t."""
    x = np.concatenate(([0.0], times)) if times[0] > 0 else times
    y = np.concatenate(([values[0]], values)) if times[0] > 0 else values
    cum = np.concatenate(([0.0], np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(x))))
    tc = np.minimum(t, x[-1])
    k = np.clip(np.searchsorted(x, tc, side="right") - 1, 0, len(x) - 2)
    dx = tc - x[k]
    slope = (y[k + 1] - y[k]) / np.where(x[k + 1] > x[k], x[k + 1] - x[k], 1.0)
    return cum[k] + y[k] * dx + 0.5 * slope * dx * dx


def _validate_table(times, values, what):
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.ndim != 1 or times.shape != values.shape or len(times) < 2:
        raise ModelError(f"{what}: times and values must be equal-length 1-D arrays (>= 2 nodes)")
    if times[0] < 0 or np.any(np.diff(times) <= 0):
        raise ModelError(f"{what}: times must be non-negative and strictly increasing")
    if np.any(values < 0) or not np.all(np.isfinite(values)):
        raise ModelError(f"{what}: values must be finite and non-negative")
    return times, values


# ---------------------------------------------------------------- baselines

@dataclass(frozen=True)
class Constant:
    level: float

    def __post_init__(self):
        if not self.level >= 0:
            raise ModelError("constant baseline: level must be >= 0")

    def value(self, t):
        t = np.asarray(t, dtype=float)
        return np.full_like(t, self.level)

    def primitive(self, t):
        return self.level * np.asarray(t, dtype=float)

    def upper_bound(self, t0, t1):
        return self.level


@dataclass(frozen=True)
class Sinusoidal:
    """``a + b sin(c t)`` with ``a > |b|``."""
    a: float
    b: float
    c: float

    def __post_init__(self):
        if not (self.a > 0 and self.a > abs(self.b)):
            raise ModelError("sinusoidal baseline: need a > 0 and a > |b|")

    def value(self, t):
        return self.a + self.b * np.sin(self.c * np.asarray(t, dtype=float))

    def primitive(self, t):
        t = np.asarray(t, dtype=float)
        if self.c == 0:
            return self.a * t
        return self.a * t + (self.b / self.c) * (1.0 - np.cos(self.c * t))

    def upper_bound(self, t0, t1):
        return self.a + abs(self.b)


@dataclass(frozen=True)
class TabulatedBaseline:
    times: tuple
    values: tuple

    def __post_init__(self):
        _validate_table(self.times, self.values, "tabulated baseline")

    def value(self, t):
        return _interp(np.asarray(self.times), np.asarray(self.values), np.asarray(t, dtype=float))

    def primitive(self, t):
        return _trapz_primitive(np.asarray(self.times), np.asarray(self.values),
                                np.asarray(t, dtype=float))

    def upper_bound(self, t0, t1):
        return float(max(self.values))


@dataclass(frozen=True)
class ZeroBaseline:
    def value(self, t):
        return np.zeros_like(np.asarray(t, dtype=float))

    def primitive(self, t):
        return np.zeros_like(np.asarray(t, dtype=float))

    def upper_bound(self, t0, t1):
        return 0.0


# ------------------------------------------------------------------ kernels

@dataclass(frozen=True)
class Exponential:
    """``alpha * exp(-beta t)``."""
    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha >= 0 and self.beta > 0):
            raise ModelError("exponential kernel: need alpha >= 0 and beta > 0")

    def value(self, t):
        return self.alpha * np.exp(-self.beta * np.asarray(t, dtype=float))

    def primitive(self, t):
        return self.alpha * -np.expm1(-self.beta * np.asarray(t, dtype=float)) / self.beta

    def mass(self):
        return self.alpha / self.beta


@dataclass(frozen=True)
class Gamma:
    """``w`` times the Gamma(kappa, theta) density."""
    w: float
    kappa: float
    theta: float

    def __post_init__(self):
        if not (self.w >= 0 and self.kappa > 0 and self.theta > 0):
            raise ModelError("gamma kernel: need w >= 0, kappa > 0, theta > 0")

    def value(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            logv = ((self.kappa - 1) * np.log(t) - t / self.theta
                    - special.gammaln(self.kappa) - self.kappa * math.log(self.theta))
            out = self.w * np.exp(logv)
        if self.kappa == 1:
            out = np.where(t == 0, self.w / self.theta, out)
        elif self.kappa > 1:
            out = np.where(t == 0, 0.0, out)
        return out

    def primitive(self, t):
        return self.w * special.gammainc(self.kappa, np.asarray(t, dtype=float) / self.theta)

    def mass(self):
        return self.w


@dataclass(frozen=True)
class ConstantStep:
    w: float

    def __post_init__(self):
        if not self.w >= 0:
            raise ModelError("constant_step kernel: need w >= 0")

    def value(self, t):
        return np.full_like(np.asarray(t, dtype=float), self.w)

    def primitive(self, t):
        return self.w * np.asarray(t, dtype=float)

    def mass(self):
        return math.inf if self.w > 0 else 0.0


@dataclass(frozen=True)
class BetaLike:
    """``alpha t^beta (gamma - t)^rho`` on ``[0, gamma]``, zero afterwards."""
    alpha: float
    beta: float
    gamma: float
    rho: float

    def __post_init__(self):
        if not (self.alpha >= 0 and self.gamma > 0 and self.beta > -1 and self.rho > -1):
            raise ModelError("beta_like kernel: need alpha >= 0, gamma > 0, beta > -1, rho > -1")

    def value(self, t):
        t = np.asarray(t, dtype=float)
        inside = t <= self.gamma
        tc = np.where(inside, t, 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            v = self.alpha * np.power(tc, self.beta) * np.power(self.gamma - tc, self.rho)
        return np.where(inside, v, 0.0)

    def mass(self):
        return (self.alpha * self.gamma ** (self.beta + self.rho + 1)
                * special.beta(self.beta + 1, self.rho + 1))

    def primitive(self, t):
        x = np.clip(np.asarray(t, dtype=float) / self.gamma, 0.0, 1.0)
        return self.mass() * special.betainc(self.beta + 1, self.rho + 1, x)

    def mode(self):
        if self.beta + self.rho == 0:
            return 0.0
        return self.beta * self.gamma / (self.beta + self.rho)


@dataclass(frozen=True)
class TabulatedKernel:
    times: tuple
    values: tuple

    def __post_init__(self):
        _validate_table(self.times, self.values, "tabulated kernel")

    def value(self, t):
        return _interp(np.asarray(self.times), np.asarray(self.values), np.asarray(t, dtype=float))

    def primitive(self, t):
        return _trapz_primitive(np.asarray(self.times), np.asarray(self.values),
                                np.asarray(t, dtype=float))

    def mass(self):
        return float(self.primitive(self.times[-1]))


@dataclass(frozen=True)
class ZeroKernel:
    def value(self, t):
        return np.zeros_like(np.asarray(t, dtype=float))

    def primitive(self, t):
        return np.zeros_like(np.asarray(t, dtype=float))

    def mass(self):
        return 0.0


BASELINE_TYPES = (Constant, Sinusoidal, TabulatedBaseline, ZeroBaseline)
KERNEL_TYPES = (Exponential, Gamma, ConstantStep, BetaLike, TabulatedKernel, ZeroKernel)


def eval_baseline(spec, t):
    """Baseline rate at time(s) ``t >= 0``."""
    return spec.value(_check_time(t))


def eval_kernel(spec, t):
    """Kernel value at lag(s) ``t >= 0``; BetaLike is exactly 0 past its support."""
    return spec.value(_check_time(t))


def kernel_primitive(spec, t):
    """Integral of the kernel over ``[0, t]``."""
    return spec.primitive(_check_time(t))


def baseline_primitive(spec, t):
    return spec.primitive(_check_time(t))


# -------------------------------------------------------------------- model

@dataclass(frozen=True)
class Grid:
    """Uniform mesh of ``[0, T]`` with ``M`` intervals."""
    T: float
    M: int

    def __post_init__(self):
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ValueError("grid horizon T must be positive and finite")
        if int(self.M) != self.M or self.M < 1:
            raise ValueError("grid interval count M must be an integer >= 1")
        object.__setattr__(self, "M", int(self.M))

    @property
    def tau(self) -> float:
        return self.T / self.M

    @property
    def nodes(self) -> np.ndarray:
        return self.T * np.arange(self.M + 1) / self.M

    def index(self, t: float) -> int:
        """Nearest node index of time ``t`` (must lie on the grid up to rounding)."""
        m = int(round(t / self.tau))
        if not 0 <= m <= self.M or abs(m * self.tau - t) > 1e-9 * max(1.0, self.T):
            raise ValueError(f"time {t} is not a grid node")
        return m


@dataclass(frozen=True)
class ModelSpec:
    baseline: tuple
    excitation: tuple
    d: int = field(init=False)

    def __post_init__(self):
        baseline = tuple(self.baseline)
        excitation = tuple(tuple(row) for row in self.excitation)
        d = len(baseline)
        if d < 1:
            raise ModelError("model needs at least one component")
        if len(excitation) != d or any(len(row) != d for row in excitation):
            raise ModelError(f"excitation must be a {d}x{d} matrix")
        for b in baseline:
            if not isinstance(b, BASELINE_TYPES):
                raise ModelError(f"invalid baseline entry {b!r}")
        for row in excitation:
            for k in row:
                if not isinstance(k, KERNEL_TYPES):
                    raise ModelError(f"invalid kernel entry {k!r}")
        object.__setattr__(self, "baseline", baseline)
        object.__setattr__(self, "excitation", excitation)
        object.__setattr__(self, "d", d)

    def baseline_values(self, t) -> np.ndarray:
        """Array of shape ``t.shape + (d,)``."""
        t = _check_time(t)
        return np.stack([b.value(t) for b in self.baseline], axis=-1)

    def baseline_primitives(self, t) -> np.ndarray:
        t = _check_time(t)
        return np.stack([b.primitive(t) for b in self.baseline], axis=-1)

    def kernel_values(self, t) -> np.ndarray:
        """Array of shape ``t.shape + (d, d)`` indexed [..., receiver, igniter]."""
        t = _check_time(t)
        return np.stack([np.stack([k.value(t) for k in row], axis=-1)
                         for row in self.excitation], axis=-2)

    def kernel_primitives(self, t) -> np.ndarray:
        t = _check_time(t)
        return np.stack([np.stack([k.primitive(t) for k in row], axis=-1)
                         for row in self.excitation], axis=-2)

    def mass_matrix(self) -> np.ndarray:
        return np.array([[k.mass() for k in row] for row in self.excitation], dtype=float)

    def has_excitation(self) -> bool:
        return not all(isinstance(k, ZeroKernel) for row in self.excitation for k in row)


@dataclass(frozen=True)
class Stability:
    alpha_max: float
    d_alpha: float
    stable: bool
    spectral_radius: float


def stability_margin(model: ModelSpec) -> Stability:
    """Sufficient condition ``d * max mass < 1`` plus the spectral radius of the mass matrix."""
    masses = model.mass_matrix()
    alpha_max = float(masses.max())
    d_alpha = model.d * alpha_max
    if np.all(np.isfinite(masses)):
        radius = float(np.max(np.abs(np.linalg.eigvals(masses))))
    else:
        radius = math.inf
    return Stability(alpha_max, d_alpha, bool(d_alpha < 1), radius)


# ---------------------------------------------------------------- JSON I/O

_BASELINE_TAGS = {
    "constant": (Constant, ("level",)),
    "sinusoidal": (Sinusoidal, ("a", "b", "c")),
    "tabulated": (TabulatedBaseline, ("times", "values")),
    "zero": (ZeroBaseline, ()),
}
_KERNEL_TAGS = {
    "exponential": (Exponential, ("alpha", "beta")),
    "gamma": (Gamma, ("w", "kappa", "theta")),
    "constant_step": (ConstantStep, ("w",)),
    "beta_like": (BetaLike, ("alpha", "beta", "gamma", "rho")),
    "tabulated": (TabulatedKernel, ("times", "values")),
    "zero": (ZeroKernel, ()),
}


def _build(obj: Any, tags: dict, where: str):
    if not isinstance(obj, dict) or "type" not in obj:
        raise ModelError(f"{where}: expected an object with a 'type' tag")
    tag = obj["type"]
    if tag not in tags:
        raise ModelError(f"{where}: unknown type {tag!r} (expected one of {sorted(tags)})")
    cls, names = tags[tag]
    extra = set(obj) - set(names) - {"type"}
    missing = [n for n in names if n not in obj]
    if extra or missing:
        raise ModelError(f"{where}: type {tag!r} takes fields {list(names)}"
                         + (f", missing {missing}" if missing else "")
                         + (f", unexpected {sorted(extra)}" if extra else ""))
    kwargs = {}
    for n in names:
        v = obj[n]
        kwargs[n] = tuple(float(x) for x in v) if n in ("times", "values") else float(v)
    try:
        return cls(**kwargs)
    except ModelError as exc:
        raise ModelError(f"{where}: {exc}") from None


def model_from_dict(data: dict) -> ModelSpec:
    if not isinstance(data, dict):
        raise ModelError("model file must contain a JSON object")
    for key in ("d", "baseline", "excitation"):
        if key not in data:
            raise ModelError(f"missing top-level key {key!r}")
    d = data["d"]
    if not isinstance(d, int) or d < 1:
        raise ModelError("'d' must be a positive integer")
    base, exc = data["baseline"], data["excitation"]
    if not isinstance(base, list) or len(base) != d:
        raise ModelError(f"'baseline' must be an array of {d} entries")
    if not isinstance(exc, list) or len(exc) != d or any(
            not isinstance(r, list) or len(r) != d for r in exc):
        raise ModelError(f"'excitation' must be a {d}x{d} array")
    baseline = [_build(b, _BASELINE_TAGS, f"baseline[{i}]") for i, b in enumerate(base)]
    excitation = [[_build(k, _KERNEL_TAGS, f"excitation[{i}][{j}]") for j, k in enumerate(row)]
                  for i, row in enumerate(exc)]
    return ModelSpec(tuple(baseline), tuple(tuple(r) for r in excitation))


def _to_obj(spec, tags) -> dict:
    for tag, (cls, names) in tags.items():
        if type(spec) is cls:
            out = {"type": tag}
            for n in names:
                v = getattr(spec, n)
                out[n] = list(v) if isinstance(v, tuple) else v
            return out
    raise ModelError(f"cannot serialize {spec!r}")


def model_to_dict(model: ModelSpec) -> dict:
    return {
        "d": model.d,
        "baseline": [_to_obj(b, _BASELINE_TAGS) for b in model.baseline],
        "excitation": [[_to_obj(k, _KERNEL_TAGS) for k in row] for row in model.excitation],
    }


def load_model(path: str | Path) -> ModelSpec:
    """Read a model JSON file; syntax errors carry line/column positions."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    try:
        return model_from_dict(data)
    except ModelError as exc:
        raise ModelError(f"{path}: {exc}") from None


def poisson_model(d: int = 1, rate: float = 1.0) -> ModelSpec:
    return ModelSpec(tuple(Constant(rate) for _ in range(d)),
                     tuple(tuple(ZeroKernel() for _ in range(d)) for _ in range(d)))


def uniform_model(baseline: Sequence, kernel) -> ModelSpec:
    """Model with the same kernel in every entry."""
    d = len(baseline)
    return ModelSpec(tuple(baseline), tuple(tuple(kernel for _ in range(d)) for _ in range(d)))

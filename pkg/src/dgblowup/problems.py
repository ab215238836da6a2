"""Model problems u_t - kappa u_xx = f(x, t, u) on an interval with u = 0 at both ends."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .bound import LipschitzModulus


@dataclass(frozen=True)
class ProblemDef:
    """Semilinear heat problem.

    Attributes:
        name: Registry name.
        domain: Interval (a, b).
        kappa: Diffusion coefficient.
        u0, u0_xx: Initial datum and its second derivative (vectorised in x).
        f: Reaction f(x, t, u), vectorised with numpy broadcasting.
        lipschitz: Modulus with |f(x,t,v) - f(x,t,w)| <= L(t,|v|,|w|) |v - w|.
        reaction_degree: Polynomial degree of f in u; sizes the time
            quadrature (use a generous value for non-polynomial f).
        exact: Exact solution u(x, t), when known.
    """

    name: str
    domain: tuple[float, float]
    kappa: float
    u0: Callable
    u0_xx: Callable
    f: Callable
    lipschitz: LipschitzModulus
    reaction_degree: int = 2
    exact: Callable | None = None

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")


def _gaussian(amplitude: float, width: float, domain):
    """amplitude * exp(-width x^2) minus the linear interpolant of its boundary values."""
    a, b = domain

    def raw(x):
        return amplitude * np.exp(-width * np.asarray(x, dtype=float) ** 2)

    ra, rb = float(raw(a)), float(raw(b))

    def u0(x):
        x = np.asarray(x, dtype=float)
        return raw(x) - (ra + (rb - ra) * (x - a) / (b - a))

    def u0_xx(x):
        x = np.asarray(x, dtype=float)
        return raw(x) * (4.0 * width**2 * x**2 - 2.0 * width)

    return u0, u0_xx


def quadratic_gaussian() -> ProblemDef:
    u0, u0_xx = _gaussian(10.0, 2.0, (-5.0, 5.0))
    return ProblemDef(
        name="quadratic_gaussian", domain=(-5.0, 5.0), kappa=1.0, u0=u0, u0_xx=u0_xx,
        f=lambda x, t, u: u * u, lipschitz=LipschitzModulus.sum_of_arguments(), reaction_degree=2)


def cubic() -> ProblemDef:
    u0, u0_xx = _gaussian(5.0, 2.0, (-5.0, 5.0))
    lip = LipschitzModulus(lambda t, a, b: a * a + a * b + b * b, name="a^2 + ab + b^2")
    return ProblemDef(name="cubic", domain=(-5.0, 5.0), kappa=1.0, u0=u0, u0_xx=u0_xx,
                      f=lambda x, t, u: u**3, lipschitz=lip, reaction_degree=3)


def exponential() -> ProblemDef:
    u0, u0_xx = _gaussian(2.0, 2.0, (-5.0, 5.0))
    lip = LipschitzModulus(lambda t, a, b: np.exp(np.maximum(a, b)), name="exp(max(a, b))")
    return ProblemDef(name="exponential", domain=(-5.0, 5.0), kappa=1.0, u0=u0, u0_xx=u0_xx,
                      f=lambda x, t, u: np.exp(u), lipschitz=lip, reaction_degree=4)


def linear_manufactured() -> ProblemDef:
    """f = u + g with g chosen so that u = exp(-t) sin(pi x) on (0, 1)."""
    pi = np.pi

    def exact(x, t):
        return np.exp(-t) * np.sin(pi * x)

    def f(x, t, u):
        return u + (pi**2 - 2.0) * np.exp(-t) * np.sin(pi * x)

    return ProblemDef(
        name="linear_manufactured", domain=(0.0, 1.0), kappa=1.0,
        u0=lambda x: np.sin(pi * np.asarray(x, dtype=float)),
        u0_xx=lambda x: -pi**2 * np.sin(pi * np.asarray(x, dtype=float)),
        f=f, lipschitz=LipschitzModulus.constant(1.0), reaction_degree=1, exact=exact)


def linear_heat() -> ProblemDef:
    """Pure diffusion from sin(pi x); u = exp(-pi^2 t) sin(pi x)."""
    pi = np.pi
    return ProblemDef(
        name="linear_heat", domain=(0.0, 1.0), kappa=1.0,
        u0=lambda x: np.sin(pi * np.asarray(x, dtype=float)),
        u0_xx=lambda x: -pi**2 * np.sin(pi * np.asarray(x, dtype=float)),
        f=lambda x, t, u: np.zeros(np.broadcast(x, t, u).shape),
        lipschitz=LipschitzModulus.zero(), reaction_degree=1,
        exact=lambda x, t: np.exp(-pi**2 * t) * np.sin(pi * x))


PRESETS = {
    "quadratic_gaussian": quadratic_gaussian,
    "cubic": cubic,
    "exponential": exponential,
    "linear_manufactured": linear_manufactured,
    "linear_heat": linear_heat,
}


def preset(name: str) -> ProblemDef:
    try:
        return PRESETS[name]()
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; choose from {sorted(PRESETS)}") from None


def lipschitz_violation(problem: ProblemDef, n: int = 10_000, scale: float = 5.0, seed: int = 0) -> float:
    """Largest ratio |f(v) - f(w)| / (L(|v|, |w|) |v - w|) over random tuples (<= 1 when consistent)."""
    rng = np.random.default_rng(seed)
    a, b = problem.domain
    x = rng.uniform(a, b, n)
    t = rng.uniform(0.0, 1.0, n)
    v = rng.uniform(-scale, scale, n)
    w = rng.uniform(-scale, scale, n)
    lhs = np.abs(problem.f(x, t, v) - problem.f(x, t, w))
    rhs = problem.lipschitz(t, np.abs(v), np.abs(w)) * np.abs(v - w)
    ok = rhs > 0
    if np.any(~ok & (lhs > 0)):
        return np.inf
    return float(np.max(lhs[ok] / rhs[ok], initial=0.0))

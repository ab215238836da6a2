"""Conditional L-infinity(L-infinity) error bound.

The bound is carried slab by slab as a scalar recursion. Per slab it needs
only time samples (at the slab's Gauss nodes) of

* ``U_norm``        sup-norm of the reconstruction U~(s),
* ``eta_space``     space estimator E(U~(s), A~(s)),
* ``eta_space_dt``  space derivative estimator E(U~_t(s), A~_t(s)),

and the scalar time estimator ``eta_time`` = int ||R_time||. From these:

    psi_m   = theta_{m-1} psi_{m-1} + C int L(s, |U~|, |U~| + C eta) eta ds
              + eta_time + C int eta_dt ds
    phi(d)  = 1 + d (int L(s, d psi + |U~| + C eta, same) ds - 1)
    delta_m = smallest root of phi in [1, inf)          (absent => stop)
    theta_m = exp(int L(s, delta psi + |U~| + C eta, |U~| + C eta) ds)

and the bound on max ||u - U~|| is theta_m psi_m + C max eta.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

DELTA_MAX = 1e8


@dataclass(frozen=True)
class LipschitzModulus:
    """Known local Lipschitz modulus L(t, a, b) of the reaction term.

    ``quadratic`` marks L(t, a, b) = a + b, for which the root of phi has a
    closed form.
    """

    func: Callable
    quadratic: bool = False
    name: str = ""

    def __call__(self, t, a, b):
        return np.asarray(self.func(t, a, b), dtype=float)

    @classmethod
    def zero(cls) -> "LipschitzModulus":
        return cls(lambda t, a, b: np.zeros(np.broadcast(t, a, b).shape), name="zero")

    @classmethod
    def constant(cls, c: float) -> "LipschitzModulus":
        return cls(lambda t, a, b: np.full(np.broadcast(t, a, b).shape, float(c)), name=f"constant {c}")

    @classmethod
    def sum_of_arguments(cls) -> "LipschitzModulus":
        return cls(lambda t, a, b: np.asarray(a) + np.asarray(b), quadratic=True, name="a + b")


@dataclass
class SlabBoundData:
    """Time samples of one slab feeding the bound (all arrays share the slab's Gauss nodes)."""

    k: float
    times: np.ndarray
    weights: np.ndarray
    U_norm: np.ndarray
    eta_space: np.ndarray
    eta_space_dt: np.ndarray
    eta_time: float
    jump_norm: float = 0.0

    @classmethod
    def constant(cls, k: float, U_norm: float, eta_space: float = 0.0, eta_space_dt: float = 0.0,
                 eta_time: float = 0.0, t0: float = 0.0, n: int = 4) -> "SlabBoundData":
        """Frozen data: every sample equal (handy for scalar checks)."""
        from .time_basis import IntervalMap, gauss_legendre
        q = gauss_legendre(n)
        imap = IntervalMap(t0, t0 + k)
        ones = np.ones(n)
        return cls(k, imap.nodes(q), imap.weights(q), U_norm * ones, eta_space * ones,
                   eta_space_dt * ones, eta_time)


@dataclass(frozen=True)
class BoundState:
    """Accumulators after slab m (``m = 0`` is the initial state).

    ``delta is None`` for m >= 1 means phi_m had no root in [1, DELTA_MAX]:
    the bound is no longer available and the adaptive run must stop.
    """

    m: int = 0
    psi: float = 0.0
    theta: float = 1.0
    theta_tilde: float = 1.0
    delta: float | None = None
    max_eta_space: float = 0.0
    max_jump: float = 0.0
    bound_reconstructed: float = 0.0
    bound_error: float = 0.0

    @property
    def has_root(self) -> bool:
        return self.m == 0 or self.delta is not None


def _shifted(data: SlabBoundData, C_inf: float) -> np.ndarray:
    return data.U_norm + C_inf * data.eta_space


def phi(delta: float, psi: float, data: SlabBoundData, lip: LipschitzModulus, C_inf: float) -> float:
    """phi_m(delta) = 1 + delta (int L(s, delta) ds - 1)."""
    arg = delta * psi + _shifted(data, C_inf)
    integral = float(np.dot(data.weights, lip(data.times, arg, arg)))
    return 1.0 + delta * (integral - 1.0)


def _quadratic_root(psi: float, data: SlabBoundData, C_inf: float, delta_max: float) -> float | None:
    # phi(d) = a d^2 + b d + 1 with a = 2 k psi, b = 2 int(|U~| + C eta) - 1
    a = 2.0 * data.k * psi
    b = 2.0 * float(np.dot(data.weights, _shifted(data, C_inf))) - 1.0
    if a == 0.0:
        if b >= 0.0:
            return None
        root = -1.0 / b
    else:
        disc = b * b - 4.0 * a
        if disc < 0.0 or b >= 0.0:
            return None
        root = 2.0 / (-b + math.sqrt(disc))
    if root < 1.0:
        # both roots below one means phi > 0 on [1, inf); allow rounding at 1
        return 1.0 if root > 1.0 - 1e-12 else None
    return root if root <= delta_max else None


def _newton_root(fun, delta_max: float, ratio: float = 1.25, tol: float = 1e-15) -> float | None:
    f_lo = fun(1.0)
    if f_lo <= 0.0:
        return 1.0
    lo, hi = 1.0, None
    while lo < delta_max:
        cand = min(lo * ratio, delta_max)
        f_c = fun(cand)
        if f_c <= 0.0:
            hi, f_hi = cand, f_c
            break
        lo, f_lo = cand, f_c
    if hi is None:
        return None
    if f_hi == 0.0:
        return hi
    x = lo - f_lo * (hi - lo) / (f_hi - f_lo)
    for _ in range(200):
        fx = fun(x)
        if fx == 0.0:
            return x
        if fx > 0.0:
            lo = x
        else:
            hi = x
        step = 1e-7 * max(1.0, abs(x))
        slope = (fun(x + step) - fun(x - step)) / (2.0 * step)
        nxt = x - fx / slope if slope != 0.0 else 0.5 * (lo + hi)
        if not lo < nxt < hi:
            nxt = 0.5 * (lo + hi)
        if abs(nxt - x) <= tol * max(1.0, abs(x)) or hi - lo <= tol * max(1.0, abs(x)):
            return nxt
        x = nxt
    return x


def delta_root(psi: float, data: SlabBoundData, lip: LipschitzModulus, C_inf: float,
               delta_max: float = DELTA_MAX, method: str = "auto") -> float | None:
    """Smallest root of phi_m in [1, delta_max], or ``None`` when there is none.

    Args:
        method: ``"auto"`` uses the quadratic formula when ``lip.quadratic``
            and a safeguarded Newton iteration otherwise; ``"newton"`` and
            ``"quadratic"`` force one route.
    """
    if method == "quadratic" or (method == "auto" and lip.quadratic):
        return _quadratic_root(psi, data, C_inf, delta_max)
    return _newton_root(lambda d: phi(d, psi, data, lip, C_inf), delta_max)


def theta(delta: float, psi: float, data: SlabBoundData, lip: LipschitzModulus, C_inf: float) -> float:
    """theta_m = exp(int L(s, delta psi + |U~| + C eta, |U~| + C eta) ds) >= 1."""
    shifted = _shifted(data, C_inf)
    integral = float(np.dot(data.weights, lip(data.times, delta * psi + shifted, shifted)))
    return math.exp(max(integral, 0.0))


def psi_increment(data: SlabBoundData, lip: LipschitzModulus, C_inf: float) -> float:
    """Everything in psi_m except the carried term theta_{m-1} psi_{m-1}."""
    U = data.U_norm
    eta = data.eta_space
    spatial = C_inf * float(np.dot(data.weights, lip(data.times, U, U + C_inf * eta) * eta))
    dt_part = C_inf * float(np.dot(data.weights, data.eta_space_dt))
    return spatial + data.eta_time + dt_part


def advance_psi(prev: BoundState, data: SlabBoundData, lip: LipschitzModulus, C_inf: float,
                delta_max: float = DELTA_MAX) -> BoundState:
    """One step of the recursion: psi_m first, then delta_m, then theta_m and the bounds."""
    psi = prev.theta * prev.psi + psi_increment(data, lip, C_inf)
    max_eta = max(prev.max_eta_space, float(np.max(data.eta_space, initial=0.0)))
    max_jump = max(prev.max_jump, float(data.jump_norm))
    delta = delta_root(psi, data, lip, C_inf, delta_max)
    if delta is None:
        return BoundState(m=prev.m + 1, psi=psi, theta=math.nan, theta_tilde=prev.theta_tilde,
                          delta=None, max_eta_space=max_eta, max_jump=max_jump,
                          bound_reconstructed=math.nan, bound_error=math.nan)
    th = theta(delta, psi, data, lip, C_inf)
    rec = th * psi + C_inf * max_eta
    return BoundState(m=prev.m + 1, psi=psi, theta=th, theta_tilde=prev.theta_tilde * th, delta=delta,
                      max_eta_space=max_eta, max_jump=max_jump, bound_reconstructed=rec,
                      bound_error=rec + max_jump)

"""Temporal building blocks for dG time stepping.

Legendre polynomials on the reference interval [-1, 1], Gauss-Legendre
rules, the affine map onto a time slab, the L2(I_m)-orthonormal scaled
Legendre basis used to store slab coefficients, the temporal L2 projection
and the lifting polynomial Q_m (with its time derivative) that turns the
jump at t_{m-1} into a continuous reconstruction.

Time polynomials that need to be differentiated repeatedly are handed out as
``numpy.polynomial.Legendre`` series whose ``domain`` is the physical slab,
so ``.deriv()`` carries the chain-rule factor automatically.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import Legendre
from numpy.polynomial import legendre as npleg


@dataclass(frozen=True)
class RefQuadrature:
    """Gauss-Legendre rule on [-1, 1]."""

    points: np.ndarray
    weights: np.ndarray

    @property
    def n(self) -> int:
        return len(self.points)


@lru_cache(maxsize=64)
def gauss_legendre(n: int) -> RefQuadrature:
    """n-point Gauss-Legendre rule, exact for polynomials of degree <= 2n - 1."""
    if n < 1:
        raise ValueError(f"need at least one quadrature point, got {n}")
    x, w = npleg.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return RefQuadrature(x, w)


def time_quadrature_size(r: int, reaction_degree: int = 2) -> int:
    """Number of Gauss points per slab for degree-r dG with a reaction of the given polynomial degree.

    Large enough that the projection of f(U) onto degree r is computed exactly
    when f is a polynomial of degree ``reaction_degree`` in u.
    """
    q = max(int(reaction_degree), 1)
    return max(r + 3, math.ceil((q * (r + 1) + r) / 2) + 1)


@dataclass(frozen=True)
class IntervalMap:
    """Affine map F(t_hat) = (k t_hat + t_start + t_end) / 2 from [-1, 1] onto [t_start, t_end]."""

    t_start: float
    t_end: float

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise ValueError(f"empty time interval [{self.t_start}, {self.t_end}]")

    @property
    def k(self) -> float:
        return self.t_end - self.t_start

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.t_start + self.t_end)

    def forward(self, t_hat):
        return 0.5 * (self.k * np.asarray(t_hat, dtype=float) + (self.t_start + self.t_end))

    def inverse(self, t):
        return (2.0 * np.asarray(t, dtype=float) - (self.t_start + self.t_end)) / self.k

    def nodes(self, quad: RefQuadrature) -> np.ndarray:
        """Physical quadrature abscissae."""
        return self.forward(quad.points)

    def weights(self, quad: RefQuadrature) -> np.ndarray:
        """Physical quadrature weights (they sum to k)."""
        return 0.5 * self.k * np.asarray(quad.weights)


def legendre_eval(i: int, t_hat):
    """Evaluate the i-th Legendre polynomial by the three-term recurrence.

    Args:
        i: Degree, ``i >= 0``.
        t_hat: Scalar or array of reference coordinates.

    Returns:
        Values with the shape of ``t_hat`` (a float for scalar input).
    """
    if i < 0:
        raise ValueError(f"Legendre degree must be non-negative, got {i}")
    x = np.asarray(t_hat, dtype=float)
    prev = np.zeros_like(x)
    cur = np.ones_like(x)
    for n in range(i):
        prev, cur = cur, ((2 * n + 1) * x * cur - n * prev) / (n + 1)
    return float(cur) if cur.ndim == 0 else cur


def legendre_eval_all(n: int, t_hat) -> tuple[np.ndarray, np.ndarray]:
    """Values and first derivatives of L_0..L_n at the reference points.

    Returns:
        (values, derivatives), each of shape (n + 1, len(t_hat)).
    """
    x = np.atleast_1d(np.asarray(t_hat, dtype=float))
    vals = np.zeros((n + 1, x.size))
    ders = np.zeros((n + 1, x.size))
    vals[0] = 1.0
    if n >= 1:
        vals[1] = x
        ders[1] = 1.0
    for j in range(1, n):
        vals[j + 1] = ((2 * j + 1) * x * vals[j] - j * vals[j - 1]) / (j + 1)
        # L'_{j+1} = L'_{j-1} + (2j+1) L_j
        ders[j + 1] = ders[j - 1] + (2 * j + 1) * vals[j]
    return vals, ders


def orthonormal_scale(j: int, k: float) -> float:
    """Factor turning L_j(F^{-1}(t)) into an L2(I_m)-normalised function."""
    return math.sqrt((2 * j + 1) / k)


def orthonormal_values(r: int, t, imap: IntervalMap, deriv: int = 0) -> np.ndarray:
    """Orthonormal slab basis (or its first time derivative) at physical times.

    Returns:
        Array of shape (r + 1, len(t)).
    """
    vals, ders = legendre_eval_all(r, imap.inverse(t))
    scale = np.sqrt((2 * np.arange(r + 1) + 1) / imap.k)[:, None]
    if deriv == 0:
        return scale * vals
    if deriv == 1:
        return scale * ders * (2.0 / imap.k)
    raise ValueError("only deriv in {0, 1} supported here; use orthonormal_series for more")


def orthonormal_endpoint_values(r: int, k: float) -> tuple[np.ndarray, np.ndarray]:
    """Basis values at t_{m-1}^+ and t_m^-, using L_j(+-1) = (+-1)^j."""
    j = np.arange(r + 1)
    scale = np.sqrt((2 * j + 1) / k)
    return scale * (-1.0) ** j, scale.copy()


def orthonormal_series(j: int, imap: IntervalMap) -> Legendre:
    """The j-th orthonormal slab basis function as a differentiable Legendre series."""
    coef = np.zeros(j + 1)
    coef[j] = orthonormal_scale(j, imap.k)
    return Legendre(coef, domain=[imap.t_start, imap.t_end])


def lifting_series(r: int, imap: IntervalMap) -> Legendre:
    """Q_m = (-1)^r (L_{r+1} - L_r) / 2 composed with the inverse slab map."""
    coef = np.zeros(r + 2)
    sign = 0.5 * (-1.0) ** r
    coef[r + 1] = sign
    coef[r] = -sign
    return Legendre(coef, domain=[imap.t_start, imap.t_end])


def lifting_Q(r: int, t, imap: IntervalMap):
    """Lifting polynomial Q_m(t); equals -1 at t_start and 0 at t_end for every r."""
    t_hat = imap.inverse(t)
    return 0.5 * (-1.0) ** r * (legendre_eval(r + 1, t_hat) - legendre_eval(r, t_hat))


def lifting_Q_dt(r: int, t, imap: IntervalMap):
    """Time derivative of Q_m, including the 2/k factor from the inverse map."""
    _, ders = legendre_eval_all(r + 1, imap.inverse(t))
    out = 0.5 * (-1.0) ** r * (ders[r + 1] - ders[r]) * (2.0 / imap.k)
    return float(out[0]) if np.ndim(t) == 0 else out.reshape(np.shape(t))


def time_derivative_matrix(r: int) -> np.ndarray:
    """D with d/dt phi_j = sum_i D[i, j] phi_i / k for the orthonormal basis phi on a slab of length k.

    Multiply by 1/k for a slab of length k. Strictly upper triangular.
    """
    quad = gauss_legendre(r + 1)
    vals, ders = legendre_eval_all(r, quad.points)
    scale = np.sqrt((2 * np.arange(r + 1) + 1))[:, None]
    # reference slab of length 1: phi_j = sqrt(2j+1) L_j, dt = 1/2 dt_hat, d/dt = 2 d/dt_hat
    phi = scale * vals
    dphi = scale * ders * 2.0
    return (phi * (0.5 * quad.weights)) @ dphi.T


def project_L2_time(func, r: int, imap: IntervalMap, quad: RefQuadrature) -> np.ndarray:
    """Coefficients of the L2(I_m) projection of ``func`` onto degree-r polynomials.

    Args:
        func: Callable of physical time returning a scalar or an array; it is
            called once per quadrature node.
        r: Target degree.
        imap: Slab map.
        quad: Reference rule; it should integrate the products func * L_j
            accurately (exactly, for polynomial integrands of degree
            <= 2 * quad.n - 1).

    Returns:
        Array of shape (r + 1, *shape(func(t))) holding coefficients against
        the orthonormal basis returned by :func:`orthonormal_values`.
    """
    times = imap.nodes(quad)
    w = imap.weights(quad)
    samples = np.stack([np.asarray(func(t), dtype=float) for t in times])
    basis = orthonormal_values(r, times, imap)
    return np.tensordot(basis * w, samples, axes=(1, 0))

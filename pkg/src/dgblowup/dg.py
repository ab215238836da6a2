"""One time slab of the dG(r)-cG(p) scheme, solved by Picard iteration.

On the slab I = (t0, t1) of length k the discrete solution is stored as

    U(t) = sum_j phi_j(t) U_j,   phi_j = sqrt((2j+1)/k) L_j(F^{-1}(t)),

with U_j in the cG(p) space of the slab mesh. Testing the scheme with
phi_i(t) v gives the block system

    sum_j (C_ij M + delta_ij K) U_j = F_i(U) + phi_i(t0^+) (U(t0^-), v)

where C_ij = int phi_i phi_j' + phi_i(t0^+) phi_j(t0^+) couples the blocks
and F_i(U) = int (f(U), phi_i v). The block matrix is factorised once per
slab; every Picard iteration re-evaluates F and back-substitutes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem import FemSpace, SampleGrid, SpatialField, assemble, grid_values
from .mesh import MeshMismatchError, common_refinement
from .problems import ProblemDef
from .time_basis import (IntervalMap, RefQuadrature, gauss_legendre, orthonormal_endpoint_values,
                         orthonormal_values, time_derivative_matrix, time_quadrature_size)


def space_quadrature_size(p: int, reaction_degree: int) -> int:
    """Gauss points per element so that (f(U), v) is exact for polynomial f."""
    q = max(int(reaction_degree), 1)
    return max(p + 3, math.ceil(((q + 1) * p + 1) / 2))


def space_matrices(space: FemSpace, kappa: float):
    """Mass and stiffness matrices, cached on the space."""
    cache = space.__dict__.setdefault("_matrix_cache", {})
    if kappa not in cache:
        cache[kappa] = assemble(space, kappa)
    return cache[kappa]


def values_on(obj, grid: SampleGrid, deriv: int = 0) -> np.ndarray:
    """Grid values of a field, falling back to point evaluation across unrelated meshes."""
    try:
        return grid_values(obj, grid, deriv)
    except MeshMismatchError:
        return np.asarray(obj(grid.x, deriv) if deriv else obj(grid.x), dtype=float)


def trace_load(prev, space: FemSpace, n_quad: int) -> np.ndarray:
    """(prev, v) for all v, integrated exactly over the common refinement of both meshes."""
    prev_mesh = getattr(getattr(prev, "space", None), "mesh", None)
    if prev_mesh is not None and prev_mesh.same_family(space.mesh):
        qmesh = common_refinement(prev_mesh, space.mesh)
    else:
        qmesh = space.mesh
    grid = SampleGrid.gauss(qmesh, n_quad)
    return space.assemble_load(values_on(prev, grid), grid)


class SlabOperator:
    """Factorised block matrix of one slab (depends on mesh, p, kappa, k and r only)."""

    def __init__(self, space: FemSpace, kappa: float, k: float, r: int):
        self.space, self.kappa, self.k, self.r = space, kappa, k, r
        M, K = space_matrices(space, kappa)
        self.M, self.K = M, K
        plus, _ = orthonormal_endpoint_values(r, k)
        self.C = time_derivative_matrix(r) / k + np.outer(plus, plus)
        self.plus = plus
        A = sp.kron(sp.csr_matrix(self.C), M.sparse) + sp.kron(sp.identity(r + 1), K.sparse)
        self.matrix = sp.csc_matrix(A)
        self._lu = spla.splu(self.matrix)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve for the (r + 1, n_dofs) coefficient block."""
        sol = self._lu.solve(np.ascontiguousarray(rhs.ravel()))
        return sol.reshape(self.r + 1, self.space.n_dofs)

    def apply(self, coeffs: np.ndarray) -> np.ndarray:
        return (self.matrix @ coeffs.ravel()).reshape(coeffs.shape)


@dataclass
class PicardReport:
    iterations: int
    final_increment: float
    converged: bool


@dataclass
class SlabSolution:
    """dG solution on one slab together with the incoming trace U(t0^-)."""

    interval: IntervalMap
    r: int
    space: FemSpace
    coeffs: np.ndarray
    prev_trace: object
    quad: RefQuadrature
    problem: ProblemDef | None = None
    report: PicardReport | None = field(default=None, repr=False)

    @property
    def mesh(self):
        return self.space.mesh

    @property
    def k(self) -> float:
        return self.interval.k

    def field(self, j: int) -> SpatialField:
        return SpatialField(self.space, self.coeffs[j])

    def basis_at(self, t, deriv: int = 0) -> np.ndarray:
        """Orthonormal slab basis at times t, shape (r + 1, n_t)."""
        return orthonormal_values(self.r, np.atleast_1d(t), self.interval, deriv)

    def at(self, t: float) -> SpatialField:
        """U(t); at the slab ends this is the one-sided limit from inside the slab."""
        return SpatialField(self.space, self.basis_at(t)[:, 0] @ self.coeffs)

    def trace_plus(self) -> SpatialField:
        plus, _ = orthonormal_endpoint_values(self.r, self.k)
        return SpatialField(self.space, plus @ self.coeffs)

    def trace_minus(self) -> SpatialField:
        _, minus = orthonormal_endpoint_values(self.r, self.k)
        return SpatialField(self.space, minus @ self.coeffs)

    def eval_grid(self, grid: SampleGrid, times, deriv_x: int = 0, deriv_t: int = 0) -> np.ndarray:
        """U (or a time/space derivative) at ``times`` on ``grid``: shape (n_t, n_el, n_pts)."""
        fields = self.space.eval_coeffs(self.coeffs, grid, deriv_x)
        if deriv_t == 0:
            basis = self.basis_at(times)
        elif deriv_t == 1:
            basis = self.basis_at(times, 1)
        else:
            raise ValueError("deriv_t must be 0 or 1")
        return np.einsum("jt,jeq->teq", basis, fields)


def trace_minus(slab: SlabSolution) -> SpatialField:
    """U(t_m^-) of a solved slab."""
    return slab.trace_minus()


class ReactionLoad:
    """Evaluates F_i(U) = int (f(x, s, U), phi_i v) on one slab."""

    def __init__(self, space: FemSpace, interval: IntervalMap, r: int, problem: ProblemDef,
                 quad: RefQuadrature, n_space: int | None = None):
        self.space, self.interval, self.r, self.problem, self.quad = space, interval, r, problem, quad
        n_space = space_quadrature_size(space.p, problem.reaction_degree) if n_space is None else n_space
        self.grid = SampleGrid.gauss(space.mesh, n_space)
        self.times = interval.nodes(quad)
        self.weights = interval.weights(quad)
        self.basis = orthonormal_values(r, self.times, interval)

    def state_from_coeffs(self, coeffs: np.ndarray) -> np.ndarray:
        """U at the time nodes on the quadrature grid, shape (n_t, n_el, n_x)."""
        return np.einsum("jt,jeq->teq", self.basis, self.space.eval_coeffs(coeffs, self.grid))

    def load(self, state: np.ndarray) -> np.ndarray:
        """Load blocks (r + 1, n_dofs) for U sampled as returned by :meth:`state_from_coeffs`."""
        fvals = self.problem.f(self.grid.x[None], self.times[:, None, None], state)
        fvals = np.broadcast_to(fvals, state.shape)
        weighted = np.einsum("jt,t,teq->jeq", self.basis, self.weights, fvals)
        return self.space.assemble_load(weighted, self.grid)


def _coefficient_increment(scale: np.ndarray, new: np.ndarray, old: np.ndarray) -> tuple[float, float]:
    # coefficients against the unnormalised L_j, so the size is independent of k
    diff = np.max(np.abs(scale[:, None] * (new - old)))
    size = np.max(np.abs(scale[:, None] * new))
    return float(diff), float(size)


def solve_slab(prev_trace, space: FemSpace, interval: IntervalMap, r: int, problem: ProblemDef,
               tol_picard: float = 1e-11, max_iters: int = 50, quad: RefQuadrature | None = None,
               operator: SlabOperator | None = None) -> tuple[SlabSolution, PicardReport]:
    """Solve one slab of the dG(r)-cG(p) scheme.

    Args:
        prev_trace: U(t0^-); any field evaluable on grids of a common
            refinement with ``space.mesh`` (normally a :class:`SpatialField`
            on the previous mesh).
        space: cG(p) space of this slab.
        interval: The slab.
        r: Temporal degree.
        problem: Problem data.
        tol_picard: Stopping tolerance on the sup-norm of the change of the
            Legendre coefficients (taken against the unnormalised L_j, so in
            units of U), relative to max(1, sup |coefficient|).
        max_iters: Picard iteration cap.
        quad: Time rule (default sized by :func:`time_quadrature_size`).
        operator: Pre-factorised block matrix for (space, kappa, k, r).

    Returns:
        (slab, report). ``report.converged`` is False when the iteration
        stalls or diverges; the caller decides whether to shrink the step.
    """
    if quad is None:
        quad = gauss_legendre(time_quadrature_size(r, problem.reaction_degree))
    if operator is None:
        operator = SlabOperator(space, problem.kappa, interval.k, r)
    reaction = ReactionLoad(space, interval, r, problem, quad)
    n_q = space_quadrature_size(space.p, 1)
    jump_rhs = np.outer(operator.plus, trace_load(prev_trace, space, n_q))

    scale = np.sqrt((2.0 * np.arange(r + 1) + 1.0) / interval.k)

    # first iterate: reaction frozen at the constant-in-time extension of the incoming trace
    state = np.broadcast_to(values_on(prev_trace, reaction.grid), (len(reaction.times),) + reaction.grid.shape)
    coeffs = None
    increment = math.inf
    converged = False
    it = 0
    # a diverging iterate may overflow; that is detected and reported below
    with np.errstate(over="ignore", invalid="ignore"):
        for it in range(1, max_iters + 1):
            new = operator.solve(reaction.load(state) + jump_rhs)
            if not np.all(np.isfinite(new)):
                break
            if coeffs is not None:
                increment, size = _coefficient_increment(scale, new, coeffs)
                if increment <= tol_picard * max(1.0, size):
                    coeffs = new
                    converged = True
                    break
                if it > 3 and increment > 1e6 * max(1.0, size):
                    coeffs = new
                    break
            coeffs = new
            state = reaction.state_from_coeffs(coeffs)
    if coeffs is None:
        coeffs = np.full((r + 1, space.n_dofs), np.nan)
    report = PicardReport(iterations=it, final_increment=increment, converged=converged)
    slab = SlabSolution(interval, r, space, coeffs, prev_trace, quad, problem, report)
    return slab, report


def discrete_residual(slab: SlabSolution, operator: SlabOperator | None = None) -> tuple[np.ndarray, float]:
    """Residual of the slab equations with f evaluated at the returned U.

    Returns:
        (residual blocks (r + 1, n_dofs), sup-norm of the right-hand side).
    """
    problem = slab.problem
    if operator is None:
        operator = SlabOperator(slab.space, problem.kappa, slab.k, slab.r)
    reaction = ReactionLoad(slab.space, slab.interval, slab.r, problem, slab.quad)
    rhs = reaction.load(reaction.state_from_coeffs(slab.coeffs))
    rhs = rhs + np.outer(operator.plus, trace_load(slab.prev_trace, slab.space, space_quadrature_size(slab.space.p, 1)))
    res = operator.apply(slab.coeffs) - rhs
    return res, float(np.max(np.abs(rhs)))

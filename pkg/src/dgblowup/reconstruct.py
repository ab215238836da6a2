"""Temporal and elliptic reconstruction of a solved slab, and its estimators.

With the jump [U] = U(t0^+) - U(t0^-) and the lifting polynomial Q,

    U~ = U + Q [U]                         continuous in time,
    A  = Pi f(U) - U~_t                    discrete laplacian,
    A~ = A + Q [A]                         continuous in time,
    R  = f(U~) - U~_t - A~                 temporal residual.

Pi f(U) does not live in the FEM space, so its coefficient fields are
computed lazily on whatever grid they are asked for, by the slab's time
quadrature at every grid point. All x-derivatives needed by the estimator
come from U and the incoming trace, never from A~.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dg import SlabSolution, space_matrices, space_quadrature_size, values_on
from .estimator import estimate_samples, local_contributions
from .fem import FieldSum, FunctionField, SampleGrid, grid_values, sampling_grid
from .bound import SlabBoundData
from .mesh import Mesh1D, common_refinement
from .problems import ProblemDef
from .time_basis import IntervalMap, lifting_series, orthonormal_series, orthonormal_values


class CachedField:
    """Memoises ``eval_grid`` of a field on the most recently used grids."""

    def __init__(self, field, capacity: int = 4):
        self.field = field
        self.capacity = capacity
        self._store: dict[int, tuple[SampleGrid, dict]] = {}

    @property
    def space(self):
        return getattr(self.field, "space", None)

    def eval_grid(self, grid: SampleGrid, deriv: int = 0) -> np.ndarray:
        entry = self._store.get(id(grid))
        if entry is None or entry[0] is not grid:
            if len(self._store) >= self.capacity:
                self._store.pop(next(iter(self._store)))
            entry = (grid, {})
            self._store[id(grid)] = entry
        cache = entry[1]
        if deriv not in cache:
            cache[deriv] = values_on(self.field, grid, deriv)
        return cache[deriv]

    def __call__(self, x, deriv: int = 0):
        return self.field(x, deriv) if deriv else self.field(x)


class SpaceTimeFunction:
    """sum_i c_i p_i(t) v_i(x) with Legendre time polynomials p_i and spatial fields v_i."""

    def __init__(self, interval: IntervalMap, terms):
        self.interval = interval
        self.terms = [(series, fld, float(c)) for series, fld, c in terms]

    @property
    def degree(self) -> int:
        return max((s.degree() for s, _, _ in self.terms), default=0)

    def __add__(self, other: "SpaceTimeFunction") -> "SpaceTimeFunction":
        return SpaceTimeFunction(self.interval, self.terms + other.terms)

    def __sub__(self, other: "SpaceTimeFunction") -> "SpaceTimeFunction":
        return self + other.scaled(-1.0)

    def scaled(self, c: float) -> "SpaceTimeFunction":
        return SpaceTimeFunction(self.interval, [(s, f, c * w) for s, f, w in self.terms])

    def dt(self, order: int = 1) -> "SpaceTimeFunction":
        return SpaceTimeFunction(self.interval, [(s.deriv(order), f, c) for s, f, c in self.terms])

    def values(self, grid: SampleGrid, times, dx: int = 0) -> np.ndarray:
        """Values on ``grid`` at each time, shape (n_t, n_el, n_pts)."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        out = np.zeros((times.size,) + grid.shape)
        for series, fld, c in self.terms:
            coef = c * series(times)
            if np.any(coef != 0.0):
                out += coef[:, None, None] * grid_values(fld, grid, dx)[None]
        return out

    def __call__(self, x, t: float, dx: int = 0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for series, fld, c in self.terms:
            out = out + c * float(series(t)) * np.asarray(fld(x, dx) if dx else fld(x))
        return out

    def trace(self, t: float) -> "TimeTrace":
        return TimeTrace(self, t)


class TimeTrace:
    """A SpaceTimeFunction frozen at one time, usable as a spatial field."""

    def __init__(self, stf: SpaceTimeFunction, t: float):
        self.stf, self.t = stf, float(t)

    def eval_grid(self, grid: SampleGrid, deriv: int = 0) -> np.ndarray:
        return self.stf.values(grid, [self.t], dx=deriv)[0]

    def __call__(self, x, deriv: int = 0):
        return self.stf(x, self.t, deriv)


class ProjectedReaction:
    """Coefficient fields of Pi f(U) against the orthonormal slab basis, evaluated lazily."""

    def __init__(self, slab: SlabSolution, problem: ProblemDef):
        self.slab, self.problem = slab, problem
        self.times = slab.interval.nodes(slab.quad)
        self.weights = slab.interval.weights(slab.quad)
        self.basis = orthonormal_values(slab.r, self.times, slab.interval)
        self._cache: dict[int, tuple[SampleGrid, np.ndarray]] = {}

    def _project(self, fvals: np.ndarray) -> np.ndarray:
        return np.einsum("jt,t,t...->j...", self.basis, self.weights, fvals)

    def coefficients(self, grid: SampleGrid) -> np.ndarray:
        """Shape (r + 1, n_el, n_pts)."""
        hit = self._cache.get(id(grid))
        if hit is not None and hit[0] is grid:
            return hit[1]
        U = self.slab.eval_grid(grid, self.times)
        fvals = np.broadcast_to(self.problem.f(grid.x[None], self.times[:, None, None], U), U.shape)
        coef = self._project(fvals)
        if len(self._cache) >= 4:
            self._cache.pop(next(iter(self._cache)))
        self._cache[id(grid)] = (grid, coef)
        return coef

    def at_points(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        U = np.stack([self.slab.at(t)(x) for t in self.times])
        fvals = np.broadcast_to(self.problem.f(x[None], self.times.reshape((-1,) + (1,) * x.ndim), U), U.shape)
        return self._project(fvals)

    def field(self, j: int) -> "_ProjectedCoefficient":
        return _ProjectedCoefficient(self, j)


class _ProjectedCoefficient:
    def __init__(self, owner: ProjectedReaction, j: int):
        self.owner, self.j = owner, j

    def eval_grid(self, grid: SampleGrid, deriv: int = 0) -> np.ndarray:
        if deriv:
            raise ValueError("x-derivatives of the projected reaction are not available")
        return self.owner.coefficients(grid)[self.j]

    def __call__(self, x, deriv: int = 0):
        if deriv:
            raise ValueError("x-derivatives of the projected reaction are not available")
        return self.owner.at_points(x)[self.j]


def slab_function(slab: SlabSolution) -> SpaceTimeFunction:
    """U on the slab as a SpaceTimeFunction."""
    return SpaceTimeFunction(slab.interval, [(orthonormal_series(j, slab.interval), CachedField(slab.field(j)), 1.0)
                                             for j in range(slab.r + 1)])


def jump_field(slab: SlabSolution) -> CachedField:
    """[U]_{m-1} = U(t_{m-1}^+) - U(t_{m-1}^-), evaluable on the common refinement."""
    return CachedField(FieldSum([(1.0, slab.trace_plus()), (-1.0, slab.prev_trace)]))


def temporal_reconstruction(slab: SlabSolution) -> SpaceTimeFunction:
    """U~ = U + Q [U]_{m-1}: degree r + 1, continuous across the slab's left node."""
    lift = SpaceTimeFunction(slab.interval, [(lifting_series(slab.r, slab.interval), jump_field(slab), 1.0)])
    return slab_function(slab) + lift


def discrete_laplacian(slab: SlabSolution, problem: ProblemDef, U_tilde: SpaceTimeFunction | None = None,
                       reaction: ProjectedReaction | None = None) -> SpaceTimeFunction:
    """A = Pi f(U) - U~_t on the slab (degree r in time)."""
    if U_tilde is None:
        U_tilde = temporal_reconstruction(slab)
    if reaction is None:
        reaction = ProjectedReaction(slab, problem)
    proj = SpaceTimeFunction(slab.interval, [(orthonormal_series(j, slab.interval), reaction.field(j), 1.0)
                                             for j in range(slab.r + 1)])
    return proj - U_tilde.dt()


def initial_laplacian(problem: ProblemDef) -> FunctionField:
    """A(t_0^-) = -kappa u0''."""
    return FunctionField(lambda x: -problem.kappa * np.asarray(problem.u0_xx(x), dtype=float))


def reconstructed_laplacian(A: SpaceTimeFunction, A_prev_trace, r: int) -> SpaceTimeFunction:
    """A~ = A + Q [A]_{m-1} with [A]_{m-1} = A(t_{m-1}^+) - A_prev_trace."""
    interval = A.interval
    jump = CachedField(FieldSum([(1.0, A.trace(interval.t_start)), (-1.0, A_prev_trace)]))
    return A + SpaceTimeFunction(interval, [(lifting_series(r, interval), jump, 1.0)])


class SlabReconstruction:
    """U~, A, A~ and the temporal residual of one slab.

    Args:
        slab: Solved slab.
        problem: Problem data.
        A_prev_trace: A(t_{m-1}^-) from the previous slab's reconstruction
            (default: -kappa u0'', the value used for the first slab).
        prev_meshes: Meshes T_{m-2}, T_{m-1} entering the union mesh (the
            mesh of the incoming trace is added automatically).
    """

    def __init__(self, slab: SlabSolution, problem: ProblemDef, A_prev_trace=None, prev_meshes=()):
        self.slab, self.problem = slab, problem
        self.interval = slab.interval
        self.U = slab_function(slab)
        self.jump = jump_field(slab)
        self.U_tilde = temporal_reconstruction(slab)
        self.reaction = ProjectedReaction(slab, problem)
        self.A = discrete_laplacian(slab, problem, self.U_tilde, self.reaction)
        self.A_prev_trace = initial_laplacian(problem) if A_prev_trace is None else A_prev_trace
        self.A_tilde = reconstructed_laplacian(self.A, self.A_prev_trace, slab.r)
        meshes = [m for m in prev_meshes if m is not None]
        prev_mesh = getattr(getattr(slab.prev_trace, "space", None), "mesh", None)
        if prev_mesh is not None:
            meshes.append(prev_mesh)
        meshes.append(slab.mesh)
        self.meshes = meshes

    def A_trace_minus(self) -> TimeTrace:
        """A(t_m^-), the left value for the next slab's A~."""
        return self.A.trace(self.interval.t_end)

    @property
    def union_mesh(self) -> Mesh1D:
        family = [m for m in self.meshes if m.same_family(self.slab.mesh)]
        return common_refinement(*family)

    def time_residual(self, grid: SampleGrid, times) -> np.ndarray:
        """R_time = f(U~) - U~_t - A~ on ``grid`` at ``times``."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        Ut = self.U_tilde.values(grid, times)
        f = self.problem.f(grid.x[None], times[:, None, None], Ut)
        return f - self.U_tilde.dt().values(grid, times) - self.A_tilde.values(grid, times)

    def time_residual_dual(self, grid: SampleGrid, times) -> np.ndarray:
        """Same residual through f(U~) - Pi f(U) - Q [A]_{m-1} (independent evaluation path)."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        Ut = self.U_tilde.values(grid, times)
        f = self.problem.f(grid.x[None], times[:, None, None], Ut)
        coef = self.reaction.coefficients(grid)
        proj = np.einsum("jt,jeq->teq", orthonormal_values(self.slab.r, times, self.interval), coef)
        A_plus = self.A.values(grid, [self.interval.t_start])[0]
        A_jump = A_plus - grid_values(self.A_prev_trace, grid)
        Q = lifting_series(self.slab.r, self.interval)(times)
        return f - proj - Q[:, None, None] * A_jump[None]


@dataclass
class EstimatorSample:
    """Estimator data of one slab, sampled at the slab's time quadrature nodes.

    Attributes:
        times, weights: Time quadrature on the slab.
        eta_space, eta_space_dt: Space and space-derivative estimators.
        eta_time: Integral of the sup-norm of R_time over the slab.
        U_norm: Sup-norm of U~ at the time nodes.
        residual_norm: Sup-norm of R_time at the time nodes.
        local_space, local_space_dt: Per-element contributions on the union
            mesh, shape (n_t, n_union_elements).
        union_mesh: Common refinement of T_{m-2}, T_{m-1}, T_m.
        jump_norm: Sup-norm of [U]_{m-1}, which equals max |U - U~| on the slab.
    """

    times: np.ndarray
    weights: np.ndarray
    eta_space: np.ndarray
    eta_space_dt: np.ndarray
    eta_time: float
    U_norm: np.ndarray
    residual_norm: np.ndarray
    local_space: np.ndarray
    local_space_dt: np.ndarray
    union_mesh: Mesh1D
    jump_norm: float
    k: float

    @property
    def int_eta_space(self) -> float:
        return float(self.weights @ self.eta_space)

    @property
    def int_eta_space_dt(self) -> float:
        return float(self.weights @ self.eta_space_dt)

    def bound_data(self) -> SlabBoundData:
        return SlabBoundData(self.k, self.times, self.weights, self.U_norm, self.eta_space,
                             self.eta_space_dt, self.eta_time, self.jump_norm)

    def log_line(self, m: int, t_m: float, r: int) -> str:
        """"m t_m k_m r_m eta_time int_eta_space int_eta_space_dt"."""
        vals = (t_m, self.k, r, self.eta_time, self.int_eta_space, self.int_eta_space_dt)
        return " ".join([str(m)] + [str(v) if isinstance(v, int) else repr(float(v)) for v in vals])


def estimators_for_slab(recon: SlabReconstruction, n_s: int | None = None,
                        union_mesh: Mesh1D | None = None) -> EstimatorSample:
    """eta_space(t_q), eta_space_dt(t_q) and eta_time on the union mesh.

    Args:
        recon: Reconstruction of the slab.
        n_s: Interior samples per element for sup-norms (default p + 3).
        union_mesh: Override of the union mesh (defaults to the common
            refinement of the reconstruction's carrier meshes).
    """
    slab, problem = recon.slab, recon.problem
    kappa = problem.kappa
    mesh = recon.union_mesh if union_mesh is None else union_mesh
    grid = sampling_grid(mesh, slab.space.p, n_s)
    times = slab.interval.nodes(slab.quad)
    weights = slab.interval.weights(slab.quad)

    Ut = recon.U_tilde
    Ut_dt = Ut.dt()
    U_vals = Ut.values(grid, times)
    total, per_el, per_node = estimate_samples(
        Ut.values(grid, times, dx=2), Ut.values(grid, times, dx=1), recon.A_tilde.values(grid, times), grid, kappa)
    total_dt, per_el_dt, per_node_dt = estimate_samples(
        Ut_dt.values(grid, times, dx=2), Ut_dt.values(grid, times, dx=1),
        recon.A_tilde.dt().values(grid, times), grid, kappa)
    f = problem.f(grid.x[None], times[:, None, None], U_vals)
    resid = f - Ut_dt.values(grid, times) - recon.A_tilde.values(grid, times)
    residual_norm = np.max(np.abs(resid), axis=(1, 2))
    jump_norm = float(np.max(np.abs(grid_values(recon.jump, grid))))
    return EstimatorSample(
        times=times, weights=weights, eta_space=np.asarray(total), eta_space_dt=np.asarray(total_dt),
        eta_time=float(weights @ residual_norm), U_norm=np.max(np.abs(U_vals), axis=(1, 2)),
        residual_norm=residual_norm, local_space=local_contributions(per_el, per_node),
        local_space_dt=local_contributions(per_el_dt, per_node_dt), union_mesh=mesh,
        jump_norm=jump_norm, k=slab.k)


def duality_residual(recon: SlabReconstruction) -> tuple[float, float]:
    """Check kappa (U(t)', v') = (A(t), v) for all discrete v at the time nodes.

    Returns:
        (max residual, max |(A(t), v)|).
    """
    slab = recon.slab
    space = slab.space
    _, K = space_matrices(space, recon.problem.kappa)
    family = [m for m in recon.meshes[-2:] if m.same_family(space.mesh)]
    qmesh = common_refinement(*family)
    n_q = space_quadrature_size(space.p, recon.problem.reaction_degree)
    grid = SampleGrid.gauss(qmesh, n_q)
    times = slab.interval.nodes(slab.quad)
    loads = space.assemble_load(recon.A.values(grid, times), grid)
    U_nodes = orthonormal_values(slab.r, times, slab.interval).T @ slab.coeffs
    stiff = np.stack([K.matvec(u) for u in U_nodes])
    return float(np.max(np.abs(stiff - loads))), float(np.max(np.abs(loads)))

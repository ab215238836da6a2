"""Adaptive space-time driver.

Each step inherits the previous mesh and step length, solves the slab,
evaluates the refinement indicators

    ref_time        = eta_time / theta~_m,
    ref_space|_K    = max over union sub-elements of Lambda / (theta~_m k_m),

and halves k and/or refines (and, in the first cycle, coarsens) the mesh
until ref_time <= ttol and ref_space <= stol+ everywhere. The conditional
bound is then advanced; a missing root of phi ends the run. Dividing by the
running product theta~ lets the tolerances grow with the solution, which is
what makes it possible to follow a blow-up.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

from .bound import DELTA_MAX, BoundState, LipschitzModulus, advance_psi
from .dg import SlabSolution, solve_slab
from .fem import FemSpace, SpatialField, energy_projection, sampling_grid, sup_norm
from .mesh import Mesh1D, MeshDelta, apply_delta, uniform_mesh
from .problems import ProblemDef
from .reconstruct import EstimatorSample, SlabReconstruction, estimators_for_slab
from .time_basis import IntervalMap

#: Logarithm used by the hp degree rule.
HP_LOG = math.log

#: Termination reasons that are a normal end of a run (the rest are aborts).
NORMAL_ENDINGS = frozenset({"no_root", "max_steps", "t_final"})


@dataclass
class AdaptConfig:
    """Driver parameters.

    Attributes:
        ttol: Temporal threshold.
        stol_plus: Spatial refinement threshold.
        stol_minus: Spatial coarsening threshold; defaults to
            0.1 * 2**-p * stol_plus.
        p: Spatial degree.
        r0: Initial temporal degree (the fixed degree when ``sigma`` is None).
        k0: Initial step length.
        sigma: Slope of the hp degree rule; None selects fixed-degree mode.
        max_steps: Step cap.
        delta_max: Upper end of the root search for phi.
        C_inf: Constant of the elliptic estimator.
        n_root: Root cells of the mesh hierarchy.
        initial_level: Uniform refinement level of the starting mesh.
        max_level: Elements are never bisected beyond this level.
        t_final: Optional end time.
        max_cycles: Solve/refine cycles allowed per step.
        tol_picard: Picard stopping tolerance.
        max_picard: Picard iteration cap.
        max_dofs: Spatial degrees of freedom budget.
        k_min_factor: Runs end once k drops below k_min_factor * k0.
    """

    ttol: float = 1e-3
    stol_plus: float = 1e-3
    stol_minus: float | None = None
    p: int = 2
    r0: int = 1
    k0: float = 1e-2
    sigma: float | None = None
    max_steps: int = 10_000
    delta_max: float = DELTA_MAX
    C_inf: float = 1.0
    n_root: int = 8
    initial_level: int = 0
    max_level: int = 40
    t_final: float | None = None
    max_cycles: int = 20
    tol_picard: float = 1e-11
    max_picard: int = 50
    max_dofs: int = 10_000_000
    k_min_factor: float = 1e-14

    def __post_init__(self):
        if self.stol_minus is None:
            self.stol_minus = 0.1 * 2.0 ** (-self.p) * self.stol_plus
        if not self.ttol > 0:
            raise ValueError("ttol must be positive")
        if not 0 < self.stol_minus < self.stol_plus:
            raise ValueError("need 0 < stol_minus < stol_plus")
        if self.p < 1 or self.r0 < 0:
            raise ValueError("need p >= 1 and r0 >= 0")
        if not self.k0 > 0:
            raise ValueError("k0 must be positive")

    @property
    def hp(self) -> bool:
        return self.sigma is not None

    @property
    def k_min(self) -> float:
        return self.k_min_factor * self.k0

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))


def hp_degree(k: float, config: AdaptConfig) -> int:
    """r = max(0, ceil(r0 + sigma log(k / k0))), or r0 in fixed-degree mode."""
    if not config.hp:
        return config.r0
    return max(0, math.ceil(config.r0 + config.sigma * HP_LOG(k / config.k0)))


@dataclass
class StepIndicators:
    """Refinement indicators of one slab; ``ref_space`` is aligned with ``mesh.ids``."""

    ref_time: float
    ref_space: np.ndarray
    mesh: Mesh1D

    def refine_ids(self, stol_plus: float) -> set:
        return {self.mesh.ids[i] for i in np.flatnonzero(self.ref_space > stol_plus)}

    def coarsen_ids(self, stol_minus: float) -> set:
        return {self.mesh.ids[i] for i in np.flatnonzero(self.ref_space < stol_minus)}


def indicators(est: EstimatorSample, mesh: Mesh1D, theta_tilde: float, lip: LipschitzModulus) -> StepIndicators:
    """ref_time and ref_space of a slab.

    Lambda on a union element is int L(s, |U~|, |U~| + eta) eta_loc ds + int eta_dt_loc ds,
    where eta is the global space estimator and eta_loc, eta_dt_loc the
    element's local contributions.
    """
    U = est.U_norm
    L = lip(est.times, U, U + est.eta_space)
    lam = (est.weights * L) @ est.local_space + est.weights @ est.local_space_dt
    parents = est.union_mesh.parent_positions(mesh)
    ref = np.zeros(mesh.n_elements)
    np.maximum.at(ref, parents, lam)
    return StepIndicators(est.eta_time / theta_tilde, ref / (theta_tilde * est.k), mesh)


class InitialResolutionError(RuntimeError):
    """The initial datum could not be resolved within the degree-of-freedom budget."""


def local_projection_error(problem: ProblemDef, space: FemSpace, projection: SpatialField) -> np.ndarray:
    """Sampled sup of |u0 - pi_1 u0| on each element."""
    grid = sampling_grid(space.mesh, space.p)
    diff = np.asarray(problem.u0(grid.x), dtype=float) - projection.eval_grid(grid)
    return np.max(np.abs(diff), axis=1)


def resolve_initial(problem: ProblemDef, config: AdaptConfig, mesh: Mesh1D | None = None):
    """Refine until the energy projection resolves u0 to stol-.

    Greedy: every element whose local sup of |u0 - pi_1 u0| exceeds stol- is
    bisected, and the projection recomputed, until the global sup is below
    stol-. (The second phase, resolving slab 1 against ttol and stol+, is the
    first step of :class:`AdaptiveSolver`.)

    Returns:
        (mesh, space, pi_1 u0).

    Raises:
        InitialResolutionError: if the mesh would exceed ``config.max_dofs``.
    """
    if mesh is None:
        mesh = uniform_mesh(problem.domain, config.n_root, config.initial_level)
    while True:
        space = FemSpace(mesh, config.p)
        proj = energy_projection(space, problem.u0, problem.u0_xx)
        local = local_projection_error(problem, space, proj)
        bad = np.flatnonzero(local > config.stol_minus)
        if bad.size == 0:
            return mesh, space, proj
        new = apply_delta(mesh, MeshDelta(refine={mesh.ids[i] for i in bad}), config.max_level)
        if new == mesh or config.p * new.n_elements - 1 > config.max_dofs:
            raise InitialResolutionError(
                f"cannot resolve u0 to stol- = {config.stol_minus:g} within {config.max_dofs} dofs "
                f"(current sup error {local.max():.3e})")
        mesh = new


@dataclass(frozen=True)
class BlowupEstimate:
    """Extrapolated blow-up time and rate history.

    ``gammas[i]`` uses the history pair (i, i + 1) against the final
    ``T_inf``; pairs not strictly before ``T_inf`` or with equal norms are nan.
    The last pair is the one ``T_inf`` was fitted to, so its rate is 1 by
    construction; :attr:`gamma` reports the pair before it.
    """

    T_inf: float
    gammas: np.ndarray

    @property
    def gamma(self) -> float:
        return float(self.gammas[-2]) if self.gammas.size >= 2 else math.nan


def blowup_extrapolate(history) -> BlowupEstimate | None:
    """Two-point extrapolation assuming |U| ~ C (T - t)^-1.

    Args:
        history: Sequence of (t_n, |U(t_n^-)|), oldest first.

    Returns:
        None when fewer than two points are given or the last norm did not
        strictly increase.
    """
    hist = np.asarray(history, dtype=float).reshape(-1, 2)
    if len(hist) < 2:
        return None
    (t0, n0), (t1, n1) = hist[-2], hist[-1]
    if not n1 > n0:
        return None
    T = (t1 * n1 - t0 * n0) / (n1 - n0)
    t, n = hist[:, 0], hist[:, 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        num = np.log(n[1:]) - np.log(n[:-1])
        den = np.log(T - t[:-1]) - np.log(T - t[1:])
        gam = num / den
    ok = (t[1:] < T) & (n[1:] != n[:-1]) & np.isfinite(gam)
    return BlowupEstimate(float(T), np.where(ok, gam, np.nan))


def _text(v) -> str:
    """Round-trip text of an int or float (numpy scalars included)."""
    return str(int(v)) if isinstance(v, (int, np.integer)) else repr(float(v))


@dataclass
class StepRecord:
    """One accepted step; the field order is the CSV column order."""

    m: int
    t: float
    k: float
    r: int
    n_dofs: int
    U_norm: float
    eta_time: float
    int_eta_space: float
    int_eta_space_dt: float
    psi: float
    theta: float
    theta_tilde: float
    delta: float
    bound_rec: float
    bound_err: float
    n_elements: int
    cycles: int
    picard_iterations: int

    @classmethod
    def columns(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    def row(self) -> list[str]:
        return [_text(getattr(self, c)) for c in self.columns()]

    def bound_log_line(self) -> str:
        """"m psi theta theta_tilde delta bound_rec bound_err"."""
        return " ".join(_text(v) for v in (self.m, self.psi, self.theta, self.theta_tilde, self.delta,
                                          self.bound_rec, self.bound_err))


@dataclass
class StepOutcome:
    accepted: bool
    record: StepRecord | None = None
    reason: str | None = None
    estimator_line: str | None = None


@dataclass
class DriverState:
    """Everything the next step needs from the last accepted one."""

    m: int
    t: float
    k: float
    r: int
    mesh: Mesh1D
    trace: SpatialField | None
    A_trace: object | None
    prev_mesh: Mesh1D | None
    bound: BoundState


@dataclass
class RunResult:
    records: list[StepRecord]
    reason: str
    state: DriverState
    blowup: BlowupEstimate | None
    estimator_lines: list[str] = field(default_factory=list)

    @property
    def normal(self) -> bool:
        return self.reason in NORMAL_ENDINGS

    @property
    def t_N(self) -> float:
        return self.state.t

    @property
    def U_norm(self) -> float:
        return self.records[-1].U_norm if self.records else math.nan

    @property
    def temporal_dofs(self) -> int:
        return sum(rec.r + 1 for rec in self.records)

    def summary(self) -> dict:
        b = self.blowup
        return {
            "N": len(self.records),
            "t_N": self.t_N,
            "U_norm": self.U_norm,
            "T_inf": b.T_inf if b else math.nan,
            "gamma": b.gamma if b else math.nan,
            "reason": self.reason,
            "dof_steps": sum(rec.n_dofs * (rec.r + 1) for rec in self.records),
        }


class AdaptiveSolver:
    """Step-by-step adaptive solver.

    Args:
        problem: Problem data.
        config: Driver parameters.
        mesh: Starting mesh (default: uniform mesh from the config).
    """

    def __init__(self, problem: ProblemDef, config: AdaptConfig, mesh: Mesh1D | None = None):
        self.problem, self.config = problem, config
        mesh0, _, _ = resolve_initial(problem, config, mesh)
        r0 = hp_degree(config.k0, config)
        self.state = DriverState(m=0, t=0.0, k=config.k0, r=r0, mesh=mesh0, trace=None, A_trace=None,
                                 prev_mesh=None, bound=BoundState())
        self.records: list[StepRecord] = []
        self.estimator_lines: list[str] = []
        self.history: list[tuple[float, float]] = []
        self.last_slab: SlabSolution | None = None
        self.last_estimates: EstimatorSample | None = None
        self.last_indicators: StepIndicators | None = None
        self.last_recon: SlabReconstruction | None = None

    def _shrink(self, k: float, r: int) -> tuple[float, int]:
        """Halve k; in hp mode quarter it instead when the degree would change."""
        if not self.config.hp:
            return 0.5 * k, r
        cand = 0.5 * k
        if hp_degree(cand, self.config) != r:
            cand = 0.25 * k
        return cand, hp_degree(cand, self.config)

    def step(self) -> StepOutcome:
        """Attempt one step; returns accepted with its record, or a termination reason."""
        cfg, st, problem = self.config, self.state, self.problem
        first = st.m == 0
        mesh, k, r = st.mesh, st.k, st.r
        for cycle in range(1, cfg.max_cycles + 1):
            k_slab = k
            if cfg.t_final is not None:
                k_slab = min(k, cfg.t_final - st.t)
            space = FemSpace(mesh, cfg.p)
            prev = energy_projection(space, problem.u0, problem.u0_xx) if first else st.trace
            slab, report = solve_slab(prev, space, IntervalMap(st.t, st.t + k_slab), r, problem,
                                      cfg.tol_picard, cfg.max_picard)
            if not report.converged:
                k, r = self._shrink(k, r)
                if k < cfg.k_min:
                    return StepOutcome(False, reason="time_step_underflow")
                continue
            prev_meshes = () if st.prev_mesh is None else (st.prev_mesh,)
            recon = SlabReconstruction(slab, problem, st.A_trace, prev_meshes)
            est = estimators_for_slab(recon)
            tentative = advance_psi(st.bound, est.bound_data(), problem.lipschitz, cfg.C_inf, cfg.delta_max)
            theta_tilde = tentative.theta_tilde if tentative.delta is not None else st.bound.theta_tilde
            ind = indicators(est, mesh, theta_tilde, problem.lipschitz)
            self.last_slab, self.last_estimates, self.last_indicators = slab, est, ind

            changed = False
            if ind.ref_time > cfg.ttol:
                k, r = self._shrink(k, r)
                if k < cfg.k_min:
                    return StepOutcome(False, reason="time_step_underflow")
                changed = True
            refine = ind.refine_ids(cfg.stol_plus)
            coarsen = ind.coarsen_ids(cfg.stol_minus) if cycle == 1 and not first else set()
            if refine or coarsen:
                new_mesh = apply_delta(mesh, MeshDelta(refine, coarsen), cfg.max_level)
                if cfg.p * new_mesh.n_elements - 1 > cfg.max_dofs:
                    return StepOutcome(False, reason="dof_budget")
                if new_mesh != mesh:
                    mesh, changed = new_mesh, True
                elif refine and not changed:
                    return StepOutcome(False, reason="max_level")
            if changed:
                continue
            if tentative.delta is None:
                return StepOutcome(False, reason="no_root")
            return self._accept(slab, recon, est, tentative, cycle, report.iterations, k)
        return StepOutcome(False, reason="cycle_cap")

    def _accept(self, slab, recon, est, bound, cycles, iterations, k) -> StepOutcome:
        st = self.state
        self.last_recon = recon
        trace = slab.trace_minus()
        m = st.m + 1
        t = slab.interval.t_end
        U_norm = sup_norm(trace)
        rec = StepRecord(
            m=m, t=t, k=slab.k, r=slab.r, n_dofs=slab.space.n_dofs, U_norm=U_norm, eta_time=est.eta_time,
            int_eta_space=est.int_eta_space, int_eta_space_dt=est.int_eta_space_dt, psi=bound.psi,
            theta=bound.theta, theta_tilde=bound.theta_tilde, delta=bound.delta,
            bound_rec=bound.bound_reconstructed, bound_err=bound.bound_error, n_elements=slab.mesh.n_elements,
            cycles=cycles, picard_iterations=iterations)
        prev_mesh = slab.prev_trace.space.mesh
        # k, not slab.k: a last step shortened to hit t_final does not shrink the inherited length
        self.state = DriverState(m=m, t=t, k=k, r=slab.r, mesh=slab.mesh, trace=trace,
                                 A_trace=recon.A_trace_minus(), prev_mesh=prev_mesh, bound=bound)
        self.records.append(rec)
        line = est.log_line(m, t, slab.r)
        self.estimator_lines.append(line)
        self.history.append((t, U_norm))
        return StepOutcome(True, record=rec, estimator_line=line)

    def run(self, callback=None) -> RunResult:
        """Step until a termination condition; ``callback(solver, record)`` runs after every accepted step."""
        cfg = self.config
        reason = "max_steps"
        while self.state.m < cfg.max_steps:
            if cfg.t_final is not None and self.state.t >= cfg.t_final * (1 - 1e-14):
                reason = "t_final"
                break
            out = self.step()
            if not out.accepted:
                reason = out.reason
                break
            if callback is not None:
                callback(self, out.record)
        else:
            if cfg.t_final is not None and self.state.t >= cfg.t_final * (1 - 1e-14):
                reason = "t_final"
        return RunResult(list(self.records), reason, self.state, blowup_extrapolate(self.history),
                         list(self.estimator_lines))


def run_adaptive(problem: ProblemDef, config: AdaptConfig, callback=None) -> RunResult:
    return AdaptiveSolver(problem, config).run(callback)


@dataclass
class MarchStep:
    """A fixed-step slab with its reconstruction, estimators and bound state."""

    slab: SlabSolution
    recon: SlabReconstruction
    estimates: EstimatorSample
    bound: BoundState


def march(problem: ProblemDef, mesh: Mesh1D, p: int, r: int, k: float, n_steps: int, C_inf: float = 1.0,
          estimators: bool = True, tol_picard: float = 1e-11) -> list[MarchStep]:
    """Uniform steps on a fixed mesh, starting from the energy projection of u0.

    With ``estimators=False`` only slabs are computed (reconstruction,
    estimates and bound are None).
    """
    space = FemSpace(mesh, p)
    trace = energy_projection(space, problem.u0, problem.u0_xx)
    A_trace, prev_mesh = None, None
    bound = BoundState()
    out = []
    for m in range(n_steps):
        slab, report = solve_slab(trace, space, IntervalMap(m * k, (m + 1) * k), r, problem, tol_picard)
        if not report.converged:
            raise RuntimeError(f"Picard iteration did not converge on slab {m + 1}")
        recon = est = None
        if estimators:
            recon = SlabReconstruction(slab, problem, A_trace, () if prev_mesh is None else (prev_mesh,))
            est = estimators_for_slab(recon)
            bound = advance_psi(bound, est.bound_data(), problem.lipschitz, C_inf)
            A_trace = recon.A_trace_minus()
        out.append(MarchStep(slab, recon, est, bound if estimators else None))
        prev_mesh = mesh
        trace = slab.trace_minus()
    return out

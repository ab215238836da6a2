import numpy as np
import pytest

from dgblowup.adapt import march
from dgblowup.bound import LipschitzModulus
from dgblowup.dg import SlabSolution, solve_slab
from dgblowup.fem import FemSpace, FunctionField, SampleGrid, SpatialField, elliptic_solve, sampling_grid
from dgblowup.mesh import uniform_mesh
from dgblowup.problems import ProblemDef, preset
from dgblowup.reconstruct import (SlabReconstruction, duality_residual, estimators_for_slab, initial_laplacian,
                                  temporal_reconstruction)
from dgblowup.time_basis import IntervalMap, gauss_legendre


def sine(x):
    return np.sin(np.pi * np.asarray(x, dtype=float))


def single_dof_slab(prev_value, slab_value, k=0.5):
    space = FemSpace(uniform_mesh((0.0, 1.0), 1), 2)
    prev = SpatialField(space, [prev_value])
    coeffs = np.array([[slab_value * np.sqrt(k)]])
    return SlabSolution(IntervalMap(0.0, k), 0, space, coeffs, prev, gauss_legendre(3))


def test_r0_hand_reconstruction():
    slab = single_dof_slab(1.0, 2.0)
    Ut = temporal_reconstruction(slab)
    vals = [float(Ut(np.array([0.5]), t)[0]) for t in (0.0, 0.25, 0.5)]
    assert vals == pytest.approx([1.0, 1.5, 2.0], abs=1e-14)


def test_zero_jump_gives_identity():
    slab = single_dof_slab(1.0, 1.0)
    grid = SampleGrid.sampling(slab.mesh, 4)
    times = np.linspace(0.0, 0.5, 5)
    assert np.allclose(temporal_reconstruction(slab).values(grid, times), slab.eval_grid(grid, times), atol=1e-14)


@pytest.fixture(scope="module")
def nonlinear_steps():
    prob = preset("quadratic_gaussian")
    return prob, march(prob, uniform_mesh(prob.domain, 8, 2), 3, 2, 0.01, 3)


def test_reconstruction_endpoint_values(nonlinear_steps):
    _, steps = nonlinear_steps
    slab = steps[1].slab
    grid = sampling_grid(slab.mesh, 3)
    Ut = steps[1].recon.U_tilde
    iv = slab.interval
    assert np.allclose(Ut.values(grid, [iv.t_start])[0], slab.prev_trace.eval_grid(grid), atol=1e-12)
    assert np.allclose(Ut.values(grid, [iv.t_end])[0], slab.trace_minus().eval_grid(grid), atol=1e-12)


def test_continuity_across_nodes(nonlinear_steps):
    _, steps = nonlinear_steps
    grid = sampling_grid(steps[0].slab.mesh, 3)
    for a, b in zip(steps[:-1], steps[1:]):
        t = a.slab.interval.t_end
        for name in ("U_tilde", "A_tilde"):
            left = getattr(a.recon, name).values(grid, [t])
            right = getattr(b.recon, name).values(grid, [t])
            assert np.max(np.abs(left - right)) < 1e-10 * max(1.0, np.max(np.abs(left)))


def test_duality(nonlinear_steps):
    _, steps = nonlinear_steps
    for st in steps:
        res, size = duality_residual(st.recon)
        assert res < 1e-9 * size


def test_time_residual_two_paths(nonlinear_steps):
    _, steps = nonlinear_steps
    recon = steps[2].recon
    grid = sampling_grid(recon.slab.mesh, 3)
    times = np.linspace(recon.interval.t_start, recon.interval.t_end, 7)
    a = recon.time_residual(grid, times)
    b = recon.time_residual_dual(grid, times)
    assert np.max(np.abs(a - b)) < 1e-11 * max(1.0, np.max(np.abs(a)))


def test_initial_laplacian():
    A0 = initial_laplacian(preset("linear_heat"))
    x = np.linspace(0.0, 1.0, 9)
    assert np.allclose(A0(x), np.pi**2 * sine(x))


def test_steady_slab_has_time_constant_laplacian_and_zero_residual():
    g = lambda x: 1.0 + x * x
    prob = ProblemDef(name="steady", domain=(0.0, 1.0), kappa=1.0, u0=sine, u0_xx=sine,
                      f=lambda x, t, u: g(x) + 0 * u, lipschitz=LipschitzModulus.zero(), reaction_degree=1)
    space = FemSpace(uniform_mesh((0.0, 1.0), 4), 3)
    steady = elliptic_solve(space, 1.0, g)
    slab, _ = solve_slab(steady, space, IntervalMap(0.0, 0.1), 2, prob)
    recon = SlabReconstruction(slab, prob, A_prev_trace=FunctionField(g))
    grid = sampling_grid(space.mesh, 3)
    times = np.linspace(0.0, 0.1, 5)
    A = recon.A.values(grid, times)
    assert np.allclose(A, g(grid.x)[None], atol=1e-10)
    assert np.max(np.abs(recon.time_residual(grid, times))) < 1e-10


def test_union_mesh_unchanged_mesh():
    prob = preset("linear_manufactured")
    mesh = uniform_mesh(prob.domain, 8)
    steps = march(prob, mesh, 2, 1, 0.05, 3)
    assert steps[-1].estimates.union_mesh == mesh


@pytest.mark.parametrize("r", [0, 1, 2])
def test_time_estimator_order(r):
    prob = preset("linear_manufactured")
    mesh = uniform_mesh(prob.domain, 8, 3)
    eta = [march(prob, mesh, 4, r, k, 1)[0].estimates.eta_time for k in (0.02, 0.01)]
    ratio = eta[0] / eta[1]
    assert ratio == pytest.approx(2 ** (r + 2), rel=0.35)


def test_space_estimator_drops_with_refinement():
    prob = preset("linear_manufactured")
    eta = [march(prob, uniform_mesh(prob.domain, 4, lvl), 1, 1, 0.01, 1)[0].estimates.eta_space.max()
           for lvl in (0, 1)]
    assert eta[1] < eta[0]


def test_estimator_log_line(nonlinear_steps):
    _, steps = nonlinear_steps
    est = steps[0].estimates
    fields = est.log_line(1, 0.01, 2).split()
    assert len(fields) == 7
    assert float(fields[4]) == est.eta_time

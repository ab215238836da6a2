import numpy as np
import pytest

from dgblowup.bound import LipschitzModulus
from dgblowup.dg import SlabOperator, discrete_residual, solve_slab, trace_minus
from dgblowup.fem import FemSpace, SampleGrid, SpatialField, assemble, elliptic_solve, energy_projection
from dgblowup.mesh import MeshDelta, apply_delta, uniform_mesh
from dgblowup.problems import ProblemDef, preset
from dgblowup.time_basis import IntervalMap


def sine(x):
    return np.sin(np.pi * np.asarray(x, dtype=float))


def linear_problem(lam=0.0, g=None, kappa=1.0):
    g = (lambda x: 0.0 * x) if g is None else g
    return ProblemDef(name="test", domain=(0.0, 1.0), kappa=kappa, u0=sine, u0_xx=lambda x: -np.pi**2 * sine(x),
                      f=lambda x, t, u: lam * u + g(x), lipschitz=LipschitzModulus.constant(abs(lam)),
                      reaction_degree=1)


def test_r0_is_implicit_euler():
    space = FemSpace(uniform_mesh((0.0, 1.0), 6), 2)
    prev = space.interpolate(sine)
    k = 0.05
    slab, report = solve_slab(prev, space, IntervalMap(0.0, k), 0, linear_problem())
    assert report.converged
    M, K = assemble(space, 1.0)
    expected = np.linalg.solve(M.toarray() + k * K.toarray(), M.matvec(prev.coefficients))
    assert np.allclose(trace_minus(slab).coefficients, expected, atol=1e-13)
    # r = 0: the trace is the single coefficient field
    assert np.allclose(slab.at(0.5 * k).coefficients, expected, atol=1e-13)


@pytest.mark.parametrize("r", [0, 1, 2])
def test_nodal_superconvergence_single_dof(r):
    # one interior dof: the scheme reduces to a scalar ODE u' = (lam - K/M) u
    space = FemSpace(uniform_mesh((0.0, 1.0), 1), 2)
    M, K = assemble(space, 0.01)
    rate = 0.5 - K.toarray()[0, 0] / M.toarray()[0, 0]
    prob = linear_problem(lam=0.5, kappa=0.01)
    ks, errs = [0.5, 0.25, 0.125, 0.0625], []
    for k in ks:
        u = space.interpolate(lambda x: 1.0 + 0 * x)
        t = 0.0
        for _ in range(int(round(1.0 / k))):
            slab, _ = solve_slab(u, space, IntervalMap(t, t + k), r, prob)
            u, t = slab.trace_minus(), t + k
        errs.append(abs(u.coefficients[0] - np.exp(rate)))
    order = np.polyfit(np.log(ks), np.log(errs), 1)[0]
    assert order == pytest.approx(2 * r + 1, abs=0.3)


def test_steady_state_is_constant_in_time():
    g = lambda x: np.cosh(x) - 1.0
    prob = linear_problem(g=g, kappa=0.7)
    space = FemSpace(uniform_mesh((0.0, 1.0), 5), 3)
    steady = elliptic_solve(space, 0.7, g)
    slab, _ = solve_slab(steady, space, IntervalMap(0.0, 0.3), 3, prob)
    assert np.max(np.abs(slab.coeffs[1:])) < 1e-10
    assert np.allclose(slab.trace_minus().coefficients, steady.coefficients, atol=1e-12)


def test_trace_minus_matches_evaluation():
    rng = np.random.default_rng(0)
    space = FemSpace(uniform_mesh((0.0, 1.0), 4), 2)
    prob = linear_problem(lam=1.0)
    slab, _ = solve_slab(space.interpolate(sine), space, IntervalMap(0.0, 0.1), 3, prob)
    slab.coeffs = rng.normal(size=slab.coeffs.shape)
    assert np.allclose(trace_minus(slab).coefficients, slab.at(0.1 - 1e-12).coefficients, atol=1e-9)


@pytest.mark.parametrize("r", [0, 1, 2, 3])
def test_nonlinear_discrete_residual(r):
    prob = preset("quadratic_gaussian")
    mesh = uniform_mesh(prob.domain, 8, 2)
    space = FemSpace(mesh, 3)
    prev = energy_projection(space, prob.u0, prob.u0_xx)
    slab, report = solve_slab(prev, space, IntervalMap(0.0, 0.01), r, prob)
    assert report.converged
    res, size = discrete_residual(slab)
    assert np.max(np.abs(res)) < 1e-10 * size


def test_cross_mesh_trace():
    # the incoming trace lives on a different mesh of the same family
    prob = linear_problem(lam=-1.0)
    coarse = uniform_mesh((0.0, 1.0), 4)
    fine = apply_delta(coarse, MeshDelta(refine={coarse.ids[1]}, coarsen=set()))
    prev = FemSpace(coarse, 2).interpolate(sine)
    slab, report = solve_slab(prev, FemSpace(fine, 2), IntervalMap(0.0, 0.02), 1, prob)
    assert report.converged
    res, size = discrete_residual(slab)
    assert np.max(np.abs(res)) < 1e-10 * size


def test_picard_failure_reported():
    prob = preset("quadratic_gaussian")
    space = FemSpace(uniform_mesh(prob.domain, 8, 1), 2)
    prev = energy_projection(space, prob.u0, prob.u0_xx)
    _, report = solve_slab(prev, space, IntervalMap(0.0, 1.0), 1, prob, max_iters=30)
    assert not report.converged


def test_operator_reuse_gives_same_solution():
    prob = preset("quadratic_gaussian")
    space = FemSpace(uniform_mesh(prob.domain, 8, 1), 2)
    prev = energy_projection(space, prob.u0, prob.u0_xx)
    iv = IntervalMap(0.0, 0.01)
    op = SlabOperator(space, prob.kappa, iv.k, 2)
    a, _ = solve_slab(prev, space, iv, 2, prob, operator=op)
    b, _ = solve_slab(prev, space, iv, 2, prob)
    assert np.array_equal(a.coeffs, b.coeffs)


def test_eval_grid_time_derivative():
    prob = linear_problem(lam=1.0)
    space = FemSpace(uniform_mesh((0.0, 1.0), 4), 2)
    slab, _ = solve_slab(space.interpolate(sine), space, IntervalMap(0.0, 0.2), 2, prob)
    grid = SampleGrid.sampling(space.mesh, 3)
    t, h = 0.1, 1e-6
    fd = (slab.eval_grid(grid, [t + h]) - slab.eval_grid(grid, [t - h])) / (2 * h)
    assert np.allclose(slab.eval_grid(grid, [t], deriv_t=1), fd, atol=1e-6)

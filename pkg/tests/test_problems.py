import numpy as np
import pytest

from dgblowup.problems import PRESETS, lipschitz_violation, preset


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_lipschitz_modulus_consistent(name):
    assert lipschitz_violation(preset(name), scale=3.0) <= 1.0 + 1e-9


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_initial_data_vanish_on_boundary(name):
    prob = preset(name)
    assert np.allclose(prob.u0(np.array(prob.domain)), 0.0, atol=1e-14)


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_second_derivative_matches_finite_difference(name):
    prob = preset(name)
    a, b = prob.domain
    x = np.linspace(a + 0.1, b - 0.1, 23)
    h = 1e-4
    fd = (prob.u0(x + h) - 2 * prob.u0(x) + prob.u0(x - h)) / h**2
    assert np.allclose(prob.u0_xx(x), fd, rtol=1e-5, atol=1e-5 * np.max(np.abs(fd)))


def test_quadratic_gaussian_shape():
    prob = preset("quadratic_gaussian")
    assert prob.domain == (-5.0, 5.0)
    assert prob.lipschitz.quadratic
    assert prob.u0(0.0) == pytest.approx(10.0, abs=1e-20 + 10 * np.exp(-50.0))


@pytest.mark.parametrize("name", ["linear_manufactured", "linear_heat"])
def test_exact_solutions_satisfy_pde(name):
    prob = preset(name)
    x = np.linspace(0.05, 0.95, 11)
    t, h = 0.3, 1e-4
    u = prob.exact
    u_t = (u(x, t + h) - u(x, t - h)) / (2 * h)
    u_xx = (u(x + h, t) - 2 * u(x, t) + u(x - h, t)) / h**2
    assert np.allclose(u_t - prob.kappa * u_xx, prob.f(x, t, u(x, t)), atol=1e-5)
    assert np.allclose(u(x, 0.0), prob.u0(x))


def test_unknown_preset():
    with pytest.raises(KeyError, match="unknown problem"):
        preset("nope")

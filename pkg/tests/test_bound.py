import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dgblowup.bound import (BoundState, LipschitzModulus, SlabBoundData, advance_psi, delta_root, phi,
                            psi_increment, theta)

QUAD = LipschitzModulus.sum_of_arguments()


def test_linear_root_is_one():
    d = SlabBoundData.constant(0.1, 3.0, 1e-3)
    assert delta_root(0.5, d, LipschitzModulus.zero(), 1.0) == 1.0
    assert phi(2.0, 0.5, d, LipschitzModulus.zero(), 1.0) == -1.0


def test_quadratic_root_psi_zero():
    # B = 2 k U = 0.5: phi = 1 - 0.5 delta
    d = SlabBoundData.constant(0.1, 2.5)
    assert delta_root(0.0, d, QUAD, 1.0) == pytest.approx(2.0, rel=1e-15)


def test_quadratic_root_hand_value():
    # 0.02 d^2 - 0.5 d + 1 with k = 0.1, U = 2.5 and psi = 0.1
    d = SlabBoundData.constant(0.1, 2.5)
    expected = (0.5 - math.sqrt(0.25 - 0.08)) / 0.04
    assert expected == pytest.approx(2.1922, abs=1e-4)
    assert delta_root(0.1, d, QUAD, 1.0) == pytest.approx(expected, rel=1e-14)
    assert delta_root(0.1, d, QUAD, 1.0, method="newton") == pytest.approx(expected, rel=1e-10)


def test_quadratic_negative_discriminant():
    # B = 0.5: real roots need (B - 1)^2 >= 4 (2 k psi), i.e. 2 k psi <= 0.0625
    d = SlabBoundData.constant(0.1, 2.5)
    assert delta_root(0.35, d, QUAD, 1.0) is None
    assert delta_root(0.35, d, QUAD, 1.0, method="newton") is None


def test_quadratic_small_positive_discriminant():
    # 2 k psi = 0.05 leaves 0.25 - 0.2 > 0: smaller root (0.5 - sqrt(0.05)) / 0.1
    d = SlabBoundData.constant(0.1, 2.5)
    assert delta_root(0.25, d, QUAD, 1.0) == pytest.approx((0.5 - math.sqrt(0.05)) / 0.1, rel=1e-14)


def test_theta_trivial_and_toy():
    d = SlabBoundData.constant(0.1, 1.0)
    assert theta(3.0, 1.0, d, LipschitzModulus.zero(), 1.0) == 1.0
    assert theta(1.0, 0.5, d, QUAD, 1.0) == pytest.approx(math.exp(0.25), rel=1e-15)


@settings(max_examples=100)
@given(st.floats(1e-4, 1.0), st.floats(0.0, 10.0), st.floats(0.0, 1.0), st.floats(0.0, 5.0))
def test_phi_at_one_nonnegative(k, U, eta, psi):
    d = SlabBoundData.constant(k, U, eta)
    assert phi(1.0, psi, d, QUAD, 1.0) >= -1e-12


@settings(max_examples=100)
@given(st.floats(1e-4, 0.1), st.floats(0.0, 5.0), st.floats(0.0, 1e-2), st.floats(0.0, 1.0),
       st.floats(1.0, 5.0), st.floats(0.0, 2.0))
def test_theta_monotone_in_C(k, U, eta, psi, delta, extra):
    d = SlabBoundData.constant(k, U, eta)
    assert theta(delta, psi, d, QUAD, 1.0 + extra) >= theta(delta, psi, d, QUAD, 1.0)


@settings(max_examples=100)
@given(st.floats(1e-4, 0.1), st.floats(0.0, 4.0), st.floats(0.0, 1e-3), st.floats(0.0, 1.0))
def test_quadratic_vs_newton(k, U, eta, psi):
    d = SlabBoundData.constant(k, U, eta)
    q = delta_root(psi, d, QUAD, 1.0, method="quadratic")
    n = delta_root(psi, d, QUAD, 1.0, method="newton")
    if q is None or n is None:
        assert q is None and n is None or abs(phi(q or n, psi, d, QUAD, 1.0)) < 1e-9
    else:
        assert n == pytest.approx(q, rel=1e-10)


def test_all_zero_estimators():
    state = BoundState()
    d = SlabBoundData.constant(0.1, 1.0)
    for m in range(1, 4):
        state = advance_psi(state, d, LipschitzModulus.zero(), 1.0)
        assert (state.m, state.psi, state.theta, state.delta) == (m, 0.0, 1.0, 1.0)
        assert state.bound_reconstructed == 0.0 and state.bound_error == 0.0


def test_first_step_has_no_carried_term():
    d = SlabBoundData.constant(0.1, 1.0, 1e-3, 2e-3, 5e-4)
    state = advance_psi(BoundState(), d, QUAD, 1.0)
    assert state.psi == psi_increment(d, QUAD, 1.0)


def test_two_step_hand_oracle():
    # eta_time = 1e-3, int eta_space = int eta_space_dt = 1e-4, |U~| = 1, L(a, b) = a + b, C = 1
    k, U, eta_t = 0.05, 1.0, 1e-3
    eta_s = eta_dt = 1e-4 / k
    d = SlabBoundData.constant(k, U, eta_s, eta_dt, eta_t)
    psi_prev, theta_prev, states = 0.0, 1.0, BoundState()
    max_eta = eta_s
    for _ in range(2):
        psi = theta_prev * psi_prev + k * (2 * U + eta_s) * eta_s + eta_t + k * eta_dt
        a, b = 2 * k * psi, 2 * k * (U + eta_s) - 1
        delta = 2 / (-b + math.sqrt(b * b - 4 * a))
        th = math.exp(k * (delta * psi + 2 * (U + eta_s)))
        states = advance_psi(states, d, QUAD, 1.0)
        for got, want in ((states.psi, psi), (states.delta, delta), (states.theta, th),
                          (states.bound_reconstructed, th * psi + max_eta)):
            assert got == pytest.approx(want, rel=1e-14)
        psi_prev, theta_prev = psi, th


def test_no_root_state():
    d = SlabBoundData.constant(0.1, 10.0)
    state = advance_psi(BoundState(), d, QUAD, 1.0)
    assert state.delta is None and not state.has_root
    assert math.isnan(state.bound_reconstructed)


def test_jump_term_enters_error_bound():
    d = SlabBoundData.constant(0.1, 1.0, 1e-4)
    d.jump_norm = 0.25
    state = advance_psi(BoundState(), d, QUAD, 1.0)
    assert state.bound_error == pytest.approx(state.bound_reconstructed + 0.25)

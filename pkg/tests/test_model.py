import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import minimize

from ddchoice import ModelParams
from ddchoice.model import (
    EULER_MASCHERONI,
    additive_payoff,
    budget_transition,
    logsum_ccp,
    marginal_utility,
    period_utility,
    retirement_value,
)
from ddchoice.rng import make_generator

# ---------------------------------------------------------------------------
# flow utility against independent algebraic forms
# ---------------------------------------------------------------------------


def test_utility_closed_forms():
    # sigma = 2: u = -exp(eta)/c
    assert period_utility(20.0, 0.3, 2.0) == pytest.approx(
        -math.exp(0.3) / 20.0, rel=1e-14
    )
    # sigma = 1.5: u = -2 exp(eta/2)/sqrt(c)
    assert period_utility(25.0, 0.8, 1.5) == pytest.approx(
        -2.0 * math.exp(0.4) / 5.0, rel=1e-14
    )
    # sigma = 0.5: u = 2 sqrt(c) exp(-eta/2)
    assert period_utility(16.0, 0.5, 0.5) == pytest.approx(
        8.0 * math.exp(-0.25), rel=1e-14
    )
    # frozen spot value, sigma = 2, c = 20, eta = 0.3
    assert period_utility(20.0, 0.3, 2.0) == pytest.approx(
        -0.06749294037880016, abs=1e-16
    )


def test_marginal_utility_closed_form_and_fd():
    # sigma = 2: u' = exp(eta)/c^2
    assert marginal_utility(20.0, 0.3, 2.0) == pytest.approx(
        math.exp(0.3) / 400.0, rel=1e-14
    )
    rng = make_generator(3)
    for _ in range(20):
        c = float(rng.uniform(0.5, 80.0))
        eta = float(rng.uniform(0.01, 0.99))
        sig = float(rng.uniform(1.1, 3.5))
        h = 1e-6 * c
        fd = (period_utility(c + h, eta, sig) - period_utility(c - h, eta, sig)) / (
            2.0 * h
        )
        assert marginal_utility(c, eta, sig) == pytest.approx(fd, rel=1e-7)


@given(
    c=st.floats(0.1, 200.0),
    eta=st.floats(0.0, 1.0),
    sigma=st.floats(1.05, 4.0),
)
def test_utility_monotonicity(c, eta, sigma):
    u = period_utility(c, eta, sigma)
    assert period_utility(c * 1.01, eta, sigma) > u
    if eta < 0.99:
        assert period_utility(c, eta + 0.01, sigma) < u
    assert marginal_utility(c, eta, sigma) > 0
    assert marginal_utility(c * 1.01, eta, sigma) < marginal_utility(c, eta, sigma)


def test_additive_payoff_values():
    p = ModelParams()
    assert additive_payoff(0, 0, 0.7, 1, p) == 0.0
    assert additive_payoff(1, 0, 0.25, 1, p) == pytest.approx(0.0 + 2.0 * 0.25 - 2.0)
    assert additive_payoff(1, 1, 0.5, 2, p) == pytest.approx(-0.5 + 2.5 * 0.5)
    arr = additive_payoff(
        np.array([0, 1]), np.array([1, 0]), np.array([0.5, 0.5]), np.array([1, 2]), p
    )
    np.testing.assert_allclose(arr, [0.0, -0.5 + 1.25 - 2.2])


def test_budget_transition():
    p = ModelParams()
    assert budget_transition(40.0, 10.0, 1, 60.0, p) == pytest.approx(
        1.015 * 40.0 - 10.0 + 60.0
    )
    assert budget_transition(40.0, 10.0, 0, 60.0, p) == pytest.approx(
        1.015 * 40.0 - 10.0 + 30.0
    )


# ---------------------------------------------------------------------------
# retirement closed form against a brute-force consumption plan
# ---------------------------------------------------------------------------


def brute_force_retirement(a, y, sigma, p):
    """Maximize sum_s beta^s u(c_s) over the free c_0..c_{S-2}; the last
    period consumes everything. Only uses the budget recursion, not the
    closed form."""
    S = p.T_retire
    R = 1.0 + p.r
    pen = p.pension_rate * y

    def value(cs):
        a_s = a
        total = 0.0
        for s in range(S - 1):
            total += p.beta**s * period_utility(cs[s], 0.5, sigma)
            a_s = R * a_s - cs[s] + pen
        c_last = R * a_s + pen
        if c_last <= 0:
            return -1e12
        total += p.beta ** (S - 1) * period_utility(c_last, 0.5, sigma)
        return total

    flat = (R * a + pen * S) / S
    res = minimize(
        lambda cs: -value(cs),
        x0=np.full(S - 1, flat),
        method="Nelder-Mead",
        options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 20000},
    )
    return -res.fun, res.x[0]


@pytest.mark.parametrize("a,y,sigma", [(40.0, 30.0, 1.7), (5.0, 60.0, 2.0), (120.0, 60.0, 1.5)])
def test_retirement_value_brute_force(a, y, sigma):
    p = ModelParams()
    val, c0, mu0 = retirement_value(a, y, sigma, p)
    val_bf, c0_bf = brute_force_retirement(a, y, sigma, p)
    assert val == pytest.approx(val_bf, rel=1e-8)
    assert c0 == pytest.approx(c0_bf, rel=5e-4)
    assert mu0 == pytest.approx(marginal_utility(c0, 0.5, sigma), rel=1e-13)


def test_retirement_envelope_is_r_times_mu():
    p = ModelParams()
    for a, y, sigma in [(40.0, 30.0, 1.7), (15.0, 60.0, 2.0)]:
        h = 1e-5
        vp, _, _ = retirement_value(a + h, y, sigma, p)
        vm, _, _ = retirement_value(a - h, y, sigma, p)
        _, _, mu0 = retirement_value(a, y, sigma, p)
        assert (vp - vm) / (2 * h) == pytest.approx((1.0 + p.r) * mu0, rel=1e-6)


def test_retirement_unit_growth_branch():
    # beta = (1+r)^(sigma-1) makes consumption growth equal to 1+r, the
    # annuity factor degenerates to T_retire
    p = ModelParams().replace(beta=1.015**-0.5)
    sigma = 0.5
    val, c0, _ = retirement_value(50.0, 30.0, sigma, p)
    val_bf, c0_bf = brute_force_retirement(50.0, 30.0, sigma, p)
    assert val == pytest.approx(val_bf, rel=1e-8)
    assert np.isfinite(val) and c0 > 0


def test_retirement_monotone_in_assets_and_vectorized():
    p = ModelParams()
    a = np.linspace(0.0, 300.0, 50)
    val, c0, mu0 = retirement_value(a, 60.0, 2.0, p)
    assert val.shape == a.shape
    assert np.all(np.diff(val) > 0)
    assert np.all(np.diff(c0) > 0)
    assert np.all(np.diff(mu0) < 0)


def test_retirement_floor_kicks_in_at_zero_resources():
    p = ModelParams()
    val, c0, _ = retirement_value(0.0, 0.0, 2.0, p)
    assert c0 == p.c_floor


# ---------------------------------------------------------------------------
# logit choice kernel
# ---------------------------------------------------------------------------


def test_logsum_ccp_against_monte_carlo():
    v0, v1 = -1.3, -0.6
    p1, ls = logsum_ccp(v0, v1)
    rng = make_generator(11)
    g = -np.log(-np.log(rng.random((400_000, 2))))
    picks = v1 + g[:, 1] > v0 + g[:, 0]
    vmax = np.maximum(v0 + g[:, 0], v1 + g[:, 1])
    se_p = picks.std() / math.sqrt(picks.size)
    se_v = vmax.std() / math.sqrt(vmax.size)
    assert p1 == pytest.approx(picks.mean(), abs=5 * se_p)
    assert ls == pytest.approx(vmax.mean(), abs=5 * se_v)


def test_logsum_ccp_identities():
    p1, ls = logsum_ccp(0.0, 0.0)
    assert p1 == pytest.approx(0.5)
    assert ls == pytest.approx(math.log(2.0) + EULER_MASCHERONI)
    # logistic identity
    v0, v1 = 0.4, -2.1
    p1, _ = logsum_ccp(v0, v1)
    assert p1 == pytest.approx(1.0 / (1.0 + math.exp(v0 - v1)), rel=1e-12)


def test_logsum_ccp_stability():
    p1, ls = logsum_ccp(-np.inf, -4.0)
    assert p1 == 1.0
    assert ls == pytest.approx(-4.0 + EULER_MASCHERONI)
    p1, ls = logsum_ccp(900.0, 901.0)
    assert np.isfinite(ls)
    assert 0.0 < p1 < 1.0


@given(
    v0=st.floats(-50.0, 50.0),
    v1=st.floats(-50.0, 50.0),
    shift=st.floats(-30.0, 30.0),
)
def test_logsum_ccp_properties(v0, v1, shift):
    p1, ls = logsum_ccp(v0, v1)
    # saturates to the closed interval for |v1 - v0| beyond float precision
    assert 0.0 <= p1 <= 1.0
    assert ls >= max(v0, v1) + EULER_MASCHERONI
    # symmetry and shift invariance
    q1, ls_sym = logsum_ccp(v1, v0)
    assert p1 + q1 == pytest.approx(1.0, abs=1e-12)
    assert ls_sym == pytest.approx(ls, rel=1e-12)
    p1_s, ls_s = logsum_ccp(v0 + shift, v1 + shift)
    assert p1_s == pytest.approx(p1, abs=1e-9)
    assert ls_s - ls == pytest.approx(shift, abs=1e-9)

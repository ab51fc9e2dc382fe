"""Flow utility, additive payoffs, budget transition, and the retirement value.

All functions are vectorized over numpy arrays. The scalar taste shock eta
scales consumption inside a CRRA kernel, so conditional consumption policies
are strictly increasing in eta (the rank-invariance property the estimator
relies on). The curvature parameter may differ across the discrete choice and
across unobserved types.
"""

from __future__ import annotations

import numpy as np

from .params import ModelParams

EULER_MASCHERONI = 0.5772156649015329


def period_utility(c, eta, sigma):
    """CRRA utility of consumption deflated by the taste shock:
    u = (c * exp(-eta))^(1-sigma) / (1-sigma). sigma = 1 is excluded."""
    c = np.asarray(c, dtype=float)
    eta = np.asarray(eta, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    one_minus = 1.0 - sigma
    return np.exp(one_minus * (np.log(c) - eta)) / one_minus


def marginal_utility(c, eta, sigma):
    """du/dc = exp(-eta*(1-sigma)) * c^(-sigma)."""
    c = np.asarray(c, dtype=float)
    eta = np.asarray(eta, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    return np.exp(-eta * (1.0 - sigma) - sigma * np.log(c))


def additive_payoff(d, w, eta, m, params: ModelParams):
    """Non-consumption payoff of the discrete choice.

    Zero for d=0. For d=1 it is gamma_m + alpha_m * eta + omega_m * (1-w):
    a type-specific constant, a taste component increasing in the shock, and
    a cost paid when last period's choice w was 0.
    """
    d = np.asarray(d)
    w = np.asarray(w)
    eta = np.asarray(eta, dtype=float)
    m = np.asarray(m)
    gam = np.where(m == 1, params.gamma[0], params.gamma[1])
    alp = np.where(m == 1, params.alpha[0], params.alpha[1])
    ome = np.where(m == 1, params.omega[0], params.omega[1])
    return np.where(d == 1, gam + alp * eta + ome * (1.0 - w), 0.0)


def budget_transition(a, c, d, y, params: ModelParams):
    """Next-period assets: a' = (1+r) a - c + earnings(d, y)."""
    a = np.asarray(a, dtype=float)
    c = np.asarray(c, dtype=float)
    return (1.0 + params.r) * a - c + params.income(d, y)


def retirement_value(a, y, sigma, params: ModelParams):
    """Value, first consumption, and entry marginal utility of a retiree.

    The retiree consumes for T_retire periods out of entering assets plus a
    pension of pension_rate * y each period (y is the final working-life
    income level), with the fixed median shock eta = 0.5, CRRA curvature
    sigma, no bequest, and interim borrowing against future pensions allowed.
    Assets keep the working-life timing a_{s+1} = (1+r) a_s - c_s + pension,
    so lifetime resources are (1+r) * a + pension * annuity. The Euler
    equation gives geometric consumption growth
    c_{s+1} = c_s * (beta (1+r))^(1/sigma); the present-value budget pins the
    level. The value collapses to u(c_0) * annuity_factor because
    beta * growth^(1-sigma) equals growth/(1+r).

    Returns (value, first_consumption, first_marginal_utility); the envelope
    condition is dV/da = (1+r) * u'(c_0).
    """
    a = np.asarray(a, dtype=float)
    y = np.asarray(y, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    S = params.T_retire
    R = 1.0 + params.r
    pension = params.pension_rate * y
    growth = (params.beta * R) ** (1.0 / sigma)
    q = growth / R
    qs = np.where(np.abs(q - 1.0) < 1e-12, float(S), (1.0 - q**S) / (1.0 - q))
    disc = (1.0 - R ** (-S)) / (1.0 - 1.0 / R)
    pv = R * a + pension * disc
    c0 = np.maximum(pv / qs, params.c_floor)
    value = period_utility(c0, 0.5, sigma) * qs
    mu0 = marginal_utility(c0, 0.5, sigma)
    return value, c0, mu0


def logsum_ccp(v0, v1):
    """Choice probability of d=1 and the expected maximum under additive
    extreme-value type I shocks on each alternative.

    Computed with max-subtraction so large negative conditional values (for
    instance infeasible alternatives coded as -inf) stay stable. The expected
    maximum includes the Euler-Mascheroni constant.
    """
    v0 = np.asarray(v0, dtype=float)
    v1 = np.asarray(v1, dtype=float)
    top = np.maximum(v0, v1)
    # both -inf means no feasible alternative; caller guards against it
    e0 = np.exp(v0 - top)
    e1 = np.exp(v1 - top)
    denom = e0 + e1
    p1 = e1 / denom
    logsum = top + np.log(denom) + EULER_MASCHERONI
    return p1, logsum

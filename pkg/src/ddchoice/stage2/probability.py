"""Choice-probability criterion for the additive payoff parameters.

With the curvatures and discount factor already estimated, the choice-
specific value of each alternative at a moment state is the flow utility of
the first-step consumption plus the simulated discounted continuation under
first-step policies. Paths are simulated once per estimation with choices
drawn from the first-step work probabilities, so every path statistic is
free of the payoff parameters and the criterion reduces to a linear form:

    v_d = K_d + gamma_m * G_d + alpha_m * A_d + omega_m * W_d

where K_d collects flow utilities, taste-shock terms of the chosen
alternative, and the discounted retirement value, and G/A/W accumulate the
discounted work indicators, work x shock, and work x (1 - lagged work). The
model probability of working is the logistic of v_1 - v_0 and is matched to
the first-step probability at the moment state itself.

Draw order per path block and period: eta draws, choice uniforms,
taste-shock uniforms (consumed in both modes, used only when
eps_mode="draw"), then income uniforms for every period before the last.
Each moment owns one stream that is replayed for both alternatives, so the
value difference v_1 - v_0 is computed under common uniforms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..model import (
    EULER_MASCHERONI,
    logsum_ccp,
    period_utility,
    retirement_value,
)
from ..params import ModelParams
from .moments import MomentSpec, spawn_streams
from .report import CriterionReport
from .search import restart_minimize

PAYOFF_BOUND = 10.0
_P_MIN = 1e-12


@dataclass
class PathStats:
    """Per retained moment: linear-form coefficients of both alternatives,
    the first-step target probability, and the type index."""

    const: np.ndarray  # (n, 2) theta-free part of v_d
    g_work: np.ndarray  # (n, 2) discounted work indicators
    g_taste: np.ndarray  # (n, 2) discounted work x eta
    g_switch: np.ndarray  # (n, 2) discounted work x (1 - lagged work)
    target: np.ndarray  # (n,) first-step probability of d=1 at the moment
    m_idx: np.ndarray  # (n,) 0-based type index
    moment_index: np.ndarray  # (n,) position in the original moment list
    warnings: list[str] = field(default_factory=list)

    @property
    def n_residuals(self) -> int:
        return len(self.target)


def _chosen_prob(p1, d):
    return np.clip(np.where(d == 1, p1, 1.0 - p1), _P_MIN, 1.0)


def simulate_path_stats(
    spec: MomentSpec,
    first_stage,
    sigma_hat,
    beta_hat: float,
    params: ModelParams,
    eps_mode: str = "expected",
) -> PathStats:
    """Simulate continuation paths under first-step policies once.

    eps_mode picks how the taste shock of the chosen alternative enters the
    flow: its conditional expectation given the choice ("expected") or a
    conditional draw ("draw"). Both modes consume identical uniforms so the
    simulated states agree path by path.
    """
    if eps_mode not in ("expected", "draw"):
        raise ValueError(f"eps_mode must be 'expected' or 'draw', got {eps_mode!r}")
    sigma_hat = np.asarray(sigma_hat, dtype=float)
    beta_hat = float(beta_hat)
    ret_params = params.replace(beta=beta_hat)
    R = 1.0 + params.r
    trans = np.asarray(first_stage.transition, dtype=float)
    # one stream per moment, replayed for both alternatives: common uniforms
    # cancel most continuation noise in the value difference v_1 - v_0
    children = spawn_streams(spec.seed, 1, len(spec.moments))

    rows = []
    warnings = []
    for i, s in enumerate(spec.moments):
        y_idx0 = int(np.abs(s.income - params.y_high) < np.abs(s.income - params.y_low))
        needed = {(s.t, s.income)}
        for t in range(s.t + 1, params.T + 1):
            needed.update({(t, params.y_low), (t, params.y_high)})
        if not all(first_stage.identified(s.m, t, y) for t, y in needed):
            warnings.append(
                f"moment t={s.t} eta={s.eta} y={s.income:.0f} w={s.w} m={s.m}: "
                "unidentified first-stage cell, dropped"
            )
            continue

        target = float(first_stage.work_prob(s.m, s.t, s.eta, s.asset, s.income, s.w))
        const = np.empty(2)
        g_work = np.zeros(2)
        g_taste = np.zeros(2)
        g_switch = np.zeros(2)
        for d in (0, 1):
            c_now = float(
                first_stage.consumption(s.m, s.t, d, s.eta, s.asset, s.income)
            )
            u_now = float(period_utility(c_now, s.eta, sigma_hat[d, s.m - 1]))
            a = np.full(
                spec.n_life, R * s.asset - c_now + float(params.income(d, s.income))
            )
            if s.t == params.T:
                # no future working periods; the continuation is closed form
                v_ret, _, _ = retirement_value(
                    a[:1], s.income, sigma_hat[0, s.m - 1], ret_params
                )
                const[d] = u_now + beta_hat * float(v_ret[0])
                g_work[d] = g_taste[d] = g_switch[d] = 0.0
                continue

            rng = np.random.Generator(np.random.Philox(children[i]))
            y = np.where(
                rng.random(spec.n_life) < trans[d, y_idx0], params.y_high, params.y_low
            )
            w = np.full(spec.n_life, d, dtype=np.int8)
            acc = np.zeros(spec.n_life)
            sw = np.zeros(spec.n_life)
            se = np.zeros(spec.n_life)
            ss = np.zeros(spec.n_life)
            for t in range(s.t + 1, params.T + 1):
                disc = beta_hat ** (t - s.t)
                eta = rng.random(spec.n_life)
                p1 = np.clip(
                    np.asarray(
                        first_stage.work_prob(s.m, t, eta, a, y, w), dtype=float
                    ),
                    0.0,
                    1.0,
                )
                d_t = (rng.random(spec.n_life) < p1).astype(np.int8)
                u_eps = rng.random(spec.n_life)
                p_chosen = _chosen_prob(p1, d_t)
                if eps_mode == "expected":
                    eps = EULER_MASCHERONI - np.log(p_chosen)
                else:
                    eps = -np.log(-np.log(u_eps)) - np.log(p_chosen)
                c = np.empty(spec.n_life)
                for dv in (0, 1):
                    mask = d_t == dv
                    if np.any(mask):
                        c[mask] = first_stage.consumption(
                            s.m, t, dv, eta[mask], a[mask], y[mask]
                        )
                u_flow = period_utility(c, eta, sigma_hat[d_t, s.m - 1])
                acc += disc * (u_flow + eps)
                sw += disc * d_t
                se += disc * d_t * eta
                ss += disc * d_t * (1.0 - w)
                a = R * a - c + np.asarray(params.income(d_t, y), dtype=float)
                w = d_t
                if t < params.T:
                    jy = (np.abs(y - params.y_high) < np.abs(y - params.y_low)).astype(
                        int
                    )
                    y = np.where(
                        rng.random(spec.n_life) < trans[d_t, jy],
                        params.y_high,
                        params.y_low,
                    )
            v_ret, _, _ = retirement_value(a, y, sigma_hat[0, s.m - 1], ret_params)
            acc += beta_hat ** (params.T + 1 - s.t) * v_ret
            const[d] = u_now + float(acc.mean())
            g_work[d] = float(sw.mean())
            g_taste[d] = float(se.mean())
            g_switch[d] = float(ss.mean())

        # immediate payoff of working at the moment state itself
        g_work[1] += 1.0
        g_taste[1] += s.eta
        g_switch[1] += 1.0 - s.w
        rows.append((i, s.m - 1, target, const, g_work, g_taste, g_switch))

    n = len(rows)
    return PathStats(
        const=np.array([r[3] for r in rows]).reshape(n, 2),
        g_work=np.array([r[4] for r in rows]).reshape(n, 2),
        g_taste=np.array([r[5] for r in rows]).reshape(n, 2),
        g_switch=np.array([r[6] for r in rows]).reshape(n, 2),
        target=np.array([r[2] for r in rows]),
        m_idx=np.array([r[1] for r in rows], dtype=int),
        moment_index=np.array([r[0] for r in rows], dtype=int),
        warnings=warnings,
    )


def model_ccp(v_star):
    """Probability vector over the two alternatives given their choice-
    specific values; last axis indexes the alternative and sums to one."""
    v = np.asarray(v_star, dtype=float)
    p1, _ = logsum_ccp(v[..., 0], v[..., 1])
    return np.stack([1.0 - p1, p1], axis=-1)


def probability_residuals(theta_p, stats: PathStats):
    """Target minus model probability of working, one entry per moment.

    theta_p is (gamma_1, gamma_2, alpha_1, alpha_2, omega_1, omega_2)."""
    theta_p = np.asarray(theta_p, dtype=float)
    gam = theta_p[0:2][stats.m_idx]
    alp = theta_p[2:4][stats.m_idx]
    ome = theta_p[4:6][stats.m_idx]
    v = (
        stats.const
        + gam[:, None] * stats.g_work
        + alp[:, None] * stats.g_taste
        + ome[:, None] * stats.g_switch
    )
    return stats.target - model_ccp(v)[:, 1]


def estimate_probability(
    spec: MomentSpec,
    first_stage,
    sigma_hat,
    beta_hat: float,
    params: ModelParams,
    eps_mode: str = "expected",
    init=None,
    bounds=None,
    n_restarts: int = 5,
) -> CriterionReport:
    """Minimize summed squared probability residuals over the six additive
    payoff parameters by bounded simplex search with jittered restarts."""
    stats = simulate_path_stats(spec, first_stage, sigma_hat, beta_hat, params, eps_mode)
    n_par = 6
    if stats.n_residuals < n_par + 1:
        raise ValueError(
            f"under-identified: {stats.n_residuals} residuals for {n_par} parameters"
        )
    if bounds is None:
        bounds = [(-PAYOFF_BOUND, PAYOFF_BOUND)] * n_par
    bounds = [tuple(map(float, b)) for b in bounds]
    if init is None:
        init = np.zeros(n_par)
    init = np.asarray(init, dtype=float)

    def crit(x):
        r = probability_residuals(x, stats)
        v = float(r @ r)
        return v if np.isfinite(v) else 1e50

    best, trace, warnings = restart_minimize(
        crit, init, bounds, n_restarts, spawn_streams(spec.seed, 3, 1)[0]
    )
    warnings = list(stats.warnings) + warnings

    names = ["gamma_1", "gamma_2", "alpha_1", "alpha_2", "omega_1", "omega_2"]
    res_vec = probability_residuals(best.x, stats)
    residuals = [
        {"moment": int(stats.moment_index[i]), "residual": float(res_vec[i])}
        for i in range(stats.n_residuals)
    ]
    return CriterionReport(
        params_hat=dict(zip(names, map(float, best.x))),
        value=float(best.fun),
        residuals=residuals,
        trace=trace,
        warnings=warnings,
        metadata={
            "criterion": "probability",
            "n_life": spec.n_life,
            "seed": spec.seed,
            "eps_mode": eps_mode,
            "n_moments": len(spec.moments),
            "n_residuals": stats.n_residuals,
            "optimizer": "nelder-mead xatol=1e-5 fatol=1e-10 restarts="
            + str(n_restarts),
        },
    )

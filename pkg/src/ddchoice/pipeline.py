"""End-to-end two-step estimation from a simulated panel.

Order of operations: EM over latent types, then per type the instrumented
consumption quantile curves, shock recovery, and choice-probability logit,
then the two second-step criteria (curvatures and discount factor from the
intertemporal condition, additive payoffs from choice probabilities).

The environment parameters passed in supply only institutional constants
(interest rate, horizon, income levels and earnings rule, retirement rules).
Preference fields on the same object are never read by the estimator, so
passing the data-generating parameter set leaks nothing.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .panel import Panel
from .params import ModelParams
from .stage1 import (
    em_types,
    estimate_ccc_ivqr,
    estimate_ccp,
    estimate_counterfactual_exogenous,
    recover_eta,
)
from .stage2 import (
    default_moments,
    estimate_euler,
    estimate_probability,
    first_stage_from_estimates,
    refine_for_moments,
    theta_c_arrays,
)
from .stage2.moments import MomentSpec
from .stage2.report import CriterionReport


@dataclass
class PipelineResult:
    pi_hat: np.ndarray
    posterior: object
    ccc_by_type: dict
    ccp_by_type: dict
    eta_hat_by_type: dict
    transition: np.ndarray
    euler: CriterionReport
    probability: CriterionReport
    counterfactual: bool = False
    warnings: list[str] = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    @property
    def params_hat(self) -> dict:
        out = dict(self.euler.params_hat)
        out.update(self.probability.params_hat)
        out["pi_1"] = float(self.pi_hat[0])
        return out


def estimate_pipeline(
    panel: Panel,
    env: ModelParams,
    n_types: int = 2,
    seed: int = 0,
    counterfactual: bool = False,
    moment_spec: MomentSpec | None = None,
    eps_mode: str = "expected",
    beta_per_type: bool = False,
    em_max_iter: int = 200,
) -> PipelineResult:
    """Run the full two-step estimator on one panel.

    seed controls the EM initialization and, unless moment_spec is given,
    the second-step simulation draws."""
    timings = {}
    warnings = []

    t0 = time.time()
    post = em_types(panel, n_types=n_types, seed=seed, max_iter=em_max_iter)
    timings["em"] = time.time() - t0
    warnings += [f"em: {w}" for w in post.warnings]

    ccc_by_type, ccp_by_type, eta_by_type = {}, {}, {}
    t0 = time.time()
    for m in range(1, n_types + 1):
        if counterfactual:
            ccc, ccp = estimate_counterfactual_exogenous(panel, post.q, m=m)
            eta_hat = recover_eta(panel, ccc)
        else:
            ccc = estimate_ccc_ivqr(panel, post.q, m=m)
            eta_hat = recover_eta(panel, ccc)
            ccp = estimate_ccp(panel, eta_hat, post.q, m=m)
        ccc_by_type[m] = ccc
        ccp_by_type[m] = ccp
        eta_by_type[m] = eta_hat
        warnings += [f"ccc m={m}: {w}" for w in ccc.warnings]
        warnings += [f"ccp m={m}: {w}" for w in ccp.warnings]
    timings["stage1"] = time.time() - t0

    first_stage = first_stage_from_estimates(ccc_by_type, ccp_by_type, panel)
    first_stage.pi_hat = post.pi_hat
    if moment_spec is None:
        moment_spec = default_moments(env, n_types=n_types, seed=seed)

    if not counterfactual:
        t0 = time.time()
        n_warn = {m: len(ccc_by_type[m].warnings) for m in ccc_by_type}
        refine_for_moments(
            first_stage,
            moment_spec,
            env,
            panel,
            {m: post.record_weights(panel, m) for m in range(1, n_types + 1)},
        )
        for m in ccc_by_type:
            warnings += [
                f"ccc m={m}: {w}" for w in ccc_by_type[m].warnings[n_warn[m]:]
            ]
        timings["refine"] = time.time() - t0

    t0 = time.time()
    euler_rep = estimate_euler(
        moment_spec, first_stage, env, beta_per_type=beta_per_type
    )
    timings["euler"] = time.time() - t0
    sigma_hat, beta_hat = theta_c_arrays(euler_rep)
    if beta_per_type:
        beta_hat = float(np.mean(beta_hat))

    t0 = time.time()
    prob_rep = estimate_probability(
        moment_spec, first_stage, sigma_hat, beta_hat, env, eps_mode=eps_mode
    )
    timings["probability"] = time.time() - t0
    warnings += [f"euler: {w}" for w in euler_rep.warnings]
    warnings += [f"probability: {w}" for w in prob_rep.warnings]

    return PipelineResult(
        pi_hat=post.pi_hat,
        posterior=post,
        ccc_by_type=ccc_by_type,
        ccp_by_type=ccp_by_type,
        eta_hat_by_type=eta_by_type,
        transition=np.asarray(first_stage.transition),
        euler=euler_rep,
        probability=prob_rep,
        counterfactual=counterfactual,
        warnings=warnings,
        timings=timings,
    )

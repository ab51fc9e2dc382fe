"""First-step policy bundles consumed by the second-step criteria.

Both criteria only need three queries: conditional consumption by choice,
the probability of working, and whether a cell is identified, plus the
income transition probabilities. EstimatedFirstStage wraps the stage-1
estimates; TrueFirstStage wraps the solved model policy so the estimator
can be run with the truth plugged in.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..params import ModelParams


@dataclass
class EstimatedFirstStage:
    """Stage-1 estimates keyed by type: ccc_by_type[m] / ccp_by_type[m].

    c_min floors predicted consumption: the fitted quantile curves are
    linear in assets within cells and can extrapolate to nonpositive values
    on states the data never visits, which would blow up marginal utility.
    A floor below the smallest observed consumption never binds on sane
    predictions."""

    ccc_by_type: dict
    ccp_by_type: dict
    transition: np.ndarray  # (2, 2): Pr(y' = y_high | d, y_idx)
    pi_hat: np.ndarray | None = None
    c_min: float = 1e-6

    def consumption(self, m, t, d, eta, asset, income):
        c = self.ccc_by_type[m].evaluate(t, d, eta, asset, income)
        return np.maximum(c, self.c_min)

    def work_prob(self, m, t, eta, asset, income, w):
        return self.ccp_by_type[m].predict(t, eta, asset, income, w)

    def identified(self, m, t, income) -> bool:
        ccc = self.ccc_by_type[m]
        j = int(ccc._y_index(np.asarray(income)))
        cell = ccc.cell_for(t, j)
        return cell is not None and cell.identified


@dataclass
class TrueFirstStage:
    """The solved model policy presented through the first-stage interface."""

    policy: object
    transition: np.ndarray = field(init=False)

    def __post_init__(self):
        self.transition = np.asarray(self.policy.params.income_transition, float)

    def consumption(self, m, t, d, eta, asset, income):
        return self.policy.ccc(t, m, d, eta, asset, income)

    def work_prob(self, m, t, eta, asset, income, w):
        return self.policy.ccp(t, m, eta, asset, income, w)

    def identified(self, m, t, income) -> bool:
        return True


def first_stage_from_estimates(ccc_by_type, ccp_by_type, panel):
    """Bundle stage-1 estimates with panel-frequency income transitions."""
    from ..panel import estimate_income_transition

    return EstimatedFirstStage(
        ccc_by_type=ccc_by_type,
        ccp_by_type=ccp_by_type,
        transition=np.asarray(estimate_income_transition(panel), float),
        c_min=0.5 * float(np.min(panel.c)),
    )


def refine_for_moments(first_stage, spec, params, panel, weights_by_type, **kwargs):
    """Refit stage-1 consumption curves locally at every asset the
    intertemporal criterion reads.

    The criterion evaluates curves at the moment assets and at the implied
    next-period budgets, a few dozen known points in total, so each gets a
    kernel-local refit. Two rounds, because next-period assets depend on
    current fitted consumption: refit at the moment assets first, then
    derive the budgets from the refined curves and refit every next-period
    cell around them for both income states."""
    from ..stage1.ivqr import refine_ccc_local

    R = 1.0 + params.r
    first: dict = {}
    for s in spec.moments:
        first.setdefault(s.m, set()).add((s.t, float(s.income), float(s.asset)))
    for m, reqs in sorted(first.items()):
        refine_ccc_local(
            first_stage.ccc_by_type[m], panel, weights_by_type[m], sorted(reqs), **kwargs
        )

    nxt: dict = {}
    for s in spec.moments:
        if s.t >= params.T:
            continue
        for d in (0, 1):
            c_now = float(
                np.asarray(
                    first_stage.consumption(s.m, s.t, d, s.eta, s.asset, s.income)
                ).ravel()[0]
            )
            a_next = R * s.asset - c_now + float(params.income(d, s.income))
            nxt.setdefault((s.m, s.t + 1), []).append(a_next)
    for (m, t_next), points in sorted(nxt.items()):
        for center, rad in _cluster_points(points):
            reqs = [(t_next, float(yv), center) for yv in (params.y_low, params.y_high)]
            refine_ccc_local(
                first_stage.ccc_by_type[m], panel, weights_by_type[m],
                reqs, radius=rad, **kwargs,
            )


def _cluster_points(points, merge_width=4.0, min_radius=2.5):
    """Greedy 1-d clustering: group sorted points spanning at most
    merge_width, return (center, radius) covering each group."""
    pts = np.sort(np.asarray(points, dtype=float))
    groups = [[pts[0]]]
    for p in pts[1:]:
        if p - groups[-1][0] <= merge_width:
            groups[-1].append(p)
        else:
            groups.append([p])
    out = []
    for g in groups:
        lo, hi = g[0], g[-1]
        out.append(
            (float(0.5 * (lo + hi)), float(max(min_radius, 0.5 * (hi - lo) + 0.75)))
        )
    return out


def y_index(income, params: ModelParams):
    income = np.asarray(income, dtype=float)
    return (np.abs(income - params.y_high) < np.abs(income - params.y_low)).astype(int)

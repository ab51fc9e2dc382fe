"""Deliberately biased first stage that assumes the work choice is decided
before the shock realizes.

Under that (wrong) timing the shock is independent of d, so conditional
quantiles of consumption given d are read off by plain weighted quantile
regression, and the choice probability cannot depend on the shock at all.
Output containers match the honest estimators so downstream code runs
unchanged; the bias they inherit is the point of the exercise.
"""

from __future__ import annotations

import numpy as np

from ..panel import Panel
from .ccp import CCPEstimate, estimate_ccp
from .ivqr import (
    DEFAULT_TAU_GRID,
    ETA_MAX,
    ETA_MIN,
    N_FINE,
    CCCEstimate,
    CellFit,
    _extend_quantile_coefs,
    _mm_qr_batch,
    record_weights,
    weighted_quantile,
)


def estimate_counterfactual_exogenous(
    panel: Panel,
    q_weights,
    m: int = 1,
    tau_grid=None,
    min_d_share: float = 0.02,
    polish_iters: int = 60,
) -> tuple[CCCEstimate, CCPEstimate]:
    """Plain weighted quantile regression of c on (1, d, asset) per
    (period, income) cell plus a shock-free weighted logit."""
    tau_grid = DEFAULT_TAU_GRID if tau_grid is None else np.asarray(tau_grid, float)
    wq_all = record_weights(panel, q_weights, m)
    y_levels = (float(np.min(panel.income)), float(np.max(panel.income)))
    tau_fine = np.unique(
        np.concatenate([[ETA_MIN, ETA_MAX], np.linspace(0.01, 0.99, N_FINE - 2)])
    )
    ccc = CCCEstimate(
        m=m,
        tau_grid=tau_grid,
        tau_fine=tau_fine,
        cells={},
        y_levels=y_levels,
        exogenous=True,
    )
    total = wq_all.sum()
    T = int(panel.t.max())
    for t in range(1, T + 1):
        for j, yv in enumerate(y_levels):
            sel = (panel.t == t) & (panel.income == yv)
            wq = wq_all[sel]
            share = wq.sum() / total
            d = panel.d[sel].astype(float)
            mass = max(wq.sum(), 1e-300)
            d1 = float((wq * d).sum() / mass)
            if share <= 0 or min(d1, 1.0 - d1) < min_d_share:
                ccc.cells[(t, j)] = CellFit(
                    coef=np.full((len(tau_grid), 3), np.nan),
                    wcoef=np.full(len(tau_grid), np.nan),
                    coef_fine=np.full((len(tau_fine), 3), np.nan),
                    share=float(share),
                    w_shares=(1.0 - d1, d1),
                    identified=False,
                )
                ccc.warnings.append(
                    f"cell t={t} y={yv}: unidentified (d shares {1 - d1:.3f}/{d1:.3f})"
                )
                continue
            c = panel.c[sel]
            asset = panel.asset[sel]
            xmat = np.column_stack([np.ones_like(asset), d, asset])
            q01, q99 = weighted_quantile(c, wq, [0.01, 0.99])
            scale = max(q99 - q01, 1.0)
            beta = _mm_qr_batch(
                xmat,
                np.broadcast_to(c, (len(tau_grid), len(c))),
                wq,
                tau_grid,
                n_iter=polish_iters,
                eps=1e-9 * scale,
            )
            coef = beta[:, [0, 1, 2]]
            asset_ends = weighted_quantile(asset, wq, [0.05, 0.5, 0.95])
            ccc.cells[(t, j)] = CellFit(
                coef=coef,
                wcoef=np.zeros(len(tau_grid)),
                coef_fine=_extend_quantile_coefs(tau_grid, coef, tau_fine, asset_ends),
                share=float(share),
                w_shares=(1.0 - d1, d1),
                identified=True,
            )
    ccp = estimate_ccp(
        panel, np.full(panel.n_obs, 0.5), q_weights, m=m, include_eta=False
    )
    return ccc, ccp

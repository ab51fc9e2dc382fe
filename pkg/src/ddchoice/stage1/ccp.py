"""Weighted logit estimation of conditional choice probabilities.

One pooled fit per type: cubic polynomial in the recovered shock, the
instrument, age and income dummies, a cubic in assets (standardized for
conditioning), and shock-by-instrument interactions. Fit by Newton iterations
with step halving; near-separation falls back to a tiny ridge.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..panel import Panel
from .ivqr import record_weights

COEF_CAP = 50.0
RIDGE_FALLBACK = 1e-6


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class CCPEstimate:
    m: int
    coef: np.ndarray
    names: list[str]
    T: int
    y_levels: tuple[float, float]
    asset_loc: float
    asset_scale: float
    include_eta: bool = True
    converged: bool = False
    grad_norm: float = np.inf
    ridge: float = 0.0
    separation: bool = False
    full_rank: bool = True
    warnings: list[str] = field(default_factory=list)

    def design(self, t, eta, asset, income, w):
        t = np.asarray(t)
        eta = np.asarray(eta, dtype=float)
        asset = np.asarray(asset, dtype=float)
        income = np.asarray(income, dtype=float)
        w = np.asarray(w, dtype=float)
        t, eta, asset, income, w = np.broadcast_arrays(t, eta, asset, income, w)
        shape = eta.shape
        t = t.ravel()
        eta = eta.ravel()
        a = (asset.ravel() - self.asset_loc) / self.asset_scale
        hi = (
            np.abs(income.ravel() - self.y_levels[1])
            < np.abs(income.ravel() - self.y_levels[0])
        ).astype(float)
        w = w.ravel()
        cols = [np.ones_like(eta)]
        if self.include_eta:
            cols += [eta, eta**2, eta**3]
        cols += [w]
        for tv in range(2, self.T + 1):
            cols.append((t == tv).astype(float))
        cols += [hi, a, a**2, a**3]
        if self.include_eta:
            cols += [eta * w, eta**2 * w, eta**3 * w]
        return np.column_stack(cols), shape

    def predict(self, t, eta, asset, income, w):
        x, shape = self.design(t, eta, asset, income, w)
        return _sigmoid(x @ self.coef).reshape(shape)


def _design_names(T: int, include_eta: bool) -> list[str]:
    names = ["const"]
    if include_eta:
        names += ["eta", "eta2", "eta3"]
    names += ["w"]
    names += [f"age{tv}" for tv in range(2, T + 1)]
    names += ["income_high", "asset", "asset2", "asset3"]
    if include_eta:
        names += ["eta_w", "eta2_w", "eta3_w"]
    return names


def _weighted_logit(x, d, wq, ridge, max_iter, tol=1e-8):
    """Newton with step halving on the weighted logistic loglik."""
    k = x.shape[1]
    beta = np.zeros(k)

    def loglik(b):
        z = x @ b
        # log sigma(z) for d=1, log sigma(-z) for d=0, stably
        ll = -np.logaddexp(0.0, -z) * d - np.logaddexp(0.0, z) * (1 - d)
        return float(wq @ ll) - 0.5 * ridge * float(b @ b)

    ll = loglik(beta)
    grad_norm = np.inf
    converged = False
    for _ in range(max_iter):
        p = _sigmoid(x @ beta)
        grad = x.T @ (wq * (d - p)) - ridge * beta
        grad_norm = float(np.max(np.abs(grad)))
        if grad_norm < tol:
            converged = True
            break
        wdiag = wq * p * (1.0 - p)
        h = (x * wdiag[:, None]).T @ x + (ridge + 1e-12) * np.eye(k)
        step = np.linalg.solve(h, grad)
        scale = 1.0
        for _ in range(30):
            cand = beta + scale * step
            ll_new = loglik(cand)
            if ll_new >= ll - 1e-12 * abs(ll):
                beta, ll = cand, ll_new
                break
            scale *= 0.5
        else:
            break
    return beta, grad_norm, converged


def estimate_ccp(
    panel: Panel,
    eta_hat: np.ndarray,
    q_weights,
    m: int = 1,
    max_iter: int = 100,
    include_eta: bool = True,
) -> CCPEstimate:
    wq = record_weights(panel, q_weights, m)
    keep = np.isfinite(eta_hat) if include_eta else np.ones(panel.n_obs, bool)
    T = int(panel.t.max())
    y_levels = (float(np.min(panel.income)), float(np.max(panel.income)))
    mass = wq[keep].sum()
    loc = float((wq[keep] * panel.asset[keep]).sum() / mass)
    var = float((wq[keep] * (panel.asset[keep] - loc) ** 2).sum() / mass)
    scale = max(np.sqrt(var), 1e-6)

    est = CCPEstimate(
        m=m,
        coef=np.zeros(1),
        names=_design_names(T, include_eta),
        T=T,
        y_levels=y_levels,
        asset_loc=loc,
        asset_scale=scale,
        include_eta=include_eta,
    )
    eta_use = np.where(keep, np.nan_to_num(eta_hat), 0.5) if include_eta else np.zeros(
        panel.n_obs
    )
    x, _ = est.design(panel.t, eta_use, panel.asset, panel.income, panel.w)
    x = x[keep]
    d = panel.d[keep].astype(float)
    wq = wq[keep]
    if np.sum(keep) < panel.n_obs:
        est.warnings.append(
            f"{int(panel.n_obs - np.sum(keep))} records without eta dropped"
        )

    sv = np.linalg.svd(x * np.sqrt(wq)[:, None], compute_uv=False)
    est.full_rank = bool(sv[-1] > 1e-10 * sv[0])
    ridge = 0.0 if est.full_rank else RIDGE_FALLBACK
    if not est.full_rank:
        est.warnings.append("design not full rank; ridge applied")

    beta, grad_norm, converged = _weighted_logit(x, d, wq, ridge, max_iter)
    if np.any(np.abs(beta) > COEF_CAP):
        est.separation = True
        est.warnings.append("separation suspected; refit with ridge")
        ridge = max(ridge, RIDGE_FALLBACK)
        beta, grad_norm, converged = _weighted_logit(x, d, wq, ridge, max_iter)
    est.coef = beta
    est.grad_norm = grad_norm
    est.converged = converged
    est.ridge = ridge
    return est

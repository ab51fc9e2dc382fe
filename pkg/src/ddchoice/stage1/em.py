"""EM estimation of permanent-type posteriors from panel data.

The complete-data likelihood factors, per period, into the joint density of
the work choice and consumption given observables. Covariate transitions do
not depend on the unobserved type, so they drop out of the posterior; the
reported loglik omits those constant factors.

Each type's reduced form is a parametric sieve:
  d-part   saturated weighted frequencies over (t, w, income, asset-bin)
           cells, the MLE of a fully interacted logit;
  c-part   log-normal per (d, t, income) cell with mean linear in assets
           and a cell variance, respecting c > 0.
Both M-steps are exact weighted MLEs, so the loglik is non-decreasing by the
standard EM argument; we assert that each iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..panel import Panel
from ..rng import make_generator

_LOG2PI = float(np.log(2.0 * np.pi))


@dataclass
class SieveForms:
    """Fitted per-type reduced forms from the EM M-step."""

    asset_bin_edges: np.ndarray  # interior edges, shape (B-1,)
    p_work: np.ndarray  # (M, T, 2, 2, B): Pr(d=1 | t, w, y, bin)
    c_coef: np.ndarray  # (M, 2, T, 2, 2): log-c mean intercept/slope per (d, t, y)
    c_sd: np.ndarray  # (M, 2, T, 2): log-c standard deviation
    y_levels: tuple[float, float]


@dataclass
class TypePosterior:
    pi_hat: np.ndarray  # (M,)
    q: np.ndarray  # (N, M) posterior weights, rows sum to 1
    loglik: list[float]
    sieve: SieveForms
    n_iter: int = 0
    converged: bool = False
    warnings: list[str] = field(default_factory=list)

    def record_weights(self, panel: Panel, m: int) -> np.ndarray:
        """Posterior weight of type m repeated onto panel records."""
        ids = _individual_index(panel)
        return self.q[ids, m - 1]


def _individual_index(panel: Panel) -> np.ndarray:
    _, idx = np.unique(panel.ids, return_inverse=True)
    return idx


def default_asset_bins(n_records: int) -> int:
    """Sieve resolution: grows slowly with the sample, capped for stability."""
    return int(np.clip(round((n_records / 2000.0) ** 0.5) + 2, 3, 12))


def _cell_arrays(panel: Panel, n_bins: int, y_levels):
    t_idx = panel.t.astype(int) - 1
    w_idx = panel.w.astype(int)
    y_idx = (panel.income == y_levels[1]).astype(int)
    probs = np.linspace(0, 100, n_bins + 1)[1:-1]
    edges = np.percentile(panel.asset, probs)
    edges = np.unique(edges)
    bin_idx = np.searchsorted(edges, panel.asset, side="right")
    return t_idx, w_idx, y_idx, bin_idx, edges


def _m_step(panel, q_rec, t_idx, w_idx, y_idx, bin_idx, n_bins, T, log_c, warnings):
    """Exact weighted MLE of the sieve for one type. q_rec is the per-record
    posterior weight."""
    d = panel.d
    a = panel.asset

    # work-choice part: weighted frequencies on (t, w, y, bin) cells
    n_cells = T * 2 * 2 * n_bins
    cell = ((t_idx * 2 + w_idx) * 2 + y_idx) * n_bins + bin_idx
    mass = np.bincount(cell, weights=q_rec, minlength=n_cells)
    mass_d = np.bincount(cell, weights=q_rec * d, minlength=n_cells)
    overall = q_rec @ d / max(q_rec.sum(), 1e-300)
    with np.errstate(invalid="ignore"):
        p = np.where(mass > 0, mass_d / np.maximum(mass, 1e-300), overall)
    p = np.clip(p, 1e-12, 1.0 - 1e-12)
    p_work = p.reshape(T, 2, 2, n_bins)

    # consumption part: weighted normal in log c, mean linear in assets,
    # per (d, t, y) cell
    c_coef = np.zeros((2, T, 2, 2))
    c_sd = np.ones((2, T, 2))
    ccell = (d * T + t_idx) * 2 + y_idx
    n_ccells = 2 * T * 2

    def cbin(vals):
        return np.bincount(ccell, weights=vals, minlength=n_ccells)

    s0 = cbin(q_rec)
    sa = cbin(q_rec * a)
    saa = cbin(q_rec * a * a)
    sl = cbin(q_rec * log_c)
    sal = cbin(q_rec * a * log_c)
    sll = cbin(q_rec * log_c * log_c)
    det = s0 * saa - sa * sa
    ok = (s0 > 1e-8) & (det > 1e-10 * np.maximum(saa, 1.0) * np.maximum(s0, 1.0))
    b1 = np.where(ok, (s0 * sal - sa * sl) / np.where(ok, det, 1.0), 0.0)
    b0 = np.where(s0 > 1e-8, (sl - b1 * sa) / np.maximum(s0, 1e-300), 0.0)
    # weighted residual variance around the fitted line
    rss = sll - 2 * b0 * sl - 2 * b1 * sal + b0**2 * s0 + 2 * b0 * b1 * sa + b1**2 * saa
    var = np.where(s0 > 1e-8, rss / np.maximum(s0, 1e-300), 1.0)
    low_mass = s0 <= 1e-8
    if np.any(low_mass):
        warnings.append(f"{int(low_mass.sum())} consumption cells with no mass")
    sd = np.sqrt(np.maximum(var, 1e-8))
    c_coef[..., 0] = b0.reshape(2, T, 2)
    c_coef[..., 1] = b1.reshape(2, T, 2)
    c_sd[...] = sd.reshape(2, T, 2)
    return p_work, c_coef, c_sd


def _log_density(panel, sieve_m, t_idx, w_idx, y_idx, bin_idx, log_c):
    """Per-record log joint density of (d, c) under one type's sieve."""
    p_work, c_coef, c_sd = sieve_m
    d = panel.d
    p = p_work[t_idx, w_idx, y_idx, bin_idx]
    logf_d = np.where(d == 1, np.log(p), np.log1p(-p))
    mu = c_coef[d, t_idx, y_idx, 0] + c_coef[d, t_idx, y_idx, 1] * panel.asset
    sd = c_sd[d, t_idx, y_idx]
    z = (log_c - mu) / sd
    logf_c = -np.log(sd) - 0.5 * z * z - 0.5 * _LOG2PI - log_c
    return logf_d + logf_c


def em_types(
    panel: Panel,
    n_types: int = 2,
    max_iter: int = 200,
    tol: float = 1e-6,
    seed: int = 0,
    n_asset_bins: int | None = None,
) -> TypePosterior:
    """Estimate type shares and per-individual posteriors by EM.

    Starts from a random hard type assignment, alternates exact weighted
    M-steps of the sieve with posterior E-steps, and stops when the relative
    loglik improvement falls below tol. Types are relabeled by descending
    share before returning.
    """
    M = int(n_types)
    ids = _individual_index(panel)
    N = int(ids.max()) + 1
    if M < 1:
        raise ValueError("need at least one type")
    if M > N:
        raise ValueError(f"more types ({M}) than individuals ({N})")
    T = int(panel.t.max())
    y_levels = (float(np.min(panel.income)), float(np.max(panel.income)))
    if n_asset_bins is None:
        n_asset_bins = default_asset_bins(panel.n_obs)

    t_idx, w_idx, y_idx, bin_idx, edges = _cell_arrays(panel, n_asset_bins, y_levels)
    n_bins = len(edges) + 1
    log_c = np.log(panel.c)
    warnings: list[str] = []

    rng = make_generator(seed)
    assign = rng.integers(0, M, size=N)
    q = np.zeros((N, M))
    q[np.arange(N), assign] = 1.0
    if M == 1:
        q[:] = 1.0
    pi = q.mean(axis=0)

    p_work = np.zeros((M, T, 2, 2, n_bins))
    c_coef = np.zeros((M, 2, T, 2, 2))
    c_sd = np.ones((M, 2, T, 2))
    loglik: list[float] = []
    logf = np.zeros((N, M))
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        for m in range(M):
            q_rec = q[ids, m]
            p_work[m], c_coef[m], c_sd[m] = _m_step(
                panel, q_rec, t_idx, w_idx, y_idx, bin_idx, n_bins, T, log_c, warnings
            )
        pi = q.mean(axis=0)

        for m in range(M):
            rec = _log_density(
                panel, (p_work[m], c_coef[m], c_sd[m]), t_idx, w_idx, y_idx, bin_idx, log_c
            )
            logf[:, m] = np.bincount(ids, weights=rec, minlength=N)
        post = logf + np.log(np.maximum(pi, 1e-300))[None, :]
        top = post.max(axis=1, keepdims=True)
        ll = float(np.sum(top[:, 0] + np.log(np.exp(post - top).sum(axis=1))))
        if loglik and ll < loglik[-1] - 1e-7 * max(1.0, abs(ll)):
            raise RuntimeError(
                f"EM loglik decreased at iteration {it}: {loglik[-1]} -> {ll}"
            )
        improved = bool(loglik) and abs(ll - loglik[-1]) < tol * max(
            1.0, abs(loglik[-1])
        )
        loglik.append(ll)
        q = np.exp(post - top)
        q /= q.sum(axis=1, keepdims=True)
        if M == 1 or improved:
            converged = bool(improved) or M == 1
            break

    pi = q.mean(axis=0)
    order = np.argsort(-pi)
    q = q[:, order]
    pi = pi[order]
    collapsed = pi < 1e-4
    if np.any(collapsed):
        warnings.append(
            f"type collapse: shares {pi[collapsed]} below 1e-4, labels kept"
        )
    sieve = SieveForms(
        asset_bin_edges=edges,
        p_work=p_work[order],
        c_coef=c_coef[order],
        c_sd=c_sd[order],
        y_levels=y_levels,
    )
    return TypePosterior(
        pi_hat=pi,
        q=q,
        loglik=loglik,
        sieve=sieve,
        n_iter=it,
        converged=converged,
        warnings=warnings,
    )

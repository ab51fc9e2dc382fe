"""Weighted IV quantile regression for conditional consumption curves.

Per (period, income) cell and per quantile, the estimator searches a grid of
candidate treatment effects alpha, regresses C - alpha*D on (1, asset, W) by
weighted quantile regression, and keeps the alpha that drives the
W-coefficient to zero: the instrument must be irrelevant at the structural
quantile. The grid pass sweeps alpha in order, warm starting each fit at the
neighbouring solution so a few majorize-minimize reweighting steps track the
whole solution path; the winner is refined locally and then polished.
A linear-programming solver is kept as a slow exact reference for tests.

Quantile curves are smoothed and extended over the whole unit interval by an
order-4 least-squares spline in tau, and every evaluation applies monotone
rearrangement (sort in tau) before interpolating, so evaluated curves are
strictly increasing in the shock.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import make_lsq_spline

from ..panel import Panel

DEFAULT_TAU_GRID = np.round(np.linspace(0.05, 0.95, 19), 10)
ETA_MIN, ETA_MAX = 0.001, 0.999
N_FINE = 121


def weighted_quantile(x, w, probs):
    order = np.argsort(x)
    xs, ws = x[order], w[order]
    cum = np.cumsum(ws)
    total = cum[-1]
    pts = np.asarray(probs, dtype=float) * total
    idx = np.clip(np.searchsorted(cum, pts), 0, len(xs) - 1)
    return xs[idx]


def record_weights(panel: Panel, q_weights, m: int) -> np.ndarray:
    """Normalize posterior weights to one weight per panel record."""
    q = np.asarray(q_weights, dtype=float)
    if q.ndim == 2:
        q = q[:, m - 1]
    if q.shape[0] == panel.n_obs:
        return q
    _, ids = np.unique(panel.ids, return_inverse=True)
    if q.shape[0] != ids.max() + 1:
        raise ValueError(
            f"weights length {q.shape[0]} matches neither records ({panel.n_obs}) "
            f"nor individuals ({ids.max() + 1})"
        )
    return q[ids]


# ---------------------------------------------------------------------------
# weighted quantile regression engines
# ---------------------------------------------------------------------------


def _pair_products(xmat):
    """Upper-triangle pairwise products x_i x_j per row, shape (n, k(k+1)/2)."""
    iu = np.triu_indices(xmat.shape[1])
    return (xmat[:, :, None] * xmat[:, None, :])[:, iu[0], iu[1]]


def _check_linear_term(xmat, wq, tau_batch):
    """Linear term of the check loss normal equations: ((2 tau - 1)/2) X'w."""
    return ((2.0 * tau_batch - 1.0) / 2.0)[:, None] * (xmat.T @ wq)[None, :]


def _wls_start(xmat, outer, y, wq, n_rows):
    """Weighted least squares start; y (n,) shared or (A, n) per row."""
    k = xmat.shape[1]
    iu = np.triu_indices(k)
    m0 = np.zeros((k, k), dtype=xmat.dtype)
    m0[iu] = wq @ outer
    m0 = m0 + np.triu(m0, 1).T
    m0 += 1e-10 * np.trace(m0) / k * np.eye(k, dtype=xmat.dtype)
    if y.ndim == 1:
        b0 = np.linalg.solve(m0, xmat.T @ (wq * y))
        return np.repeat(b0[None, :], n_rows, axis=0)
    return np.linalg.solve(m0, ((y * wq) @ xmat).T).T


def _mm_steps(xmat, xt, outer, y_batch, wq, s_lin, beta, n_iter, eps):
    """n_iter reweighting steps of the quadratic check-loss majorizer.

    y_batch (A, n) may be a broadcast view; beta (A, k) is the starting
    point. Each step solves a batch of k x k weighted normal equations fed
    by two matmuls against precomputed pair products."""
    k = xmat.shape[1]
    iu = np.triu_indices(k)
    eye = np.eye(k, dtype=xmat.dtype)
    for _ in range(n_iter):
        r = y_batch - beta @ xt
        wt = wq[None, :] / (2.0 * (np.abs(r) + eps))
        mm = np.zeros((beta.shape[0], k, k), dtype=xmat.dtype)
        mm[:, iu[0], iu[1]] = wt @ outer
        mm = mm + np.triu(mm, 1).transpose(0, 2, 1)
        mm += (1e-10 * np.einsum("aii->a", mm) / k)[:, None, None] * eye
        rhs = (wt * y_batch) @ xmat + s_lin
        beta = np.linalg.solve(mm, rhs[:, :, None])[:, :, 0]
    return beta


def _mm_qr_batch(xmat, y_batch, wq, tau_batch, n_iter, eps, dtype=np.float64):
    """Batched weighted quantile regression by majorize-minimize reweighting.

    xmat (n, k); y_batch (A, n) response per batch row; wq (n,) observation
    weights; tau_batch (A,) quantile per row. Returns coefficients (A, k),
    starting every row from weighted least squares."""
    xmat = xmat.astype(dtype)
    y_batch = np.asarray(y_batch, dtype=dtype)
    wq = wq.astype(dtype)
    tau_batch = tau_batch.astype(dtype)
    outer = _pair_products(xmat)
    s_lin = _check_linear_term(xmat, wq, tau_batch)
    beta = _wls_start(xmat, outer, y_batch, wq, len(tau_batch))
    return _mm_steps(xmat, xmat.T.copy(), outer, y_batch, wq, s_lin, beta, n_iter, eps)


def _qr_alpha_path(xmat, outer, c, d, wq, tau_grid, alphas, eps, first_iters, warm_iters):
    """Weighted QR coefficients along an ordered path of treatment offsets.

    For every alpha in order, fits all tau_grid regressions of c - alpha*d
    on xmat, warm starting at the previous alpha's solution; neighbouring
    solutions are close, so warm_iters reweighting steps track the path.
    Returns (n_alpha, n_tau, k)."""
    n_tau = len(tau_grid)
    xt = xmat.T.copy()
    s_lin = _check_linear_term(xmat, wq, tau_grid)
    out = np.empty((len(alphas), n_tau, xmat.shape[1]))
    beta = None
    for j, alpha in enumerate(alphas):
        y = c - alpha * d
        yb = np.broadcast_to(y, (n_tau, len(y)))
        if beta is None:
            beta = _wls_start(xmat, outer, y, wq, n_tau)
            beta = _mm_steps(xmat, xt, outer, yb, wq, s_lin, beta, first_iters, eps)
        else:
            beta = _mm_steps(xmat, xt, outer, yb, wq, s_lin, beta, warm_iters, eps)
        out[j] = beta
    return out


def weighted_qr_lp(xmat, y, wq, tau):
    """Exact weighted quantile regression via the LP formulation. Reference
    implementation for tests; slow, small cells only."""
    from scipy.optimize import linprog
    from scipy.sparse import csr_matrix, eye_array, hstack

    n, k = xmat.shape
    cost = np.concatenate([np.zeros(k), tau * wq, (1.0 - tau) * wq])
    a_eq = hstack([csr_matrix(xmat), eye_array(n), -eye_array(n)], format="csr")
    bounds = [(None, None)] * k + [(0, None)] * (2 * n)
    res = linprog(cost, A_eq=a_eq, b_eq=y, bounds=bounds, method="highs")
    if not res.success:
        raise RuntimeError(f"quantile regression LP failed: {res.message}")
    return res.x[:k]


# ---------------------------------------------------------------------------
# estimate container
# ---------------------------------------------------------------------------


@dataclass
class CellFit:
    coef: np.ndarray  # (n_tau, 3): intercept, d-effect, asset slope
    wcoef: np.ndarray  # (n_tau,) leftover instrument coefficient at optimum
    coef_fine: np.ndarray  # (N_FINE, 3) spline-extended over tau_fine
    share: float
    w_shares: tuple[float, float]
    identified: bool
    bracket: tuple[float, float] = (0.0, 0.0)
    n_edge: int = 0  # quantiles whose selected alpha sat on the bracket edge


@dataclass
class LocalFit:
    """Cell refit reweighted toward one asset readout point."""

    center: float
    radius: float  # evaluation prefers this fit within center +- radius
    fit: CellFit


@dataclass
class CCCEstimate:
    m: int
    tau_grid: np.ndarray
    tau_fine: np.ndarray
    cells: dict
    y_levels: tuple[float, float]
    exogenous: bool = False  # True for the biased timing-error variant
    warnings: list[str] = field(default_factory=list)
    clamp_count: int = 0
    local_cells: dict = field(default_factory=dict)  # (t, y_idx) -> [LocalFit]

    def _y_index(self, income):
        income = np.asarray(income, dtype=float)
        lo, hi = self.y_levels
        return (np.abs(income - hi) < np.abs(income - lo)).astype(int)

    def cell_for(self, t, y_idx):
        return self.cells.get((int(t), int(y_idx)))

    def _node_values(self, cell, d, asset):
        """Rearranged strictly-increasing node values of c(tau) per record.

        d and asset are arrays of equal length; returns (N_FINE, n)."""
        v = (
            cell.coef_fine[:, 0][:, None]
            + cell.coef_fine[:, 1][:, None] * d[None, :]
            + cell.coef_fine[:, 2][:, None] * asset[None, :]
        )
        bad = np.any(np.diff(v, axis=0) < 0, axis=0)
        if np.any(bad):
            v[:, bad] = np.sort(v[:, bad], axis=0)
        scale = np.maximum(np.abs(v[-1]), 1.0)
        ramp = np.arange(v.shape[0])[:, None] * (1e-9 / v.shape[0])
        return v + ramp * scale

    def evaluate(self, t, d, eta, asset, income):
        """c_d(eta, asset) for records in period t; NaN on unidentified cells.

        Where local refits exist for the cell (refine_ccc_local), queries
        inside a refit's asset window use it, nearest center first."""
        eta = np.atleast_1d(np.asarray(eta, dtype=float))
        d_arr = np.broadcast_to(np.asarray(d, dtype=float), eta.shape).astype(float)
        asset = np.broadcast_to(np.asarray(asset, dtype=float), eta.shape).astype(float)
        y_idx = np.broadcast_to(self._y_index(income), eta.shape)
        out = np.full(eta.shape, np.nan)
        for j in (0, 1):
            sel = y_idx == j
            if not np.any(sel):
                continue
            cell = self.cell_for(t, j)
            if cell is None or not cell.identified:
                continue
            v = self._node_values(cell, d_arr[sel], asset[sel])
            out[sel] = _interp_columns(self.tau_fine, v, eta[sel])
            locals_here = self.local_cells.get((int(t), j), ())
            if locals_here:
                dist = np.full(eta.shape, np.inf)
                pick = np.full(eta.shape, -1)
                for li, lf in enumerate(locals_here):
                    dd = np.abs(asset - lf.center)
                    use = sel & (dd <= lf.radius) & (dd < dist)
                    dist[use] = dd[use]
                    pick[use] = li
                for li, lf in enumerate(locals_here):
                    use = pick == li
                    if np.any(use):
                        v = self._node_values(lf.fit, d_arr[use], asset[use])
                        out[use] = _interp_columns(self.tau_fine, v, eta[use])
        return out

    def invert(self, t, d, c, asset, income):
        """eta with c_d(eta, asset) = c, exact on the piecewise-linear
        rearranged curve, clamped to [ETA_MIN, ETA_MAX]."""
        c = np.atleast_1d(np.asarray(c, dtype=float))
        d_arr = np.broadcast_to(np.asarray(d, dtype=float), c.shape).astype(float)
        asset = np.broadcast_to(np.asarray(asset, dtype=float), c.shape).astype(float)
        y_idx = np.broadcast_to(self._y_index(income), c.shape)
        out = np.full(c.shape, np.nan)
        clamped = 0
        for j in (0, 1):
            sel = y_idx == j
            if not np.any(sel):
                continue
            cell = self.cell_for(t, j)
            if cell is None or not cell.identified:
                continue
            v = self._node_values(cell, d_arr[sel], asset[sel])
            eta, n_cl = _invert_columns(self.tau_fine, v, c[sel])
            out[sel] = eta
            clamped += n_cl
        self.clamp_count += clamped
        return out


def _interp_columns(grid, v, x):
    """Per-column linear interpolation: v (G, n) strictly increasing node
    values on grid (G,), query x (n,) in grid coordinates."""
    idx = np.clip(np.searchsorted(grid, x) - 1, 0, len(grid) - 2)
    cols = np.arange(v.shape[1])
    lo, hi = v[idx, cols], v[idx + 1, cols]
    t = (x - grid[idx]) / (grid[idx + 1] - grid[idx])
    return lo + t * (hi - lo)


def _invert_columns(grid, v, c):
    """Exact inverse of the per-column piecewise-linear map; clamps outside."""
    inside = np.sum(v < c[None, :], axis=0)  # number of nodes strictly below
    n_clamped = int(np.sum(inside == 0) + np.sum(inside == v.shape[0]))
    idx = np.clip(inside - 1, 0, v.shape[0] - 2)
    cols = np.arange(v.shape[1])
    lo, hi = v[idx, cols], v[idx + 1, cols]
    t = (c - lo) / np.maximum(hi - lo, 1e-300)
    eta = grid[idx] + t * (grid[idx + 1] - grid[idx])
    return np.clip(eta, ETA_MIN, ETA_MAX), n_clamped


INTERIOR_KNOTS = np.array([0.15, 0.35, 0.5, 0.65, 0.85])
SPLINE_KNOTS = np.concatenate([[0.0] * 4, INTERIOR_KNOTS, [1.0] * 4])
N_BASIS = len(SPLINE_KNOTS) - 4
_MONO_MESH = np.linspace(0.0, 1.0, 41)


def _basis_matrix(x):
    from scipy.interpolate import BSpline

    return BSpline.design_matrix(np.asarray(x, float), SPLINE_KNOTS, 3).toarray()


def _basis_deriv_matrix(x):
    from scipy.interpolate import BSpline

    x = np.asarray(x, float)
    out = np.empty((len(x), N_BASIS))
    for k in range(N_BASIS):
        e = np.zeros(N_BASIS)
        e[k] = 1.0
        out[:, k] = BSpline(SPLINE_KNOTS, e, 3).derivative()(x)
    return out


def _extend_quantile_coefs(tau_grid, coef, tau_fine, asset_ends=None):
    """Order-4 least-squares spline per coefficient over the unit interval,
    constrained so the implied consumption curves are monotone in the shock.

    The spline smooths the per-tau estimates (extreme quantiles are the
    noisiest) and its boundary segments extend the curves over (0, 1). When
    asset_ends (lo, mid, hi) is given, the fit minimizes squared error of
    the implied curves at those asset levels for both d values, subject to
    non-decreasing curves in tau over the asset range; weakly identified
    quantiles that break monotonicity are suppressed instead of propagated."""
    n_coef = coef.shape[1]
    basis = _basis_matrix(tau_grid)  # (n_tau, B)
    if asset_ends is None:
        out = np.empty((len(tau_fine), n_coef))
        for k in range(n_coef):
            spl = make_lsq_spline(tau_grid, coef[:, k], t=SPLINE_KNOTS, k=3)
            out[:, k] = spl(tau_fine)
        return out

    a_lo, a_mid, a_hi = asset_ends
    # curve-space design: rows (tau_j, d, a_r), unknowns are the stacked
    # spline coefficients of (intercept, d-effect, asset slope)
    profiles = [(d, a) for d in (0.0, 1.0) for a in (a_lo, a_mid, a_hi)]
    blocks = []
    targets = []
    for d, a in profiles:
        blocks.append(np.hstack([basis, d * basis, a * basis]))
        targets.append(coef[:, 0] + d * coef[:, 1] + a * coef[:, 2])
    mfull = np.vstack(blocks)
    yfull = np.concatenate(targets)

    x0, *_ = np.linalg.lstsq(mfull, yfull, rcond=None)

    dmesh = _basis_deriv_matrix(_MONO_MESH)
    cons_rows = [
        np.hstack([dmesh, d * dmesh, a * dmesh])
        for d in (0.0, 1.0)
        for a in (a_lo, a_hi)
    ]
    cmat = np.vstack(cons_rows)
    if not np.all(cmat @ x0 >= 0.0):
        from scipy.optimize import LinearConstraint, minimize

        hess = mfull.T @ mfull
        hess += 1e-9 * np.trace(hess) / len(hess) * np.eye(len(hess))
        grad_c = mfull.T @ yfull
        res = minimize(
            lambda x: 0.5 * x @ hess @ x - grad_c @ x,
            x0,
            jac=lambda x: hess @ x - grad_c,
            hess=lambda x: hess,
            method="trust-constr",
            constraints=LinearConstraint(cmat, 0.0, np.inf),
            options={"gtol": 1e-10, "xtol": 1e-12, "maxiter": 300},
        )
        x0 = res.x
    fine = _basis_matrix(tau_fine)
    return np.column_stack([fine @ x0[k * N_BASIS:(k + 1) * N_BASIS] for k in range(3)])


# ---------------------------------------------------------------------------
# main estimator
# ---------------------------------------------------------------------------


def estimate_ccc_ivqr(
    panel: Panel,
    q_weights,
    m: int = 1,
    tau_grid=None,
    alpha_points: int = 201,
    min_w_share: float = 0.02,
    grid_iters: int = 6,
    polish_iters: int = 60,
) -> CCCEstimate:
    """IV quantile regression of consumption on the work choice, instrumented
    by last period's choice, separately per (period, income) cell."""
    tau_grid = DEFAULT_TAU_GRID if tau_grid is None else np.asarray(tau_grid, float)
    wq_all = record_weights(panel, q_weights, m)
    y_levels = (float(np.min(panel.income)), float(np.max(panel.income)))
    tau_fine = np.unique(
        np.concatenate([[ETA_MIN, ETA_MAX], np.linspace(0.01, 0.99, N_FINE - 2)])
    )
    est = CCCEstimate(
        m=m, tau_grid=tau_grid, tau_fine=tau_fine, cells={}, y_levels=y_levels
    )
    total_mass = wq_all.sum()
    T = int(panel.t.max())
    for t in range(1, T + 1):
        for j, yv in enumerate(y_levels):
            sel = (panel.t == t) & (panel.income == yv)
            wq = wq_all[sel]
            share = wq.sum() / total_mass
            w_inst = panel.w[sel].astype(float)
            mass = max(wq.sum(), 1e-300)
            w1 = float((wq * w_inst).sum() / mass)
            w_shares = (1.0 - w1, w1)
            if share <= 0 or min(w_shares) < min_w_share:
                est.cells[(t, j)] = CellFit(
                    coef=np.full((len(tau_grid), 3), np.nan),
                    wcoef=np.full(len(tau_grid), np.nan),
                    coef_fine=np.full((len(tau_fine), 3), np.nan),
                    share=float(share),
                    w_shares=w_shares,
                    identified=False,
                )
                est.warnings.append(
                    f"cell t={t} y={yv}: unidentified "
                    f"(share {share:.4f}, w shares {w_shares[0]:.3f}/{w_shares[1]:.3f})"
                )
                continue
            fit = _fit_cell(
                c=panel.c[sel],
                d=panel.d[sel].astype(float),
                asset=panel.asset[sel],
                w_inst=w_inst,
                wq=wq,
                tau_grid=tau_grid,
                tau_fine=tau_fine,
                alpha_points=alpha_points,
                grid_iters=grid_iters,
                polish_iters=polish_iters,
            )
            fit.share = float(share)
            fit.w_shares = w_shares
            if fit.n_edge:
                est.warnings.append(
                    f"cell t={t} y={yv}: alpha on bracket edge at {fit.n_edge} quantiles"
                )
            est.cells[(t, j)] = fit
    return est


def refine_ccc_local(
    est: CCCEstimate,
    panel: Panel,
    q_weights,
    requests,
    halfwidth: float = 0.30,
    min_w_share: float = 0.10,
    min_d_mass: float = 20.0,
    radius: float = 2.5,
    alpha_points: int = 151,
    grid_iters: int = 6,
    polish_iters: int = 60,
):
    """Refit cells locally around specific asset readout points.

    A global cell fit carries one asset slope for both alternatives, so it
    calibrates at the cell's asset mass and drifts wherever the true curves
    have alternative-specific slopes. When downstream consumers read the
    curves at known assets, a refit reweighted toward each readout point
    removes that drift. Weights fall off linearly in weighted asset-rank
    distance, so every window carries the same fraction of the cell no
    matter how stretched the asset tail is. Windows that leave the
    instrument one-sided, or either alternative near-empty, keep the global
    fit: a starved local window is worse than a tilted global one.

    requests holds (t, income, center) triples; radius is the asset
    distance within which evaluation prefers the local fit."""
    wq_all = record_weights(panel, q_weights, est.m)
    total_mass = max(wq_all.sum(), 1e-300)
    for t, y_req, center in requests:
        j = int(est._y_index(y_req))
        cell = est.cell_for(int(t), j)
        if cell is None or not cell.identified:
            continue
        have = est.local_cells.setdefault((int(t), j), [])
        if any(abs(lf.center - center) <= 0.5 for lf in have):
            continue
        yv = est.y_levels[j]
        sel = (panel.t == int(t)) & (panel.income == yv)
        a = panel.asset[sel]
        wq = wq_all[sel]
        order = np.argsort(a, kind="stable")
        cum = np.cumsum(wq[order])
        cdf_sorted = (cum - 0.5 * wq[order]) / max(cum[-1], 1e-300)
        f_center = float(np.interp(center, a[order], cdf_sorted))
        cdf = np.empty_like(cdf_sorted)
        cdf[order] = cdf_sorted
        ker = np.clip(1.0 - np.abs(cdf - f_center) / halfwidth, 0.0, 1.0)
        wl = wq * ker
        mass = wl.sum()
        d_cell = panel.d[sel].astype(float)
        w_cell = panel.w[sel].astype(float)
        w1 = float((wl * w_cell).sum() / max(mass, 1e-300))
        d1_mass = float((wl * d_cell).sum())
        d0_mass = float(mass - d1_mass)
        if min(w1, 1.0 - w1) < min_w_share or min(d0_mass, d1_mass) < min_d_mass:
            est.warnings.append(
                f"local cell t={t} y={yv:.0f} a={center:.1f}: window unbalanced "
                f"(w1 {w1:.3f}, d mass {d0_mass:.0f}/{d1_mass:.0f}), kept global"
            )
            continue
        fit = _fit_cell(
            c=panel.c[sel],
            d=d_cell,
            asset=a,
            w_inst=w_cell,
            wq=wl,
            tau_grid=est.tau_grid,
            tau_fine=est.tau_fine,
            alpha_points=alpha_points,
            grid_iters=grid_iters,
            polish_iters=polish_iters,
        )
        fit.share = float(mass / total_mass)
        fit.w_shares = (1.0 - w1, w1)
        if fit.n_edge:
            est.warnings.append(
                f"local cell t={t} y={yv:.0f} a={center:.1f}: alpha on bracket "
                f"edge at {fit.n_edge} quantiles"
            )
        have.append(LocalFit(center=float(center), radius=float(radius), fit=fit))


def _fit_cell(
    c, d, asset, w_inst, wq, tau_grid, tau_fine, alpha_points, grid_iters, polish_iters
):
    keep = wq > 1e-10
    c, d, asset, w_inst, wq = c[keep], d[keep], asset[keep], w_inst[keep], wq[keep]
    xmat = np.column_stack([np.ones_like(asset), asset, w_inst])
    outer = _pair_products(xmat)
    xt = xmat.T.copy()
    s_lin = _check_linear_term(xmat, wq, tau_grid)
    q01, q99 = weighted_quantile(c, wq, [0.01, 0.99])
    # Bracket centered on the naive consumption gap between the chosen
    # alternatives, half-width from the 1-99 spread of c. The spread bounds
    # how far the true effect can sit from the naive gap, while keeping the
    # bracket tight enough to exclude spurious far minima of the instrument
    # coefficient in cells where d barely varies.
    center = 0.0
    mass1 = float((wq * d).sum())
    mass0 = float((wq * (1.0 - d)).sum())
    if mass1 > 0 and mass0 > 0:
        med1 = weighted_quantile(c[d == 1], wq[d == 1], [0.5])[0]
        med0 = weighted_quantile(c[d == 0], wq[d == 0], [0.5])[0]
        center = float(med1 - med0)
    half = max(0.5 * (q99 - q01), 1.0)
    eps = 1e-9 * max(q99 - q01, 1.0)
    n_tau = len(tau_grid)
    cols = np.arange(n_tau)

    lo, hi = center - half, center + half
    alphas = np.linspace(lo, hi, alpha_points)
    betas = _qr_alpha_path(
        xmat, outer, c, d, wq, tau_grid, alphas,
        eps=eps, first_iters=50, warm_iters=grid_iters,
    )
    wpath = betas[:, :, 2]
    w2 = wpath**2

    # At extreme quantiles the exact W-coefficient can sit on a wide flat
    # stretch where the reweighting approximation jitters around small
    # values, so neither the raw path argmin nor raw sign flips are
    # reliable there. Gather candidate centers per tau: the raw argmin
    # plus zero crossings of a smoothed path (smoothing kills the
    # transient noise flips while genuine crossings survive), refine
    # each, and let the polished coefficient arbitrate.
    kernel = np.ones(7) / 7.0
    wsm = np.apply_along_axis(
        lambda v: np.convolve(v, kernel, mode="same"), 0, wpath
    )
    cand = np.full((3, n_tau), -1, dtype=int)
    cand[0] = np.argmin(w2, axis=0)
    for k in range(n_tau):
        flips = np.nonzero(wsm[:-1, k] * wsm[1:, k] <= 0.0)[0]
        if flips.size:
            order = np.argsort(
                np.minimum(wsm[flips, k] ** 2, wsm[flips + 1, k] ** 2)
            )
            picks = []
            for f in flips[order]:
                if all(abs(f - p) > 3 for p in picks):
                    picks.append(int(f))
                if len(picks) == 2:
                    break
            for slot, f in enumerate(picks):
                cand[1 + slot, k] = f
    n_edge = int(np.sum((cand[0] <= 1) | (cand[0] >= alpha_points - 2)))

    # Per-tau ladder around each candidate, recentered while the winner
    # sits on a ladder edge (the coarse crossing location lags the true
    # one by a few grid steps at extreme quantiles), then a long polish.
    step = alphas[1] - alphas[0]
    span = np.linspace(-5.0, 5.0, 21)
    best_alpha = np.empty(n_tau)
    best_beta = np.empty((n_tau, 3))
    best_w2 = np.full(n_tau, np.inf)
    for row in range(cand.shape[0]):
        live = cand[row] >= 0
        if not np.any(live):
            continue
        idx = np.where(live, cand[row], cand[0])
        centers = alphas[idx]
        beta = betas[idx, cols, :]
        for _ in range(3):
            ladder = np.clip(centers[None, :] + span[:, None] * step, lo, hi)
            ref_coef = np.empty((21, n_tau, 3))
            for i in range(21):
                yb = c[None, :] - ladder[i][:, None] * d[None, :]
                beta = _mm_steps(
                    xmat, xt, outer, yb, wq, s_lin, beta, grid_iters + 2, eps
                )
                ref_coef[i] = beta
            i_star = np.argmin(ref_coef[:, :, 2] ** 2, axis=0)
            centers = ladder[i_star, cols]
            beta = ref_coef[i_star, cols, :]
            at_edge = ((i_star <= 1) | (i_star >= 19)) & (centers > lo) & (centers < hi)
            if not np.any(at_edge & live):
                break
        alpha_star = centers
        yb = c[None, :] - alpha_star[:, None] * d[None, :]
        beta = _mm_steps(
            xmat, xt, outer, yb, wq, s_lin, beta, polish_iters, eps
        )
        w2_pol = beta[:, 2] ** 2
        take = live & (w2_pol < best_w2)
        best_w2[take] = w2_pol[take]
        best_alpha[take] = alpha_star[take]
        best_beta[take] = beta[take]

    alpha_star, beta = best_alpha, best_beta
    coef = np.column_stack([beta[:, 0], alpha_star, beta[:, 1]])
    asset_ends = weighted_quantile(asset, wq, [0.05, 0.5, 0.95])
    fit = CellFit(
        coef=coef,
        wcoef=beta[:, 2].copy(),
        coef_fine=_extend_quantile_coefs(tau_grid, coef, tau_fine, asset_ends),
        share=0.0,
        w_shares=(0.0, 0.0),
        identified=True,
        bracket=(float(lo), float(hi)),
        n_edge=n_edge,
    )
    return fit

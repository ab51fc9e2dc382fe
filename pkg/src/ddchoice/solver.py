"""Backward-induction solution of the life-cycle discrete-continuous problem.

Each period the agent observes a uniform taste shock eta and additive
extreme-value shocks on the two work alternatives, then picks the alternative
and a consumption level jointly. The solver computes, per period and type:

  - conditional consumption policies c_d(eta, assets, income) by golden-section
    search over consumption at every (eta, asset) node,
  - the conditional-value gap v1 - v0 (additive payoff excluded, so one table
    serves every lagged-choice state w),
  - the ex-ante value function integrating the eta grid (midpoint rule) and the
    extreme-value expected maximum.

Terminal continuation comes from the closed-form retirement value. The
continuation in earlier periods is interpolated across the asset grid with
natural cubic splines (extended linearly beyond the last node); the eta/epsilon
integration makes the value smooth in assets, and cubic interpolation keeps the
per-node Euler residual orders of magnitude below the grid-induced error of a
linear scheme.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .model import (
    additive_payoff,
    logsum_ccp,
    marginal_utility,
    period_utility,
    retirement_value,
)
from .params import ModelParams, params_to_dict

_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class SolverGrids:
    """Discretization of the solver state space.

    Assets span [0, asset_max] with power spacing (denser near the borrowing
    floor); eta uses equispaced midpoints so the midpoint rule integrates the
    uniform shock. interp selects the continuation interpolation scheme.
    """

    n_asset: int = 240
    asset_max: float = 400.0
    asset_curv: float = 2.0
    n_eta: int = 101
    n_prescan: int = 16
    n_golden: int = 30
    interp: str = "cubic"

    def __post_init__(self):
        if self.n_asset < 10:
            raise ValueError("n_asset too small")
        if self.n_eta < 5:
            raise ValueError("n_eta too small")
        if self.interp not in ("cubic", "linear"):
            raise ValueError(f"unknown interp scheme {self.interp!r}")

    def asset_grid(self) -> np.ndarray:
        u = np.linspace(0.0, 1.0, self.n_asset)
        return self.asset_max * u**self.asset_curv

    def eta_grid(self) -> np.ndarray:
        return (np.arange(self.n_eta) + 0.5) / self.n_eta


def content_hash(params: ModelParams, grids: SolverGrids) -> str:
    """Stable hash of the (params, grids) pair, used to key policy dumps."""
    payload = json.dumps(
        {"params": params_to_dict(params), "grids": asdict(grids)}, sort_keys=True
    )
    return hashlib.sha256(payload.encode()).hexdigest()


class TruePolicy:
    """Solved policy tables with interpolated query access.

    Tables (t is 1-based, m is 1-based, y_idx 0 = low income, 1 = high):
      ccc[t-1, m-1, d, :, :, y_idx]  consumption on the (eta, asset) grid
      dvgap[t-1, m-1, :, :, y_idx]   v1 - v0 excluding the additive payoff
      exvalue[t-1, m-1, :, y_idx, w] ex-ante value on the asset grid

    Queries interpolate bilinearly in (eta, asset). Eta queries beyond the
    first/last midpoint extrapolate linearly (still inside (0,1)); asset
    queries outside the grid are clamped and counted in clamp_warnings.
    """

    def __init__(self, params: ModelParams, grids: SolverGrids, ccc, dvgap, exvalue):
        self.params = params
        self.grids = grids
        self.asset_grid = grids.asset_grid()
        self.eta_grid = grids.eta_grid()
        self.ccc_table = ccc
        self.dvgap_table = dvgap
        self.exvalue_table = exvalue
        self.clamp_warnings = 0
        self.hash = content_hash(params, grids)

    # -- interpolation helpers -------------------------------------------

    def _locate_asset(self, a):
        a = np.asarray(a, dtype=float)
        grid = self.asset_grid
        clipped = np.clip(a, grid[0], grid[-1])
        n_out = int(np.sum((a < grid[0]) | (a > grid[-1])))
        if n_out:
            self.clamp_warnings += n_out
        idx = np.clip(np.searchsorted(grid, clipped) - 1, 0, grid.size - 2)
        t = (clipped - grid[idx]) / (grid[idx + 1] - grid[idx])
        return idx, t

    def _locate_eta(self, eta):
        eta = np.asarray(eta, dtype=float)
        grid = self.eta_grid
        idx = np.clip(np.searchsorted(grid, eta) - 1, 0, grid.size - 2)
        t = (eta - grid[idx]) / (grid[idx + 1] - grid[idx])  # not clipped: extrapolate
        return idx, t

    def _bilinear(self, table2d, eta, a):
        """table2d has shape (n_eta, n_asset); eta/a are broadcastable arrays."""
        ie, te = self._locate_eta(eta)
        ia, ta = self._locate_asset(a)
        f00 = table2d[ie, ia]
        f01 = table2d[ie, ia + 1]
        f10 = table2d[ie + 1, ia]
        f11 = table2d[ie + 1, ia + 1]
        return (
            f00 * (1 - te) * (1 - ta)
            + f01 * (1 - te) * ta
            + f10 * te * (1 - ta)
            + f11 * te * ta
        )

    def _y_index(self, y):
        y = np.asarray(y, dtype=float)
        return (np.abs(y - self.params.y_high) < np.abs(y - self.params.y_low)).astype(int)

    # -- public queries ---------------------------------------------------

    def ccc(self, t, m, d, eta, asset, income):
        """Conditional consumption policy c_d at (eta, asset, income)."""
        t_i, m_i, d_i = int(t) - 1, int(m) - 1, int(d)
        yidx = self._y_index(income)
        eta, asset, yidx = np.broadcast_arrays(np.asarray(eta, float), np.asarray(asset, float), yidx)
        out = np.empty(eta.shape, dtype=float)
        for j in (0, 1):
            sel = yidx == j
            if np.any(sel):
                out[sel] = self._bilinear(
                    self.ccc_table[t_i, m_i, d_i, :, :, j].astype(float), eta[sel], asset[sel]
                )
        return np.maximum(out, self.params.c_floor)

    def value_gap(self, t, m, eta, asset, income):
        """v1 - v0 before the additive payoff and epsilon draws."""
        t_i, m_i = int(t) - 1, int(m) - 1
        yidx = self._y_index(income)
        eta, asset, yidx = np.broadcast_arrays(np.asarray(eta, float), np.asarray(asset, float), yidx)
        out = np.empty(eta.shape, dtype=float)
        for j in (0, 1):
            sel = yidx == j
            if np.any(sel):
                out[sel] = self._bilinear(
                    self.dvgap_table[t_i, m_i, :, :, j].astype(float), eta[sel], asset[sel]
                )
        return out

    def ccp(self, t, m, eta, asset, income, w):
        """Pr(d=1 | eta, state, w): logit of the value gap plus the additive payoff."""
        gap = self.value_gap(t, m, eta, asset, income)
        pay = additive_payoff(1, w, eta, m, self.params)
        z = gap + pay
        return 1.0 / (1.0 + np.exp(-z))

    def exante_value(self, t, m, asset, income, w):
        """Ex-ante value before eta and epsilon realize."""
        t_i, m_i = int(t) - 1, int(m) - 1
        yidx = self._y_index(income)
        asset, yidx, w = np.broadcast_arrays(np.asarray(asset, float), yidx, np.asarray(w))
        out = np.empty(asset.shape, dtype=float)
        for j in (0, 1):
            for wv in (0, 1):
                sel = (yidx == j) & (w == wv)
                if np.any(sel):
                    ia, ta = self._locate_asset(asset[sel])
                    col = self.exvalue_table[t_i, m_i, :, j, wv]
                    out[sel] = col[ia] * (1 - ta) + col[ia + 1] * ta
        return out

    # -- persistence ------------------------------------------------------

    def dump(self, path) -> None:
        np.savez_compressed(
            path,
            hash=np.array(self.hash),
            params=np.array(json.dumps(params_to_dict(self.params))),
            grids=np.array(json.dumps(asdict(self.grids))),
            ccc=self.ccc_table,
            dvgap=self.dvgap_table,
            exvalue=self.exvalue_table,
        )

    @classmethod
    def load(cls, path, params: ModelParams, grids: SolverGrids) -> "TruePolicy":
        with np.load(path, allow_pickle=False) as z:
            stored = str(z["hash"])
            want = content_hash(params, grids)
            if stored != want:
                raise ValueError(
                    f"policy dump hash mismatch: file has {stored[:12]}, "
                    f"requested ({want[:12]})"
                )
            return cls(params, grids, z["ccc"], z["dvgap"], z["exvalue"])


def _golden_max(phi, lo, hi, n_iter):
    """Vectorized golden-section maximization of phi on [lo, hi] elementwise."""
    a, b = lo.copy(), hi.copy()
    x1 = b - _INVPHI * (b - a)
    x2 = a + _INVPHI * (b - a)
    f1, f2 = phi(x1), phi(x2)
    for _ in range(n_iter):
        take = f1 > f2
        a = np.where(take, a, x1)
        b = np.where(take, x2, b)
        x_new = np.where(take, b - _INVPHI * (b - a), a + _INVPHI * (b - a))
        f_new = phi(x_new)
        x1, x2 = np.where(take, x_new, x2), np.where(take, x1, x_new)
        f1, f2 = np.where(take, f_new, f2), np.where(take, f1, f_new)
    best = f1 > f2
    return np.where(best, x1, x2), np.where(best, f1, f2)


def solve_backward(params: ModelParams, grids: SolverGrids | None = None) -> TruePolicy:
    """Solve the model by backward induction over the full (t, m) table set.

    Per (t, m, income, d): a 16-point prescan brackets the consumption optimum
    at every (eta, asset) node, golden-section refines it, and the conditional
    values feed the extreme-value expected maximum integrated over the eta
    midpoint grid. Asserts the solved tables satisfy monotonicity (value weakly
    increasing in assets, consumption strictly increasing in eta).
    """
    if grids is None:
        grids = SolverGrids()
    a_grid = grids.asset_grid()
    e_grid = grids.eta_grid()
    na, ne, T = grids.n_asset, grids.n_eta, params.T
    R = 1.0 + params.r
    y_levels = (params.y_low, params.y_high)

    ccc = np.zeros((T, 2, 2, ne, na, 2), dtype=np.float32)
    dvgap = np.zeros((T, 2, ne, na, 2), dtype=np.float32)
    exvalue = np.zeros((T, 2, na, 2, 2), dtype=float)

    eta_col = e_grid[:, None]
    a_row = a_grid[None, :]

    for m in (1, 2):
        m_i = m - 1
        v_next = None  # exvalue slice at t+1, shape (na, 2 y, 2 w)
        for t in range(T, 0, -1):
            t_i = t - 1
            # continuation interpolants per (d, y_idx)
            if t == T:
                sig_ret = params.sigma[0][m_i]

                def make_cont(d, y_idx, y=None):
                    yv = y_levels[y_idx]

                    def cont(ap):
                        val, _, _ = retirement_value(ap, yv, sig_ret, params)
                        return val

                    return cont

            else:
                def make_cont(d, y_idx):
                    pi_up = params.income_transition[d][y_idx]
                    ev = (1.0 - pi_up) * v_next[:, 0, d] + pi_up * v_next[:, 1, d]
                    if grids.interp == "cubic":
                        sp = CubicSpline(a_grid, ev, bc_type="natural")
                        top_val = ev[-1]
                        top_slope = float(sp.derivative()(a_grid[-1]))

                        def cont(ap):
                            out = sp(np.minimum(ap, a_grid[-1]))
                            over = ap > a_grid[-1]
                            if np.any(over):
                                out = np.where(over, top_val + top_slope * (ap - a_grid[-1]), out)
                            return out

                    else:
                        def cont(ap):
                            return np.interp(ap, a_grid, ev)

                    return cont

            v_cond = np.empty((2, ne, na, 2))  # d, eta, asset, y
            for y_idx in (0, 1):
                y = y_levels[y_idx]
                for d in (0, 1):
                    sig = params.sigma[d][m_i]
                    inc = float(params.income(d, y))
                    cont = make_cont(d, y_idx)
                    c_hi = R * a_row - params.borrow_floor + inc
                    c_hi = np.broadcast_to(c_hi, (ne, na)).copy()
                    c_lo = np.full((ne, na), params.c_floor)
                    feasible = c_hi > c_lo
                    c_hi = np.maximum(c_hi, params.c_floor * (1 + 1e-9))

                    one_minus = 1.0 - sig

                    def phi(c):
                        u = np.exp(one_minus * (np.log(c) - eta_col)) / one_minus
                        return u + params.beta * cont(R * a_row - c + inc)

                    # prescan brackets the optimum
                    fracs = np.linspace(0.0, 1.0, grids.n_prescan)
                    best_f = np.full((ne, na), -np.inf)
                    best_i = np.zeros((ne, na), dtype=int)
                    cs = [c_lo + f * (c_hi - c_lo) for f in fracs]
                    for k, ck in enumerate(cs):
                        fk = phi(ck)
                        upd = fk > best_f
                        best_f = np.where(upd, fk, best_f)
                        best_i = np.where(upd, k, best_i)
                    step = (c_hi - c_lo) / (grids.n_prescan - 1)
                    lo = np.maximum(c_lo, c_lo + (best_i - 1) * step)
                    hi = np.minimum(c_hi, c_lo + (best_i + 1) * step)
                    c_star, v_star = _golden_max(phi, lo, hi, grids.n_golden)
                    c_star = np.where(feasible, c_star, np.nan)
                    v_star = np.where(feasible, v_star, -np.inf)
                    ccc[t_i, m_i, d, :, :, y_idx] = c_star
                    v_cond[d, :, :, y_idx] = v_star

                dvgap[t_i, m_i, :, :, y_idx] = v_cond[1, :, :, y_idx] - v_cond[0, :, :, y_idx]

                for w in (0, 1):
                    pay = additive_payoff(1, w, eta_col, m, params)
                    _, logsum = logsum_ccp(
                        v_cond[0, :, :, y_idx], v_cond[1, :, :, y_idx] + pay
                    )
                    exvalue[t_i, m_i, :, y_idx, w] = logsum.mean(axis=0)

            v_next = exvalue[t_i, m_i]

            # fail loud on shape violations of the solved tables
            vt = exvalue[t_i, m_i]
            if not np.all(np.diff(vt, axis=0) > -1e-7 * np.maximum(1.0, np.abs(vt[:-1]))):
                raise RuntimeError(f"value not increasing in assets at t={t}, m={m}")
            # consumption strictly increasing in eta at interior nodes; flat
            # only where the borrowing floor binds (c at the resource bound)
            ct = ccc[t_i, m_i].astype(float)
            inc_mat = np.array(
                [[float(params.income(d, yv)) for yv in y_levels] for d in (0, 1)]
            )
            bound = (
                R * a_grid[None, None, :, None]
                - params.borrow_floor
                + inc_mat[:, None, None, :]
            )
            at_bound = ct >= bound - 1e-4 * np.maximum(1.0, bound)
            dct = np.diff(ct, axis=1)
            interior_pair = ~at_bound[:, 1:] & ~at_bound[:, :-1]
            if not np.all(dct >= -1e-6):
                raise RuntimeError(f"consumption decreasing in eta at t={t}, m={m}")
            if not np.all(dct[interior_pair] > 0):
                raise RuntimeError(
                    f"consumption not strictly increasing in eta at interior nodes, t={t}, m={m}"
                )

    return TruePolicy(params, grids, ccc, dvgap, exvalue)


def solve_or_load(params: ModelParams, grids: SolverGrids | None = None, cache_dir=None) -> TruePolicy:
    """Solve, or load a cached solve keyed by the content hash."""
    if grids is None:
        grids = SolverGrids()
    if cache_dir is None:
        return solve_backward(params, grids)
    from pathlib import Path

    cache = Path(cache_dir)
    cache.mkdir(parents=True, exist_ok=True)
    path = cache / f"policy_{content_hash(params, grids)[:16]}.npz"
    if path.exists():
        return TruePolicy.load(path, params, grids)
    pol = solve_backward(params, grids)
    pol.dump(path)
    return pol


def euler_residual_table(policy: TruePolicy, t: int, m: int, asset_lo=5.0, asset_hi=None):
    """Relative Euler residuals |u'(c_t) - beta R E u'(c_{t+1})| / u'(c_t).

    Evaluated on (eta, asset) nodes for both d. The next-period expectation
    integrates the eta midpoint grid, the income transition, and the choice
    probabilities; at t = T the continuation is the retiree's first-period
    marginal utility times nothing extra (the envelope dV/da' = (1+r) u'(c_0)
    supplies the (1+r) factor). Nodes where the resource bound binds this
    period are set to NaN: the Euler equation only holds with equality at
    interior optima. Used by the test suite.
    """
    params, grids = policy.params, policy.grids
    a_grid = policy.asset_grid
    e_grid = policy.eta_grid
    if asset_hi is None:
        asset_hi = 0.7 * grids.asset_max
    keep = (a_grid >= asset_lo) & (a_grid <= asset_hi)
    a_sel = a_grid[keep]
    R = 1.0 + params.r
    y_levels = (params.y_low, params.y_high)
    m_i = m - 1

    # expected next-period marginal utility on the asset grid, per (y', w')
    if t < params.T:
        g_next = np.zeros((a_grid.size, 2, 2))
        for y_idx in (0, 1):
            for w in (0, 1):
                acc = np.zeros((e_grid.size, a_grid.size))
                p1 = policy.ccp(
                    t + 1, m, e_grid[:, None], a_grid[None, :], y_levels[y_idx], w
                )
                for d in (0, 1):
                    c = policy.ccc_table[t, m_i, d, :, :, y_idx].astype(float)
                    mu = marginal_utility(c, e_grid[:, None], params.sigma[d][m_i])
                    acc += np.where(d == 1, p1, 1.0 - p1) * mu
                g_next[:, y_idx, w] = acc.mean(axis=0)

    out = {}
    for y_idx in (0, 1):
        y = y_levels[y_idx]
        for d in (0, 1):
            c_star = policy.ccc_table[t - 1, m_i, d, :, :, y_idx].astype(float)[:, keep]
            b1 = marginal_utility(c_star, e_grid[:, None], params.sigma[d][m_i])
            ap = R * a_sel[None, :] - c_star + float(params.income(d, y))
            if t == params.T:
                _, _, mu_entry = retirement_value(ap, y, params.sigma[0][m_i], params)
                emu = mu_entry
            else:
                pi_up = params.income_transition[d][y_idx]
                emu = (1.0 - pi_up) * np.interp(ap, a_grid, g_next[:, 0, d]) + pi_up * np.interp(
                    ap, a_grid, g_next[:, 1, d]
                )
            b2 = params.beta * R * emu
            rel = np.abs(b1 - b2) / b1
            bound = R * a_sel[None, :] + float(params.income(d, y)) - params.borrow_floor
            at_bound = c_star >= bound - 1e-4 * np.maximum(1.0, bound)
            out[(d, y_idx)] = np.where(at_bound, np.nan, rel)
    return out

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from ddchoice import ModelParams, SolverGrids, solve_backward, solve_or_load
from ddchoice.model import (
    additive_payoff,
    marginal_utility,
    period_utility,
    retirement_value,
)
from ddchoice.solver import TruePolicy, content_hash, euler_residual_table


# ---------------------------------------------------------------------------
# terminal period against an independent optimizer on the analytic objective
# ---------------------------------------------------------------------------


def terminal_optimum(params, m, d, y, eta, a):
    """Brent on u(c) + beta * V_retire((1+r)a - c + earnings). Independent of
    the solver's prescan/golden-section machinery."""
    R = 1.0 + params.r
    inc = float(params.income(d, y))
    sig = params.sigma[d][m - 1]
    sig_ret = params.sigma[0][m - 1]

    def neg(c):
        val, _, _ = retirement_value(R * a - c + inc, y, sig_ret, params)
        return -(period_utility(c, eta, sig) + params.beta * val)

    hi = R * a + inc - params.borrow_floor
    res = minimize_scalar(
        neg, bounds=(params.c_floor, hi), method="bounded",
        options={"xatol": 1e-10},
    )
    return float(res.x)


def test_terminal_consumption_matches_brent(policy, params, grids):
    e_grid = grids.eta_grid()
    a_grid = grids.asset_grid()
    eta_idx = [7, 50, 93]
    a_idx = [20, 120, 200]
    for m in (1, 2):
        for d in (0, 1):
            for y_j, y in enumerate((params.y_low, params.y_high)):
                for ie in eta_idx:
                    for ia in a_idx:
                        c_tab = float(policy.ccc_table[params.T - 1, m - 1, d, ie, ia, y_j])
                        c_ref = terminal_optimum(
                            params, m, d, y, e_grid[ie], a_grid[ia]
                        )
                        assert c_tab == pytest.approx(c_ref, abs=1e-4 * max(1.0, c_ref))


# ---------------------------------------------------------------------------
# Euler equation holds at interior nodes through the whole backward pass
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("m", [1, 2])
def test_euler_residuals_interior(policy, params, m):
    for t in range(2, params.T + 1):
        res = euler_residual_table(policy, t, m)
        allv = np.concatenate([v.ravel() for v in res.values()])
        assert np.nanmax(allv) < 1e-2, f"t={t}"
        assert np.nanmedian(allv) < 1e-3, f"t={t}"


# ---------------------------------------------------------------------------
# shape restrictions the estimator relies on
# ---------------------------------------------------------------------------


def test_consumption_increasing_in_eta(policy, params, grids):
    a_grid = grids.asset_grid()
    R = 1.0 + params.r
    tab = policy.ccc_table.astype(float)
    for t in range(1, params.T + 1):
        for m in (1, 2):
            for d in (0, 1):
                for y_j, y in enumerate((params.y_low, params.y_high)):
                    c = tab[t - 1, m - 1, d, :, :, y_j]
                    bound = R * a_grid[None, :] + float(params.income(d, y)) - params.borrow_floor
                    interior = c < bound - 1e-4 * np.maximum(1.0, bound)
                    dc = np.diff(c, axis=0)
                    assert np.all(dc >= -1e-5 * np.maximum(1.0, c[:-1]))
                    both_int = interior[:-1] & interior[1:]
                    assert np.all(dc[both_int] > 0)


def test_consumption_increasing_in_assets(policy, params):
    tab = policy.ccc_table.astype(float)
    dc = np.diff(tab, axis=4)
    assert np.all(dc >= -1e-4 * np.maximum(1.0, tab[..., :-1, :]))


def test_exante_value_increasing_in_assets_and_income(policy, params, grids):
    ev = policy.exvalue_table
    assert np.all(np.diff(ev, axis=2) >= -1e-7 * np.abs(ev[:, :, :-1]))
    a = np.array([10.0, 40.0, 90.0])
    for t in (1, 5, 9):
        for m in (1, 2):
            for w in (0, 1):
                lo = policy.exante_value(t, m, a, params.y_low, w)
                hi = policy.exante_value(t, m, a, params.y_high, w)
                assert np.all(hi > lo)


def test_ccp_definition_and_range(policy, params):
    rng = np.random.default_rng(5)
    eta = rng.uniform(0.01, 0.99, 40)
    a = rng.uniform(0.0, 300.0, 40)
    for m in (1, 2):
        for w in (0, 1):
            p = policy.ccp(3, m, eta, a, params.y_low, w)
            assert np.all((p > 0) & (p < 1))
            gap = policy.value_gap(3, m, eta, a, params.y_low)
            manual = 1.0 / (1.0 + np.exp(-(gap + additive_payoff(1, w, eta, m, params))))
            np.testing.assert_allclose(p, manual, rtol=1e-12)


def test_switching_cost_raises_persistence(policy, params):
    eta = np.array([0.25, 0.5, 0.75])
    p0 = policy.ccp(2, 1, eta, 30.0, params.y_low, 0)
    p1 = policy.ccp(2, 1, eta, 30.0, params.y_low, 1)
    assert np.all(p1 > p0)


# ---------------------------------------------------------------------------
# interpolation contract
# ---------------------------------------------------------------------------


def test_queries_reproduce_grid_nodes(policy, params, grids):
    e_grid = grids.eta_grid()
    a_grid = grids.asset_grid()
    ie, ia = 33, 111
    got = policy.ccc(4, 2, 1, e_grid[ie], a_grid[ia], params.y_high)
    want = float(policy.ccc_table[3, 1, 1, ie, ia, 1])
    assert got == pytest.approx(want, rel=1e-12)
    got = policy.value_gap(4, 2, e_grid[ie], a_grid[ia], params.y_high)
    want = float(policy.dvgap_table[3, 1, ie, ia, 1])
    assert got == pytest.approx(want, rel=1e-10)


def test_asset_clamp_counts_warnings(policy, params, grids):
    before = policy.clamp_warnings
    policy.ccc(3, 1, 0, 0.5, grids.asset_max + 50.0, params.y_low)
    assert policy.clamp_warnings == before + 1


def test_eta_extrapolation_stays_sane(policy, params):
    c_lo = policy.ccc(3, 1, 0, 0.0005, 30.0, params.y_low)
    c_in = policy.ccc(3, 1, 0, 0.02, 30.0, params.y_low)
    c_hi = policy.ccc(3, 1, 0, 0.9995, 30.0, params.y_low)
    assert 0 < c_lo <= c_in < c_hi
    assert np.isfinite(c_lo) and np.isfinite(c_hi)


# ---------------------------------------------------------------------------
# persistence and cache keys
# ---------------------------------------------------------------------------


def test_dump_load_round_trip(policy, params, grids, tmp_path):
    path = tmp_path / "pol.npz"
    policy.dump(path)
    back = TruePolicy.load(path, params, grids)
    np.testing.assert_array_equal(back.ccc_table, policy.ccc_table)
    np.testing.assert_array_equal(back.dvgap_table, policy.dvgap_table)
    np.testing.assert_array_equal(back.exvalue_table, policy.exvalue_table)
    with pytest.raises(ValueError, match="hash mismatch"):
        TruePolicy.load(path, params.replace(beta=0.9), grids)


def test_solve_or_load_caches(tmp_path):
    p = ModelParams().replace(T=6)
    g = SolverGrids(n_asset=40, n_eta=11, n_prescan=8, n_golden=18)
    first = solve_or_load(p, g, cache_dir=tmp_path)
    assert any(f.suffix == ".npz" for f in tmp_path.iterdir())
    second = solve_or_load(p, g, cache_dir=tmp_path)
    np.testing.assert_array_equal(first.ccc_table, second.ccc_table)


def test_content_hash_sensitivity(params, grids):
    h = content_hash(params, grids)
    assert h != content_hash(params.replace(beta=0.951), grids)
    assert h != content_hash(params, SolverGrids(n_asset=grids.n_asset + 1))
    assert h == content_hash(ModelParams(), SolverGrids())


# ---------------------------------------------------------------------------
# symmetric alternatives collapse onto each other
# ---------------------------------------------------------------------------


def test_symmetric_alternatives_equalize():
    p = ModelParams().replace(
        sigma=((1.7, 2.0), (1.7, 2.0)),
        gamma=(0.0, 0.0),
        alpha=(0.0, 0.0),
        omega=(0.0, 0.0),
        part_time_share=1.0,
        income_transition=((0.3, 0.6), (0.3, 0.6)),
    )
    g = SolverGrids(n_asset=60, n_eta=21)
    pol = solve_backward(p, g)
    np.testing.assert_allclose(
        pol.ccc_table[:, :, 0], pol.ccc_table[:, :, 1], rtol=1e-6, atol=1e-6
    )
    assert np.all(np.abs(pol.dvgap_table) < 1e-5)
    eta = np.array([0.2, 0.5, 0.8])
    for w in (0, 1):
        np.testing.assert_allclose(
            pol.ccp(3, 1, eta, 40.0, p.y_low, w), 0.5, atol=1e-5
        )


def test_terminal_consumption_rises_with_more_retirement_need():
    # shorter retirement horizon leaves more for last working-age consumption
    g = SolverGrids(n_asset=50, n_eta=11)
    base = ModelParams().replace(T=6)
    long_ret = base.replace(T_retire=8)
    c_short = solve_backward(base, g).ccc_table[5, 0, 1, 5, 25, 0]
    c_long = solve_backward(long_ret, g).ccc_table[5, 0, 1, 5, 25, 0]
    assert c_long < c_short

import numpy as np
import pytest
from scipy import stats

from ddchoice import (
    Panel,
    estimate_income_transition,
    read_panel,
    read_truth,
    simulate_panel,
    write_panel,
    write_truth,
)
from ddchoice.panel import PanelFormatError, PanelValidationError, validate_panel
from ddchoice.rng import make_generator, replication_generator


@pytest.fixture(scope="module")
def sim(policy, params):
    return simulate_panel(params, policy, n=2000, seed=7)


def test_panel_shape_and_codes(sim, params):
    panel, truth = sim
    assert panel.n_individuals == 2000
    assert panel.n_periods == params.T
    assert panel.n_obs == 2000 * params.T
    assert set(np.unique(panel.d)) <= {0, 1}
    assert set(np.unique(panel.w)) <= {0, 1}
    assert np.all(panel.c > 0)
    assert np.all(np.isin(panel.income, [params.y_low, params.y_high]))
    assert set(np.unique(truth.m)) == {1, 2}
    assert np.all((truth.eta > 0) & (truth.eta < 1))


def test_same_seed_bit_identical(policy, params):
    p1, t1 = simulate_panel(params, policy, n=300, seed=42)
    p2, t2 = simulate_panel(params, policy, n=300, seed=42)
    for k in ("ids", "t", "d", "c", "asset", "income", "w"):
        np.testing.assert_array_equal(getattr(p1, k), getattr(p2, k))
    np.testing.assert_array_equal(t1.eta, t2.eta)
    p3, _ = simulate_panel(params, policy, n=300, seed=43)
    assert not np.array_equal(p1.c, p3.c)


def test_replication_streams_differ():
    g0 = replication_generator(123, 0)
    g1 = replication_generator(123, 1)
    a0, a1 = g0.random(8), g1.random(8)
    assert not np.array_equal(a0, a1)
    g0b = replication_generator(123, 0)
    np.testing.assert_array_equal(a0, g0b.random(8))


def test_budget_chain_internal(sim, params):
    panel, _ = sim
    R = 1.0 + params.r
    n, T = panel.n_individuals, params.T
    a = panel.asset.reshape(n, T)
    c = panel.c.reshape(n, T)
    d = panel.d.reshape(n, T)
    y = panel.income.reshape(n, T)
    implied = R * a[:, :-1] - c[:, :-1] + np.asarray(params.income(d[:, :-1], y[:, :-1]))
    np.testing.assert_allclose(a[:, 1:], implied, rtol=1e-12, atol=1e-9)


def test_w_chain_and_validation(sim):
    panel, _ = sim
    validate_panel(panel)  # raises on violation
    n, T = panel.n_individuals, panel.n_periods
    d = panel.d.reshape(n, T)
    w = panel.w.reshape(n, T)
    np.testing.assert_array_equal(w[:, 1:], d[:, :-1])


def test_consumption_matches_policy_exactly(sim, policy):
    panel, truth = sim
    # the simulator must have priced consumption off the queried policy at
    # the realized (t, m, d, eta, asset, income); re-query and compare
    for t in (1, 5, 10):
        sel = panel.t == t
        cm = np.empty(sel.sum())
        sub_m = truth.m[sel]
        sub_d = panel.d[sel]
        for m in (1, 2):
            for d in (0, 1):
                pick = (sub_m == m) & (sub_d == d)
                if pick.any():
                    cm[pick] = policy.ccc(
                        t, m, d,
                        truth.eta[sel][pick],
                        panel.asset[sel][pick],
                        panel.income[sel][pick],
                    )
        np.testing.assert_allclose(panel.c[sel], cm, rtol=1e-12)


def test_choice_frequencies_match_ccp(sim, policy):
    panel, truth = sim
    p = np.empty(panel.n_obs)
    for t in range(1, panel.n_periods + 1):
        for m in (1, 2):
            sel = (panel.t == t) & (truth.m == m)
            if sel.any():
                p[sel] = policy.ccp(
                    t, m, truth.eta[sel], panel.asset[sel],
                    panel.income[sel], panel.w[sel],
                )
    for w in (0, 1):
        sel = panel.w == w
        se = np.sqrt(np.sum(p[sel] * (1 - p[sel])))
        assert abs(panel.d[sel].sum() - p[sel].sum()) < 4 * se


def test_initial_conditions(sim, params):
    panel, truth = sim
    first = panel.t == 1
    n = first.sum()
    share1 = np.mean(truth.m[first] == 1)
    assert abs(share1 - params.pi1) < 4 * np.sqrt(0.6 * 0.4 / n)
    assert abs(panel.w[first].mean() - params.init_w_prob) < 4 * np.sqrt(0.25 / n)
    hi = np.mean(panel.income[first] == params.y_high)
    assert abs(hi - params.init_yhigh_prob) < 4 * np.sqrt(0.25 / n)
    a1 = panel.asset[first]
    assert np.all(a1 >= 0)
    assert abs(a1.mean() - params.init_asset_mean) < 4 * params.init_asset_sd / np.sqrt(n)


def test_eta_uniform(sim):
    _, truth = sim
    stat = stats.kstest(truth.eta, "uniform")
    assert stat.pvalue > 1e-5


def test_income_transition_recovery(sim, params):
    panel, _ = sim
    est = estimate_income_transition(panel)
    n, T = panel.n_individuals, panel.n_periods
    d = panel.d.reshape(n, T)
    y = panel.income.reshape(n, T)
    for dv in (0, 1):
        for j, yv in enumerate((params.y_low, params.y_high)):
            cell = (d[:, :-1] == dv) & (y[:, :-1] == yv)
            n_cell = cell.sum()
            truth_p = params.income_transition[dv][j]
            se = np.sqrt(max(truth_p * (1 - truth_p), 1e-4) / max(n_cell, 1))
            assert abs(est[dv][j] - truth_p) < 5 * se


def test_income_transition_exact_counts():
    # two individuals, hand-built transitions: from (d=1, y=30): up, stay;
    # from (d=0, y=60): down
    panel = Panel(
        ids=np.array([0, 0, 0, 1, 1, 1]),
        t=np.array([1, 2, 3, 1, 2, 3]),
        d=np.array([1, 0, 1, 1, 1, 0]),
        c=np.ones(6),
        asset=np.zeros(6),
        income=np.array([30.0, 60.0, 30.0, 30.0, 30.0, 60.0]),
        w=np.array([0, 1, 0, 0, 1, 1]),
    )
    est = estimate_income_transition(panel)
    assert est[1][0] == pytest.approx(2.0 / 3.0)  # d=1,y_L: up, stay-low, up
    assert est[0][1] == pytest.approx(0.0)  # d=0,y_H: down once
    assert est[0][0] == 0.0  # empty cell
    assert est[1][1] == 0.0  # empty cell


def test_csv_round_trip(sim, tmp_path):
    panel, truth = sim
    pp = tmp_path / "panel.csv"
    tp = tmp_path / "truth.csv"
    write_panel(pp, panel)
    write_truth(tp, truth)
    back = read_panel(pp)
    np.testing.assert_array_equal(back.ids, panel.ids)
    np.testing.assert_array_equal(back.d, panel.d)
    np.testing.assert_allclose(back.c, panel.c, rtol=1e-11)
    np.testing.assert_allclose(back.asset, panel.asset, rtol=1e-11, atol=1e-9)
    tb = read_truth(tp)
    np.testing.assert_array_equal(tb.m, truth.m)
    np.testing.assert_allclose(tb.eta, truth.eta, rtol=1e-11)


def test_write_is_deterministic(sim, tmp_path):
    panel, _ = sim
    p1 = tmp_path / "a.csv"
    p2 = tmp_path / "b.csv"
    write_panel(p1, panel)
    write_panel(p2, panel)
    assert p1.read_bytes() == p2.read_bytes()


def test_read_panel_error_reporting(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("id,t,d,c,asset,income,w\n0,1,0,12.5,40,30\n")
    with pytest.raises(PanelFormatError, match=":2"):
        read_panel(path)
    path.write_text("id,t,d,c,asset,income\n")
    with pytest.raises(PanelFormatError, match="header"):
        read_panel(path)
    path.write_text("id,t,d,c,asset,income,w\n0,1,0,oops,40,30,0\n")
    with pytest.raises(PanelFormatError):
        read_panel(path)
    path.write_text("")
    with pytest.raises(PanelFormatError, match="empty"):
        read_panel(path)


def test_validate_catches_broken_chains():
    base = dict(
        ids=np.array([0, 0]),
        t=np.array([1, 2]),
        d=np.array([1, 0]),
        c=np.array([5.0, 5.0]),
        asset=np.array([10.0, 10.0]),
        income=np.array([30.0, 30.0]),
    )
    ok = Panel(w=np.array([0, 1]), **base)
    validate_panel(ok)
    bad_w = Panel(w=np.array([0, 0]), **base)
    with pytest.raises(PanelValidationError, match="lagged"):
        validate_panel(bad_w)
    gap = Panel(
        ids=np.array([0, 0]),
        t=np.array([1, 3]),
        d=np.array([1, 0]),
        c=np.array([5.0, 5.0]),
        asset=np.array([10.0, 10.0]),
        income=np.array([30.0, 30.0]),
        w=np.array([0, 1]),
    )
    with pytest.raises(PanelValidationError, match="non-consecutive"):
        validate_panel(gap)
    neg_c = Panel(w=np.array([0, 1]), **{**base, "c": np.array([5.0, -1.0])})
    with pytest.raises(PanelValidationError, match="consumption"):
        validate_panel(neg_c)


def test_make_generator_reproducible():
    a = make_generator(99).random(5)
    b = make_generator(99).random(5)
    np.testing.assert_array_equal(a, b)

"""Panel simulation and CSV round-trip.

A panel holds N individuals over T periods with columns
(id, t, d, c, asset, income, w); the unobserved type and taste shock live in a
separate truth sidecar so estimators cannot read them by accident.

Simulation draws, in a fixed documented order from one Philox stream
(type, initial w, initial income, initial assets, then per period
eta / choice / income-growth uniforms), which makes panels bit-identical for
identical seeds.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .model import budget_transition
from .params import ModelParams
from .rng import make_generator


class PanelFormatError(ValueError):
    """Malformed panel file (wrong header, bad row, empty data)."""


class PanelValidationError(ValueError):
    """Structurally valid file with inconsistent content (w != lagged d)."""


@dataclass
class Panel:
    ids: np.ndarray
    t: np.ndarray
    d: np.ndarray
    c: np.ndarray
    asset: np.ndarray
    income: np.ndarray
    w: np.ndarray

    @property
    def n_obs(self) -> int:
        return self.ids.size

    @property
    def n_individuals(self) -> int:
        return np.unique(self.ids).size

    @property
    def n_periods(self) -> int:
        return int(self.t.max())


@dataclass
class PanelTruth:
    ids: np.ndarray
    t: np.ndarray
    m: np.ndarray
    eta: np.ndarray


def simulate_panel(params: ModelParams, policy, n: int, seed: int):
    """Simulate n individuals for T periods under the given policy object.

    The policy must expose ccc(t, m, d, eta, asset, income) and
    ccp(t, m, eta, asset, income, w) with scalar (t, m, d) and array states.
    Returns (Panel, PanelTruth); rows are ordered individual-major.
    """
    if n < 1:
        raise ValueError("need at least one individual")
    rng = make_generator(seed)
    T = params.T

    mtype = np.where(rng.random(n) < params.pi1, 1, 2)
    w = (rng.random(n) < params.init_w_prob).astype(int)
    income = np.where(
        rng.random(n) < params.init_yhigh_prob, params.y_high, params.y_low
    )
    asset = np.maximum(
        params.init_asset_mean + params.init_asset_sd * rng.standard_normal(n), 0.0
    )

    cols = {k: np.empty((n, T)) for k in ("d", "c", "asset", "income", "w", "eta")}
    for t in range(1, T + 1):
        eta = rng.random(n)
        d_u = rng.random(n)
        y_u = rng.random(n)
        d = np.zeros(n, dtype=int)
        c = np.zeros(n)
        for m in (1, 2):
            sel = mtype == m
            if not np.any(sel):
                continue
            p1 = policy.ccp(t, m, eta[sel], asset[sel], income[sel], w[sel])
            d_m = (d_u[sel] < p1).astype(int)
            d[sel] = d_m
            for dv in (0, 1):
                sub = np.flatnonzero(sel)[d_m == dv]
                if sub.size:
                    c[sub] = policy.ccc(t, m, dv, eta[sub], asset[sub], income[sub])
        cols["d"][:, t - 1] = d
        cols["c"][:, t - 1] = c
        cols["asset"][:, t - 1] = asset
        cols["income"][:, t - 1] = income
        cols["w"][:, t - 1] = w
        cols["eta"][:, t - 1] = eta

        asset = budget_transition(asset, c, d, income, params)
        p_up = np.empty(n)
        for dv in (0, 1):
            for y_idx, y in enumerate((params.y_low, params.y_high)):
                sel = (d == dv) & (income == y)
                p_up[sel] = params.income_transition[dv][y_idx]
        income = np.where(y_u < p_up, params.y_high, params.y_low)
        w = d

    ids = np.repeat(np.arange(n), T)
    tt = np.tile(np.arange(1, T + 1), n)
    panel = Panel(
        ids=ids,
        t=tt,
        d=cols["d"].ravel().astype(int),
        c=cols["c"].ravel(),
        asset=cols["asset"].ravel(),
        income=cols["income"].ravel(),
        w=cols["w"].ravel().astype(int),
    )
    truth = PanelTruth(
        ids=ids, t=tt, m=np.repeat(mtype, T), eta=cols["eta"].ravel()
    )
    return panel, truth


_HEADER = ["id", "t", "d", "c", "asset", "income", "w"]
_TRUTH_HEADER = ["id", "t", "m", "eta"]


def write_panel(path, panel: Panel) -> None:
    """Write the observable panel as CSV with 12 significant digits."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(_HEADER) + "\n")
        for i in range(panel.n_obs):
            fh.write(
                "%d,%d,%d,%.12g,%.12g,%.12g,%d\n"
                % (
                    panel.ids[i],
                    panel.t[i],
                    panel.d[i],
                    panel.c[i],
                    panel.asset[i],
                    panel.income[i],
                    panel.w[i],
                )
            )


def write_truth(path, truth: PanelTruth) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(_TRUTH_HEADER) + "\n")
        for i in range(truth.ids.size):
            fh.write(
                "%d,%d,%d,%.12g\n" % (truth.ids[i], truth.t[i], truth.m[i], truth.eta[i])
            )


def read_panel(path, validate: bool = True) -> Panel:
    """Read and validate a panel CSV.

    Raises PanelFormatError on header mismatches, non-numeric fields, or an
    empty file (with the offending line number), and PanelValidationError when
    w does not equal the individual's lagged d.
    """
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise PanelFormatError(f"{path}: file is empty") from None
        if [h.strip() for h in header] != _HEADER:
            raise PanelFormatError(
                f"{path}:1: expected header {','.join(_HEADER)}, got {','.join(header)}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(_HEADER):
                raise PanelFormatError(
                    f"{path}:{lineno}: expected {len(_HEADER)} fields, got {len(row)}"
                )
            try:
                rows.append(
                    (
                        int(row[0]),
                        int(row[1]),
                        int(row[2]),
                        float(row[3]),
                        float(row[4]),
                        float(row[5]),
                        int(row[6]),
                    )
                )
            except ValueError:
                raise PanelFormatError(
                    f"{path}:{lineno}: non-numeric field in {row!r}"
                ) from None
    if not rows:
        raise PanelFormatError(f"{path}: no data rows")
    arr = np.array(rows, dtype=float)
    panel = Panel(
        ids=arr[:, 0].astype(int),
        t=arr[:, 1].astype(int),
        d=arr[:, 2].astype(int),
        c=arr[:, 3],
        asset=arr[:, 4],
        income=arr[:, 5],
        w=arr[:, 6].astype(int),
    )
    if validate:
        validate_panel(panel, name=str(path))
    return panel


def validate_panel(panel: Panel, name: str = "panel") -> None:
    if not np.all((panel.d == 0) | (panel.d == 1)):
        raise PanelValidationError(f"{name}: d outside {{0,1}}")
    if not np.all((panel.w == 0) | (panel.w == 1)):
        raise PanelValidationError(f"{name}: w outside {{0,1}}")
    if np.any(panel.c <= 0):
        raise PanelValidationError(f"{name}: nonpositive consumption")
    # within an individual, w at t must equal d at t-1
    order = np.lexsort((panel.t, panel.ids))
    ids, tt = panel.ids[order], panel.t[order]
    same = ids[1:] == ids[:-1]
    consec = tt[1:] == tt[:-1] + 1
    bad_gap = same & ~consec
    if np.any(bad_gap):
        k = np.flatnonzero(bad_gap)[0]
        raise PanelValidationError(
            f"{name}: non-consecutive periods for id {ids[k]} (t={tt[k]} then t={tt[k+1]})"
        )
    w_next = panel.w[order][1:]
    d_prev = panel.d[order][:-1]
    bad = same & consec & (w_next != d_prev)
    if np.any(bad):
        k = np.flatnonzero(bad)[0]
        raise PanelValidationError(
            f"{name}: w != lagged d for id {ids[k]} at t={tt[k+1]}"
        )


def read_truth(path) -> PanelTruth:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise PanelFormatError(f"{path}: file is empty")
        if [h.strip() for h in header] != _TRUTH_HEADER:
            raise PanelFormatError(f"{path}:1: bad truth header")
        rows = [
            (int(r[0]), int(r[1]), int(r[2]), float(r[3])) for r in reader if r
        ]
    if not rows:
        raise PanelFormatError(f"{path}: no data rows")
    arr = np.array(rows, dtype=float)
    return PanelTruth(
        ids=arr[:, 0].astype(int),
        t=arr[:, 1].astype(int),
        m=arr[:, 2].astype(int),
        eta=arr[:, 3],
    )


def estimate_income_transition(panel: Panel) -> tuple[tuple[float, float], tuple[float, float]]:
    """Cell frequencies Pr(next income high | d, income), pooled over periods."""
    order = np.lexsort((panel.t, panel.ids))
    ids, tt = panel.ids[order], panel.t[order]
    inc, d = panel.income[order], panel.d[order]
    same = (ids[1:] == ids[:-1]) & (tt[1:] == tt[:-1] + 1)
    y_now, y_next = inc[:-1][same], inc[1:][same]
    d_now = d[:-1][same]
    y_hi = np.unique(panel.income).max()
    y_lo = np.unique(panel.income).min()
    out = []
    for dv in (0, 1):
        row = []
        for yv in (y_lo, y_hi):
            sel = (d_now == dv) & (y_now == yv)
            row.append(float(np.mean(y_next[sel] == y_hi)) if np.any(sel) else 0.0)
        out.append(tuple(row))
    return tuple(out)

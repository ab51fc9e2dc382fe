"""Recover the scalar consumption shock by inverting estimated CCC curves.

Each record's own conditional consumption curve (given its chosen d and its
state) is strictly increasing in the shock after rearrangement, so the
realized consumption pins the shock down exactly. Values outside the curve's
range clamp to [0.001, 0.999] and are counted on the estimate object.
"""

from __future__ import annotations

import numpy as np

from ..panel import Panel
from .ivqr import CCCEstimate


def recover_eta(panel: Panel, ccc: CCCEstimate) -> np.ndarray:
    """Per-record shock estimates; NaN where the record's cell is
    unidentified."""
    out = np.full(panel.n_obs, np.nan)
    T = int(panel.t.max())
    for t in range(1, T + 1):
        for d in (0, 1):
            sel = (panel.t == t) & (panel.d == d)
            if not np.any(sel):
                continue
            out[sel] = ccc.invert(
                t, float(d), panel.c[sel], panel.asset[sel], panel.income[sel]
            )
    return out

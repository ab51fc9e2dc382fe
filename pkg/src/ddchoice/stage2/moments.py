"""Moment states at which the second-step criteria are evaluated."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from ..params import ModelParams


@dataclass(frozen=True)
class Moment:
    t: int
    eta: float
    asset: float
    income: float
    w: int
    m: int


@dataclass
class MomentSpec:
    moments: list[Moment]
    n_sim: int = 1000  # one-period-ahead draws per moment and choice
    n_life: int = 500  # full life-cycle paths per moment and choice
    seed: int = 0

    def __post_init__(self):
        for s in self.moments:
            if not 2 <= s.t:
                raise ValueError(f"moment age {s.t} must be at least 2")
            if not 0.0 < s.eta < 1.0:
                raise ValueError(f"moment eta {s.eta} must lie inside (0, 1)")


def default_moments(
    params: ModelParams,
    ages=(5, 8),
    etas=(0.25, 0.5, 0.75),
    assets=(30.0,),
    n_types: int = 2,
    n_sim: int = 1000,
    n_life: int = 500,
    seed: int = 0,
) -> MomentSpec:
    """Moment grid: asset x income x age x eta x lagged choice x type."""
    incomes = (params.y_low, params.y_high)
    moments = [
        Moment(t=int(t), eta=float(e), asset=float(a), income=float(y), w=w, m=m)
        for t, y, a, e, w, m in product(
            ages, incomes, assets, etas, (0, 1), range(1, n_types + 1)
        )
    ]
    return MomentSpec(moments=moments, n_sim=n_sim, n_life=n_life, seed=seed)


def spawn_streams(seed: int, namespace: int, count: int):
    """Deterministic child seed sequences under a numbered namespace.

    Each consumer of randomness (the two criteria and the optimizer jitter)
    gets its own namespace so streams never collide even though everything
    derives from the single MomentSpec seed.
    """
    root = np.random.SeedSequence(seed).spawn(namespace + 1)[namespace]
    return root.spawn(count)

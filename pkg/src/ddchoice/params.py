"""Model parameter container and flat key=value config serialization.

The default values reproduce the benchmark Monte Carlo design: a ten-period
working life with two unobserved preference types, a binary work choice with
switching costs, stochastic income growth, and a five-period retirement phase
funded by a pension equal to half of final income.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


class ConfigError(ValueError):
    """Raised when a config file or parameter set fails validation."""


@dataclass(frozen=True)
class ModelParams:
    """Primitives of the life-cycle discrete-continuous choice model.

    Indexing conventions used throughout the package:
      d is the discrete choice (0 = part time, 1 = full time),
      m is the unobserved type (1 or 2),
      y is the income level (y_low or y_high).

    sigma[d][m-1] is the curvature of flow utility; gamma/alpha/omega are the
    type-specific components of the additive payoff to d=1 (constant, taste
    for the scalar shock, and cost of switching from w=0). pi1 is the
    population share of type 1.

    income_transition[d][j] is Pr(next income = y_high | d, current income),
    with j = 0 for y_low and j = 1 for y_high.
    """

    beta: float = 0.95
    sigma: tuple[tuple[float, float], tuple[float, float]] = ((1.7, 2.0), (1.6, 1.5))
    gamma: tuple[float, float] = (0.0, -0.5)
    alpha: tuple[float, float] = (2.0, 2.5)
    omega: tuple[float, float] = (-2.0, -2.2)
    pi1: float = 0.6
    y_low: float = 30.0
    y_high: float = 60.0
    income_transition: tuple[tuple[float, float], tuple[float, float]] = (
        (0.0, 0.3),
        (0.5, 0.75),
    )
    r: float = 0.015
    T: int = 10
    T_retire: int = 5
    pension_rate: float = 0.5
    part_time_share: float = 0.5
    init_asset_mean: float = 40.0
    init_asset_sd: float = 10.0
    init_w_prob: float = 0.5
    init_yhigh_prob: float = 0.5
    borrow_floor: float = 0.0
    c_floor: float = 1e-6

    def __post_init__(self):
        validate_params(self)

    @property
    def n_types(self) -> int:
        return 2

    def income(self, d, y):
        """Earnings given the work choice: full income if d=1, the part-time
        share of it otherwise. Accepts arrays."""
        d = np.asarray(d)
        y = np.asarray(y)
        return np.where(d == 1, y, self.part_time_share * y)

    def replace(self, **kw) -> "ModelParams":
        return replace(self, **kw)


def validate_params(p: ModelParams) -> None:
    errs = []
    if not (0.0 < p.beta < 1.0):
        errs.append(f"beta must lie in (0,1), got {p.beta}")
    for d in (0, 1):
        for j in (0, 1):
            s = p.sigma[d][j]
            if s <= 0:
                errs.append(f"sigma[{d}][{j}] must be positive, got {s}")
            if abs(s - 1.0) < 1e-12:
                errs.append(f"sigma[{d}][{j}] = 1 (log utility) is excluded")
    if not (0.0 < p.pi1 < 1.0):
        errs.append(f"pi1 must lie in (0,1), got {p.pi1}")
    if p.y_low <= 0 or p.y_high <= 0:
        errs.append("income levels must be positive")
    if p.y_low > p.y_high:
        errs.append("y_low must not exceed y_high")
    for d in (0, 1):
        row = p.income_transition[d]
        for q in row:
            if not (0.0 <= q <= 1.0):
                errs.append(f"income_transition[{d}] has entry {q} outside [0,1]")
    if p.r <= -1.0:
        errs.append(f"interest rate must exceed -1, got {p.r}")
    if p.T < 6:
        errs.append(f"T must be at least 6, got {p.T}")
    if p.T_retire < 1:
        errs.append(f"T_retire must be at least 1, got {p.T_retire}")
    if not (0.0 <= p.pension_rate <= 1.0):
        errs.append("pension_rate must lie in [0,1]")
    if not (0.0 < p.part_time_share <= 1.0):
        errs.append("part_time_share must lie in (0,1]")
    if p.init_asset_sd < 0:
        errs.append("init_asset_sd must be nonnegative")
    for name in ("init_w_prob", "init_yhigh_prob"):
        v = getattr(p, name)
        if not (0.0 <= v <= 1.0):
            errs.append(f"{name} must lie in [0,1], got {v}")
    if p.c_floor <= 0:
        errs.append("c_floor must be positive")
    if errs:
        raise ConfigError("; ".join(errs))


# Flat config keys <-> dataclass fields. Nested tuples are exploded into
# suffixed scalar keys so the on-disk format stays one key per line.
_SCALAR_FIELDS = [
    "beta", "pi1", "y_low", "y_high", "r", "T", "T_retire", "pension_rate",
    "part_time_share", "init_asset_mean", "init_asset_sd", "init_w_prob",
    "init_yhigh_prob", "borrow_floor", "c_floor",
]
_INT_FIELDS = {"T", "T_retire"}


def params_to_dict(p: ModelParams) -> dict[str, float]:
    out: dict[str, float] = {}
    for d in (0, 1):
        for m in (1, 2):
            out[f"sigma_{d}_{m}"] = p.sigma[d][m - 1]
    for m in (1, 2):
        out[f"gamma_{m}"] = p.gamma[m - 1]
        out[f"alpha_{m}"] = p.alpha[m - 1]
        out[f"omega_{m}"] = p.omega[m - 1]
    for d in (0, 1):
        for j, lab in enumerate(("ylow", "yhigh")):
            out[f"p_yhigh_d{d}_{lab}"] = p.income_transition[d][j]
    for name in _SCALAR_FIELDS:
        out[name] = getattr(p, name)
    return out


def params_from_dict(kv: dict[str, float]) -> ModelParams:
    kv = dict(kv)
    kwargs = {}
    try:
        kwargs["sigma"] = tuple(
            tuple(float(kv.pop(f"sigma_{d}_{m}")) for m in (1, 2)) for d in (0, 1)
        )
        for name in ("gamma", "alpha", "omega"):
            kwargs[name] = tuple(float(kv.pop(f"{name}_{m}")) for m in (1, 2))
        kwargs["income_transition"] = tuple(
            tuple(float(kv.pop(f"p_yhigh_d{d}_{lab}")) for lab in ("ylow", "yhigh"))
            for d in (0, 1)
        )
    except KeyError as e:
        raise ConfigError(f"missing config key: {e.args[0]}") from None
    for name in _SCALAR_FIELDS:
        if name not in kv:
            raise ConfigError(f"missing config key: {name}")
        raw = kv.pop(name)
        kwargs[name] = int(raw) if name in _INT_FIELDS else float(raw)
    if kv:
        raise ConfigError(f"unknown config keys: {sorted(kv)}")
    return ModelParams(**kwargs)


def write_config(path, p: ModelParams) -> None:
    """Write params as `key = value` lines (one per key, # comments allowed)."""
    kv = params_to_dict(p)
    with open(path, "w") as fh:
        fh.write("# ddchoice model parameters\n")
        for k, v in kv.items():
            fh.write(f"{k} = {v!r}\n")


def parse_kv_file(path) -> dict[str, str]:
    """Parse a flat `key = value` file. Blank lines and # comments ignored."""
    out: dict[str, str] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if not key or not val:
                raise ConfigError(f"{path}:{lineno}: empty key or value")
            if key in out:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            out[key] = val
    return out


def read_config(path) -> ModelParams:
    raw = parse_kv_file(path)
    try:
        kv = {k: float(v) for k, v in raw.items()}
    except ValueError as e:
        raise ConfigError(f"{path}: non-numeric value ({e})") from None
    return params_from_dict(kv)

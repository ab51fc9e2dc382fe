"""Result container shared by the two second-step criteria."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np


@dataclass
class CriterionReport:
    """Point estimates plus everything needed to audit the fit.

    params_hat maps parameter names to estimates, residuals lists one dict
    per retained residual at the optimum, trace records every optimizer
    restart, and warnings collects dropped moments and bound hits.
    """

    params_hat: dict[str, float]
    value: float
    residuals: list[dict] = field(default_factory=list)
    trace: list[dict] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "CriterionReport":
        return cls(
            params_hat={k: float(v) for k, v in doc["params_hat"].items()},
            value=float(doc["value"]),
            residuals=list(doc.get("residuals", [])),
            trace=list(doc.get("trace", [])),
            warnings=list(doc.get("warnings", [])),
            metadata=dict(doc.get("metadata", {})),
        )


def theta_c_arrays(report: CriterionReport):
    """Split a curvature-criterion report into (sigma[d][m-1], beta).

    With per-type discounting beta is returned as a length-2 array, else as
    a float.
    """
    p = report.params_hat
    sigma = np.array(
        [[p["sigma_0_1"], p["sigma_0_2"]], [p["sigma_1_1"], p["sigma_1_2"]]]
    )
    if "beta" in p:
        return sigma, float(p["beta"])
    return sigma, np.array([p["beta_1"], p["beta_2"]])

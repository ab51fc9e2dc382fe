"""First-stage estimation: types, consumption curves, shocks, and choice
probabilities."""

from .ccp import CCPEstimate, estimate_ccp
from .counterfactual import estimate_counterfactual_exogenous
from .em import SieveForms, TypePosterior, em_types
from .eta import recover_eta
from .io import (
    ccc_from_dict,
    ccc_to_dict,
    ccp_from_dict,
    ccp_to_dict,
    posterior_to_dict,
    read_stage1_json,
    write_stage1_json,
)
from .ivqr import (
    DEFAULT_TAU_GRID,
    CCCEstimate,
    estimate_ccc_ivqr,
    record_weights,
    weighted_qr_lp,
    weighted_quantile,
)

__all__ = [
    "CCPEstimate",
    "CCCEstimate",
    "DEFAULT_TAU_GRID",
    "SieveForms",
    "TypePosterior",
    "ccc_from_dict",
    "ccc_to_dict",
    "ccp_from_dict",
    "ccp_to_dict",
    "em_types",
    "estimate_ccc_ivqr",
    "estimate_ccp",
    "estimate_counterfactual_exogenous",
    "posterior_to_dict",
    "read_stage1_json",
    "record_weights",
    "recover_eta",
    "weighted_qr_lp",
    "weighted_quantile",
    "write_stage1_json",
]

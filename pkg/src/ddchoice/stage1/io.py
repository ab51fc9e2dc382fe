"""JSON serialization of first-stage estimates.

Documents carry coefficients, grids, and metadata (seed, cell definitions,
warnings) so a run's first stage can be archived next to its manifest and
reloaded for plotting without re-estimation.
"""

from __future__ import annotations

import json

import numpy as np

from .ccp import CCPEstimate
from .em import TypePosterior
from .ivqr import CCCEstimate, CellFit


def _arr(x):
    return np.asarray(x).tolist()


def posterior_to_dict(post: TypePosterior, include_q: bool = False) -> dict:
    out = {
        "pi_hat": _arr(post.pi_hat),
        "loglik": list(post.loglik),
        "n_iter": post.n_iter,
        "converged": post.converged,
        "warnings": list(post.warnings),
        "asset_bin_edges": _arr(post.sieve.asset_bin_edges),
        "y_levels": list(post.sieve.y_levels),
    }
    if include_q:
        out["q"] = _arr(post.q)
    return out


def ccc_to_dict(est: CCCEstimate) -> dict:
    cells = {}
    for (t, j), cell in est.cells.items():
        cells[f"{t},{j}"] = {
            "coef": _arr(cell.coef),
            "wcoef": _arr(cell.wcoef),
            "coef_fine": _arr(cell.coef_fine),
            "share": cell.share,
            "w_shares": list(cell.w_shares),
            "identified": cell.identified,
            "bracket": list(cell.bracket),
            "n_edge": cell.n_edge,
        }
    return {
        "m": est.m,
        "tau_grid": _arr(est.tau_grid),
        "tau_fine": _arr(est.tau_fine),
        "y_levels": list(est.y_levels),
        "exogenous": est.exogenous,
        "warnings": list(est.warnings),
        "cells": cells,
    }


def ccc_from_dict(doc: dict) -> CCCEstimate:
    est = CCCEstimate(
        m=int(doc["m"]),
        tau_grid=np.asarray(doc["tau_grid"]),
        tau_fine=np.asarray(doc["tau_fine"]),
        cells={},
        y_levels=tuple(doc["y_levels"]),
        exogenous=bool(doc["exogenous"]),
        warnings=list(doc["warnings"]),
    )
    for key, cd in doc["cells"].items():
        t, j = (int(v) for v in key.split(","))
        est.cells[(t, j)] = CellFit(
            coef=np.asarray(cd["coef"]),
            wcoef=np.asarray(cd["wcoef"]),
            coef_fine=np.asarray(cd["coef_fine"]),
            share=float(cd["share"]),
            w_shares=tuple(cd["w_shares"]),
            identified=bool(cd["identified"]),
            bracket=tuple(cd["bracket"]),
            n_edge=int(cd["n_edge"]),
        )
    return est


def ccp_to_dict(est: CCPEstimate) -> dict:
    return {
        "m": est.m,
        "coef": _arr(est.coef),
        "names": list(est.names),
        "T": est.T,
        "y_levels": list(est.y_levels),
        "asset_loc": est.asset_loc,
        "asset_scale": est.asset_scale,
        "include_eta": est.include_eta,
        "converged": est.converged,
        "grad_norm": est.grad_norm,
        "ridge": est.ridge,
        "separation": est.separation,
        "full_rank": est.full_rank,
        "warnings": list(est.warnings),
    }


def ccp_from_dict(doc: dict) -> CCPEstimate:
    return CCPEstimate(
        m=int(doc["m"]),
        coef=np.asarray(doc["coef"]),
        names=list(doc["names"]),
        T=int(doc["T"]),
        y_levels=tuple(doc["y_levels"]),
        asset_loc=float(doc["asset_loc"]),
        asset_scale=float(doc["asset_scale"]),
        include_eta=bool(doc["include_eta"]),
        converged=bool(doc["converged"]),
        grad_norm=float(doc["grad_norm"]),
        ridge=float(doc["ridge"]),
        separation=bool(doc["separation"]),
        full_rank=bool(doc["full_rank"]),
        warnings=list(doc["warnings"]),
    )


def write_stage1_json(path, doc: dict) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)


def read_stage1_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)

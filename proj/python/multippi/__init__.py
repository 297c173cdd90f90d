"""Budget-optimal allocation and estimation across subsets of predictors.

Plans, reports and cost models are plain dicts with the same layout as the
command-line tool's JSON.
"""

import csv
import io
import json

import numpy as np

from . import _core
from ._core import MultippiError, normal_quantile

__all__ = [
    "MultippiError",
    "allocate",
    "cost_additive",
    "cost_cascading",
    "covariance",
    "estimate",
    "ledoit_wolf",
    "normal_quantile",
    "simulate",
]


def covariance(samples, method="ledoit_wolf"):
    """Covariance estimate of an (N, k) array of fully labeled rows."""
    return _core.covariance(np.asarray(samples, dtype=float), method)


def ledoit_wolf(samples):
    """(shrunk covariance, shrinkage intensity)."""
    return _core.ledoit_wolf(np.asarray(samples, dtype=float))


def allocate(sigma, cost_model, target=None):
    """Variance-minimizing allocation plan for estimating target . E[X]."""
    t = None if target is None else np.asarray(target, dtype=float)
    return json.loads(_core.allocate(np.asarray(sigma, dtype=float), json.dumps(cost_model), t))


def estimate(batches, plan, alpha=0.05):
    """Point estimate and interval from {subset string: rows} batches drawn per `plan`."""
    arrays = {k: np.atleast_2d(np.asarray(v, dtype=float).T).T for k, v in batches.items()}
    return json.loads(_core.estimate(arrays, json.dumps(plan), alpha))


def simulate(config, base_dir=""):
    """Metrics rows for an experiment config dict."""
    text = _core.simulate(json.dumps(config), str(base_dir))
    rows = list(csv.DictReader(io.StringIO(text)))
    for r in rows:
        for key in ("budget", "coverage", "ci_width_fraction", "mse_fraction"):
            r[key] = float(r[key])
        r["trials"] = int(r["trials"])
    return rows


def cost_additive(per_model_costs, budgets=None):
    cm = json.loads(_core.cost_additive(list(per_model_costs)))
    if budgets is not None:
        cm["budgets"] = list(budgets)
    return cm


def cost_cascading(input_rate, output_rate, tiers, budgets=None):
    cm = json.loads(_core.cost_cascading(input_rate, output_rate, list(tiers)))
    if budgets is not None:
        cm["budgets"] = list(budgets)
    return cm

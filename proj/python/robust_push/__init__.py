"""Robust asynchronous push-sum and stochastic gradient-push over faulty networks."""

import json as _json

from ._core import (  # noqa: F401
    ConfigError,
    FaultBounds,
    NumericError,
    ProtocolViolation,
    Topology,
    TopologyError,
    VerificationFailure,
    aggregate_series,
    contraction_bound,
    push_sum,
    quadratic_optimum,
    smoothed_hinge,
    verify_push_sum,
)
from . import _core


def rasgp(config, run=0):
    """One paired run. `config` is a dict or a JSON string."""
    if not isinstance(config, str):
        config = _json.dumps(config)
    return _core.rasgp(config, run)


def run_experiment(config, verify=False):
    if not isinstance(config, str):
        config = _json.dumps(config)
    return _core.run_experiment(config, verify)

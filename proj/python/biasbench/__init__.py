"""Python front end for the biasbench C++ core."""

import json

from ._biasbench import (
    Error,
    World,
    compute_hcic,
    cosine_similarity,
    fnmr_fmr,
    maxmin_filter,
    rebin_attribute,
)
from . import _biasbench

__all__ = [
    "Error",
    "World",
    "compute_hcic",
    "cosine_similarity",
    "default_config",
    "fnmr_fmr",
    "maxmin_filter",
    "normalize_config",
    "rebin_attribute",
    "run_pipeline",
]


def default_config():
    return json.loads(_biasbench.default_config())


def normalize_config(config):
    return json.loads(_biasbench.normalize_config(json.dumps(config)))


def run_pipeline(config, stages="all"):
    """Runs `stages` ("all" or a comma list) and returns one dict per stage."""
    return _biasbench.run_pipeline(json.dumps(config), stages)

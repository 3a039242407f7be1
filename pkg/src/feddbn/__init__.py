"""Federated and personalized structure learning for dynamic Bayesian networks."""

from feddbn.baselines import (
    DynotearsConfig,
    alldata_baseline,
    ave_baseline,
    best_baseline,
    dynotears_fit,
)
from feddbn.datagen import ClientDataset, GenConfig
from feddbn.dbn import BinaryDbn, WeightedDbn, threshold
from feddbn.errors import (
    DimensionError,
    IngestionError,
    MetricError,
    NumericError,
)
from feddbn.fdbnl import FdbnlConfig, run_fdbnl
from feddbn.pfdbnl import PfdbnlConfig, run_pfdbnl

__version__ = "0.1.0"

__all__ = [
    "BinaryDbn",
    "ClientDataset",
    "DimensionError",
    "DynotearsConfig",
    "FdbnlConfig",
    "GenConfig",
    "IngestionError",
    "MetricError",
    "NumericError",
    "PfdbnlConfig",
    "WeightedDbn",
    "alldata_baseline",
    "ave_baseline",
    "best_baseline",
    "dynotears_fit",
    "run_fdbnl",
    "run_pfdbnl",
    "threshold",
]

"""Least-squares boosted regression trees for PV inverter P/Q forecasting,
V-Q droop setpoints and edge-deployment parity checks."""

from edgeboost.errors import (
    DataError,
    DimensionError,
    EdgeBoostError,
    FormatError,
    ModelCorruptionError,
    ParameterError,
)
from edgeboost.model import (
    CompactRegressionTree,
    GBTEnsemble,
    Violation,
    deserialize_model,
    model_from_json,
    model_to_json,
    predict_ensemble,
    predict_ensemble_batch,
    predict_tree,
    predict_tree_batch,
    serialize_model,
    validate_model,
)
from edgeboost.trainer import TrainConfig, fit_lsboost, fit_tree
from edgeboost.droop import (
    DroopParams,
    LineModel,
    Setpoint,
    droop_gain,
    droop_setpoints,
    power_flow_approx,
    power_flow_exact,
)
from edgeboost.metrics import (
    MetricsReport,
    capacity_mape,
    parity_report,
    r_squared,
    rmse,
)

__version__ = "0.1.0"

__all__ = [
    "CompactRegressionTree",
    "DataError",
    "DimensionError",
    "DroopParams",
    "EdgeBoostError",
    "FormatError",
    "GBTEnsemble",
    "LineModel",
    "MetricsReport",
    "ModelCorruptionError",
    "ParameterError",
    "Setpoint",
    "TrainConfig",
    "Violation",
    "capacity_mape",
    "deserialize_model",
    "droop_gain",
    "droop_setpoints",
    "fit_lsboost",
    "fit_tree",
    "model_from_json",
    "model_to_json",
    "parity_report",
    "power_flow_approx",
    "power_flow_exact",
    "predict_ensemble",
    "predict_ensemble_batch",
    "predict_tree",
    "predict_tree_batch",
    "r_squared",
    "rmse",
    "serialize_model",
    "validate_model",
]

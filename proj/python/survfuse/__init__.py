"""Python bindings for the survfuse native core.

Configuration is passed as a dict of the same flat keys the CLI accepts
(``learning_rate``, ``hidden_dim``, ``use_treat``, ``n_patients``, ...).
"""

import json as _json

from . import _survfuse as _core
from ._survfuse import (
    Checkpoint,
    Cohort,
    ConfigError,
    ConvergenceError,
    DataError,
    EncodingError,
    Error,
    EvalError,
    IOError,
    NumericalError,
    SchemaError,
    bnll_loss,
    concordance_index,
    cost_matrix,
    gradcheck,
    hazards_to_survival,
    km_curve,
    load_checkpoint,
    load_cohort,
    logrank_test,
    nll_loss,
    predict_risks,
    risk_score,
    sinkhorn,
    split_folds,
    whatif,
)

__all__ = [
    "Checkpoint", "Cohort", "ConfigError", "ConvergenceError", "DataError",
    "EncodingError", "Error", "EvalError", "IOError", "NumericalError",
    "SchemaError", "bnll_loss", "concordance_index", "cost_matrix",
    "cross_validate", "gradcheck", "hazards_to_survival", "km_curve",
    "load_checkpoint", "load_cohort", "logrank_test", "nll_loss",
    "predict_risks", "risk_score", "simulate", "sinkhorn", "split_folds",
    "train", "whatif",
]


def _dump(config):
    return _json.dumps(config or {})


def simulate(config=None, seed=0):
    """Synthetic cohort and its planted risks."""
    return _core.simulate(_dump(config), seed)


def train(train_cohort, val_cohort, config=None):
    """Best-validation checkpoint of one training run."""
    return _core.train(train_cohort, val_cohort, _dump(config))


def cross_validate(cohort, k=5, config=None):
    """Per-fold and aggregate validation C-index."""
    return _core.cross_validate(cohort, k, _dump(config))

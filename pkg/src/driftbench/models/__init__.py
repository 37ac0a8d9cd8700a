from .external import read_workdir, run_external, write_workdir
from .nets import MLP, Encoder, LogisticRegression
from .training import (
    SELECTIONS,
    MethodSpec,
    ModelSpec,
    TrainedModel,
    early_stopping,
    holdout_split,
    score,
    select_training_data,
    train,
)

__all__ = [
    "SELECTIONS",
    "MLP",
    "Encoder",
    "LogisticRegression",
    "MethodSpec",
    "ModelSpec",
    "TrainedModel",
    "early_stopping",
    "holdout_split",
    "read_workdir",
    "run_external",
    "score",
    "select_training_data",
    "train",
    "write_workdir",
]

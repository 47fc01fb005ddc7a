"""Student-classifier trainer: fine-tune, serve, and export predictions."""

__version__ = "0.1.0"

from .schema import (
    CAP_CODES,
    EmptyTrainingSet,
    IOFailure,
    LabelOutsideSchema,
    ModelUnavailable,
    TrainerError,
)
from .train import EvalReport, TrainConfig, TrainResult, train

__all__ = [
    "CAP_CODES",
    "EmptyTrainingSet",
    "EvalReport",
    "IOFailure",
    "LabelOutsideSchema",
    "ModelUnavailable",
    "TrainConfig",
    "TrainResult",
    "TrainerError",
    "train",
    "__version__",
]

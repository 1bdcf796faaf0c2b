"""Grid-of-origin identification for power and audio recordings.

The cascade decides the nominal frequency and data type from the spectrum,
extracts the ENF track, shortlists grids with a per-kind SVM on ENF segment
features, and settles on the shortlisted grid whose AR pole cloud lies
closest to the recording's own poles.
"""
from .cascade import (
    CascadeModel,
    ClassificationReport,
    PipelineConfig,
    TrainingItem,
    classify,
    classify_batch,
    evaluate,
    load_model,
    save_model,
    train,
)
from .signal_io import Recording, load_recording

__version__ = "0.1.0"

__all__ = [
    "CascadeModel",
    "ClassificationReport",
    "PipelineConfig",
    "Recording",
    "TrainingItem",
    "classify",
    "classify_batch",
    "evaluate",
    "load_model",
    "load_recording",
    "save_model",
    "train",
]

"""Sequence risk prediction on irregular clinical visit data.

Recurrent encoders (full-history and windowed) with optional attention over
the hidden-state sequence, trained with a small reverse-mode tape on a numpy
substrate. Heavy sequence kernels have a compiled backend with a pure-Python
fallback chosen at import time (override with SEQRISK_BACKEND).
"""
__version__ = "0.1.0"

from .clinical import (
    ClinicalRiskLookup,
    ScoringTable,
    clinical_score,
    default_scoring_table,
    load_scoring_table,
    save_scoring_table,
)
from .data import (
    Cohort,
    DataFormatError,
    FeatureSequence,
    GeneratorConfig,
    PatientRecord,
    generate_synthetic_cohort,
    load_cohort,
    preprocess_cohort,
    split_folds,
    write_cohort,
)
from .kernels import BACKEND, available_backends
from .layers import VARIANTS, ModelConfig, init_model_params, model_forward
from .metrics import auc, roc_auc_trapezoid, roc_curve
from .tensor import ComputationTape, Tensor, grad_check, sgd_step
from .training import (
    Checkpoint,
    CvReport,
    TrainConfig,
    cross_validate,
    load_checkpoint,
    lr_schedule,
    save_checkpoint,
    train_one,
)

__all__ = [
    "BACKEND",
    "Checkpoint",
    "ClinicalRiskLookup",
    "Cohort",
    "ComputationTape",
    "CvReport",
    "DataFormatError",
    "FeatureSequence",
    "GeneratorConfig",
    "ModelConfig",
    "PatientRecord",
    "ScoringTable",
    "Tensor",
    "TrainConfig",
    "VARIANTS",
    "auc",
    "available_backends",
    "clinical_score",
    "cross_validate",
    "default_scoring_table",
    "generate_synthetic_cohort",
    "grad_check",
    "init_model_params",
    "load_checkpoint",
    "load_cohort",
    "load_scoring_table",
    "lr_schedule",
    "model_forward",
    "preprocess_cohort",
    "roc_auc_trapezoid",
    "roc_curve",
    "save_checkpoint",
    "save_scoring_table",
    "sgd_step",
    "split_folds",
    "train_one",
    "write_cohort",
]

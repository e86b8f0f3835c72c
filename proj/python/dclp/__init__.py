"""Dual-encoder contrastive emoticon classifier (C++ core)."""

from ._dclp import (
    Config,
    DataError,
    DclpError,
    IoError,
    Model,
    NumericError,
    UsageError,
    class_report,
    confusion_matrix,
    contrastive_loss,
    cosine_similarity,
    generate_synthetic,
    gradcheck,
    l2_normalize,
    load_image,
    mcc,
    patchify,
    preprocess,
    roc_auc_ovr,
    run,
    similarity_logits,
    train,
)

__all__ = [
    "Config",
    "DataError",
    "DclpError",
    "IoError",
    "Model",
    "NumericError",
    "UsageError",
    "class_report",
    "confusion_matrix",
    "contrastive_loss",
    "cosine_similarity",
    "generate_synthetic",
    "gradcheck",
    "l2_normalize",
    "load_image",
    "mcc",
    "patchify",
    "preprocess",
    "roc_auc_ovr",
    "run",
    "similarity_logits",
    "train",
]

"""Parametric body rig: evaluation, fitting, corrective training, identity PCA and LOD transfer."""

from ._rigkit import (
    DataError,
    NumericError,
    Rig,
    data2model_mm,
    fit,
    masked_pca,
    synthetic_rig,
    train_correctives,
    transfer_rig,
)

__all__ = [
    "DataError",
    "NumericError",
    "Rig",
    "data2model_mm",
    "fit",
    "masked_pca",
    "synthetic_rig",
    "train_correctives",
    "transfer_rig",
]

"""
Feature matrix of a PMU window and the normalization used by the autoencoder path.

Row k describes the transition from sample k to sample k+1:

    [dv_mag, dv_ang, i_mag, i_ang, di_mag, di_ang]

with the level features taken at the later sample, so a window of n samples
gives an (n-1) x 6 matrix.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np
import pandas as pd

from ..config import STD_FLOOR
from ..errors import InvalidInputError
from ..utils import atomic_write_text, wrap_angle
from .phasor_model import Dataset, EventRecord

logger = logging.getLogger(__name__)

FEATURE_COLUMNS = ("Δv_mag", "Δv_ang", "i_mag", "i_ang", "Δi_mag", "Δi_ang")
NUM_FEATURES = len(FEATURE_COLUMNS)


@dataclass(frozen=True, eq=False)
class NormStats:
    """Per-column mean and (floored) standard deviation."""

    mean: np.ndarray
    std: np.ndarray

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "NormStats":
        return cls(mean=np.asarray(data["mean"], dtype=float), std=np.asarray(data["std"], dtype=float))


def build_feature_matrix(record: EventRecord) -> np.ndarray:
    """
    Build the (sps-1) x 6 feature matrix of a window.

    Args:
        record: PMU window with at least two samples

    Returns:
        Feature matrix, columns ordered as FEATURE_COLUMNS
    """
    if len(record.v_mag) < 2:
        raise InvalidInputError("A feature matrix needs at least two samples")
    return np.column_stack(
        [
            np.diff(record.v_mag),
            wrap_angle(np.diff(record.v_ang)),
            record.i_mag[1:],
            record.i_ang[1:],
            np.diff(record.i_mag),
            wrap_angle(np.diff(record.i_ang)),
        ]
    )


def build_feature_matrices(ds: Union[Dataset, Sequence[EventRecord]]) -> List[np.ndarray]:
    """Feature matrices of every record, in order."""
    return [build_feature_matrix(record) for record in ds]


def fit_norm_stats(train: Sequence[np.ndarray]) -> NormStats:
    """
    Pool every row of every training matrix and compute column statistics.

    The standard deviation uses the population divisor and is floored at
    STD_FLOOR.

    Args:
        train: Training feature matrices

    Returns:
        NormStats
    """
    if len(train) == 0:
        raise InvalidInputError("Cannot fit normalization statistics on an empty set")
    rows = np.vstack([np.asarray(m, dtype=float) for m in train])
    if rows.shape[1] != NUM_FEATURES:
        raise InvalidInputError(f"Feature matrices must have {NUM_FEATURES} columns")
    mean = rows.mean(axis=0)
    std = np.maximum(rows.std(axis=0), STD_FLOOR)
    return NormStats(mean=mean, std=std)


def normalize(m: np.ndarray, s: NormStats) -> np.ndarray:
    """Z-score each column with the given statistics."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[1] != s.mean.shape[0]:
        raise InvalidInputError(f"Feature matrix shape {m.shape} does not match the statistics")
    return (m - s.mean) / s.std


def flatten(m: np.ndarray) -> np.ndarray:
    """Stack the rows of a matrix into one vector: entry (r, c) lands at 6*r + c."""
    return np.asarray(m).reshape(-1)


def unflatten(v: np.ndarray) -> np.ndarray:
    """Inverse of flatten."""
    v = np.asarray(v)
    if v.size % NUM_FEATURES:
        raise InvalidInputError(f"Vector length {v.size} is not a multiple of {NUM_FEATURES}")
    return v.reshape(-1, NUM_FEATURES)


def normalize_and_flatten(m: np.ndarray, s: NormStats) -> np.ndarray:
    """
    Normalize a feature matrix and stack its rows.

    Args:
        m: (sps-1) x 6 feature matrix
        s: Normalization statistics

    Returns:
        Vector of length 6*(sps-1)
    """
    return flatten(normalize(m, s))


def export_feature_csv(m: np.ndarray, path: Union[str, Path]):
    """
    Write one feature matrix as CSV with the fixed column header.

    Args:
        m: Feature matrix
        path: Destination file
    """
    frame = pd.DataFrame(np.asarray(m), columns=list(FEATURE_COLUMNS))
    atomic_write_text(path, frame.to_csv(index=False))
    logger.debug("Exported %d feature rows to %s", len(frame), path)

"""
Evaluation protocol: stratified splits, confusion matrices with a
non-classified column, accuracy, leave-one-out and training-fraction sweeps.
"""

import dataclasses
import logging
import math
from dataclasses import dataclass
from itertools import product
from pathlib import Path
from typing import Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .data.event_synth import GeneratorConfig, build_dataset
from .data.phasor_model import Dataset, EventClass, EventRecord
from .errors import InvalidInputError
from .pipelines import BasePipeline, PipelineSettings, Prediction, build_pipeline, check_method
from .utils import atomic_write_text, derive_seed, format_count_percentage

logger = logging.getLogger(__name__)

NON_CLASSIFIED_COLUMN = len(EventClass)
COLUMN_LABELS = tuple(str(int(c)) for c in EventClass) + ("non-classified",)
CSV_COLUMNS = ("method", "sps", "fraction", "seed", "accuracy")

# Stream key for the per-fold pipeline seed
_LOO_SEED_KEY = 7


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Counts with rows = actual class 1..3 and columns = predicted 1..3 plus non-classified."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.array(self.counts, dtype=int)
        if counts.shape != (len(EventClass), len(EventClass) + 1):
            raise InvalidInputError(f"Confusion matrix must be 3 x 4, got {counts.shape}")
        if np.any(counts < 0):
            raise InvalidInputError("Confusion counts must be >= 0")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def row_totals(self) -> Dict[EventClass, int]:
        return {label: int(self.counts[int(label) - 1].sum()) for label in EventClass}

    @classmethod
    def from_predictions(
        cls, actual: Sequence[EventClass], predicted: Sequence[Prediction]
    ) -> "ConfusionMatrix":
        """
        Tally predictions against true labels.

        Args:
            actual: True classes
            predicted: Predicted classes; None counts as non-classified

        Returns:
            ConfusionMatrix
        """
        if len(actual) != len(predicted):
            raise InvalidInputError(f"{len(actual)} labels but {len(predicted)} predictions")
        counts = np.zeros((len(EventClass), len(EventClass) + 1), dtype=int)
        for true, guess in zip(actual, predicted):
            column = NON_CLASSIFIED_COLUMN if guess is None else int(guess) - 1
            counts[int(true) - 1, column] += 1
        return cls(counts)

    def to_dict(self) -> Dict:
        total = self.total
        return {
            "columns": list(COLUMN_LABELS),
            "counts": self.counts.tolist(),
            "cells": [[format_count_percentage(c, total) for c in row] for row in self.counts.tolist()],
            "total": total,
            "accuracy": accuracy(self) if total else None,
        }

    def to_frame(self, rendered: bool = False) -> pd.DataFrame:
        """
        Table view of the matrix.

        Args:
            rendered: Use "count (pp.pp%)" cells instead of integer counts

        Returns:
            DataFrame indexed by actual class
        """
        if rendered:
            values = [[format_count_percentage(c, self.total) for c in row] for row in self.counts.tolist()]
        else:
            values = self.counts
        index = pd.Index([int(c) for c in EventClass], name="actual")
        return pd.DataFrame(values, index=index, columns=list(COLUMN_LABELS))


def accuracy(cm: ConfusionMatrix) -> float:
    """
    Share of test cases on the diagonal; non-classified counts as wrong.

    Args:
        cm: Confusion matrix

    Returns:
        Accuracy in [0, 1]
    """
    if cm.total == 0:
        raise InvalidInputError("Accuracy of an empty confusion matrix is undefined")
    return float(np.trace(cm.counts[:, :NON_CLASSIFIED_COLUMN])) / cm.total


def confusion_percentages(cm: ConfusionMatrix) -> np.ndarray:
    """Every cell as a fraction of all test cases (zeros for an empty matrix)."""
    if cm.total == 0:
        return np.zeros(cm.counts.shape)
    return cm.counts / cm.total


def stratified_split(ds: Dataset, fraction: float, seed: int) -> Tuple[Dataset, Dataset]:
    """
    Split each class at random into round(fraction * n_class) training records and the rest.

    Args:
        ds: Dataset to split
        fraction: Training share, strictly between 0 and 1
        seed: Random seed

    Returns:
        (train, test), both in the source order
    """
    if not 0.0 < fraction < 1.0:
        raise InvalidInputError(f"fraction must be in (0, 1), got {fraction}")
    labels = ds.labels()
    train: List[int] = []
    test: List[int] = []
    for label in EventClass:
        indices = np.flatnonzero(labels == int(label))
        if len(indices) == 0:
            continue
        n_train = int(math.floor(fraction * len(indices) + 0.5))
        if n_train == 0 or n_train == len(indices):
            raise InvalidInputError(
                f"fraction {fraction} leaves an empty side for class {int(label)} ({len(indices)} records)"
            )
        rng = np.random.default_rng(derive_seed(seed, int(label)))
        shuffled = rng.permutation(indices)
        train.extend(shuffled[:n_train].tolist())
        test.extend(shuffled[n_train:].tolist())
    return ds.subset(sorted(train)), ds.subset(sorted(test))


def evaluate(pipeline: BasePipeline, records: Sequence[EventRecord]) -> ConfusionMatrix:
    """Confusion matrix of a fitted pipeline on labeled records."""
    records = list(records)
    return ConfusionMatrix.from_predictions([r.label for r in records], pipeline.predict_many(records))


def train_and_evaluate(
    ds: Dataset,
    method: str,
    fraction: float,
    seed: int,
    settings: PipelineSettings = PipelineSettings(),
) -> Tuple[BasePipeline, ConfusionMatrix]:
    """
    Stratified split, fit on the training side, evaluate on the test side.

    Args:
        ds: Dataset
        method: One of METHODS
        fraction: Training share
        seed: Seed for the split and the training
        settings: Pipeline hyperparameters

    Returns:
        (fitted pipeline, test confusion matrix)
    """
    check_method(method)
    train, test = stratified_split(ds, fraction, seed)
    pipeline = build_pipeline(method, settings, seed).fit(train.records)
    cm = evaluate(pipeline, test.records)
    logger.info(
        "%s at %d sps, fraction %.2f, seed %d: accuracy %.4f on %d test records",
        method, ds.sps, fraction, seed, accuracy(cm), cm.total,
    )
    return pipeline, cm


def _canonical_order(records: Sequence[EventRecord]) -> Tuple[EventRecord, ...]:
    return tuple(sorted(records, key=lambda r: (int(r.label), r.scenario.load_index, r.seed)))


def _loo_fold(
    records: Tuple[EventRecord, ...], index: int, method: str, settings: PipelineSettings
) -> Tuple[bool, bool]:
    held_out = records[index]
    train = records[:index] + records[index + 1:]
    pipeline = build_pipeline(method, settings, derive_seed(held_out.seed, _LOO_SEED_KEY))
    pipeline.fit(train)
    return pipeline.predict(held_out) == held_out.label, pipeline.converged


class LooReport(NamedTuple):
    accuracy: float
    folds: int
    unconverged: int


def loo_report(
    ds: Union[Dataset, Sequence[EventRecord]],
    method: str,
    settings: PipelineSettings = PipelineSettings(),
    jobs: int = 1,
) -> LooReport:
    """
    Run leave-one-out and count the folds whose training hit its iteration limit.

    Records are put in a canonical order and each fold's seed comes from the
    held-out record, so the result does not depend on the input order.

    Args:
        ds: Records
        method: One of METHODS
        settings: Pipeline hyperparameters, fixed for every fold
        jobs: Parallel folds

    Returns:
        LooReport
    """
    check_method(method)
    records = _canonical_order(list(ds))
    if not records:
        raise InvalidInputError("Leave-one-out needs a nonempty dataset")
    logger.info("Leave-one-out for %s over %d folds", method, len(records))
    folds = Parallel(n_jobs=jobs)(
        delayed(_loo_fold)(records, i, method, settings) for i in range(len(records))
    )
    result = sum(bool(hit) for hit, _ in folds) / len(records)
    unconverged = sum(not converged for _, converged in folds)
    if unconverged:
        logger.warning("%d of %d leave-one-out folds did not converge", unconverged, len(records))
    logger.info("Leave-one-out accuracy for %s: %.4f", method, result)
    return LooReport(accuracy=result, folds=len(records), unconverged=unconverged)


def leave_one_out(
    ds: Union[Dataset, Sequence[EventRecord]],
    method: str,
    settings: PipelineSettings = PipelineSettings(),
    jobs: int = 1,
) -> float:
    """
    Leave-one-out accuracy: train on N-1 records, test the held-out one, N times.

    Args:
        ds: Records
        method: One of METHODS
        settings: Pipeline hyperparameters, fixed for every fold
        jobs: Parallel folds

    Returns:
        Fraction of held-out records classified correctly
    """
    return loo_report(ds, method, settings, jobs).accuracy


class SweepRow(NamedTuple):
    method: str
    sps: int
    fraction: float
    seed: int
    accuracy: float


@dataclass(frozen=True)
class SweepResult:
    """Accuracy per (method, sps, training fraction, seed); unconverged counts cells that hit an iteration limit."""

    rows: Tuple[SweepRow, ...]
    unconverged: int = 0

    def __post_init__(self):
        for row in self.rows:
            if not 0.0 < row.fraction < 1.0 or not 0.0 <= row.accuracy <= 1.0:
                raise InvalidInputError(f"Invalid sweep row {row}")
        object.__setattr__(self, "rows", tuple(sorted(self.rows, key=lambda r: r[:4])))

    def __len__(self) -> int:
        return len(self.rows)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([tuple(r) for r in self.rows], columns=list(CSV_COLUMNS))

    def to_csv(self, path: Optional[Union[str, Path]] = None) -> str:
        """
        Render the results CSV and optionally write it atomically.

        Args:
            path: Destination file, or None to only return the text

        Returns:
            CSV text with header method,sps,fraction,seed,accuracy
        """
        text = self.to_frame().to_csv(index=False, lineterminator="\n")
        if path is not None:
            atomic_write_text(path, text)
        return text


def _sweep_cell(
    ds: Dataset, method: str, fraction: float, seed: int, settings: PipelineSettings
) -> Tuple[SweepRow, bool]:
    pipeline, cm = train_and_evaluate(ds, method, fraction, seed, settings)
    return SweepRow(method, ds.sps, float(fraction), int(seed), accuracy(cm)), pipeline.converged


def run_sweep(
    fractions: Sequence[float],
    sps_list: Sequence[int],
    methods: Sequence[str],
    seeds: Sequence[int],
    generator: GeneratorConfig = GeneratorConfig(),
    settings: PipelineSettings = PipelineSettings(),
    datasets: Optional[Mapping[int, Dataset]] = None,
    jobs: int = 1,
) -> SweepResult:
    """
    Accuracy over every (method, sps, fraction, seed) combination.

    Args:
        fractions: Training shares
        sps_list: Reporting rates; a dataset is generated for each one not in datasets
        methods: Pipeline names
        seeds: Split and training seeds
        generator: Generator settings for on-the-fly datasets
        settings: Pipeline hyperparameters
        datasets: Prebuilt datasets keyed by sps
        jobs: Parallel cells

    Returns:
        SweepResult sorted by (method, sps, fraction, seed)
    """
    if not (fractions and sps_list and methods and seeds):
        raise InvalidInputError("Sweep argument lists must be nonempty")
    for method in methods:
        check_method(method)
    for fraction in fractions:
        if not 0.0 < fraction < 1.0:
            raise InvalidInputError(f"fraction must be in (0, 1), got {fraction}")

    datasets = dict(datasets or {})
    for sps in sps_list:
        if sps not in datasets:
            datasets[sps] = build_dataset(dataclasses.replace(generator, sps=sps))

    cells = list(product(methods, sps_list, fractions, seeds))
    logger.info("Running %d sweep cells", len(cells))
    outcomes = Parallel(n_jobs=jobs)(
        delayed(_sweep_cell)(datasets[sps], method, fraction, seed, settings)
        for method, sps, fraction, seed in cells
    )
    unconverged = sum(not converged for _, converged in outcomes)
    if unconverged:
        logger.warning("%d of %d sweep cells did not converge", unconverged, len(cells))
    return SweepResult(rows=tuple(row for row, _ in outcomes), unconverged=unconverged)


def summarize_sweep(result: SweepResult) -> pd.DataFrame:
    """
    Mean and standard deviation of accuracy per (method, sps, fraction) over seeds.

    Args:
        result: Sweep result

    Returns:
        DataFrame with columns method, sps, fraction, mean, std, runs
    """
    frame = result.to_frame()
    summary = (
        frame.groupby(["method", "sps", "fraction"])["accuracy"]
        .agg(mean="mean", std="std", runs="count")
        .reset_index()
    )
    return summary

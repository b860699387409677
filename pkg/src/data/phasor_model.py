"""
Core domain types: phasor samples, event labels, labeled windows and datasets.

Angles are stored in degrees; magnitudes in per unit.
"""

import json
import logging
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..config import DATASET_SCHEMA_VERSION, NUM_LOADS, SUPPORTED_SPS
from ..errors import DataFileError, InvalidInputError
from ..utils import atomic_write_text, derive_seed

logger = logging.getLogger(__name__)

CHANNELS = ("v_mag", "v_ang", "i_mag", "i_ang")


class EventClass(IntEnum):
    """Event labels; codes mirror the row/column order of the confusion tables."""

    CAPACITOR_SWITCH_MALFUNCTION = 1
    OLTC_SWITCH_MALFUNCTION = 2
    ABRUPT_LOAD_CHANGE = 3


def _in_angle_range(value) -> bool:
    value = np.asarray(value)
    return bool(np.all((value > -180.0) & (value <= 180.0)))


@dataclass(frozen=True)
class PhasorSample:
    """One synchrophasor reading: t in seconds from window start."""

    t: float
    v_mag: float
    v_ang: float
    i_mag: float
    i_ang: float

    def __post_init__(self):
        if self.t < 0:
            raise InvalidInputError(f"Sample time must be >= 0, got {self.t}")
        if self.v_mag < 0 or self.i_mag < 0:
            raise InvalidInputError("Phasor magnitudes must be >= 0")
        if not _in_angle_range([self.v_ang, self.i_ang]):
            raise InvalidInputError("Phasor angles must lie in (-180, 180]")


@dataclass(frozen=True)
class ScenarioParams:
    """Scenario of one experiment.

    loading_fraction is set for classes 1 and 2, load_step_fraction for
    class 3; the other one stays None.
    """

    load_index: int
    event_time: float
    loading_fraction: Optional[float] = None
    load_step_fraction: Optional[float] = None

    def __post_init__(self):
        if not 0 <= self.load_index < NUM_LOADS:
            raise InvalidInputError(
                f"load_index must be in [0, {NUM_LOADS - 1}], got {self.load_index}"
            )
        if not 0.0 < self.event_time < 1.0:
            raise InvalidInputError(f"event_time must be in (0, 1), got {self.event_time}")
        if (self.loading_fraction is None) == (self.load_step_fraction is None):
            raise InvalidInputError(
                "Exactly one of loading_fraction / load_step_fraction must be set"
            )
        if self.loading_fraction is not None and not 0.0 < self.loading_fraction <= 1.0:
            raise InvalidInputError(f"loading_fraction out of range: {self.loading_fraction}")
        if self.load_step_fraction is not None and not -1.0 < self.load_step_fraction < 1.0:
            raise InvalidInputError(
                f"load_step_fraction out of range: {self.load_step_fraction}"
            )

    def is_consistent_with(self, label: EventClass) -> bool:
        """Check that the active scenario field matches the event class."""
        if label == EventClass.ABRUPT_LOAD_CHANGE:
            return self.load_step_fraction is not None
        return self.loading_fraction is not None


def _frozen(values) -> np.ndarray:
    array = np.array(values, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class EventRecord:
    """A labeled one-second PMU window.

    The four channels are kept as read-only arrays of length sps; `samples`
    gives the same data as PhasorSample values.
    """

    label: EventClass
    sps: int
    v_mag: np.ndarray
    v_ang: np.ndarray
    i_mag: np.ndarray
    i_ang: np.ndarray
    scenario: ScenarioParams
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "label", EventClass(self.label))
        if self.sps not in SUPPORTED_SPS:
            raise InvalidInputError(f"sps must be one of {SUPPORTED_SPS}, got {self.sps}")
        for name in CHANNELS:
            array = _frozen(getattr(self, name))
            if array.shape != (self.sps,):
                raise InvalidInputError(
                    f"Channel {name} must hold exactly {self.sps} samples, got {array.shape}"
                )
            object.__setattr__(self, name, array)
        if np.any(self.v_mag < 0) or np.any(self.i_mag < 0):
            raise InvalidInputError("Phasor magnitudes must be >= 0")
        if not (_in_angle_range(self.v_ang) and _in_angle_range(self.i_ang)):
            raise InvalidInputError("Phasor angles must lie in (-180, 180]")
        if not self.scenario.is_consistent_with(self.label):
            raise InvalidInputError(
                f"Scenario {self.scenario} is not consistent with class {int(self.label)}"
            )

    @property
    def t(self) -> np.ndarray:
        """Sample times, spaced 1/sps from 0."""
        return np.arange(self.sps) / self.sps

    @property
    def samples(self) -> Tuple[PhasorSample, ...]:
        return tuple(
            PhasorSample(float(t), float(vm), float(va), float(im), float(ia))
            for t, vm, va, im, ia in zip(self.t, self.v_mag, self.v_ang, self.i_mag, self.i_ang)
        )

    def channels(self) -> np.ndarray:
        """Stack the channels into a (4, sps) array ordered v_mag, v_ang, i_mag, i_ang."""
        return np.vstack([self.v_mag, self.v_ang, self.i_mag, self.i_ang])

    @classmethod
    def from_samples(
        cls,
        label: EventClass,
        samples: Sequence[PhasorSample],
        scenario: ScenarioParams,
        seed: int,
    ) -> "EventRecord":
        """
        Build a record from an ordered sequence of samples.

        Args:
            label: Event class
            samples: Exactly one second of samples, spacing 1/sps
            scenario: Scenario parameters
            seed: Generation seed

        Returns:
            EventRecord
        """
        sps = len(samples)
        times = np.array([s.t for s in samples], dtype=float)
        if sps < 2 or not np.allclose(np.diff(times), 1.0 / sps, rtol=0, atol=1e-9):
            raise InvalidInputError("Samples must be strictly increasing with spacing 1/sps")
        return cls(
            label=label,
            sps=sps,
            v_mag=[s.v_mag for s in samples],
            v_ang=[s.v_ang for s in samples],
            i_mag=[s.i_mag for s in samples],
            i_ang=[s.i_ang for s in samples],
            scenario=scenario,
            seed=seed,
        )

    def replace_channels(self, **channels) -> "EventRecord":
        """Return a copy with some channels replaced."""
        values = {name: getattr(self, name) for name in CHANNELS}
        values.update(channels)
        return EventRecord(
            label=self.label, sps=self.sps, scenario=self.scenario, seed=self.seed, **values
        )

    def to_dict(self) -> Dict:
        return {
            "label": int(self.label),
            "sps": self.sps,
            "load_index": self.scenario.load_index,
            "loading_fraction": self.scenario.loading_fraction,
            "load_step_fraction": self.scenario.load_step_fraction,
            "event_time": self.scenario.event_time,
            "seed": self.seed,
            **{name: getattr(self, name).tolist() for name in CHANNELS},
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "EventRecord":
        scenario = ScenarioParams(
            load_index=int(data["load_index"]),
            event_time=float(data["event_time"]),
            loading_fraction=data.get("loading_fraction"),
            load_step_fraction=data.get("load_step_fraction"),
        )
        return cls(
            label=EventClass(int(data["label"])),
            sps=int(data["sps"]),
            scenario=scenario,
            seed=int(data["seed"]),
            **{name: data[name] for name in CHANNELS},
        )


@dataclass(frozen=True)
class Dataset:
    """A collection of records sharing one reporting rate."""

    records: Tuple[EventRecord, ...]
    sps: int
    metadata: Dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        mismatched = [r for r in self.records if r.sps != self.sps]
        if mismatched:
            raise InvalidInputError(
                f"All records must share sps={self.sps}; {len(mismatched)} do not"
            )

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def labels(self) -> np.ndarray:
        return np.array([int(r.label) for r in self.records], dtype=int)

    def subset(self, indices: Iterable[int]) -> "Dataset":
        return Dataset(
            records=tuple(self.records[i] for i in indices),
            sps=self.sps,
            metadata=dict(self.metadata),
        )

    def by_class(self, label: EventClass) -> "Dataset":
        return Dataset(
            records=tuple(r for r in self.records if r.label == label),
            sps=self.sps,
            metadata=dict(self.metadata),
        )


def class_counts(ds: Dataset) -> Dict[EventClass, int]:
    """
    Count records per event class.

    Args:
        ds: Dataset

    Returns:
        Mapping from every EventClass to its record count (zero when absent)
    """
    counts = {label: 0 for label in EventClass}
    for record in ds.records:
        counts[record.label] += 1
    return counts


def subsample_per_class(ds: Dataset, n_per_class: int, seed: int) -> Dataset:
    """
    Draw a stratified random subsample of n records per class.

    Args:
        ds: Source dataset
        n_per_class: Records to keep from each class
        seed: Random seed

    Returns:
        Subsample keeping the source order
    """
    labels = ds.labels()
    keep: List[int] = []
    for label in EventClass:
        indices = np.flatnonzero(labels == int(label))
        if n_per_class > len(indices):
            raise InvalidInputError(
                f"Class {int(label)} has {len(indices)} records, cannot draw {n_per_class}"
            )
        rng = np.random.default_rng(derive_seed(seed, int(label)))
        keep.extend(rng.choice(indices, size=n_per_class, replace=False).tolist())
    return ds.subset(sorted(keep))


def dataset_to_text(ds: Dataset) -> str:
    """Serialize a dataset to the newline-delimited file format."""
    header = {
        "schema_version": DATASET_SCHEMA_VERSION,
        "sps": ds.sps,
        "count": len(ds),
        **ds.metadata,
    }
    lines = [json.dumps(header, sort_keys=True)]
    lines.extend(json.dumps(record.to_dict(), sort_keys=True) for record in ds.records)
    return "\n".join(lines) + "\n"


def dataset_from_text(text: str, source: str = "<text>") -> Dataset:
    """Parse the newline-delimited dataset format."""
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise DataFileError(f"Dataset file {source} is empty")
    try:
        header = json.loads(lines[0])
        if header.get("schema_version") != DATASET_SCHEMA_VERSION:
            raise DataFileError(
                f"Unsupported dataset schema_version {header.get('schema_version')} in {source}"
            )
        records = tuple(EventRecord.from_dict(json.loads(line)) for line in lines[1:])
        if len(records) != header.get("count", len(records)):
            raise DataFileError(
                f"Dataset {source} declares {header['count']} records but holds {len(records)}"
            )
        metadata = {
            key: value
            for key, value in header.items()
            if key not in ("schema_version", "sps", "count")
        }
        return Dataset(records=records, sps=int(header["sps"]), metadata=metadata)
    except DataFileError:
        raise
    except (ValueError, KeyError, TypeError) as e:
        raise DataFileError(f"Malformed dataset file {source}: {str(e)}") from e


def save_dataset(ds: Dataset, path: Union[str, Path]):
    """
    Write a dataset atomically.

    Args:
        ds: Dataset to save
        path: Destination file
    """
    atomic_write_text(path, dataset_to_text(ds))
    logger.info("Wrote %d records to %s", len(ds), path)


def load_dataset(path: Union[str, Path]) -> Dataset:
    """
    Read a dataset file.

    Args:
        path: Dataset file

    Returns:
        Dataset
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise DataFileError(f"Error reading dataset file {path}: {str(e)}") from e
    ds = dataset_from_text(text, source=str(path))
    logger.info("Loaded %d records (%d sps) from %s", len(ds), ds.sps, path)
    return ds

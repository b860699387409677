"""
Base class for the event classification pipelines.
"""

import json
import logging
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

from ..config import MODEL_SCHEMA_VERSION
from ..data.phasor_model import EventClass, EventRecord
from ..errors import DataFileError
from ..utils import atomic_write_text

logger = logging.getLogger(__name__)

# None stands for the non-classified outcome.
Prediction = Optional[EventClass]


class BasePipeline(ABC):
    """Base class for all classification pipelines."""

    method: str = ""

    def __init__(self, seed: int):
        """
        Initialize the pipeline.

        Args:
            seed: Seed for every random draw made while fitting
        """
        self.seed = seed
        self.is_fitted = False

    @abstractmethod
    def fit(self, records: Sequence[EventRecord]) -> "BasePipeline":
        """Train on labeled records."""

    @abstractmethod
    def predict(self, record: EventRecord) -> Prediction:
        """Classify one record; None means non-classified."""

    @abstractmethod
    def to_dict(self) -> Dict[str, Any]:
        """Serializable state of a fitted pipeline."""

    @classmethod
    @abstractmethod
    def from_dict(cls, data: Dict[str, Any], seed: int = 0) -> "BasePipeline":
        """Rebuild a fitted pipeline from to_dict output."""

    @property
    def converged(self) -> bool:
        return True

    def predict_many(self, records: Sequence[EventRecord]) -> List[Prediction]:
        """Classify records in order."""
        return [self.predict(record) for record in records]

    def save(self, path: Union[str, Path]):
        """
        Write the fitted pipeline as a versioned JSON model file.

        Args:
            path: Destination file
        """
        if not self.is_fitted:
            raise DataFileError(f"Cannot save an unfitted {self.method} pipeline")
        payload = {
            "schema_version": MODEL_SCHEMA_VERSION,
            "method": self.method,
            "seed": self.seed,
            "state": self.to_dict(),
        }
        self.write_json(path, payload)
        logger.info("Saved %s model to %s", self.method, path)

    @staticmethod
    def write_json(path: Union[str, Path], data: Dict[str, Any]):
        """
        Write a dictionary as JSON.

        Args:
            path: Destination file
            data: JSON-serializable dictionary
        """
        try:
            text = json.dumps(data, sort_keys=True)
        except (TypeError, ValueError) as e:
            raise DataFileError(f"Error serializing {path}: {str(e)}") from e
        atomic_write_text(path, text + "\n")

    @staticmethod
    def read_json(path: Union[str, Path]) -> Dict[str, Any]:
        """
        Read a JSON file.

        Args:
            path: Path to the JSON file

        Returns:
            Parsed dictionary
        """
        try:
            with open(path, "r", encoding="utf-8") as file:
                return json.load(file)
        except (OSError, ValueError) as e:
            raise DataFileError(f"Error reading JSON file {path}: {str(e)}") from e

    @classmethod
    def read_model_state(cls, path: Union[str, Path]) -> Dict[str, Any]:
        """Read a model file and check its schema version."""
        payload = cls.read_json(path)
        if payload.get("schema_version") != MODEL_SCHEMA_VERSION:
            raise DataFileError(
                f"Unsupported model schema_version {payload.get('schema_version')} in {path}"
            )
        if "method" not in payload or "state" not in payload:
            raise DataFileError(f"Model file {path} lacks method/state")
        return payload

    @classmethod
    def from_payload(cls, payload: Dict[str, Any], source: str = "<model>") -> "BasePipeline":
        """Rebuild a pipeline from a parsed model file."""
        if payload["method"] != cls.method:
            raise DataFileError(f"{source} holds a '{payload['method']}' model, not '{cls.method}'")
        try:
            return cls.from_dict(payload["state"], seed=int(payload.get("seed", 0)))
        except (KeyError, TypeError, ValueError) as e:
            raise DataFileError(f"Malformed model file {source}: {str(e)}") from e

    @classmethod
    def load(cls, path: Union[str, Path]) -> "BasePipeline":
        """
        Load a fitted pipeline of this class from a model file.

        Args:
            path: Model file written by save

        Returns:
            Fitted pipeline
        """
        pipeline = cls.from_payload(cls.read_model_state(path), source=str(path))
        logger.info("Loaded %s model from %s", cls.method, path)
        return pipeline

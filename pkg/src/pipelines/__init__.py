"""
Classification pipelines and the method registry.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Type, Union

from .. import config
from ..errors import DataFileError, InvalidInputError
from .ae_softmax import AeSoftmaxPipeline, TrainConfig
from .base_pipeline import BasePipeline, Prediction
from .pca_svm import PcaSvmPipeline, SvmHyperParams

PIPELINES: Dict[str, Type[BasePipeline]] = {
    PcaSvmPipeline.method: PcaSvmPipeline,
    AeSoftmaxPipeline.method: AeSoftmaxPipeline,
}
METHODS = tuple(PIPELINES)


@dataclass(frozen=True)
class PipelineSettings:
    """Hyperparameters of both pipelines; each pipeline reads its own part."""

    svm: SvmHyperParams = field(default_factory=SvmHyperParams)
    k: int = config.PCA_COMPONENTS
    grid_search: bool = False
    train: TrainConfig = field(default_factory=TrainConfig)
    hidden_size: int = config.AE_HIDDEN_SIZE
    fine_tune: bool = config.AE_FINE_TUNE
    jobs: int = 1


def check_method(method: str) -> str:
    """Return method if it is registered, else raise InvalidInputError listing the valid ones."""
    if method not in PIPELINES:
        raise InvalidInputError(f"Unknown method '{method}'; valid methods: {', '.join(METHODS)}")
    return method


def build_pipeline(method: str, settings: PipelineSettings = PipelineSettings(), seed: int = 0) -> BasePipeline:
    """
    Create an untrained pipeline.

    Args:
        method: One of METHODS
        settings: Hyperparameters
        seed: Training seed

    Returns:
        BasePipeline
    """
    check_method(method)
    if method == PcaSvmPipeline.method:
        return PcaSvmPipeline(
            seed,
            hyper=settings.svm,
            k=settings.k,
            grid_search=settings.grid_search,
            jobs=settings.jobs,
        )
    return AeSoftmaxPipeline(
        seed,
        train_config=settings.train,
        hidden_size=settings.hidden_size,
        fine_tune=settings.fine_tune,
    )


def load_pipeline(path: Union[str, Path]) -> BasePipeline:
    """
    Load a fitted pipeline from a model file written by BasePipeline.save.

    Args:
        path: Model file

    Returns:
        Fitted pipeline of the stored method
    """
    payload = BasePipeline.read_model_state(path)
    cls = PIPELINES.get(payload["method"])
    if cls is None:
        raise DataFileError(f"Model file {path} holds unknown method '{payload['method']}'")
    return cls.from_payload(payload, source=str(path))


__all__ = [
    "AeSoftmaxPipeline",
    "BasePipeline",
    "METHODS",
    "PIPELINES",
    "PcaSvmPipeline",
    "PipelineSettings",
    "Prediction",
    "SvmHyperParams",
    "TrainConfig",
    "build_pipeline",
    "check_method",
    "load_pipeline",
]

"""Shared fixtures for the test suite."""

import numpy as np
import pytest

from src.data.event_synth import GeneratorConfig, build_dataset
from src.data.phasor_model import EventClass, EventRecord, ScenarioParams, subsample_per_class


def _scenario_for(label: EventClass, event_time: float = 0.5, load_index: int = 0) -> ScenarioParams:
    if label == EventClass.ABRUPT_LOAD_CHANGE:
        return ScenarioParams(load_index=load_index, event_time=event_time, load_step_fraction=0.1)
    return ScenarioParams(load_index=load_index, event_time=event_time, loading_fraction=0.7)


@pytest.fixture
def scenario_for():
    """Factory for a scenario consistent with a class."""
    return _scenario_for


@pytest.fixture
def make_record():
    """Factory for records with constant (or given) channels."""

    def factory(
        label=EventClass.ABRUPT_LOAD_CHANGE,
        sps=60,
        v_mag=1.0,
        v_ang=0.0,
        i_mag=0.5,
        i_ang=-10.0,
        seed=1,
    ):
        label = EventClass(label)

        def channel(value):
            return np.broadcast_to(np.asarray(value, dtype=float), (sps,)).copy()

        return EventRecord(
            label=label,
            sps=sps,
            v_mag=channel(v_mag),
            v_ang=channel(v_ang),
            i_mag=channel(i_mag),
            i_ang=channel(i_ang),
            scenario=_scenario_for(label),
            seed=seed,
        )

    return factory


@pytest.fixture
def quiet_config():
    """Default generator settings with noise disabled."""
    return GeneratorConfig(noise_std_fraction=0.0)


@pytest.fixture(scope="session")
def dataset60():
    """The default 450-record dataset at 60 sps."""
    return build_dataset(GeneratorConfig(sps=60))


@pytest.fixture(scope="session")
def small_dataset(dataset60):
    """Ten records per class drawn from the default dataset."""
    return subsample_per_class(dataset60, 10, seed=3)

"""
Synthetic PMU windows for the three event classes.

The feeder is reduced to a Thevenin source E behind an impedance Z feeding a
constant-current aggregate load, so every window obeys V = E - I*Z:

- class 1 (capacitor switching): a leading reactive current is injected so
  that |V| ramps by cap_step_v over cap_transition_s and stays there;
- class 2 (OLTC malfunction): the source ratio moves |V| by one tap, dwells,
  then returns to the original tap;
- class 3 (abrupt load change): the load current steps by a signed fraction
  in a single sample.
"""

import dataclasses
import logging
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterator, Tuple, Union

import numpy as np

from .. import config
from ..errors import InvalidInputError
from ..utils import derive_seed, read_key_value_file, wrap_angle
from .phasor_model import (
    CHANNELS,
    Dataset,
    EventClass,
    EventRecord,
    ScenarioParams,
    class_counts,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GeneratorConfig:
    """Generator settings; magnitudes in per unit, durations in seconds."""

    sps: int = config.DEFAULT_SPS
    thevenin_source: float = config.THEVENIN_SOURCE
    thevenin_impedance: float = config.THEVENIN_IMPEDANCE
    thevenin_impedance_angle: float = config.THEVENIN_IMPEDANCE_ANGLE
    base_load_current: float = config.BASE_LOAD_CURRENT
    cap_step_v: float = config.CAP_STEP_V
    cap_transition_s: float = config.CAP_TRANSITION_S
    tap_step_v: float = config.TAP_STEP_V
    oltc_transition_range_s: Tuple[float, float] = config.OLTC_TRANSITION_RANGE_S
    oltc_dwell_range_s: Tuple[float, float] = config.OLTC_DWELL_RANGE_S
    noise_std_fraction: float = config.NOISE_STD_FRACTION
    master_seed: int = config.MASTER_SEED
    load_pf_angle_range: Tuple[float, float] = config.LOAD_PF_ANGLE_RANGE
    load_nominal_loading_range: Tuple[float, float] = config.LOAD_NOMINAL_LOADING_RANGE
    event_time_range_s: Tuple[float, float] = config.EVENT_TIME_RANGE_S

    def __post_init__(self):
        for name in (
            "oltc_transition_range_s",
            "oltc_dwell_range_s",
            "load_pf_angle_range",
            "load_nominal_loading_range",
            "event_time_range_s",
        ):
            low, high = (float(v) for v in getattr(self, name))
            if high < low:
                raise InvalidInputError(f"{name} must be (low, high), got ({low}, {high})")
            object.__setattr__(self, name, (low, high))

        if self.sps not in config.SUPPORTED_SPS:
            raise InvalidInputError(f"sps must be one of {config.SUPPORTED_SPS}, got {self.sps}")
        positive = (
            "thevenin_source",
            "thevenin_impedance",
            "base_load_current",
            "cap_transition_s",
        )
        for name in positive:
            if getattr(self, name) <= 0:
                raise InvalidInputError(f"{name} must be positive")
        if self.oltc_transition_range_s[0] <= 0 or self.oltc_dwell_range_s[0] <= 0:
            raise InvalidInputError("OLTC transition and dwell durations must be positive")
        if self.noise_std_fraction < 0:
            raise InvalidInputError("noise_std_fraction must be >= 0")
        if not 0.0 < self.event_time_range_s[0] <= self.event_time_range_s[1] < 1.0:
            raise InvalidInputError("event_time_range_s must lie inside (0, 1)")

        last_sample = (self.sps - 1) / self.sps
        latest = self.event_time_range_s[1]
        shortest_oltc = 2 * self.oltc_transition_range_s[0] + self.oltc_dwell_range_s[0]
        if latest + shortest_oltc > last_sample or latest + self.cap_transition_s > 1.0:
            raise InvalidInputError(
                "Event time plus transitions and dwell do not fit in the one-second window"
            )

    @property
    def impedance(self) -> complex:
        return self.thevenin_impedance * np.exp(1j * np.radians(self.thevenin_impedance_angle))


@dataclass(frozen=True)
class LoadProfile:
    """Per-load properties drawn once from the master seed."""

    pf_angle: float
    nominal_loading: float


@lru_cache(maxsize=32)
def load_profiles(cfg: GeneratorConfig) -> Tuple[LoadProfile, ...]:
    """
    Draw the power-factor angle and nominal loading of every load.

    Args:
        cfg: Generator configuration (master_seed and ranges are used)

    Returns:
        One LoadProfile per load index
    """
    rng = np.random.default_rng(derive_seed(cfg.master_seed, config.NUM_LOADS))
    angles = rng.uniform(*cfg.load_pf_angle_range, size=config.NUM_LOADS)
    loadings = rng.uniform(*cfg.load_nominal_loading_range, size=config.NUM_LOADS)
    return tuple(LoadProfile(float(a), float(l)) for a, l in zip(angles, loadings))


def _ramp(t: np.ndarray, start: float, duration: float) -> np.ndarray:
    return np.clip((t - start) / duration, 0.0, 1.0)


def _capacitor_current(v_pre: complex, impedance: complex, target: np.ndarray) -> np.ndarray:
    # Reactive current x (leading, +j) such that |v_pre - j*x*Z| = target.
    a = -1j * impedance
    p = (v_pre * np.conj(a)).real
    a2 = abs(a) ** 2
    disc = p * p - a2 * (abs(v_pre) ** 2 - target**2)
    return (-p + np.sqrt(np.maximum(disc, 0.0))) / a2


def _tap_ratio(source: float, drop: complex, target: np.ndarray) -> np.ndarray:
    # Source ratio k such that |k*E - drop| = target (root near 1).
    return (drop.real + np.sqrt(np.maximum(target**2 - drop.imag**2, 0.0))) / source


def _oltc_timing(rng: np.random.Generator, event_time: float, cfg: GeneratorConfig):
    available = (cfg.sps - 1) / cfg.sps - event_time
    tr_low, tr_high = cfg.oltc_transition_range_s
    dw_low, dw_high = cfg.oltc_dwell_range_s
    if 2 * tr_low + dw_low > available:
        raise InvalidInputError(
            f"OLTC event at t={event_time:.3f}s cannot relocate inside the window"
        )
    transition = rng.uniform(tr_low, min(tr_high, (available - dw_low) / 2))
    dwell = rng.uniform(dw_low, min(dw_high, available - 2 * transition))
    sign = 1.0 if rng.random() < 0.5 else -1.0
    return transition, dwell, sign


def synth_record(
    label: EventClass,
    scenario: ScenarioParams,
    cfg: GeneratorConfig,
    seed: int,
) -> EventRecord:
    """
    Generate one labeled one-second window.

    Args:
        label: Event class
        scenario: Scenario consistent with the class
        cfg: Generator configuration
        seed: Record seed; shape draws and noise are derived from it

    Returns:
        EventRecord with noise added per cfg.noise_std_fraction
    """
    label = EventClass(label)
    if not scenario.is_consistent_with(label):
        raise InvalidInputError(f"Scenario {scenario} does not match class {int(label)}")

    rng = np.random.default_rng(seed)
    t = np.arange(cfg.sps) / cfg.sps
    t_event = scenario.event_time
    profile = load_profiles(cfg)[scenario.load_index]
    source = cfg.thevenin_source
    impedance = cfg.impedance

    if label == EventClass.ABRUPT_LOAD_CHANGE:
        loading = profile.nominal_loading
    else:
        loading = scenario.loading_fraction
    i_pre = loading * cfg.base_load_current * np.exp(-1j * np.radians(profile.pf_angle))
    v_pre = source - i_pre * impedance

    current = np.full(cfg.sps, i_pre, dtype=complex)
    voltage = np.full(cfg.sps, v_pre, dtype=complex)

    if label == EventClass.CAPACITOR_SWITCH_MALFUNCTION:
        if t_event + cfg.cap_transition_s > 1.0:
            raise InvalidInputError(
                f"Capacitor switching at t={t_event:.3f}s does not fit in the window"
            )
        r = _ramp(t, t_event, cfg.cap_transition_s)
        target = abs(v_pre) + r * cfg.cap_step_v
        x = np.where(r > 0, _capacitor_current(v_pre, impedance, target), 0.0)
        current = i_pre + 1j * x
        voltage = v_pre - 1j * x * impedance

    elif label == EventClass.OLTC_SWITCH_MALFUNCTION:
        transition, dwell, sign = _oltc_timing(rng, t_event, cfg)
        r = _ramp(t, t_event, transition) - _ramp(t, t_event + transition + dwell, transition)
        target = abs(v_pre) + r * sign * cfg.tap_step_v
        drop = i_pre * impedance
        ratio = _tap_ratio(source, drop, target)
        voltage = np.where(r != 0, ratio * source - drop, v_pre)
        logger.debug(
            "OLTC record seed=%d: transition=%.3fs dwell=%.3fs sign=%+d",
            seed, transition, dwell, int(sign),
        )

    else:
        if t_event > t[-1]:
            raise InvalidInputError(f"Load change at t={t_event:.3f}s falls after the last sample")
        step = np.where(t >= t_event, 1.0 + scenario.load_step_fraction, 1.0)
        current = i_pre * step
        voltage = source - current * impedance

    record = EventRecord(
        label=label,
        sps=cfg.sps,
        v_mag=np.abs(voltage),
        v_ang=wrap_angle(np.degrees(np.angle(voltage))),
        i_mag=np.abs(current),
        i_ang=wrap_angle(np.degrees(np.angle(current))),
        scenario=scenario,
        seed=seed,
    )
    return add_noise(record, cfg.noise_std_fraction, derive_seed(seed, 1))


def add_noise(record: EventRecord, noise_std_fraction: float, seed: int) -> EventRecord:
    """
    Add zero-mean Gaussian measurement noise to the four channels.

    Each sample gets an independent draw with standard deviation
    noise_std_fraction * |value|.

    Args:
        record: Clean record
        noise_std_fraction: Relative standard deviation (0 disables noise)
        seed: Noise seed

    Returns:
        Noisy copy of the record (the same record when the fraction is 0)
    """
    if noise_std_fraction < 0:
        raise InvalidInputError("noise_std_fraction must be >= 0")
    if noise_std_fraction == 0:
        return record

    rng = np.random.default_rng(seed)
    noisy = {}
    for name in CHANNELS:
        values = getattr(record, name)
        perturbed = values + rng.standard_normal(values.shape) * noise_std_fraction * np.abs(values)
        if name.endswith("_ang"):
            noisy[name] = wrap_angle(perturbed)
        else:
            noisy[name] = np.maximum(perturbed, 0.0)
    return record.replace_channels(**noisy)


def scenario_grid() -> Iterator[Tuple[EventClass, int, int, dict]]:
    """
    Enumerate the experiment grid: 15 loads x 10 levels per class.

    Yields:
        (class, load_index, level_index, scenario keyword arguments)
    """
    for label in EventClass:
        for load_index in range(config.NUM_LOADS):
            if label == EventClass.ABRUPT_LOAD_CHANGE:
                for level_index, step in enumerate(config.LOAD_STEP_LEVELS):
                    yield label, load_index, level_index, {"load_step_fraction": step}
            else:
                for level_index, loading in enumerate(config.LOADING_LEVELS):
                    yield label, load_index, level_index, {"loading_fraction": loading}


def build_dataset(cfg: GeneratorConfig) -> Dataset:
    """
    Generate the full experiment set: 150 records per class.

    Args:
        cfg: Generator configuration

    Returns:
        Dataset of 450 records at cfg.sps
    """
    records = []
    for label, load_index, level_index, levels in scenario_grid():
        seed = derive_seed(cfg.master_seed, int(label), load_index, level_index)
        event_rng = np.random.default_rng(derive_seed(seed, 0))
        scenario = ScenarioParams(
            load_index=load_index,
            event_time=float(event_rng.uniform(*cfg.event_time_range_s)),
            **levels,
        )
        records.append(synth_record(label, scenario, cfg, seed))

    ds = Dataset(records=tuple(records), sps=cfg.sps, metadata={"master_seed": cfg.master_seed})
    logger.info(
        "Built dataset: %d records at %d sps, counts %s",
        len(ds), cfg.sps, {int(k): v for k, v in class_counts(ds).items()},
    )
    return ds


def regenerate(record: EventRecord, cfg: GeneratorConfig) -> EventRecord:
    """
    Rebuild a record from its stored scenario and seed.

    Args:
        record: Record to reproduce
        cfg: Configuration the record was generated with

    Returns:
        Bit-identical record
    """
    if cfg.sps != record.sps:
        cfg = dataclasses.replace(cfg, sps=record.sps)
    return synth_record(record.label, record.scenario, cfg, record.seed)


_INT_FIELDS = {"sps", "master_seed"}


def generator_config_from_file(path: Union[str, Path], **overrides) -> GeneratorConfig:
    """
    Load a GeneratorConfig from a flat KEY=VALUE file.

    Keys are field names (case-insensitive); ranges are written "low,high".
    Keyword overrides win over the file.

    Args:
        path: Config file
        overrides: Field values taking precedence

    Returns:
        GeneratorConfig
    """
    values = read_key_value_file(path)
    known = {f.name: f for f in dataclasses.fields(GeneratorConfig)}
    kwargs = {}
    for key, raw in values.items():
        if key not in known:
            raise InvalidInputError(f"Unknown generator config key '{key}' in {path}")
        kwargs[key] = _coerce(key, raw)
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    return GeneratorConfig(**kwargs)


def _coerce(name: str, raw: str):
    try:
        if name in _INT_FIELDS:
            return int(raw)
        if name.endswith("_range") or name.endswith("_range_s"):
            low, high = raw.split(",")
            return (float(low), float(high))
        return float(raw)
    except ValueError as e:
        raise InvalidInputError(f"Invalid value for {name}: '{raw}'") from e

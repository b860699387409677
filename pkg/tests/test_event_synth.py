import dataclasses

import numpy as np
import pytest

from src import config
from src.data.event_synth import (
    GeneratorConfig,
    add_noise,
    build_dataset,
    generator_config_from_file,
    load_profiles,
    regenerate,
    scenario_grid,
    synth_record,
)
from src.data.phasor_model import EventClass, ScenarioParams, class_counts, dataset_to_text
from src.errors import InvalidInputError


def _level_change_groups(values, tol=1e-12):
    changing = np.abs(np.diff(values)) > tol
    starts = changing & ~np.concatenate([[False], changing[:-1]])
    return int(np.sum(starts))


def test_capacitor_window_shape(quiet_config):
    scenario = ScenarioParams(load_index=3, event_time=0.5, loading_fraction=0.7)
    record = synth_record(EventClass.CAPACITOR_SWITCH_MALFUNCTION, scenario, quiet_config, seed=5)
    v = record.v_mag
    # samples 0..30 are at t <= 0.5; the one-cycle ramp ends by sample 31
    assert np.all(v[:31] == v[0])
    assert np.allclose(v[31:], v[0] + 0.015, rtol=0, atol=1e-9)
    assert record.i_ang[-1] > record.i_ang[0]


def test_oltc_window_returns_to_baseline(quiet_config):
    scenario = ScenarioParams(load_index=7, event_time=0.4, loading_fraction=0.85)
    for seed in range(10):
        record = synth_record(EventClass.OLTC_SWITCH_MALFUNCTION, scenario, quiet_config, seed=seed)
        v = record.v_mag
        assert abs(v[-1] - v[0]) <= 1e-12
        assert _level_change_groups(v) == 2
        assert np.max(np.abs(v - v[0])) == pytest.approx(config.TAP_STEP_V, abs=1e-9)


def test_load_step_current_ratio(quiet_config):
    scenario = ScenarioParams(load_index=2, event_time=0.33, load_step_fraction=0.25)
    record = synth_record(EventClass.ABRUPT_LOAD_CHANGE, scenario, quiet_config, seed=9)
    assert record.i_mag[-1] / record.i_mag[0] == pytest.approx(1.25, abs=1e-9)
    assert _level_change_groups(record.i_mag) == 1
    assert np.count_nonzero(np.abs(np.diff(record.i_mag)) > 1e-12) == 1


def test_load_decrease_raises_voltage(quiet_config):
    scenario = ScenarioParams(load_index=2, event_time=0.33, load_step_fraction=-0.2)
    record = synth_record(EventClass.ABRUPT_LOAD_CHANGE, scenario, quiet_config, seed=9)
    assert record.v_mag[-1] > record.v_mag[0]


def test_scenario_must_match_class(quiet_config):
    scenario = ScenarioParams(load_index=0, event_time=0.3, load_step_fraction=0.1)
    with pytest.raises(InvalidInputError):
        synth_record(EventClass.CAPACITOR_SWITCH_MALFUNCTION, scenario, quiet_config, seed=1)


def test_oltc_event_too_late_is_rejected(quiet_config):
    scenario = ScenarioParams(load_index=0, event_time=0.85, loading_fraction=0.6)
    with pytest.raises(InvalidInputError):
        synth_record(EventClass.OLTC_SWITCH_MALFUNCTION, scenario, quiet_config, seed=1)


def test_config_rejects_windows_that_cannot_fit():
    with pytest.raises(InvalidInputError):
        GeneratorConfig(event_time_range_s=(0.2, 0.9))
    with pytest.raises(InvalidInputError):
        GeneratorConfig(sps=100)
    with pytest.raises(InvalidInputError):
        GeneratorConfig(noise_std_fraction=-0.01)


def test_add_noise_zero_is_identity(make_record):
    record = make_record()
    assert add_noise(record, 0.0, seed=3) is record


def test_add_noise_is_deterministic(make_record):
    record = make_record()
    a = add_noise(record, 0.01, seed=3)
    b = add_noise(record, 0.01, seed=3)
    assert np.array_equal(a.channels(), b.channels())
    assert not np.array_equal(a.v_mag, record.v_mag)


def test_add_noise_relative_std(make_record):
    record = make_record(sps=120, v_mag=1.0)
    residuals = np.concatenate(
        [add_noise(record, 0.01, seed=s).v_mag - 1.0 for s in range(834)]
    )
    assert residuals.size >= 100_000
    assert 0.0099 <= residuals.std() <= 0.0101


def test_add_noise_keeps_angles_in_range(make_record):
    record = make_record(v_ang=179.99, i_ang=-179.99)
    noisy = add_noise(record, 0.01, seed=4)
    for channel in (noisy.v_ang, noisy.i_ang):
        assert np.all((channel > -180) & (channel <= 180))


def test_scenario_grid_covers_every_class():
    grid = list(scenario_grid())
    assert len(grid) == 450
    steps = {levels["load_step_fraction"] for label, _, _, levels in grid
             if label == EventClass.ABRUPT_LOAD_CHANGE}
    assert steps == set(config.LOAD_STEP_LEVELS)


def test_load_profiles_are_fixed_by_master_seed():
    cfg = GeneratorConfig(master_seed=11)
    profiles = load_profiles(cfg)
    assert len(profiles) == config.NUM_LOADS
    assert profiles == load_profiles(GeneratorConfig(master_seed=11))
    assert profiles != load_profiles(GeneratorConfig(master_seed=12))
    for p in profiles:
        assert 15.0 <= p.pf_angle <= 35.0
        assert 0.5 <= p.nominal_loading <= 0.95


def test_default_dataset(dataset60):
    assert len(dataset60) == 450
    assert class_counts(dataset60) == {c: 150 for c in EventClass}
    for record in dataset60:
        assert record.sps == 60
        assert 0.2 <= record.scenario.event_time <= 0.6
        assert np.all((record.v_mag > 0.8) & (record.v_mag < 1.1))


def test_build_dataset_is_deterministic(dataset60):
    again = build_dataset(GeneratorConfig(sps=60))
    assert dataset_to_text(again) == dataset_to_text(dataset60)


def test_build_dataset_at_120_sps():
    ds = build_dataset(GeneratorConfig(sps=120, master_seed=5))
    assert len(ds) == 450
    assert all(len(r.v_mag) == 120 for r in ds)


def test_noise_free_oltc_records_have_two_level_changes():
    ds = build_dataset(GeneratorConfig(noise_std_fraction=0.0))
    for record in ds.by_class(EventClass.OLTC_SWITCH_MALFUNCTION):
        assert _level_change_groups(record.v_mag) == 2
    for record in ds.by_class(EventClass.CAPACITOR_SWITCH_MALFUNCTION):
        assert _level_change_groups(record.v_mag) == 1


def test_regenerate_is_bit_exact(dataset60):
    cfg = GeneratorConfig(sps=60)
    for record in dataset60.records[::45]:
        again = regenerate(record, cfg)
        assert np.array_equal(again.channels(), record.channels())


def test_generator_config_from_file(tmp_path):
    path = tmp_path / "gen.cfg"
    path.write_text(
        "sps=120\ncap_step_v=0.02\noltc_dwell_range_s=0.1,0.4\nnoise_std_fraction=0\n",
        encoding="utf-8",
    )
    cfg = generator_config_from_file(path, master_seed=5)
    assert cfg == dataclasses.replace(
        GeneratorConfig(),
        sps=120,
        cap_step_v=0.02,
        oltc_dwell_range_s=(0.1, 0.4),
        noise_std_fraction=0.0,
        master_seed=5,
    )


def test_generator_config_from_file_rejects_unknown_keys(tmp_path):
    path = tmp_path / "gen.cfg"
    path.write_text("voltage=1\n", encoding="utf-8")
    with pytest.raises(InvalidInputError):
        generator_config_from_file(path)

import numpy as np
import pandas as pd
import pytest

from src.data.event_synth import synth_record
from src.data.features import (
    FEATURE_COLUMNS,
    NormStats,
    build_feature_matrices,
    build_feature_matrix,
    export_feature_csv,
    fit_norm_stats,
    flatten,
    normalize,
    normalize_and_flatten,
    unflatten,
)
from src.data.phasor_model import EventClass, ScenarioParams
from src.errors import InvalidInputError


def test_constant_window(make_record):
    m = build_feature_matrix(make_record(v_mag=1.0, v_ang=0.0, i_mag=0.5, i_ang=-10.0))
    assert m.shape == (59, 6)
    assert np.array_equal(m, np.tile([0.0, 0.0, 0.5, -10.0, 0.0, 0.0], (59, 1)))


@pytest.mark.parametrize("sps, rows", [(60, 59), (120, 119)])
def test_matrix_shape(make_record, sps, rows):
    assert build_feature_matrix(make_record(sps=sps)).shape == (rows, 6)


def test_single_sample_current_step(quiet_config):
    scenario = ScenarioParams(load_index=4, event_time=0.41, load_step_fraction=0.2)
    record = synth_record(EventClass.ABRUPT_LOAD_CHANGE, scenario, quiet_config, seed=2)
    k = int(np.flatnonzero(record.t >= 0.41)[0])
    m = build_feature_matrix(record)
    assert list(np.flatnonzero(np.abs(m[:, 4]) > 1e-12)) == [k - 1]
    assert m[k - 1, 4] == pytest.approx(record.i_mag[k] - record.i_mag[k - 1], abs=1e-15)


def test_angle_differences_are_wrapped(make_record):
    angles = np.where(np.arange(60) % 2 == 0, 179.0, -179.0)
    m = build_feature_matrix(make_record(i_ang=angles))
    assert np.allclose(np.abs(m[:, 5]), 2.0)
    assert np.all((m[:, [1, 5]] > -180) & (m[:, [1, 5]] <= 180))


def test_delta_v_mag_telescopes(dataset60):
    for record in dataset60.records[::50]:
        m = build_feature_matrix(record)
        assert m[:, 0].sum() == pytest.approx(record.v_mag[-1] - record.v_mag[0], abs=1e-12)


def test_norm_stats_of_zero_matrix():
    stats = fit_norm_stats([np.zeros((59, 6))])
    assert np.array_equal(stats.mean, np.zeros(6))
    assert np.array_equal(stats.std, np.full(6, 1e-9))


def test_norm_stats_pool_every_matrix():
    a = np.zeros((59, 6))
    b = np.zeros((59, 6))
    a[:, 2] = 0.4
    b[:, 2] = 0.6
    stats = fit_norm_stats([a, b])
    assert stats.mean[2] == pytest.approx(0.5, abs=1e-12)
    assert stats.std[2] == pytest.approx(0.1, abs=1e-12)


def test_norm_stats_match_two_pass_computation():
    rng = np.random.default_rng(0)
    mats = [rng.normal(size=(59, 6)) * [1, 5, 0.1, 30, 2, 7] for _ in range(7)]
    stats = fit_norm_stats(mats)
    rows = [row for m in mats for row in m]
    for c in range(6):
        values = [row[c] for row in rows]
        mean = sum(values) / len(values)
        std = (sum((v - mean) ** 2 for v in values) / len(values)) ** 0.5
        assert stats.mean[c] == pytest.approx(mean, abs=1e-12)
        assert stats.std[c] == pytest.approx(std, abs=1e-12)


def test_norm_stats_reject_empty_input():
    with pytest.raises(InvalidInputError):
        fit_norm_stats([])


def test_normalize_mean_matrix_is_zero():
    stats = NormStats(mean=np.arange(6.0), std=np.full(6, 2.0))
    v = normalize_and_flatten(np.tile(stats.mean, (59, 1)), stats)
    assert v.shape == (354,)
    assert np.array_equal(v, np.zeros(354))


def test_flatten_layout_and_inverse():
    rng = np.random.default_rng(1)
    m = rng.normal(size=(59, 6))
    stats = fit_norm_stats([m])
    z = normalize(m, stats)
    v = normalize_and_flatten(m, stats)
    for r, c in [(0, 0), (3, 5), (58, 2)]:
        assert v[6 * r + c] == z[r, c]
    assert np.array_equal(unflatten(flatten(m)), m)
    with pytest.raises(InvalidInputError):
        unflatten(np.zeros(355))


def test_normalize_shape_mismatch():
    stats = NormStats(mean=np.zeros(6), std=np.ones(6))
    with pytest.raises(InvalidInputError):
        normalize(np.zeros((59, 5)), stats)


def test_normalization_ignores_column_offsets():
    rng = np.random.default_rng(2)
    mats = [rng.normal(size=(59, 6)) for _ in range(4)]
    shifted = [m + np.array([0.0, 3.0, 0.0, -2.5, 0.0, 1.0]) for m in mats]
    s1, s2 = fit_norm_stats(mats), fit_norm_stats(shifted)
    for m, n in zip(mats, shifted):
        assert np.allclose(normalize_and_flatten(m, s1), normalize_and_flatten(n, s2), rtol=0, atol=1e-12)


def test_build_feature_matrices(small_dataset):
    mats = build_feature_matrices(small_dataset)
    assert len(mats) == len(small_dataset)
    assert all(m.shape == (59, 6) for m in mats)


def test_export_feature_csv(tmp_path, make_record):
    m = build_feature_matrix(make_record())
    path = tmp_path / "features.csv"
    export_feature_csv(m, path)
    frame = pd.read_csv(path, encoding="utf-8")
    assert tuple(frame.columns) == FEATURE_COLUMNS
    assert frame.shape == (59, 6)
    assert np.allclose(frame.to_numpy(), m)

"""
End-to-end accuracy checks on the default synthetic datasets.

These train every pipeline several times over and are deselected by default;
run them with `pytest -m slow`.
"""

import numpy as np
import pytest

from src.data.event_synth import GeneratorConfig, build_dataset
from src.data.phasor_model import subsample_per_class
from src.evaluation import accuracy, leave_one_out, run_sweep, train_and_evaluate
from src.pipelines import METHODS

pytestmark = pytest.mark.slow

SEEDS = (1, 2, 3, 4, 5)


@pytest.fixture(scope="module")
def dataset120():
    return build_dataset(GeneratorConfig(sps=120))


@pytest.fixture(scope="module")
def half_split_runs(dataset60):
    runs = {}
    for method in METHODS:
        runs[method] = [train_and_evaluate(dataset60, method, 0.5, seed)[1] for seed in SEEDS]
    return runs


def test_both_methods_reach_three_quarters(half_split_runs):
    for method, matrices in half_split_runs.items():
        assert np.mean([accuracy(cm) for cm in matrices]) >= 0.75, method


def test_autoencoder_keeps_up_with_svm(half_split_runs):
    ae = np.mean([accuracy(cm) for cm in half_split_runs["ae-softmax"]])
    svm = np.mean([accuracy(cm) for cm in half_split_runs["pca-svm"]])
    assert ae >= svm - 0.02


def test_autoencoder_never_rejects(half_split_runs):
    for cm in half_split_runs["ae-softmax"]:
        assert np.all(cm.counts[:, -1] == 0)


def test_more_training_data_does_not_hurt(dataset60, dataset120):
    result = run_sweep([0.2, 0.9], [60, 120], list(METHODS), list(SEEDS), datasets={60: dataset60, 120: dataset120})
    frame = result.to_frame()
    means = frame.groupby(["method", "sps", "fraction"])["accuracy"].mean()
    for method in METHODS:
        for sps in (60, 120):
            assert means[(method, sps, 0.9)] >= means[(method, sps, 0.2)], (method, sps)


def test_higher_rate_is_not_worse(dataset60, dataset120):
    result = run_sweep([0.5], [60, 120], list(METHODS), list(SEEDS), datasets={60: dataset60, 120: dataset120})
    means = result.to_frame().groupby(["method", "sps"])["accuracy"].mean()
    for method in METHODS:
        assert means[(method, 120)] >= means[(method, 60)] - 0.02, method


@pytest.mark.parametrize("method", METHODS)
def test_leave_one_out_on_ninety_records(dataset60, method):
    subset = subsample_per_class(dataset60, 30, seed=1)
    assert leave_one_out(subset, method, jobs=-1) >= 0.75

import json

import pytest

from src.data.phasor_model import save_dataset
from src.pipelines import AeSoftmaxPipeline
from src.ui.cli import EXIT_CONVERGENCE, EXIT_DATA, EXIT_OK, EXIT_USAGE, build_parser, main

FAST_AE = ["--epochs-ae", "2", "--epochs-softmax", "5", "--epochs-fine-tune", "2", "--hidden", "4"]


@pytest.fixture
def data_file(small_dataset, tmp_path):
    path = tmp_path / "small.jsonl"
    save_dataset(small_dataset, path)
    return path


def test_gen_is_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert main(["gen", "--sps", "60", "--seed", "7", "--out", str(a)]) == EXIT_OK
    assert main(["gen", "--sps", "60", "--seed", "7", "--out", str(b)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    out = capsys.readouterr().out
    assert "class 1" in out
    assert "total: 450 records" in out


@pytest.mark.parametrize(
    "argv",
    [
        ["train", "--method", "pca-svm", "--data", "x.jsonl", "--fraction", "1.5", "--seed", "1"],
        ["train", "--method", "knn", "--data", "x.jsonl", "--seed", "1"],
        ["gen", "--sps", "90", "--seed", "1"],
        ["sweep", "--seeds", "5..1"],
        ["frobnicate"],
    ],
)
def test_usage_errors_exit_with_one(argv):
    with pytest.raises(SystemExit) as excinfo:
        main(argv)
    assert excinfo.value.code == EXIT_USAGE


def test_methods_argument_accepts_both():
    args = build_parser().parse_args(["sweep", "--methods", "both"])
    assert args.methods == ["pca-svm", "ae-softmax"]


def test_missing_data_file_exits_with_two(tmp_path):
    argv = ["train", "--method", "pca-svm", "--data", str(tmp_path / "missing.jsonl"), "--seed", "1"]
    assert main(argv) == EXIT_DATA


def test_train_then_eval(data_file, tmp_path, capsys):
    model = tmp_path / "model.json"
    argv = ["train", "--method", "ae-softmax", "--data", str(data_file), "--seed", "2", "--model-out", str(model)]
    assert main(argv + FAST_AE) == EXIT_OK
    confusion = json.loads(model.with_suffix(".confusion.json").read_text(encoding="utf-8"))
    assert confusion["total"] == 15
    assert confusion["columns"][-1] == "non-classified"
    assert "accuracy:" in capsys.readouterr().out

    out = tmp_path / "eval.json"
    argv = ["eval", "--model", str(model), "--data", str(data_file), "--confusion-out", str(out)]
    assert main(argv) == EXIT_OK
    assert json.loads(out.read_text(encoding="utf-8"))["total"] == 30


def test_eval_fraction_requires_seed(data_file, tmp_path):
    model = tmp_path / "model.json"
    main(["train", "--method", "ae-softmax", "--data", str(data_file), "--seed", "2", "--model-out", str(model)]
         + FAST_AE)
    argv = ["eval", "--model", str(model), "--data", str(data_file), "--fraction", "0.5"]
    assert main(argv) == EXIT_USAGE


def test_unconverged_training_exits_with_three_after_writing(data_file, tmp_path, monkeypatch):
    monkeypatch.setattr(AeSoftmaxPipeline, "converged", property(lambda self: False))
    model = tmp_path / "model.json"
    argv = ["train", "--method", "ae-softmax", "--data", str(data_file), "--seed", "2", "--model-out", str(model)]
    assert main(argv + FAST_AE) == EXIT_CONVERGENCE
    assert model.exists()
    assert model.with_suffix(".confusion.json").exists()


def test_loo_on_subsample(data_file, tmp_path, capsys):
    out = tmp_path / "loo.csv"
    argv = ["loo", "--method", "ae-softmax", "--data", str(data_file), "--subsample-per-class", "2", "--out", str(out)]
    assert main(argv + FAST_AE) == EXIT_OK
    assert "folds=6" in capsys.readouterr().out
    assert out.read_text(encoding="utf-8").startswith("method,sps,fraction,seed,accuracy\n")


def test_sweep_writes_csv_to_stdout(capsys):
    argv = ["sweep", "--methods", "ae-softmax", "--sps", "60", "--seeds", "1", "--fractions", "0.5"]
    assert main(argv + ["--epochs-ae", "1", "--epochs-softmax", "1", "--epochs-fine-tune", "1", "--hidden", "4"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "method,sps,fraction,seed,accuracy"
    assert lines[1].startswith("ae-softmax,60,0.5,1,")


def test_unconverged_loo_exits_with_three_after_writing(data_file, tmp_path, monkeypatch):
    monkeypatch.setattr(AeSoftmaxPipeline, "converged", property(lambda self: False))
    out = tmp_path / "loo.csv"
    argv = ["loo", "--method", "ae-softmax", "--data", str(data_file), "--subsample-per-class", "1", "--out", str(out)]
    assert main(argv + FAST_AE) == EXIT_CONVERGENCE
    assert len(out.read_text(encoding="utf-8").splitlines()) == 2


def test_unconverged_sweep_exits_with_three(monkeypatch, capsys):
    monkeypatch.setattr(AeSoftmaxPipeline, "converged", property(lambda self: False))
    argv = ["sweep", "--methods", "ae-softmax", "--sps", "60", "--seeds", "1", "--fractions", "0.5"]
    assert main(argv + ["--epochs-ae", "1", "--epochs-softmax", "1", "--epochs-fine-tune", "1", "--hidden", "4"]) \
        == EXIT_CONVERGENCE
    assert capsys.readouterr().out.startswith("method,sps,fraction,seed,accuracy\n")


def test_fine_tune_is_on_unless_disabled():
    argv = ["train", "--method", "ae-softmax", "--data", "x", "--seed", "1"]
    assert build_parser().parse_args(argv).fine_tune
    args = build_parser().parse_args(argv + ["--no-fine-tune"])
    assert not args.fine_tune

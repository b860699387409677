"""
Command-line interface for the PMU event classification system.

Usage:
    python -m src.ui.cli gen --sps 60 --seed 7 --out data/pmu60.jsonl
    python -m src.ui.cli train --method pca-svm --data data/pmu60.jsonl --fraction 0.5 --seed 1
    python -m src.ui.cli eval --model outputs/model.json --data data/pmu60.jsonl --fraction 0.5 --seed 1
    python -m src.ui.cli loo --method ae-softmax --subsample-per-class 30
    python -m src.ui.cli sweep --methods both --sps 60,120 --seeds 1..5 --out sweep.csv

Primary results go to stdout, logs to stderr. Exit codes: 0 success,
1 usage error, 2 data/model file error, 3 training did not converge.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .. import config
from ..data.event_synth import GeneratorConfig, build_dataset, generator_config_from_file
from ..data.phasor_model import Dataset, class_counts, load_dataset, save_dataset, subsample_per_class
from ..errors import ConvergenceError, DataFileError, InvalidInputError
from ..evaluation import (
    SweepResult,
    SweepRow,
    accuracy,
    evaluate,
    loo_report,
    run_sweep,
    stratified_split,
    summarize_sweep,
    train_and_evaluate,
)
from ..pipelines import METHODS, PipelineSettings, SvmHyperParams, TrainConfig, check_method, load_pipeline
from ..utils import atomic_write_text, format_percentage, parse_float_list, parse_int_list

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_CONVERGENCE = 3


class CliArgumentParser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with EXIT_USAGE."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fraction(value: str) -> float:
    try:
        fraction = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid fraction: '{value}'")
    if not 0.0 < fraction < 1.0:
        raise argparse.ArgumentTypeError(f"fraction must be in (0, 1), got {value}")
    return fraction


def _method(value: str) -> str:
    try:
        return check_method(value)
    except InvalidInputError as e:
        raise argparse.ArgumentTypeError(str(e))


def _methods(value: str) -> List[str]:
    if value == "both":
        return list(METHODS)
    return [_method(item.strip()) for item in value.split(",") if item.strip()]


def _sps_list(value: str) -> List[int]:
    try:
        rates = parse_int_list(value)
    except InvalidInputError as e:
        raise argparse.ArgumentTypeError(str(e))
    for sps in rates:
        if sps not in config.SUPPORTED_SPS:
            raise argparse.ArgumentTypeError(f"sps must be one of {config.SUPPORTED_SPS}, got {sps}")
    return rates


def _int_list(value: str) -> List[int]:
    try:
        return parse_int_list(value)
    except InvalidInputError as e:
        raise argparse.ArgumentTypeError(str(e))


def _fraction_list(value: str) -> List[float]:
    try:
        return [_fraction(str(f)) for f in parse_float_list(value)]
    except InvalidInputError as e:
        raise argparse.ArgumentTypeError(str(e))


def _add_generator_args(parser: argparse.ArgumentParser):
    parser.add_argument("--config", type=Path, help="Generator KEY=VALUE config file")
    parser.add_argument("--noise", type=float, dest="noise_std_fraction", help="Noise std as a fraction of the value")
    parser.add_argument("--cap-step", type=float, dest="cap_step_v", help="Capacitor voltage step (pu)")
    parser.add_argument("--tap-step", type=float, dest="tap_step_v", help="Tap voltage step (pu)")


def _add_pipeline_args(parser: argparse.ArgumentParser):
    svm = parser.add_argument_group("pca-svm")
    svm.add_argument("--c", type=float, default=config.SVM_C, help="SVM box constraint")
    svm.add_argument("--sigma", type=float, default=config.SVM_SIGMA, help="Gaussian kernel width")
    svm.add_argument("--k", type=int, default=config.PCA_COMPONENTS, help="Eigenvalues fed to the SVM")
    svm.add_argument("--grid-search", action="store_true", help="Pick c and sigma by 3-fold grid search")
    ae = parser.add_argument_group("ae-softmax")
    ae.add_argument("--hidden", type=int, default=config.AE_HIDDEN_SIZE, help="Autoencoder hidden size")
    ae.add_argument("--learning-rate", type=float, default=config.LEARNING_RATE)
    ae.add_argument("--epochs-ae", type=int, default=config.EPOCHS_AE)
    ae.add_argument("--epochs-softmax", type=int, default=config.EPOCHS_SOFTMAX)
    ae.add_argument("--epochs-fine-tune", type=int, default=config.EPOCHS_FINE_TUNE)
    ae.add_argument("--batch-size", type=int, default=config.BATCH_SIZE)
    ae.add_argument("--l2", type=float, default=config.L2_PENALTY)
    ae.add_argument(
        "--fine-tune",
        action=argparse.BooleanOptionalAction,
        default=config.AE_FINE_TUNE,
        help="Jointly refine encoder and softmax after pretraining",
    )


def build_parser() -> argparse.ArgumentParser:
    """Build the argument parser with one subcommand per operation."""
    parser = CliArgumentParser(prog="pmu-events", description="PMU disruptive event classification")
    parser.add_argument("--log-level", default=config.LOG_LEVEL, help="Logging level (default from env)")
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("gen", help="Generate the synthetic dataset")
    gen.add_argument("--sps", type=int, choices=config.SUPPORTED_SPS, default=config.DEFAULT_SPS)
    gen.add_argument("--seed", type=int, required=True, help="Master seed")
    gen.add_argument("--out", type=Path, help="Dataset file (default under the output directory)")
    _add_generator_args(gen)

    train = commands.add_parser("train", help="Train on a stratified split and evaluate the rest")
    train.add_argument("--method", type=_method, required=True, help=f"One of {', '.join(METHODS)}")
    train.add_argument("--data", type=Path, required=True)
    train.add_argument("--fraction", type=_fraction, default=config.SPLIT_FRACTION)
    train.add_argument("--seed", type=int, required=True)
    train.add_argument("--model-out", type=Path)
    train.add_argument("--confusion-out", type=Path)
    _add_pipeline_args(train)

    ev = commands.add_parser("eval", help="Evaluate a stored model")
    ev.add_argument("--model", type=Path, required=True)
    ev.add_argument("--data", type=Path, required=True)
    ev.add_argument("--fraction", type=_fraction, help="Evaluate only the test side of this split")
    ev.add_argument("--seed", type=int, help="Split seed (with --fraction)")
    ev.add_argument("--confusion-out", type=Path)

    loo = commands.add_parser("loo", help="Leave-one-out accuracy")
    loo.add_argument("--method", type=_method, required=True, help=f"One of {', '.join(METHODS)}")
    loo.add_argument("--data", type=Path, help="Dataset file (generated when absent)")
    loo.add_argument("--sps", type=int, choices=config.SUPPORTED_SPS, default=config.DEFAULT_SPS)
    loo.add_argument("--seed", type=int, default=config.MASTER_SEED, help="Master/subsample seed")
    loo.add_argument("--subsample-per-class", type=int, help="Records per class for reduced-scale runs")
    loo.add_argument("--jobs", type=int, default=config.DEFAULT_JOBS)
    loo.add_argument("--out", type=Path, help="Results CSV")
    _add_generator_args(loo)
    _add_pipeline_args(loo)

    sweep = commands.add_parser("sweep", help="Training-fraction x sampling-rate sweep")
    sweep.add_argument("--methods", type=_methods, default=list(METHODS), help="'both' or a comma list")
    sweep.add_argument("--sps", type=_sps_list, default=list(config.SUPPORTED_SPS), help="e.g. 60,120")
    sweep.add_argument("--seeds", type=_int_list, default=[1, 2, 3, 4, 5], help="e.g. 1..5")
    sweep.add_argument("--fractions", type=_fraction_list, default=list(config.SWEEP_FRACTIONS))
    sweep.add_argument("--data-seed", type=int, default=config.MASTER_SEED, help="Master seed of the datasets")
    sweep.add_argument("--jobs", type=int, default=config.DEFAULT_JOBS)
    sweep.add_argument("--out", type=Path, help="Results CSV (stdout when absent)")
    sweep.add_argument("--summary-out", type=Path, help="Mean/std per cell CSV")
    _add_generator_args(sweep)
    _add_pipeline_args(sweep)
    return parser


def _generator_config(args, sps: int, seed: int) -> GeneratorConfig:
    overrides = {
        "sps": sps,
        "master_seed": seed,
        "noise_std_fraction": args.noise_std_fraction,
        "cap_step_v": args.cap_step_v,
        "tap_step_v": args.tap_step_v,
    }
    if args.config is not None:
        return generator_config_from_file(args.config, **overrides)
    return GeneratorConfig(**{k: v for k, v in overrides.items() if v is not None})


def _pipeline_settings(args) -> PipelineSettings:
    return PipelineSettings(
        svm=SvmHyperParams(c=args.c, sigma=args.sigma),
        k=args.k,
        grid_search=args.grid_search,
        train=TrainConfig(
            learning_rate=args.learning_rate,
            epochs_ae=args.epochs_ae,
            epochs_softmax=args.epochs_softmax,
            epochs_fine_tune=args.epochs_fine_tune,
            batch_size=args.batch_size,
            l2=args.l2,
        ),
        hidden_size=args.hidden,
        fine_tune=args.fine_tune,
    )


def _write_json(path: Path, data: dict):
    atomic_write_text(path, json.dumps(data, indent=2, sort_keys=True) + "\n")


def _print_confusion(cm):
    print(cm.to_frame(rendered=True).to_string())
    print(f"accuracy: {accuracy(cm):.4f} ({format_percentage(accuracy(cm))})")


def cmd_gen(args) -> int:
    cfg = _generator_config(args, args.sps, args.seed)
    ds = build_dataset(cfg)
    out = args.out or config.OUTPUT_DIR / f"dataset_{args.sps}sps_seed{args.seed}.jsonl"
    save_dataset(ds, out)
    for label, count in class_counts(ds).items():
        print(f"class {int(label)} ({label.name.lower()}): {count}")
    print(f"total: {len(ds)} records, {ds.sps} samples each -> {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    ds = load_dataset(args.data)
    pipeline, cm = train_and_evaluate(ds, args.method, args.fraction, args.seed, _pipeline_settings(args))
    model_out = args.model_out or config.OUTPUT_DIR / f"model_{args.method}_{ds.sps}sps_seed{args.seed}.json"
    confusion_out = args.confusion_out or model_out.with_suffix(".confusion.json")
    pipeline.save(model_out)
    _write_json(
        confusion_out,
        {"method": args.method, "sps": ds.sps, "fraction": args.fraction, "seed": args.seed, **cm.to_dict()},
    )
    _print_confusion(cm)
    if not pipeline.converged:
        raise ConvergenceError(f"{args.method} training hit its iteration limit; outputs were still written")
    return EXIT_OK


def cmd_eval(args) -> int:
    pipeline = load_pipeline(args.model)
    ds = load_dataset(args.data)
    records = ds.records
    if args.fraction is not None:
        if args.seed is None:
            raise InvalidInputError("--fraction needs --seed")
        records = stratified_split(ds, args.fraction, args.seed)[1].records
    cm = evaluate(pipeline, records)
    if args.confusion_out is not None:
        _write_json(args.confusion_out, {"method": pipeline.method, "sps": ds.sps, **cm.to_dict()})
    _print_confusion(cm)
    return EXIT_OK


def _loo_dataset(args) -> Dataset:
    if args.data is not None:
        ds = load_dataset(args.data)
    else:
        ds = build_dataset(_generator_config(args, args.sps, args.seed))
    if args.subsample_per_class is not None:
        ds = subsample_per_class(ds, args.subsample_per_class, args.seed)
    return ds


def cmd_loo(args) -> int:
    ds = _loo_dataset(args)
    report = loo_report(ds, args.method, _pipeline_settings(args), jobs=args.jobs)
    if args.out is not None:
        row = SweepRow(args.method, ds.sps, (len(ds) - 1) / len(ds), args.seed, report.accuracy)
        SweepResult(rows=(row,)).to_csv(args.out)
    print(f"loo method={args.method} sps={ds.sps} folds={report.folds} accuracy={report.accuracy:.4f}")
    if report.unconverged:
        raise ConvergenceError(f"{report.unconverged} of {report.folds} folds hit their iteration limit")
    return EXIT_OK


def cmd_sweep(args) -> int:
    datasets = {sps: build_dataset(_generator_config(args, sps, args.data_seed)) for sps in args.sps}
    result = run_sweep(
        args.fractions,
        args.sps,
        args.methods,
        args.seeds,
        settings=_pipeline_settings(args),
        datasets=datasets,
        jobs=args.jobs,
    )
    text = result.to_csv(args.out)
    if args.summary_out is not None:
        atomic_write_text(args.summary_out, summarize_sweep(result).to_csv(index=False, lineterminator="\n"))
    if args.out is None:
        sys.stdout.write(text)
    else:
        print(f"wrote {len(result)} rows to {args.out}")
    if result.unconverged:
        raise ConvergenceError(f"{result.unconverged} of {len(result)} sweep cells hit their iteration limit")
    return EXIT_OK


COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "eval": cmd_eval,
    "loo": cmd_loo,
    "sweep": cmd_sweep,
}


def main(argv: Optional[List[str]] = None) -> int:
    """
    Run one CLI command.

    Args:
        argv: Arguments without the program name (defaults to sys.argv[1:])

    Returns:
        Process exit code
    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=str(args.log_level).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return COMMANDS[args.command](args)
    except InvalidInputError as e:
        logger.error("Invalid input: %s", e)
        return EXIT_USAGE
    except (DataFileError, OSError) as e:
        logger.error("Data error: %s", e)
        return EXIT_DATA
    except ConvergenceError as e:
        logger.error("%s", e)
        return EXIT_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())

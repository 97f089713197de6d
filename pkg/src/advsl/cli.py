"""Command-line interface.

Every command loads an :class:`~advsl.config.ExperimentConfig` (from ``--config``
or the defaults), applies the command-line overrides, writes the resolved
configuration to ``<output_dir>/config.resolved.json`` and runs. Re-running a
command with ``--config <that snapshot>`` reproduces its outputs.

Exit codes: 0 on success, 1 for contract violations, 2 for unreadable or invalid
input files and configurations.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import Any

import pydantic

from advsl import convert
from advsl._utils import config_hash, derive_seed
from advsl.codeswitch import code_switch, load_dictionary
from advsl.config import ExperimentConfig, synthetic_config
from advsl.errors import AdvslError, ConfigError
from advsl.evalreport import EvalResult, compare_report, evaluate, write_predictions
from advsl.model import ModelParams, init_params, load_checkpoint, save_checkpoint
from advsl.selflearn import self_learn, write_history
from advsl.sweep import model_replace
from advsl.synthetic import run_benchmark
from advsl.textdata import (
    Document,
    build_vocab,
    encode_corpus,
    label_names,
    load_vectors,
    random_table,
    read_corpus,
    write_corpus,
)
from advsl.train import TrainReport, train

__all__ = [
    "OVERRIDES",
    "build_parser",
    "cmd_codeswitch",
    "cmd_eval",
    "cmd_selflearn",
    "cmd_synthetic",
    "cmd_train",
    "load_config",
    "main",
    "setup_logging",
]

logger = logging.getLogger(__name__)

LOG_ENV = "ADVSL_LOG"
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
SNAPSHOT = "config.resolved.json"
CHECKPOINT = "checkpoint.json"

OVERRIDES = {
    "epsilon": "train.perturb.epsilon",
    "kt": "selflearn.k_t",
    "epochs": "train.epochs",
    "mode": "train.perturb.mode",
    "seed": "seed",
    "threads": "threads",
    "arch": "model.arch",
    "train": "paths.train",
    "unlabeled": "paths.unlabeled",
    "validation": "paths.validation",
    "test": "paths.test",
    "vectors": "paths.vectors",
    "dictionary": "paths.dictionary",
    "checkpoint": "paths.checkpoint",
    "output_dir": "paths.output_dir",
}
"""Command-line flag (as argparse destination) to configuration field."""


def setup_logging(level: str | None = None) -> None:
    """Configure the ``advsl`` logger from ``level`` or the ``ADVSL_LOG`` variable.

    Levels are names (``"INFO"``) or numbers; the default is ``WARNING``.
    """
    value = level if level is not None else os.environ.get(LOG_ENV, "WARNING")
    parsed: int | str = int(value) if value.strip().isdigit() else value.upper()
    root = logging.getLogger("advsl")
    try:
        root.setLevel(parsed)
    except ValueError as e:
        raise ConfigError(f"unknown log level '{value}'", field=LOG_ENV) from e
    if not any(getattr(h, "_advsl", False) for h in root.handlers):
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        handler._advsl = True  # type: ignore[attr-defined]
        root.addHandler(handler)


def load_config(
    path: os.PathLike | str | None,
    overrides: dict[str, Any] | None = None,
    *,
    default: Callable[[], ExperimentConfig] = ExperimentConfig,
) -> ExperimentConfig:
    """Load a configuration, apply dotted-path overrides and resolve seeds.

    Overriding ``seed`` derives the shuffle and perturbation seeds again, also
    when ``path`` is a resolved snapshot that already fixes them. Explicit
    overrides of those seeds still win.
    """
    config = default() if path is None else convert.load(path, model=ExperimentConfig)
    if overrides:
        if "seed" in overrides:
            seed = int(overrides["seed"])
            derived = {
                "train.shuffle_seed": derive_seed(seed, "shuffle"),
                "train.perturb.seed": derive_seed(seed, "perturb"),
            }
            overrides = derived | overrides
        config = model_replace(config, values=overrides)
    return config.resolved()


def _snapshot(config: ExperimentConfig) -> Path:
    output_dir = config.paths.output_dir
    output_dir.mkdir(parents=True, exist_ok=True)
    convert.write(output_dir / SNAPSHOT, model=config, overwrite=True)
    return output_dir


def _require_vectors(config: ExperimentConfig) -> None:
    if config.model.embeddings == "pretrained":
        config.paths.require("vectors")


def _build_model(
    config: ExperimentConfig,
    corpora: Sequence[Sequence[Document]],
    labels: Sequence[str],
) -> ModelParams:
    """Initial parameters; the vocabulary comes from the vectors or the corpora."""
    settings = config.model
    if settings.embeddings == "pretrained":
        assert config.paths.vectors is not None
        frozen = True if settings.freeze is None else settings.freeze
        table = load_vectors(config.paths.vectors, "induce", frozen=frozen)
    else:
        vocab = build_vocab(
            (doc.tokens for docs in corpora for doc in docs),
            min_count=settings.min_count,
        )
        table = random_table(vocab, settings.dim, frozen=bool(settings.freeze))
    return init_params(
        table,
        len(labels),
        arch=settings.arch,
        hidden=settings.hidden,
        seed=derive_seed(config.seed, "init"),
        label_names=labels,
        lowercase=settings.lowercase,
    )


def _write_eval(
    result: EvalResult, output_dir: Path, name: str, config: ExperimentConfig
) -> None:
    metadata = {"config_hash": config_hash(config), "seeds": [config.seed]}
    report_path = output_dir / f"{name}.report.json"
    compare_report([(name, result)], report_path, metadata=metadata)
    write_predictions(result, output_dir / f"{name}.predictions.jsonl")


def _write_train_report(report: TrainReport, output_dir: Path) -> None:
    path = output_dir / "train_report.json"
    path.write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")


def _evaluate_file(
    config: ExperimentConfig, params: ModelParams, path: Path, output_dir: Path
) -> EvalResult:
    documents = read_corpus(path, lowercase=params.lowercase)
    test = encode_corpus(documents, params.vocab, params.label_names, name="test")
    result = evaluate(
        params, test, max_len=config.train.max_len, threads=config.threads
    )
    _write_eval(result, output_dir, "test", config)
    return result


def cmd_train(config: ExperimentConfig) -> TrainReport:
    """Train on the labeled corpus; writes checkpoint, report and snapshot."""
    train_path, val_path = config.paths.require("train", "validation")
    _require_vectors(config)
    output_dir = _snapshot(config)

    lowercase = config.model.lowercase
    train_docs = read_corpus(train_path, lowercase=lowercase)
    val_docs = read_corpus(val_path, lowercase=lowercase)
    labels = label_names(train_docs)
    params = _build_model(config, [train_docs], labels)
    vocab = params.vocab

    params, report = train(
        params,
        encode_corpus(train_docs, vocab, labels, name="train"),
        encode_corpus(val_docs, vocab, labels, name="validation"),
        config.train,
        threads=config.threads,
    )
    save_checkpoint(params, output_dir / CHECKPOINT)
    _write_train_report(report, output_dir)
    if config.paths.test is not None:
        (test_path,) = config.paths.require("test")
        _evaluate_file(config, params, test_path, output_dir)
    return report


def cmd_selflearn(config: ExperimentConfig) -> ModelParams:
    """Train, then self-learn on the unlabeled corpus; keeps the best round."""
    paths = config.paths.require("train", "unlabeled", "validation")
    _require_vectors(config)
    output_dir = _snapshot(config)

    lowercase = config.model.lowercase
    train_docs, pool_docs, val_docs = (
        read_corpus(path, lowercase=lowercase) for path in paths
    )
    labels = label_names(train_docs)
    params = _build_model(config, [train_docs, pool_docs], labels)
    vocab = params.vocab

    test = None
    if config.paths.test is not None:
        (test_path,) = config.paths.require("test")
        test_docs = read_corpus(test_path, lowercase=lowercase)
        test = encode_corpus(test_docs, vocab, labels, name="test")

    params, history = self_learn(
        params,
        encode_corpus(train_docs, vocab, labels, name="train"),
        encode_corpus(pool_docs, vocab, labels, name="unlabeled", keep_labels=False),
        encode_corpus(val_docs, vocab, labels, name="validation"),
        config.selflearn,
        config.train,
        test=test,
        threads=config.threads,
    )
    save_checkpoint(params, output_dir / CHECKPOINT)
    write_history(history, output_dir / "history.jsonl")
    if config.paths.test is not None:
        _evaluate_file(config, params, test_path, output_dir)
    return params


def cmd_codeswitch(config: ExperimentConfig) -> Path:
    """Replace dictionary words in the test corpus; writes corpus and statistics."""
    test_path, dictionary_path = config.paths.require("test", "dictionary")
    output_dir = _snapshot(config)

    lowercase = config.model.lowercase
    dictionary = load_dictionary(
        dictionary_path,
        seed=derive_seed(config.seed, "dictionary"),
        lowercase=lowercase,
    )
    documents = read_corpus(test_path, lowercase=lowercase)
    switched, stats = code_switch(documents, dictionary)

    target = output_dir / "codeswitched.jsonl"
    write_corpus(switched, target)
    stats_path = output_dir / "switch_stats.json"
    stats_path.write_text(stats.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.info("Wrote code-switched corpus to %s", target)
    return target


def cmd_eval(config: ExperimentConfig) -> EvalResult:
    """Evaluate a checkpoint on the test corpus."""
    checkpoint, test_path = config.paths.require("checkpoint", "test")
    output_dir = _snapshot(config)

    params = load_checkpoint(checkpoint)
    if not params.label_names:
        raise ConfigError(
            "checkpoint has no label names, cannot map corpus labels",
            field="paths.checkpoint",
            path=checkpoint,
        )
    return _evaluate_file(config, params, test_path, output_dir)


def cmd_synthetic(config: ExperimentConfig) -> dict[str, Any]:
    """Run the synthetic cross-lingual benchmark."""
    output_dir = _snapshot(config)
    return run_benchmark(config, output_dir)


COMMANDS: dict[str, Callable[[ExperimentConfig], Any]] = {
    "train": cmd_train,
    "selflearn": cmd_selflearn,
    "codeswitch": cmd_codeswitch,
    "eval": cmd_eval,
    "synthetic": cmd_synthetic,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config", type=Path, help="Configuration file (.json, .yaml or .toml)."
    )
    group = common.add_argument_group("overrides")
    group.add_argument("--epsilon", type=float, help="Perturbation budget.")
    group.add_argument("--kt", type=int, help="Pseudo-labels per class and round.")
    group.add_argument("--epochs", type=int)
    group.add_argument("--mode", choices=["none", "random", "adversarial"])
    group.add_argument(
        "--seed",
        type=int,
        help="Global seed; the shuffle and perturbation seeds are derived from it.",
    )
    group.add_argument("--threads", type=int, help="Prediction threads.")
    group.add_argument("--arch", choices=["linear", "mlp1"])
    for name in ("train", "unlabeled", "validation", "test"):
        group.add_argument(f"--{name}", type=Path, help=f"The {name} corpus.")
    group.add_argument("--vectors", type=Path, help="Word-vector file.")
    group.add_argument("--dictionary", type=Path, help="Bilingual dictionary.")
    group.add_argument("--checkpoint", type=Path, help="Checkpoint to evaluate.")
    group.add_argument("--output-dir", type=Path, dest="output_dir")

    parser = argparse.ArgumentParser(
        prog="advsl",
        description="Adversarial self-learning for cross-lingual classification.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, command in COMMANDS.items():
        subparsers.add_parser(name, parents=[common], help=command.__doc__)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    """Entry point of the ``advsl`` command; returns the exit code."""
    args = build_parser().parse_args(argv)
    try:
        setup_logging()
        overrides = {
            field: getattr(args, dest)
            for dest, field in OVERRIDES.items()
            if getattr(args, dest) is not None
        }
        default = synthetic_config if args.command == "synthetic" else ExperimentConfig
        config = load_config(args.config, overrides, default=default)
        COMMANDS[args.command](config)
    except AdvslError as e:
        sys.stderr.write(f"advsl: error: {e}\n")
        return e.exit_code
    except pydantic.ValidationError as e:
        sys.stderr.write(f"advsl: invalid configuration: {e}\n")
        return 2
    except OSError as e:
        sys.stderr.write(f"advsl: error: {e}\n")
        return 2
    return 0

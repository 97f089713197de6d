"""Synthetic cross-lingual benchmark.

A source vocabulary A and a disjoint target vocabulary B share one embedding
space: every B word sits next to its A counterpart, displaced by isotropic
Gaussian noise. Topic documents are drawn per class from class-specific and
background words. Part of the class signal sits in low-variance coordinates,
where it separates A documents but stays small against the perturbation
budget and drowns in the B noise; a model leaning on it transfers badly.
Models are trained on labeled A documents and tested on B documents,
optionally using unlabeled B documents for self-learning.
"""

from __future__ import annotations

import logging
import os
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Literal

import numpy as np

from advsl._model_diff import model_diff
from advsl._utils import config_hash, derive_seed
from advsl.codeswitch import BilingualDictionary, SwitchStats, code_switch
from advsl.config import CONDITIONS, BaseModel, ExperimentConfig, SyntheticConfig
from advsl.evalreport import EvalResult, compare_report, evaluate, merge_results
from advsl.model import init_params
from advsl.selflearn import self_learn, write_history
from advsl.sweep import (
    check_unique,
    config_product,
    config_zip,
    field,
    initialize,
    model_replace,
)
from advsl.textdata import (
    Dataset,
    Document,
    EmbeddingTable,
    Vocabulary,
    encode_corpus,
    save_vectors,
    write_corpus,
)
from advsl.train import train
from advsl.types import FloatArray, PerturbMode, ValidationSplit

__all__ = [
    "SPLITS",
    "Benchmark",
    "Condition",
    "RunResult",
    "benchmark_checks",
    "conditions",
    "generate_benchmark",
    "run_benchmark",
    "run_condition",
    "write_benchmark",
]

logger = logging.getLogger(__name__)

SPLITS = ("a_train", "a_validation", "b_validation", "b_unlabeled", "b_test", "a_test")

_SETTINGS: dict[str, tuple[PerturbMode, bool]] = {
    "none": ("none", False),
    "random": ("random", False),
    "adversarial": ("adversarial", False),
    "adversarial_self_learning": ("adversarial", True),
    "self_learning": ("none", True),
    "random_self_learning": ("random", True),
}


@dataclass(frozen=True)
class Benchmark:
    table: EmbeddingTable
    """Frozen vectors of both vocabularies."""
    dictionary: BilingualDictionary
    """A to B translations of a random share of the A words."""
    splits: Mapping[str, list[Document]]
    label_names: tuple[str, ...]

    def dataset(self, split: str, *, keep_labels: bool = True) -> Dataset:
        return self.encode(self.splits[split], split, keep_labels=keep_labels)

    def encode(
        self, documents: Sequence[Document], name: str, *, keep_labels: bool = True
    ) -> Dataset:
        return encode_corpus(
            documents,
            self.table.vocab,
            self.label_names,
            name=name,
            keep_labels=keep_labels,
        )

    def switched(self, split: str) -> Dataset:
        """``split`` with every dictionary word replaced by its translation."""
        documents, _ = code_switch(
            self.splits[split], self.dictionary, on_no_coverage="ignore"
        )
        return self.encode(documents, f"{split}_switched")

    def validation(self, split: ValidationSplit) -> Dataset:
        """The labeled split that drives model selection."""
        if split == "switched":
            return self.switched("a_validation")
        return self.dataset("b_validation" if split == "target" else "a_validation")


def _split_sizes(config: SyntheticConfig) -> dict[str, int]:
    return {
        "a_train": config.n_train,
        "a_validation": config.n_validation,
        "b_validation": config.n_validation,
        "b_unlabeled": config.n_unlabeled,
        "b_test": config.n_test,
        "a_test": config.n_test,
    }


def _class_directions(
    rng: np.random.Generator, num_classes: int, dims: int, norm: float
) -> FloatArray:
    """One direction of length ``norm`` per class, orthogonal when ``dims`` allows."""
    if dims == 0:
        return np.zeros((num_classes, 0))
    directions = rng.standard_normal((num_classes, dims))
    if dims >= num_classes:
        directions = np.linalg.qr(directions.T)[0].T
    else:
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    return norm * directions


def generate_benchmark(config: SyntheticConfig, seed: int) -> Benchmark:
    """Draw vectors, dictionary and all splits from one seed."""
    rng = np.random.default_rng(seed)
    c, w, d = config.num_classes, config.words_per_class, config.dim
    n_words = c * w + config.background_words
    major = d - config.minor_dims

    a_words = [f"a_t{k}_{i}" for k in range(c) for i in range(w)]
    a_words += [f"a_bg{i}" for i in range(config.background_words)]
    b_words = ["b" + word[1:] for word in a_words]

    a_vectors = rng.standard_normal((n_words, d))
    a_vectors[:, major:] *= config.minor_scale
    centers = np.concatenate(
        [
            _class_directions(rng, c, major, config.center_norm),
            _class_directions(rng, c, config.minor_dims, config.minor_signal),
        ],
        axis=1,
    )
    a_vectors[: c * w] += np.repeat(centers, w, axis=0)
    average_norm = np.linalg.norm(a_vectors, axis=1).mean()
    sigma = config.noise * average_norm
    if config.noise_scale == "vector":
        sigma /= np.sqrt(d)
    b_vectors = a_vectors + sigma * rng.standard_normal((n_words, d))
    logger.debug("Target word noise: std %.4f per coordinate", sigma)

    vocab = Vocabulary.from_words([*a_words, *b_words])
    matrix = np.zeros((len(vocab), d))
    matrix[2:] = np.concatenate([a_vectors, b_vectors])
    table = EmbeddingTable(vocab, matrix, frozen=True)

    n_covered = round(config.switch_coverage * n_words)
    covered = rng.choice(n_words, size=n_covered, replace=False)
    dictionary = BilingualDictionary(
        {a_words[i]: (b_words[i],) for i in sorted(covered)}, seed=seed
    )

    label_names = tuple(f"topic{k}" for k in range(c))
    splits: dict[str, list[Document]] = {}
    for split, size in _split_sizes(config).items():
        words = b_words if split.startswith("b_") else a_words
        documents = []
        for uid in range(size):
            label = int(rng.integers(c))
            length = int(rng.integers(config.min_len, config.max_len + 1))
            topical = rng.random(length) < config.topic_prob
            ids = np.where(
                topical,
                label * w + rng.integers(w, size=length),
                c * w + rng.integers(config.background_words, size=length),
            )
            tokens = tuple(words[i] for i in ids)
            documents.append(Document(tokens, label_names[label], uid=uid))
        splits[split] = documents
    return Benchmark(table, dictionary, splits, label_names)


def write_benchmark(benchmark: Benchmark, directory: os.PathLike | str) -> None:
    """Write corpora, vectors and dictionary in the command-line input formats."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for split, documents in benchmark.splits.items():
        write_corpus(documents, directory / f"{split}.jsonl")
    save_vectors(benchmark.table, directory / "vectors.txt")
    with (directory / "dictionary.txt").open("w", encoding="utf-8") as f:
        for source, (target,) in benchmark.dictionary.entries.items():
            f.write(f"{source} {target}\n")
    logger.info("Wrote synthetic benchmark to %s", directory)


class Condition(BaseModel, frozen=True):
    """One row of the benchmark table."""

    name: Literal[CONDITIONS]  # type: ignore[valid-type]
    mode: PerturbMode
    self_learning: bool


def conditions(names: Sequence[str]) -> list[Condition]:
    """Conditions in the given order.

    >>> [(c.mode, c.self_learning) for c in conditions(["none", "adversarial"])]
    [('none', False), ('adversarial', False)]
    """
    configs = config_zip(
        field("name", names),
        field("mode", [_SETTINGS[n][0] for n in names]),
        field("self_learning", [_SETTINGS[n][1] for n in names]),
    )
    return initialize(Condition, configs)


_RUN_FIELDS = {
    "seed",
    "data_seed",
    "init_seed",
    "shuffle_seed",
    "perturb_seed",
    "iterations",
}


class RunResult(BaseModel, frozen=True):
    condition: str
    seed: int
    data_seed: int
    init_seed: int
    shuffle_seed: int
    perturb_seed: int
    target_test: EvalResult
    source_test: EvalResult
    switched_test: EvalResult
    iterations: int = 0
    """Self-learning rounds after the initial training."""


def run_condition(
    benchmark: Benchmark,
    condition: Condition,
    config: ExperimentConfig,
    *,
    seed: int,
    history_path: os.PathLike | str | None = None,
) -> RunResult:
    """Train one condition on one seed and evaluate it on all test sets."""
    init_seed = derive_seed(seed, "init")
    run_config = model_replace(
        config,
        values={
            "seed": seed,
            "train.perturb.mode": condition.mode,
            "train.shuffle_seed": derive_seed(seed, "shuffle"),
            "train.perturb.seed": derive_seed(seed, "perturb"),
        },
    )
    train_config = run_config.train
    threads = run_config.threads
    max_len = train_config.max_len

    params = init_params(
        benchmark.table,
        len(benchmark.label_names),
        arch=run_config.model.arch,
        hidden=run_config.model.hidden,
        seed=init_seed,
        label_names=benchmark.label_names,
    )
    labeled = benchmark.dataset("a_train")
    validation = benchmark.validation(run_config.synthetic.validation)
    target_test = benchmark.dataset("b_test")

    iterations = 0
    if condition.self_learning:
        pool = benchmark.dataset("b_unlabeled", keep_labels=False)
        params, history = self_learn(
            params,
            labeled,
            pool,
            validation,
            run_config.selflearn,
            train_config,
            test=target_test,
            threads=threads,
        )
        iterations = len(history) - 1
        if history_path is not None:
            write_history(history, history_path)
    else:
        params, _ = train(params, labeled, validation, train_config, threads=threads)

    result = RunResult(
        condition=condition.name,
        seed=seed,
        data_seed=derive_seed(seed, "data"),
        init_seed=init_seed,
        shuffle_seed=train_config.shuffle_seed,
        perturb_seed=train_config.perturb.seed,
        target_test=evaluate(params, target_test, max_len=max_len, threads=threads),
        source_test=evaluate(
            params, benchmark.dataset("a_test"), max_len=max_len, threads=threads
        ),
        switched_test=evaluate(
            params, benchmark.switched("a_test"), max_len=max_len, threads=threads
        ),
        iterations=iterations,
    )
    logger.info(
        "%s, seed %d: target accuracy %.4f",
        condition.name,
        seed,
        result.target_test.accuracy,
    )
    return result


def benchmark_checks(
    target: Mapping[str, float], switched: Mapping[str, float]
) -> dict[str, bool]:
    """Which of the expected orderings between mean accuracies hold.

    >>> benchmark_checks({"none": 0.70, "adversarial": 0.75}, {})
    {'adversarial_beats_none_by_2_points': True}
    """
    checks = {}
    if {"none", "adversarial"} <= target.keys():
        checks["adversarial_beats_none_by_2_points"] = (
            target["adversarial"] >= target["none"] + 0.02
        )
    if {"adversarial", "adversarial_self_learning"} <= target.keys():
        checks["self_learning_beats_adversarial_by_3_points"] = (
            target["adversarial_self_learning"] >= target["adversarial"] + 0.03
        )
    if {"adversarial", "random"} <= target.keys():
        checks["adversarial_beats_random"] = target["adversarial"] >= target["random"]
    if {"none", "adversarial"} <= switched.keys():
        checks["code_switched_adversarial_beats_none_by_2_points"] = (
            switched["adversarial"] >= switched["none"] + 0.02
        )
    return checks


def run_benchmark(
    config: ExperimentConfig, output_dir: os.PathLike | str
) -> dict[str, Any]:
    """Run every condition on every seed and write the comparison report.

    Data and initial parameters depend on the seed only, so all conditions of a
    seed start from the same benchmark and the same model.

    Returns
    -------
    dict
        The JSON report; its rows are the pooled target-language test results
        in condition order.
    """
    settings = config.synthetic
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    seeds = settings.seeds or tuple(
        config.seed + i for i in range(settings.num_seeds)
    )
    selected = conditions(settings.conditions)
    by_name = {c.name: c for c in selected}

    runs = config_product(field("condition", settings.conditions), field("seed", seeds))
    check_unique(runs)

    benchmarks: dict[int, Benchmark] = {}
    results: dict[str, list[RunResult]] = {c.name: [] for c in selected}
    switch_stats: SwitchStats | None = None
    for run in runs:
        seed = run["seed"]
        if seed not in benchmarks:
            benchmarks[seed] = generate_benchmark(settings, derive_seed(seed, "data"))
        condition = by_name[run["condition"]]
        history_path = None
        if condition.self_learning:
            history_path = output_dir / f"history-{condition.name}-seed{seed}.jsonl"
        results[condition.name].append(
            run_condition(
                benchmarks[seed],
                condition,
                config,
                seed=seed,
                history_path=history_path,
            )
        )
    if seeds:
        first = benchmarks[seeds[0]]
        _, switch_stats = code_switch(
            first.splits["a_test"], first.dictionary, on_no_coverage="ignore"
        )

    def mean_accuracy(attribute: str) -> dict[str, float]:
        return {
            name: float(np.mean([getattr(r, attribute).accuracy for r in runs_]))
            for name, runs_ in results.items()
        }

    target = mean_accuracy("target_test")
    switched = mean_accuracy("switched_test")
    baseline = selected[0]
    base_config = model_replace(config, values={"train.perturb.mode": baseline.mode})
    metadata = {
        "config_hash": config_hash(config),
        "seeds": list(seeds),
        "validation": settings.validation,
        "random_perturbation": "isotropic Gaussian rescaled to norm epsilon",
        "runs": {
            name: [
                r.model_dump(include=_RUN_FIELDS)
                | {"target_accuracy": r.target_test.accuracy}
                for r in runs_
            ]
            for name, runs_ in results.items()
        },
        "source_test_accuracy": mean_accuracy("source_test"),
        "code_switched_test_accuracy": switched,
        "switch_stats": switch_stats.model_dump() if switch_stats else None,
        "condition_diff": {
            c.name: {
                "condition": model_diff(baseline, c),
                "config": model_diff(
                    base_config,
                    model_replace(config, values={"train.perturb.mode": c.mode}),
                ),
            }
            for c in selected
        },
        "checks": benchmark_checks(target, switched),
    }
    rows = [
        (name, merge_results(r.target_test for r in runs_))
        for name, runs_ in results.items()
    ]
    report = compare_report(rows, output_dir / "report.json", metadata=metadata)
    for name, passed in metadata["checks"].items():
        if not passed:
            logger.warning("Benchmark check failed: %s", name)
    return report

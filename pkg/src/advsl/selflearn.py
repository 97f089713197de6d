"""Self-learning: pseudo-label confident pool items, merge and retrain.

Every round predicts the unlabeled pool, keeps the ``k_t`` most confident
items of every predicted class, moves them to the labeled set and retrains.
Pseudo-labels are never revised once merged.
"""

from __future__ import annotations

import logging
import os
from collections.abc import Sequence
from pathlib import Path

import numpy as np
from pydantic import Field

from advsl._utils import derive_seed
from advsl.config import BaseModel, SelfLearnConfig, TrainConfig
from advsl.errors import ContractViolation
from advsl.evalreport import accuracy
from advsl.model import ModelParams, predict_dataset
from advsl.textdata import Dataset, Example
from advsl.train import train
from advsl.types import FloatArray, IntArray

__all__ = [
    "IterationRecord",
    "SelectionRecord",
    "apply_selection",
    "best_record",
    "rank_balanced",
    "select_balanced",
    "self_learn",
    "write_history",
]

logger = logging.getLogger(__name__)


class SelectionRecord(BaseModel, frozen=True):
    """Selected ``(pool index, confidence)`` pairs per class, best first."""

    iteration: int = 0
    per_class: list[list[tuple[int, float]]]

    @property
    def counts(self) -> list[int]:
        return [len(items) for items in self.per_class]

    @property
    def indices(self) -> list[int]:
        return [i for items in self.per_class for i, _ in items]


def rank_balanced(
    predicted: IntArray | Sequence[int],
    confidence: FloatArray | Sequence[float],
    num_classes: int,
    k_t: int,
) -> list[list[tuple[int, float]]]:
    """Top ``k_t`` items of every predicted class.

    Items are ranked by confidence, ties going to the lower index.

    >>> rank_balanced([0, 0, 0, 1], [0.9, 0.8, 0.7, 0.95], 2, 2)
    [[(0, 0.9), (1, 0.8)], [(3, 0.95)]]
    """
    if k_t < 1:
        raise ContractViolation(f"k_t must be at least 1, got {k_t}.")
    predicted = np.asarray(predicted, dtype=np.int64)
    confidence = np.asarray(confidence, dtype=np.float64)
    per_class = []
    for c in range(num_classes):
        members = np.flatnonzero(predicted == c)
        # lexsort sorts by the last key first
        order = members[np.lexsort((members, -confidence[members]))]
        per_class.append([(int(i), float(confidence[i])) for i in order[:k_t]])
    return per_class


def select_balanced(
    params: ModelParams,
    pool: Dataset,
    k_t: int,
    *,
    max_len: int,
    threads: int = 1,
    iteration: int = 0,
) -> SelectionRecord:
    """Pick the ``k_t`` most confident pool items of every predicted class.

    Every item belongs to its arg-max class only, so no item is selected twice.
    Classes without predictions get empty lists.
    """
    if len(pool) == 0:
        raise ContractViolation("Cannot select from an empty pool.")
    pool.require_unlabeled()
    predicted, confidence = predict_dataset(
        params, pool, max_len=max_len, threads=threads
    )
    per_class = rank_balanced(predicted, confidence, params.num_classes, k_t)
    return SelectionRecord(iteration=iteration, per_class=per_class)


def apply_selection(
    labeled: Dataset, pool: Dataset, selection: SelectionRecord
) -> tuple[Dataset, Dataset]:
    """Move the selected pool items, with their predicted labels, to ``labeled``."""
    chosen = selection.indices
    if len(set(chosen)) != len(chosen):
        raise ContractViolation("An item was selected for more than one class.")
    if chosen and not 0 <= min(chosen) <= max(chosen) < len(pool):
        raise ContractViolation("Selection refers to items outside of the pool.")

    pseudo = [
        Example(
            pool[i].token_ids, label=c, weight=1.0, origin="pseudo", uid=pool[i].uid
        )
        for c, items in enumerate(selection.per_class)
        for i, _ in items
    ]
    taken = set(chosen)
    remaining = [e for i, e in enumerate(pool) if i not in taken]
    return (
        labeled.replace([*labeled.examples, *pseudo]),
        pool.replace(remaining),
    )


class IterationRecord(BaseModel, frozen=True):
    """One line of the self-learning history; iteration 0 is the initial training."""

    iteration: int
    labeled_size: int
    pool_size: int
    selected_per_class: list[int] = Field(default_factory=list)
    validation_accuracy: float
    test_accuracy: float | None = None
    validation: str = ""
    improved: bool = False


def best_record(history: Sequence[IterationRecord]) -> IterationRecord:
    """The earliest iteration with the highest validation accuracy."""
    if not history:
        raise ContractViolation("Empty history.")
    return max(history, key=lambda r: (r.validation_accuracy, -r.iteration))


def self_learn(
    params: ModelParams,
    labeled: Dataset,
    pool: Dataset,
    validation: Dataset,
    config: SelfLearnConfig,
    train_config: TrainConfig,
    *,
    test: Dataset | None = None,
    threads: int = 1,
) -> tuple[ModelParams, list[IterationRecord]]:
    """Initial training followed by select / merge / retrain rounds.

    Stops once validation accuracy has not improved on the best so far for
    ``config.patience`` rounds in a row, when the pool is used up, or after
    ``config.max_iterations`` rounds.

    Parameters
    ----------
    params :
        Starting parameters. With ``retrain_mode="from_scratch"`` every round
        restarts from these.
    labeled, pool, validation :
        Gold-labeled training set, unlabeled pool, labeled validation set.
    config :
        Selection size and stopping rule.
    train_config :
        Training settings of every round, perturbation included.
    test :
        Optional labeled set whose accuracy is recorded in the history.

    Returns
    -------
    tuple
        Parameters of the best validated round and one record per round.
    """
    if len(pool):
        pool.require_unlabeled()
    else:
        logger.warning("The unlabeled pool is empty; only the initial training runs.")
    max_len = train_config.max_len

    def record(
        iteration: int, current: ModelParams, val_acc: float, **kwargs: object
    ) -> IterationRecord:
        test_acc = None
        if test is not None:
            test_acc = accuracy(current, test, max_len=max_len, threads=threads)
        item = IterationRecord(
            iteration=iteration,
            labeled_size=len(labeled),
            pool_size=len(pool),
            validation_accuracy=val_acc,
            test_accuracy=test_acc,
            validation=validation.name,
            **kwargs,
        )
        logger.info(
            "self-learning round %d: |L|=%d |U|=%d %s accuracy %.4f",
            iteration,
            item.labeled_size,
            item.pool_size,
            validation.name or "validation",
            val_acc,
        )
        return item

    start = params
    current, report = train(start, labeled, validation, train_config, threads=threads)
    best, best_accuracy = current, report.best_validation_accuracy
    history = [record(0, current, best_accuracy, improved=True)]

    stale = 0
    for iteration in range(1, config.max_iterations + 1):
        if len(pool) == 0:
            logger.info("Unlabeled pool exhausted after %d rounds.", iteration - 1)
            break
        selection = select_balanced(
            current,
            pool,
            config.k_t,
            max_len=max_len,
            threads=threads,
            iteration=iteration,
        )
        labeled, pool = apply_selection(labeled, pool, selection)

        round_config = train_config.model_copy(
            update={"shuffle_seed": derive_seed(train_config.shuffle_seed, iteration)}
        )
        origin = current if config.retrain_mode == "continue" else start
        current, report = train(
            origin, labeled, validation, round_config, threads=threads
        )

        improved = report.best_validation_accuracy > best_accuracy
        if improved:
            best, best_accuracy = current, report.best_validation_accuracy
            stale = 0
        else:
            stale += 1
        history.append(
            record(
                iteration,
                current,
                report.best_validation_accuracy,
                selected_per_class=selection.counts,
                improved=improved,
            )
        )
        if stale >= config.patience:
            logger.info("No improvement for %d rounds, stopping.", stale)
            break
    return best, history


def write_history(history: Sequence[IterationRecord], path: os.PathLike | str) -> None:
    """One JSON object per round."""
    with Path(path).open("w", encoding="utf-8") as f:
        for item in history:
            f.write(item.model_dump_json() + "\n")
    logger.info("Wrote self-learning history to %s", path)

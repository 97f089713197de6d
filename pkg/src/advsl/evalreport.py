"""Accuracy, per-class metrics and comparison reports."""

from __future__ import annotations

import json
import logging
import os
from collections.abc import Iterable, Mapping, Sequence
from pathlib import Path
from typing import Any

import numpy as np
import pydantic
from pydantic import Field, NonNegativeInt

from advsl.config import BaseModel
from advsl.errors import AdvslError, ContractViolation, FormatError, utf8_errors
from advsl.model import ModelParams, params_checksum, predict_dataset
from advsl.textdata import Dataset
from advsl.types import IntArray

__all__ = [
    "ClassMetrics",
    "EvalResult",
    "Prediction",
    "accuracy",
    "compare_report",
    "evaluate",
    "format_table",
    "merge_results",
    "read_predictions",
    "write_predictions",
]

logger = logging.getLogger(__name__)


class Prediction(BaseModel, frozen=True):
    id: int
    gold: NonNegativeInt
    pred: NonNegativeInt
    confidence: float = Field(ge=0.0, le=1.0)


class ClassMetrics(BaseModel, frozen=True):
    precision: float
    recall: float
    support: NonNegativeInt


class EvalResult(BaseModel, frozen=True):
    """Aggregate metrics of one evaluation; rows of ``confusion`` are gold classes."""

    accuracy: float = Field(ge=0.0, le=1.0)
    n: NonNegativeInt
    confusion: list[list[NonNegativeInt]]
    per_class: list[ClassMetrics]
    label_names: list[str] = Field(default_factory=list)
    predictions: list[Prediction] = Field(default_factory=list, exclude=True)
    """Per-example records; written separately by :func:`write_predictions`."""

    @pydantic.model_validator(mode="after")
    def _consistent(self) -> EvalResult:
        confusion = np.array(self.confusion, dtype=np.int64)
        if confusion.ndim != 2 or confusion.shape[0] != confusion.shape[1]:
            raise ValueError(f"Confusion matrix must be square, got {confusion.shape}.")
        if confusion.sum() != self.n:
            raise ValueError(
                f"Confusion counts sum to {confusion.sum()}, not {self.n}."
            )
        expected = np.trace(confusion) / self.n if self.n else 0.0
        if abs(expected - self.accuracy) > 1e-12:
            raise ValueError(
                f"Accuracy {self.accuracy} disagrees with the confusion matrix "
                f"({expected})."
            )
        return self

    @property
    def num_classes(self) -> int:
        return len(self.confusion)

    @classmethod
    def from_predictions(
        cls,
        gold: Sequence[int] | IntArray,
        pred: Sequence[int] | IntArray,
        confidence: Sequence[float] | None = None,
        *,
        num_classes: int,
        ids: Sequence[int] | None = None,
        label_names: Sequence[str] = (),
    ) -> EvalResult:
        """Build the metrics from gold and predicted class ids.

        >>> r = EvalResult.from_predictions([0, 0, 1, 1], [0, 1, 1, 1], num_classes=2)
        >>> r.accuracy, r.confusion
        (0.75, [[1, 1], [0, 2]])
        """
        gold = np.asarray(gold, dtype=np.int64)
        pred = np.asarray(pred, dtype=np.int64)
        if gold.shape != pred.shape:
            raise ContractViolation("Gold and predicted labels differ in length.")
        confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
        np.add.at(confusion, (gold, pred), 1)

        correct = np.diag(confusion)
        predicted = confusion.sum(axis=0)
        support = confusion.sum(axis=1)
        per_class = [
            ClassMetrics(
                precision=float(correct[c] / predicted[c]) if predicted[c] else 0.0,
                recall=float(correct[c] / support[c]) if support[c] else 0.0,
                support=int(support[c]),
            )
            for c in range(num_classes)
        ]

        n = len(gold)
        confidence = np.ones(n) if confidence is None else np.asarray(confidence)
        ids = range(n) if ids is None else ids
        predictions = [
            Prediction(id=int(i), gold=int(g), pred=int(p), confidence=float(c))
            for i, g, p, c in zip(ids, gold, pred, confidence, strict=True)
        ]
        return cls(
            accuracy=float(correct.sum() / n) if n else 0.0,
            n=n,
            confusion=confusion.tolist(),
            per_class=per_class,
            label_names=list(label_names),
            predictions=predictions,
        )


def accuracy(
    params: ModelParams, dataset: Dataset, *, max_len: int, threads: int = 1
) -> float:
    """Fraction of correctly classified examples of a labeled dataset."""
    gold = dataset.labels()
    if len(gold) == 0:
        raise ContractViolation(f"Cannot compute accuracy on empty '{dataset.name}'.")
    pred, _ = predict_dataset(params, dataset, max_len=max_len, threads=threads)
    return float(np.mean(pred == gold))


def evaluate(
    params: ModelParams, test: Dataset, *, max_len: int, threads: int = 1
) -> EvalResult:
    """Evaluate on a labeled, nonempty dataset.

    Raises
    ------
    ContractViolation
        If ``test`` is empty or has unlabeled examples.
    """
    gold = test.labels()
    if len(gold) == 0:
        raise ContractViolation(f"Cannot evaluate on empty dataset '{test.name}'.")
    if test.num_classes != params.num_classes:
        raise ContractViolation(
            f"Dataset '{test.name}' has {test.num_classes} classes, the model "
            f"{params.num_classes}."
        )

    before = params_checksum(params)
    pred, confidence = predict_dataset(params, test, max_len=max_len, threads=threads)
    if params_checksum(params) != before:
        raise AdvslError("Parameters changed during evaluation.")

    return EvalResult.from_predictions(
        gold,
        pred,
        confidence,
        num_classes=params.num_classes,
        ids=[e.uid for e in test],
        label_names=test.label_names or params.label_names,
    )


def merge_results(results: Iterable[EvalResult]) -> EvalResult:
    """Pool several evaluations, e.g. one per seed, into one result."""
    results = list(results)
    if not results:
        raise ContractViolation("Nothing to merge.")
    num_classes = {r.num_classes for r in results}
    if len(num_classes) != 1:
        raise ContractViolation(
            f"Cannot merge results over {sorted(num_classes)} classes."
        )

    confusion = sum(np.array(r.confusion, dtype=np.int64) for r in results)
    gold, pred = np.nonzero(confusion)
    counts = confusion[gold, pred]
    merged = EvalResult.from_predictions(
        np.repeat(gold, counts),
        np.repeat(pred, counts),
        num_classes=num_classes.pop(),
        label_names=results[0].label_names,
    )
    predictions = [p for r in results for p in r.predictions]
    return merged.model_copy(update={"predictions": predictions})


def write_predictions(result: EvalResult, path: os.PathLike | str) -> None:
    """Per-example records as JSON Lines: ``{id, gold, pred, confidence}``."""
    with Path(path).open("w", encoding="utf-8") as f:
        for p in result.predictions:
            f.write(json.dumps(p.model_dump()) + "\n")
    logger.info("Wrote %d predictions to %s", len(result.predictions), path)


def read_predictions(path: os.PathLike | str) -> list[Prediction]:
    path = Path(path)
    records = []
    with utf8_errors(path), path.open(encoding="utf-8") as f:
        for number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                records.append(Prediction.model_validate_json(line))
            except pydantic.ValidationError as e:
                raise FormatError(f"Invalid prediction: {e}", path=path, line=number)
    return records


def _delta(value: float, baseline: float) -> float:
    return round(100.0 * (value - baseline), 10)


def format_table(rows: Sequence[Mapping[str, Any]]) -> str:
    """Aligned plain-text table; the delta column is left out for a single row."""
    with_delta = len(rows) > 1
    header = ["name", "n", "accuracy"] + (["delta"] if with_delta else [])
    lines = [header]
    for i, row in enumerate(rows):
        cells = [row["name"], str(row["n"]), f"{100 * row['accuracy']:.2f}"]
        if with_delta:
            cells.append("" if i == 0 else f"{row['delta_points']:+.1f}")
        lines.append(cells)

    widths = [max(len(line[col]) for line in lines) for col in range(len(header))]
    out = []
    for line in lines:
        first = line[0].ljust(widths[0])
        rest = [cell.rjust(width) for cell, width in zip(line[1:], widths[1:])]
        out.append("  ".join([first, *rest]).rstrip())
    return "\n".join(out) + "\n"


def compare_report(
    results: Sequence[tuple[str, EvalResult]],
    path: os.PathLike | str,
    *,
    metadata: Mapping[str, Any] | None = None,
) -> dict[str, Any]:
    """Write a JSON report and an aligned ``.txt`` table next to it.

    Rows keep the given order; deltas are in accuracy points relative to the
    first row.

    Parameters
    ----------
    results :
        ``(name, result)`` pairs with unique names and a shared label set.
    path :
        The JSON file; the table goes to the same path with suffix ``.txt``.
    metadata :
        Extra JSON-serializable entries, e.g. the config hash and seeds.
    """
    names = [name for name, _ in results]
    duplicates = sorted({n for n in names if names.count(n) > 1})
    if duplicates:
        raise ContractViolation(f"Duplicate result names: {duplicates}.")
    if len({r.num_classes for _, r in results}) > 1:
        raise ContractViolation("All compared results must share the label set.")

    baseline = results[0][1].accuracy if results else 0.0
    rows = [
        {
            "name": name,
            "n": result.n,
            "accuracy": result.accuracy,
            "delta_points": _delta(result.accuracy, baseline),
            **result.model_dump(exclude={"accuracy", "n"}),
        }
        for name, result in results
    ]
    report = {**(metadata or {}), "rows": rows}

    path = Path(path)
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", "utf-8")
    path.with_suffix(".txt").write_text(format_table(rows), encoding="utf-8")
    logger.info("Wrote comparison of %d results to %s", len(rows), path)
    return report

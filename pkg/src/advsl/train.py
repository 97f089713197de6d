"""Mini-batch training against the perturbed-input objective."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import more_itertools
import numpy as np
from pydantic import Field

from advsl._utils import derive_seed
from advsl.config import BaseModel, TrainConfig
from advsl.errors import ContractViolation, NonFiniteLossError
from advsl.evalreport import accuracy
from advsl.model import ModelParams, backward, forward
from advsl.optim import AdamState, adam_update
from advsl.perturb import build_perturbation
from advsl.textdata import Dataset, pad_batch
from advsl.types import FloatArray, IntArray

__all__ = [
    "Batch",
    "BatchLosses",
    "EpochRecord",
    "TrainReport",
    "make_batch",
    "train",
    "train_step",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Batch:
    ids: IntArray
    mask: IntArray
    labels: IntArray
    weights: FloatArray
    positions: IntArray
    """Index of every row in the training set; names examples in errors."""
    seeds: tuple[tuple[int, ...], ...] = ()
    """Per-example generator seeds for random perturbations."""


def make_batch(
    dataset: Dataset,
    positions: Sequence[int],
    *,
    max_len: int,
    perturb_seed: int = 0,
    epoch: int = 0,
) -> Batch:
    """Collect the examples at ``positions`` into a padded batch.

    The random-perturbation seed of an example depends on its position and the
    epoch only, never on which other examples share the batch.
    """
    if not len(positions):
        raise ContractViolation("A batch needs at least one example.")
    examples = [dataset[p] for p in positions]
    for p, example in zip(positions, examples):
        if example.label is None:
            raise ContractViolation(f"Training example {p} has no label.")
    ids, mask = pad_batch(examples, max_len)
    return Batch(
        ids=ids,
        mask=mask,
        labels=np.array([e.label for e in examples], dtype=np.int64),
        weights=np.array([e.weight for e in examples], dtype=np.float64),
        positions=np.asarray(positions, dtype=np.int64),
        seeds=tuple((derive_seed(perturb_seed, int(p)), epoch) for p in positions),
    )


class BatchLosses(BaseModel, frozen=True):
    clean: float
    adversarial: float
    """Loss at the perturbed input; equals ``clean`` without a perturbation."""
    objective: float


def _weighted_mean(values: FloatArray, weights: FloatArray) -> float:
    total = weights.sum()
    return float(values @ weights / total) if total > 0 else 0.0


def _check_finite(loss: FloatArray, batch: Batch) -> None:
    bad = np.flatnonzero(~np.isfinite(loss))
    if bad.size:
        first = bad[0]
        raise NonFiniteLossError(float(loss[first]), index=int(batch.positions[first]))


def train_step(
    params: ModelParams,
    batch: Batch,
    config: TrainConfig,
    optimizer: AdamState | None = None,
) -> tuple[ModelParams, BatchLosses, AdamState]:
    """One optimizer update on ``batch``.

    The input gradient of the clean loss gives the perturbation, which is then
    held constant: parameter gradients come from a second forward/backward pass
    at the perturbed input only.

    Returns
    -------
    tuple
        Updated parameters, the batch losses before the update and the optimizer
        state to pass to the next step.
    """
    optimizer = AdamState() if optimizer is None else optimizer

    clean = forward(params, batch.ids, batch.mask, batch.labels)
    assert clean.loss is not None
    _check_finite(clean.loss, batch)
    clean_grads = backward(params, clean, batch.weights)

    r = build_perturbation(config.perturb, clean_grads.d_input, batch.mask, batch.seeds)
    if r is None:
        adv, adv_grads = clean, clean_grads
    else:
        adv = forward(params, batch.ids, batch.mask, batch.labels, perturbation=r)
        assert adv.loss is not None
        _check_finite(adv.loss, batch)
        adv_grads = backward(params, adv, batch.weights)

    assert adv.loss is not None
    clean_loss = _weighted_mean(clean.loss, batch.weights)
    adv_loss = _weighted_mean(adv.loss, batch.weights)
    if config.loss_mode == "clean_plus_adv":
        grads = {
            key: 0.5 * (clean_grads.d_params[key] + adv_grads.d_params[key])
            for key in clean_grads.d_params
        }
        objective = 0.5 * (clean_loss + adv_loss)
    else:
        grads = adv_grads.d_params
        objective = adv_loss

    keys = list(params.head)
    if not params.embeddings.frozen:
        keys.append("embeddings")
    arrays, optimizer = adam_update(
        params.arrays(),
        grads,
        optimizer,
        learning_rate=config.learning_rate,
        beta1=config.beta1,
        beta2=config.beta2,
        eps=config.adam_eps,
        keys=keys,
    )
    losses = BatchLosses(clean=clean_loss, adversarial=adv_loss, objective=objective)
    return params.with_arrays(arrays), losses, optimizer


class EpochRecord(BaseModel, frozen=True):
    epoch: int
    clean_loss: float
    adversarial_loss: float
    validation_accuracy: float
    batch_clean_losses: list[float] = Field(default_factory=list)
    batch_adversarial_losses: list[float] = Field(default_factory=list)


class TrainReport(BaseModel, frozen=True):
    """Per-epoch losses and validation accuracy of one training run."""

    epochs: list[EpochRecord]
    best_epoch: int
    """1-based epoch whose parameters were returned."""
    best_validation_accuracy: float
    validation: str = ""
    """Name of the dataset used for model selection."""
    perturb_mode: str = "none"


def train(
    params: ModelParams,
    train_set: Dataset,
    validation: Dataset,
    config: TrainConfig,
    *,
    threads: int = 1,
) -> tuple[ModelParams, TrainReport]:
    """Train for ``config.epochs`` epochs and keep the best validated parameters.

    Ties in validation accuracy go to the earlier epoch. Shuffling depends only
    on ``config.shuffle_seed``, so equal inputs give equal reports.

    Raises
    ------
    ContractViolation
        If ``train_set`` is empty or either dataset has unlabeled examples.
    NonFiniteLossError
        If a loss becomes NaN or infinite.
    """
    if len(train_set) == 0:
        raise ContractViolation(f"Training set '{train_set.name}' is empty.")
    train_set.require_labeled()
    validation.require_labeled()
    if len(validation) == 0:
        raise ContractViolation(f"Validation set '{validation.name}' is empty.")

    rng = np.random.default_rng(config.shuffle_seed)
    optimizer = AdamState()
    best = params
    best_epoch, best_accuracy = 0, -1.0
    records = []
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train_set))
        clean_losses, adv_losses, sizes = [], [], []
        for positions in more_itertools.chunked(order, config.batch_size):
            batch = make_batch(
                train_set,
                positions,
                max_len=config.max_len,
                perturb_seed=config.perturb.seed,
                epoch=epoch,
            )
            params, losses, optimizer = train_step(params, batch, config, optimizer)
            clean_losses.append(losses.clean)
            adv_losses.append(losses.adversarial)
            sizes.append(len(positions))
            logger.debug(
                "epoch %d batch %d: clean %.6f adversarial %.6f",
                epoch,
                len(sizes),
                losses.clean,
                losses.adversarial,
            )

        val_accuracy = accuracy(
            params, validation, max_len=config.max_len, threads=threads
        )
        record = EpochRecord(
            epoch=epoch,
            clean_loss=float(np.average(clean_losses, weights=sizes)),
            adversarial_loss=float(np.average(adv_losses, weights=sizes)),
            validation_accuracy=val_accuracy,
            batch_clean_losses=clean_losses,
            batch_adversarial_losses=adv_losses,
        )
        records.append(record)
        logger.info(
            "epoch %d/%d: clean loss %.4f, adversarial loss %.4f, %s accuracy %.4f",
            epoch,
            config.epochs,
            record.clean_loss,
            record.adversarial_loss,
            validation.name or "validation",
            val_accuracy,
        )
        if val_accuracy > best_accuracy:
            best, best_epoch, best_accuracy = params, epoch, val_accuracy

    report = TrainReport(
        epochs=records,
        best_epoch=best_epoch,
        best_validation_accuracy=best_accuracy,
        validation=validation.name,
        perturb_mode=config.perturb.effective_mode,
    )
    return best, report

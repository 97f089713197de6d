"""Bag-of-embeddings classifier with analytic gradients.

The forward pass is: embedding lookup (plus an optional additive perturbation of
the looked-up vectors), mean pooling over real tokens, a linear or one-hidden-layer
head and a softmax. ``backward`` returns exact gradients with respect to the
parameters and with respect to the looked-up input vectors; the latter is what
the adversarial perturbation is built from.

All computations are batched over a leading axis ``B`` and use float64.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
from collections.abc import Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Literal

import more_itertools
import numpy as np
import pydantic

from advsl.config import BaseModel
from advsl.errors import ContractViolation, FormatError, utf8_errors
from advsl.textdata import PAD_ID, Dataset, EmbeddingTable, Vocabulary, pad_batch
from advsl.types import Arch, FloatArray, IntArray

__all__ = [
    "CHECKPOINT_VERSION",
    "HEAD_KEYS",
    "ForwardTrace",
    "GradientBundle",
    "ModelParams",
    "backward",
    "forward",
    "init_params",
    "load_checkpoint",
    "params_checksum",
    "predict",
    "predict_dataset",
    "save_checkpoint",
]

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1

HEAD_KEYS: dict[str, tuple[str, ...]] = {
    "linear": ("W", "b"),
    "mlp1": ("W1", "b1", "W2", "b2"),
}


@dataclass(frozen=True)
class ModelParams:
    """Embedding table plus classification head.

    ``label_names`` and ``lowercase`` are what is needed to apply the model to raw
    text; they do not take part in the computation.
    """

    embeddings: EmbeddingTable
    head: Mapping[str, FloatArray]
    arch: Arch = "linear"
    label_names: tuple[str, ...] = ()
    lowercase: bool = True

    def __post_init__(self) -> None:
        if self.arch not in HEAD_KEYS:
            raise ContractViolation(f"Unknown architecture '{self.arch}'.")
        if set(self.head) != set(HEAD_KEYS[self.arch]):
            raise ContractViolation(
                f"Head of a '{self.arch}' model needs {HEAD_KEYS[self.arch]}, "
                f"got {tuple(self.head)}."
            )
        head = {}
        for key in HEAD_KEYS[self.arch]:
            value = np.array(self.head[key], dtype=np.float64)
            if not np.all(np.isfinite(value)):
                raise ContractViolation(f"Parameter {key} contains non-finite values.")
            value.setflags(write=False)
            head[key] = value
        object.__setattr__(self, "head", head)
        self._check_shapes()

    def _check_shapes(self) -> None:
        d, c = self.dim, self.num_classes
        if self.arch == "linear":
            expected = {"W": (c, d), "b": (c,)}
        else:
            h = self.head["W1"].shape[0]
            expected = {"W1": (h, d), "b1": (h,), "W2": (c, h), "b2": (c,)}
        for key, shape in expected.items():
            if self.head[key].shape != shape:
                raise ContractViolation(
                    f"Parameter {key} has shape {self.head[key].shape}, "
                    f"expected {shape}."
                )
        if self.label_names and len(self.label_names) != c:
            raise ContractViolation(
                f"{len(self.label_names)} label names for {c} classes."
            )

    @property
    def dim(self) -> int:
        return self.embeddings.dim

    @property
    def num_classes(self) -> int:
        key = "W" if self.arch == "linear" else "W2"
        return int(self.head[key].shape[0])

    @property
    def hidden(self) -> int | None:
        return None if self.arch == "linear" else int(self.head["W1"].shape[0])

    @property
    def vocab(self) -> Vocabulary:
        return self.embeddings.vocab

    def arrays(self) -> dict[str, FloatArray]:
        """All parameters by name, embeddings included."""
        return {"embeddings": self.embeddings.matrix, **self.head}

    def with_arrays(self, arrays: Mapping[str, FloatArray]) -> ModelParams:
        """Copy with some or all parameter arrays replaced."""
        embeddings = self.embeddings
        if "embeddings" in arrays:
            embeddings = embeddings.replace(arrays["embeddings"])
        head = {key: arrays.get(key, value) for key, value in self.head.items()}
        return dataclasses.replace(self, embeddings=embeddings, head=head)


def _glorot(rng: np.random.Generator, fan_out: int, fan_in: int) -> FloatArray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


def init_params(
    embeddings: EmbeddingTable,
    num_classes: int,
    *,
    arch: Arch = "linear",
    hidden: int = 64,
    seed: int = 0,
    label_names: Sequence[str] = (),
    lowercase: bool = True,
) -> ModelParams:
    """Glorot-uniform weights and zero biases."""
    if num_classes < 2:
        raise ContractViolation(f"Need at least two classes, got {num_classes}.")
    rng = np.random.default_rng(seed)
    d = embeddings.dim
    if arch == "linear":
        head = {"W": _glorot(rng, num_classes, d), "b": np.zeros(num_classes)}
    else:
        head = {
            "W1": _glorot(rng, hidden, d),
            "b1": np.zeros(hidden),
            "W2": _glorot(rng, num_classes, hidden),
            "b2": np.zeros(num_classes),
        }
    return ModelParams(embeddings, head, arch, tuple(label_names), lowercase)


@dataclass(frozen=True)
class ForwardTrace:
    """Intermediate values of a batched forward pass."""

    ids: IntArray
    mask: FloatArray
    input_embeds: FloatArray
    """``(B, T, d)`` looked-up vectors, perturbation included."""
    counts: FloatArray
    pooled: FloatArray
    pre_activation: FloatArray | None
    logits: FloatArray
    log_probs: FloatArray
    labels: IntArray | None
    loss: FloatArray | None
    """Per-example cross-entropy, present when labels were given."""

    @property
    def probs(self) -> FloatArray:
        return np.exp(self.log_probs)


@dataclass(frozen=True)
class GradientBundle:
    d_params: dict[str, FloatArray]
    """Gradient of the weighted mean batch loss, keyed like ``ModelParams.arrays``."""
    d_input: FloatArray
    """``(B, T, d)``; row ``b`` is the gradient of example ``b``'s own loss."""


def _as_batch(ids: Any, mask: Any) -> tuple[IntArray, FloatArray]:
    ids = np.atleast_2d(np.asarray(ids, dtype=np.int64))
    mask = np.atleast_2d(np.asarray(mask, dtype=np.float64))
    if ids.shape != mask.shape:
        raise ContractViolation(f"ids {ids.shape} and mask {mask.shape} differ.")
    return ids, mask


def forward(
    params: ModelParams,
    ids: IntArray,
    mask: IntArray | FloatArray,
    labels: IntArray | Sequence[int] | int | None = None,
    perturbation: FloatArray | None = None,
) -> ForwardTrace:
    """Evaluate the classifier.

    Parameters
    ----------
    params :
        Model parameters.
    ids, mask :
        ``(B, T)`` (or ``(T,)`` for a single example) token ids and real-token mask.
    labels :
        Optional gold class ids; enables the loss.
    perturbation :
        Optional ``(B, T, d)`` additive change to the looked-up vectors. Rows at
        masked positions must be zero.
    """
    ids, mask = _as_batch(ids, mask)
    vocab_size = len(params.vocab)
    if ids.size and (ids.min() < 0 or ids.max() >= vocab_size):
        raise ContractViolation(f"Token ids must lie in [0, {vocab_size}).")

    x = params.embeddings.matrix[ids]
    if perturbation is not None:
        perturbation = np.asarray(perturbation, dtype=np.float64).reshape(x.shape)
        if np.any(perturbation[mask == 0] != 0):
            raise ContractViolation("Perturbation must be zero at masked positions.")
        x = x + perturbation

    counts = np.maximum(mask.sum(axis=1), 1.0)
    pooled = np.einsum("bt,btd->bd", mask, x) / counts[:, None]

    pre = None
    if params.arch == "linear":
        logits = pooled @ params.head["W"].T + params.head["b"]
    else:
        pre = pooled @ params.head["W1"].T + params.head["b1"]
        logits = np.maximum(pre, 0.0) @ params.head["W2"].T + params.head["b2"]

    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))

    loss = None
    if labels is not None:
        labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
        if labels.shape != (ids.shape[0],):
            raise ContractViolation(
                f"Expected {ids.shape[0]} labels, got shape {labels.shape}."
            )
        num_classes = params.num_classes
        if np.any((labels < 0) | (labels >= num_classes)):
            raise ContractViolation(f"Labels must lie in [0, {num_classes}).")
        loss = -log_probs[np.arange(len(labels)), labels]

    return ForwardTrace(
        ids, mask, x, counts, pooled, pre, logits, log_probs, labels, loss
    )


def backward(
    params: ModelParams,
    trace: ForwardTrace,
    weights: FloatArray | None = None,
) -> GradientBundle:
    """Exact gradients of the cross-entropy recorded in ``trace``.

    ``d_params`` is the gradient of the weighted mean of the per-example losses
    (equal weights by default). The input gradient of each example is that of its
    own loss, so it does not depend on the batch composition. With frozen
    embeddings the embedding gradient is all zeros; ``d_input`` is always
    computed.
    """
    if trace.labels is None:
        raise ContractViolation("backward needs a trace computed with labels.")
    batch = trace.ids.shape[0]
    weights = np.ones(batch) if weights is None else np.asarray(weights, np.float64)
    total = weights.sum()
    coef = weights / total if total > 0 else np.zeros(batch)

    dz = trace.probs
    dz[np.arange(batch), trace.labels] -= 1.0

    grads: dict[str, FloatArray] = {}
    if params.arch == "linear":
        W = params.head["W"]
        dh = dz @ W
        grads["W"] = (coef[:, None] * dz).T @ trace.pooled
        grads["b"] = coef @ dz
    else:
        W1, W2 = params.head["W1"], params.head["W2"]
        assert trace.pre_activation is not None
        active = trace.pre_activation > 0
        u = np.where(active, trace.pre_activation, 0.0)
        da = (dz @ W2) * active
        dh = da @ W1
        grads["W1"] = (coef[:, None] * da).T @ trace.pooled
        grads["b1"] = coef @ da
        grads["W2"] = (coef[:, None] * dz).T @ u
        grads["b2"] = coef @ dz

    d_input = trace.mask[:, :, None] * (dh / trace.counts[:, None])[:, None, :]

    d_embed = np.zeros_like(params.embeddings.matrix)
    if not params.embeddings.frozen:
        # add.at accumulates repeated tokens instead of overwriting
        np.add.at(d_embed, trace.ids, coef[:, None, None] * d_input)
        d_embed[PAD_ID] = 0.0
    return GradientBundle({"embeddings": d_embed, **grads}, d_input)


def predict(
    params: ModelParams, ids: IntArray, mask: IntArray | FloatArray
) -> tuple[IntArray, FloatArray]:
    """Arg-max class (lowest id on ties) and its probability."""
    trace = forward(params, ids, mask)
    classes = np.argmax(trace.log_probs, axis=1)
    confidence = np.exp(trace.log_probs[np.arange(len(classes)), classes])
    return classes, confidence


def predict_dataset(
    params: ModelParams,
    dataset: Dataset,
    *,
    max_len: int,
    threads: int = 1,
    chunk_size: int = 512,
) -> tuple[IntArray, FloatArray]:
    """:func:`predict` over a dataset, optionally on several threads.

    Chunks are independent and results are concatenated in input order, so the
    output does not depend on ``threads``.
    """
    chunks = [
        pad_batch(chunk, max_len)
        for chunk in more_itertools.chunked(dataset.examples, chunk_size)
    ]
    if not chunks:
        return np.zeros(0, dtype=np.int64), np.zeros(0)

    def run(batch: tuple[IntArray, IntArray]) -> tuple[IntArray, FloatArray]:
        return predict(params, *batch)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, chunks))
    else:
        results = [run(chunk) for chunk in chunks]
    classes, confidence = zip(*results, strict=True)
    return np.concatenate(classes), np.concatenate(confidence)


def params_checksum(params: ModelParams) -> str:
    """Digest of all parameter bytes; equal digests mean identical parameters."""
    digest = hashlib.sha256()
    for key, value in sorted(params.arrays().items()):
        digest.update(key.encode("utf-8"))
        digest.update(np.ascontiguousarray(value).tobytes())
    return digest.hexdigest()


class CheckpointHeader(BaseModel):
    """Metadata part of a checkpoint file; matrices are checked separately."""

    version: Literal[1]
    arch: Arch
    dim: pydantic.PositiveInt
    vocab_size: pydantic.PositiveInt
    num_classes: pydantic.PositiveInt
    hidden: pydantic.PositiveInt | None
    frozen: bool
    lowercase: bool = True
    tokens: list[str]
    label_names: list[str] = pydantic.Field(default_factory=list)
    matrices: dict[str, list]


def save_checkpoint(params: ModelParams, path: os.PathLike | str) -> None:
    """Write parameters as JSON.

    Floats are written with ``repr``, the shortest string that parses back to the
    same double, so a save/load round trip is bit-exact.
    """
    record = {
        "version": CHECKPOINT_VERSION,
        "arch": params.arch,
        "dim": params.dim,
        "vocab_size": len(params.vocab),
        "num_classes": params.num_classes,
        "hidden": params.hidden,
        "frozen": params.embeddings.frozen,
        "lowercase": params.lowercase,
        "tokens": list(params.vocab.tokens),
        "label_names": list(params.label_names),
        "matrices": {key: value.tolist() for key, value in params.arrays().items()},
    }
    Path(path).write_text(json.dumps(record), encoding="utf-8")
    logger.info("Saved checkpoint to %s", path)


def load_checkpoint(path: os.PathLike | str) -> ModelParams:
    """Read a checkpoint written by :func:`save_checkpoint`.

    Raises
    ------
    FormatError
        If the file is truncated, has another version, or its matrices do not
        match the recorded dimensions. No partial model is returned.
    """
    path = Path(path)
    try:
        with utf8_errors(path):
            raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise FormatError(f"Not a valid checkpoint: {e.msg}", path=path, line=e.lineno)
    if isinstance(raw, dict) and raw.get("version") != CHECKPOINT_VERSION:
        raise FormatError(
            f"Unsupported checkpoint version {raw.get('version')!r}, expected "
            f"{CHECKPOINT_VERSION}.",
            path=path,
        )
    try:
        header = CheckpointHeader.model_validate(raw)
    except pydantic.ValidationError as e:
        raise FormatError(f"Invalid checkpoint: {e}", path=path) from e

    if len(header.tokens) != header.vocab_size:
        raise FormatError(
            f"{len(header.tokens)} tokens for vocab_size {header.vocab_size}.",
            path=path,
        )
    expected_keys = {"embeddings", *HEAD_KEYS[header.arch]}
    if set(header.matrices) != expected_keys:
        raise FormatError(
            f"Matrices {sorted(header.matrices)} do not match arch '{header.arch}'.",
            path=path,
        )
    try:
        arrays = {k: np.array(v, dtype=np.float64) for k, v in header.matrices.items()}
    except (ValueError, TypeError) as e:
        raise FormatError(f"Malformed matrix: {e}", path=path) from e

    c, d, h = header.num_classes, header.dim, header.hidden
    shapes: dict[str, tuple[int, ...]] = {"embeddings": (header.vocab_size, d)}
    if header.arch == "linear":
        shapes |= {"W": (c, d), "b": (c,)}
    else:
        if h is None:
            raise FormatError("An mlp1 checkpoint must record 'hidden'.", path=path)
        shapes |= {"W1": (h, d), "b1": (h,), "W2": (c, h), "b2": (c,)}
    for key, shape in shapes.items():
        if arrays[key].shape != shape:
            raise FormatError(
                f"Matrix '{key}' has shape {arrays[key].shape}, the header implies "
                f"{shape}.",
                path=path,
            )

    try:
        vocab = Vocabulary(tuple(header.tokens))
        table = EmbeddingTable(vocab, arrays.pop("embeddings"), frozen=header.frozen)
        return ModelParams(
            table, arrays, header.arch, tuple(header.label_names), header.lowercase
        )
    except ContractViolation as e:
        raise FormatError(f"Inconsistent checkpoint: {e}", path=path) from e

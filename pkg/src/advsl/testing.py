"""Oracles and fixtures for testing code built on ``advsl``.

The oracles recompute results the slow, obvious way: central finite differences
for gradients, a full sort for balanced selection and a per-token recount for
code-switching statistics.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence

import numpy as np
import pytest

from advsl.codeswitch import BilingualDictionary, SwitchStats
from advsl.model import ModelParams, backward, forward, init_params
from advsl.textdata import (
    Dataset,
    Document,
    EmbeddingTable,
    Example,
    Vocabulary,
    pad_batch,
)
from advsl.types import Arch, FloatArray, IntArray

__all__ = [
    "GradientTests",
    "brute_force_selection",
    "central_difference",
    "mean_loss",
    "recount_switch",
    "relative_error",
    "toy_problem",
]

FD_STEP = 1e-5
"""Step of the central differences."""


def central_difference(
    f: Callable[[FloatArray], float],
    x: FloatArray,
    index: tuple[int, ...],
    *,
    step: float = FD_STEP,
) -> float:
    """``(f(x + h e_i) - f(x - h e_i)) / 2h`` for one coordinate ``index``."""
    plus = x.copy()
    plus[index] += step
    minus = x.copy()
    minus[index] -= step
    return (f(plus) - f(minus)) / (2 * step)


def relative_error(a: float, b: float, *, floor: float = 1e-4) -> float:
    """``|a - b|`` over the larger magnitude, which counts as at least ``floor``."""
    return abs(a - b) / max(abs(a), abs(b), floor)


def mean_loss(
    params: ModelParams,
    ids: IntArray,
    mask: IntArray,
    labels: IntArray,
    *,
    weights: FloatArray | None = None,
    perturbation: FloatArray | None = None,
) -> float:
    """Weighted mean cross-entropy of a batch."""
    trace = forward(params, ids, mask, labels, perturbation=perturbation)
    assert trace.loss is not None
    weights = np.ones(len(labels)) if weights is None else weights
    return float(trace.loss @ weights / weights.sum())


def brute_force_selection(
    predicted: Sequence[int],
    confidence: Sequence[float],
    num_classes: int,
    k_t: int,
) -> list[list[tuple[int, float]]]:
    """Balanced selection by sorting the whole pool once per class."""
    per_class = []
    for c in range(num_classes):
        items = [
            (i, float(conf))
            for i, (p, conf) in enumerate(zip(predicted, confidence, strict=True))
            if p == c
        ]
        items.sort(key=lambda item: (-item[1], item[0]))
        per_class.append(items[:k_t])
    return per_class


def recount_switch(
    corpus: Sequence[Document], dictionary: BilingualDictionary
) -> tuple[list[tuple[str, ...]], SwitchStats]:
    """Expected switched token sequences and statistics, counted token by token."""
    expected = []
    types: set[str] = set()
    replaced_types: set[str] = set()
    tokens = replaced = 0
    for doc in corpus:
        out = []
        for token in doc.tokens:
            key = token.lower() if dictionary.lowercase else token
            types.add(key)
            tokens += 1
            if key in dictionary.entries:
                replaced_types.add(key)
                replaced += 1
                out.append(dictionary.chosen[key])
            else:
                out.append(token)
        expected.append(tuple(out))
    stats = SwitchStats(
        types=len(types),
        replaced_types=len(replaced_types),
        tokens=tokens,
        replaced_tokens=replaced,
        vocab_replaced_ratio=len(replaced_types) / len(types) if types else 0.0,
        token_replaced_ratio=replaced / tokens if tokens else 0.0,
    )
    return expected, stats


def toy_problem(
    n: int = 40,
    *,
    num_classes: int = 2,
    words_per_class: int = 5,
    dim: int = 4,
    arch: Arch = "linear",
    frozen: bool = False,
    seed: int = 0,
    name: str = "toy",
) -> tuple[ModelParams, Dataset]:
    """Initial parameters and a linearly separable labeled dataset.

    Every class has its own words, placed near the class's unit vector, and a
    document of class ``k`` uses class-``k`` words only.
    """
    if dim < num_classes:
        raise ValueError("dim must be at least num_classes.")
    rng = np.random.default_rng(seed)
    words = [f"w{k}_{i}" for k in range(num_classes) for i in range(words_per_class)]
    vocab = Vocabulary.from_words(words)
    matrix = np.zeros((len(vocab), dim))
    for k in range(num_classes):
        rows = slice(2 + k * words_per_class, 2 + (k + 1) * words_per_class)
        noise = 0.1 * rng.standard_normal((words_per_class, dim))
        matrix[rows] = np.eye(dim)[k] + noise
    matrix[1] = 0.1 * rng.standard_normal(dim)
    table = EmbeddingTable(vocab, matrix, frozen=frozen)

    examples = []
    for uid in range(n):
        label = uid % num_classes
        length = int(rng.integers(2, 7))
        first = 2 + label * words_per_class
        ids = first + rng.integers(words_per_class, size=length)
        examples.append(Example(tuple(int(i) for i in ids), label, uid=uid))
    dataset = Dataset(tuple(examples), num_classes, name=name)
    params = init_params(table, num_classes, arch=arch, hidden=8, seed=seed)
    return params, dataset


def _margin_head(params: ModelParams, rng: np.random.Generator) -> ModelParams:
    """Hidden pre-activations bounded away from zero, so ReLU has no kink nearby."""
    if params.arch != "mlp1":
        return params
    hidden = params.hidden
    assert hidden is not None
    w1 = 0.05 * rng.standard_normal((hidden, params.dim))
    b1 = np.where(np.arange(hidden) % 2 == 0, 1.0, -1.0)
    return params.with_arrays({"W1": w1, "b1": b1})


class GradientTests:
    """Compare analytic gradients against central differences.

    Subclasses override the ``arch`` fixture.
    """

    num_coordinates = 300

    @pytest.fixture
    def arch(self) -> Arch:
        """This fixture must be overridden in the subclass."""
        raise NotImplementedError("Override this fixture to return an architecture")

    @pytest.fixture
    def problem(
        self, arch: Arch
    ) -> tuple[ModelParams, IntArray, IntArray, IntArray, FloatArray]:
        params, dataset = toy_problem(8, num_classes=3, dim=5, arch=arch, seed=1)
        rng = np.random.default_rng(2)
        params = _margin_head(params, rng)
        # move away from the initialization so gradients are not tiny
        arrays = {
            key: value + 0.3 * rng.standard_normal(value.shape)
            for key, value in params.head.items()
            if key not in ("W1", "b1")
        }
        params = params.with_arrays(arrays)
        ids, mask = pad_batch(dataset.examples, 6)
        labels = dataset.labels()
        weights = rng.uniform(0.5, 2.0, size=len(labels))
        return params, ids, mask, labels, weights

    @staticmethod
    def _coordinates(
        rng: np.random.Generator, shape: tuple[int, ...], count: int, skip_row0: bool
    ) -> list[tuple[int, ...]]:
        low = np.zeros(len(shape), dtype=np.int64)
        if skip_row0:
            low[0] = 1
        return [
            tuple(int(rng.integers(lo, hi)) for lo, hi in zip(low, shape, strict=True))
            for _ in range(count)
        ]

    def test_parameter_gradients(
        self, problem: tuple[ModelParams, IntArray, IntArray, IntArray, FloatArray]
    ) -> None:
        params, ids, mask, labels, weights = problem
        trace = forward(params, ids, mask, labels)
        grads = backward(params, trace, weights)
        rng = np.random.default_rng(3)

        for key, value in params.arrays().items():
            # the padding row of the embeddings is pinned to zero
            is_embedding = key == "embeddings"

            def f(x: FloatArray, key: str = key) -> float:
                return mean_loss(
                    params.with_arrays({key: x}), ids, mask, labels, weights=weights
                )

            coords = self._coordinates(
                rng, value.shape, self.num_coordinates // 3, is_embedding
            )
            for index in coords:
                numeric = central_difference(f, np.array(value), index)
                assert relative_error(grads.d_params[key][index], numeric) <= 1e-5

    def test_input_gradients(
        self, problem: tuple[ModelParams, IntArray, IntArray, IntArray, FloatArray]
    ) -> None:
        params, ids, mask, labels, _ = problem
        trace = forward(params, ids, mask, labels)
        grads = backward(params, trace)
        rng = np.random.default_rng(4)
        unmasked = np.argwhere(mask != 0)
        zero = np.zeros((*ids.shape, params.dim))

        for _ in range(self.num_coordinates):
            b, t = unmasked[rng.integers(len(unmasked))]
            k = int(rng.integers(params.dim))

            def f(r: FloatArray, b: int = int(b)) -> float:
                loss = forward(params, ids, mask, labels, perturbation=r).loss
                assert loss is not None
                return float(loss[b])

            numeric = central_difference(f, zero, (int(b), int(t), k))
            assert relative_error(grads.d_input[b, t, k], numeric) <= 1e-5

        assert np.all(grads.d_input[mask == 0] == 0)


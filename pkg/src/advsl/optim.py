"""Adaptive moment estimation over named numpy arrays."""

from __future__ import annotations

from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field

import numpy as np

from advsl.types import FloatArray

__all__ = ["AdamState", "adam_update"]


@dataclass(frozen=True)
class AdamState:
    """First and second moment estimates after ``step`` updates."""

    step: int = 0
    m: dict[str, FloatArray] = field(default_factory=dict)
    v: dict[str, FloatArray] = field(default_factory=dict)


def adam_update(
    arrays: Mapping[str, FloatArray],
    grads: Mapping[str, FloatArray],
    state: AdamState,
    *,
    learning_rate: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    keys: Iterable[str] | None = None,
) -> tuple[dict[str, FloatArray], AdamState]:
    """One update; inputs are left untouched.

    Only ``keys`` (default: all of ``arrays``) are updated, the remaining arrays
    are passed through as they are.

    >>> import numpy as np
    >>> new, state = adam_update({"x": np.array([1.0])}, {"x": np.array([2.0])},
    ...                          AdamState(), learning_rate=0.1)
    >>> new["x"].round(6).tolist(), state.step
    ([0.9], 1)
    """
    keys = list(arrays) if keys is None else list(keys)
    t = state.step + 1
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t

    new_arrays = dict(arrays)
    m, v = dict(state.m), dict(state.v)
    for key in keys:
        g = grads[key]
        m[key] = beta1 * m.get(key, np.zeros_like(g)) + (1.0 - beta1) * g
        v[key] = beta2 * v.get(key, np.zeros_like(g)) + (1.0 - beta2) * (g * g)
        m_hat = m[key] / bc1
        v_hat = v[key] / bc2
        new_arrays[key] = arrays[key] - learning_rate * m_hat / (np.sqrt(v_hat) + eps)
    return new_arrays, AdamState(t, m, v)

"""Additive perturbations of the looked-up input vectors.

Arrays are ``(T, d)`` for a single sequence or ``(B, T, d)`` for a batch; the norm
is always taken per sequence.

>>> import numpy as np
>>> adversarial_direction(np.array([[3.0, 4.0]]), np.array([1]), 1.0)
array([[0.6, 0.8]])
"""

from __future__ import annotations

import logging
from collections.abc import Sequence

import numpy as np

from advsl.config import PerturbConfig
from advsl.errors import ContractViolation
from advsl.types import FloatArray, NormScope

__all__ = [
    "ZERO_GRADIENT",
    "adversarial_direction",
    "build_perturbation",
    "random_direction",
]

logger = logging.getLogger(__name__)

ZERO_GRADIENT = 1e-12
"""Gradients with a norm at or below this get a zero perturbation."""


def _masked(values: FloatArray, mask: np.ndarray) -> FloatArray:
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != values.shape[:-1]:
        raise ContractViolation(
            f"Mask of shape {mask.shape} does not fit values of shape {values.shape}."
        )
    return np.where(mask[..., None] != 0, values, 0.0)


def _scale_to(values: FloatArray, epsilon: float, scope: NormScope) -> FloatArray:
    """Rescale to norm ``epsilon``; groups with a norm below the guard become zero."""
    if scope == "global":
        norm = np.sqrt(np.sum(values**2, axis=(-2, -1), keepdims=True))
    else:
        norm = np.linalg.norm(values, axis=-1, keepdims=True)
    safe = np.where(norm > ZERO_GRADIENT, norm, 1.0)
    return np.where(norm > ZERO_GRADIENT, epsilon * values / safe, 0.0)


def adversarial_direction(
    g: FloatArray,
    mask: np.ndarray,
    epsilon: float,
    *,
    norm_scope: NormScope = "global",
) -> FloatArray:
    """Worst-case perturbation ``epsilon * g / ||g||`` under a linear approximation.

    Parameters
    ----------
    g :
        Gradient of the loss with respect to the input vectors.
    mask :
        Real-token mask, ``g.shape[:-1]``. Masked rows of the result are zero.
    epsilon :
        L2 budget.
    norm_scope :
        ``"global"`` takes the norm over the whole sequence, ``"token"`` scales
        every unmasked row to ``epsilon`` separately.

    The result is a plain array; nothing differentiates through it.
    """
    if epsilon < 0:
        raise ContractViolation(f"epsilon must be non-negative, got {epsilon}.")
    g = _masked(np.asarray(g, dtype=np.float64), mask)
    return _scale_to(g, epsilon, norm_scope)


def random_direction(
    shape: tuple[int, ...],
    mask: np.ndarray,
    epsilon: float,
    seed: int | Sequence[int],
    *,
    norm_scope: NormScope = "global",
) -> FloatArray:
    """Isotropic Gaussian direction rescaled to norm ``epsilon``.

    Deterministic in ``seed``, which may be anything ``numpy.random.default_rng``
    accepts.

    >>> import numpy as np
    >>> r = random_direction((3, 2), np.array([1, 1, 0]), 2.0, seed=0)
    >>> bool(np.isclose(np.linalg.norm(r), 2.0)), r[2].tolist()
    (True, [0.0, 0.0])
    """
    if epsilon < 0:
        raise ContractViolation(f"epsilon must be non-negative, got {epsilon}.")
    rng = np.random.default_rng(seed)
    noise = _masked(rng.standard_normal(shape), mask)
    return _scale_to(noise, epsilon, norm_scope)


def build_perturbation(
    config: PerturbConfig,
    g: FloatArray,
    mask: np.ndarray,
    seeds: Sequence[int | Sequence[int]] | None = None,
) -> FloatArray | None:
    """Perturbation for a batch as selected by ``config``.

    Parameters
    ----------
    config :
        Mode, budget and norm scope.
    g :
        ``(B, T, d)`` input gradients (used by the adversarial mode).
    mask :
        ``(B, T)`` real-token mask.
    seeds :
        One generator seed per example (used by the random mode), so that a
        sequence gets the same noise regardless of the batch it lands in.

    Returns
    -------
    FloatArray | None
        ``None`` when no perturbation applies, including ``epsilon == 0``.
    """
    mode = config.effective_mode
    if mode == "none":
        return None
    if mode == "adversarial":
        return adversarial_direction(
            g, mask, config.epsilon, norm_scope=config.norm_scope
        )

    if seeds is None or len(seeds) != g.shape[0]:
        raise ContractViolation("Random perturbations need one seed per example.")
    mask = np.asarray(mask)
    return np.stack(
        [
            random_direction(
                g.shape[1:], mask[b], config.epsilon, seed, norm_scope=config.norm_scope
            )
            for b, seed in enumerate(seeds)
        ]
    )

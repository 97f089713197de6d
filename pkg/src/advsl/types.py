from __future__ import annotations

from collections.abc import Hashable, Iterable
from typing import Literal, Protocol, TypeAlias, TypeVar, Union

import numpy as np
import numpy.typing as npt
import pydantic

__all__ = [
    "Arch",
    "Chainer",
    "Combiner",
    "Config",
    "FieldValue",
    "FlexibleConfig",
    "FloatArray",
    "IntArray",
    "LossMode",
    "NormScope",
    "Path",
    "PerturbMode",
    "RetrainMode",
    "StrictPath",
    "ValidationSplit",
]


StrictPath: TypeAlias = tuple[str, ...]
"""A tuple-path of keys into a (nested) configuration."""

Path: TypeAlias = Union[str, Iterable[str], "StrictPath"]
"""Anything that can be converted to a tuple-path (str or iterable of str)."""

FieldValue: TypeAlias = Hashable | pydantic.BaseModel
"""The values that can be assigned to a configuration field."""

Config: TypeAlias = dict[str, Union["FieldValue", "Config"]]
"""A nested configuration dictionary."""

FlexibleConfig: TypeAlias = dict["Path", Union["FieldValue", "FlexibleConfig"]]
"""A configuration dictionary that also allows dotted or tuple paths as keys."""

FloatArray: TypeAlias = npt.NDArray[np.float64]
"""64-bit floating point array."""

IntArray: TypeAlias = npt.NDArray[np.int64]
"""Integer index array."""

Arch: TypeAlias = Literal["linear", "mlp1"]
PerturbMode: TypeAlias = Literal["none", "random", "adversarial"]
NormScope: TypeAlias = Literal["global", "token"]
LossMode: TypeAlias = Literal["adv_only", "clean_plus_adv"]
RetrainMode: TypeAlias = Literal["continue", "from_scratch"]
ValidationSplit: TypeAlias = Literal["source", "switched", "target"]

BaseModelT = TypeVar("BaseModelT", bound=pydantic.BaseModel)
"""TypeVar for a pydantic BaseModel."""

T = TypeVar("T")


class Combiner(Protocol[T]):
    """A function that yields tuples of items."""

    def __call__(self, *configs: Iterable[T]) -> Iterable[tuple[T, ...]]: ...


class Chainer(Protocol[T]):
    """A function that chains iterables together."""

    def __call__(self, *configs: Iterable[T]) -> Iterable[T]: ...

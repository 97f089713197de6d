from __future__ import annotations

import itertools
from collections.abc import Iterator, Mapping, Sequence
from typing import Any

import pydantic

from advsl._nested_dict import nested_dict_from_items
from advsl.types import Config, StrictPath

__all__ = ["model_diff"]


class _Missing:
    def __repr__(self) -> str:
        return "Missing"


Missing = _Missing()
"""Placeholder for a key or position that only one side has."""


def _diff_items(a: Any, b: Any, path: StrictPath) -> Iterator[tuple[StrictPath, Any]]:
    if type(a) is not type(b):
        yield path, (a, b)
        return

    match a:
        case pydantic.BaseModel():
            for name in type(a).model_fields:
                x, y = getattr(a, name), getattr(b, name)
                yield from _diff_items(x, y, (*path, name))
        case Mapping():
            for key in sorted(a.keys() | b.keys(), key=str):
                sub = (*path, str(key))
                yield from _diff_items(a.get(key, Missing), b.get(key, Missing), sub)
        case Sequence() if not isinstance(a, str):
            pairs = itertools.zip_longest(a, b, fillvalue=Missing)
            for i, (x, y) in enumerate(pairs):
                yield from _diff_items(x, y, (*path, f"i{i}"))
        case _:
            if a != b:
                yield path, (a, b)


def model_diff(a: Any, b: Any, /) -> Config:
    """Nested dictionary of ``(left, right)`` leaf pairs where two configs differ.

    >>> from advsl.config import PerturbConfig
    >>> model_diff(PerturbConfig(mode="none"), PerturbConfig(mode="random"))
    {'mode': ('none', 'random')}
    >>> model_diff(PerturbConfig(), PerturbConfig())
    {}
    """
    return nested_dict_from_items(_diff_items(a, b, ()))

from __future__ import annotations

import hashlib
import warnings
import zlib
from collections.abc import Hashable
from typing import Any, Literal

import numpy as np
import pydantic

__all__ = [
    "as_hashable",
    "config_hash",
    "derive_seed",
    "raise_warn_ignore",
    "rng_for",
]

_SEED_MASK = (1 << 63) - 1


def derive_seed(seed: int, purpose: str | int, /) -> int:
    """Derive a purpose-specific seed from a global seed.

    Every source of randomness gets its own stream: ``seed XOR tag`` where the tag
    is ``crc32`` of the purpose name (or the integer itself).

    >>> derive_seed(0, "shuffle") == derive_seed(0, "shuffle")
    True
    >>> derive_seed(0, "shuffle") != derive_seed(0, "init")
    True
    >>> derive_seed(5, 3)
    6
    """
    tag = purpose if isinstance(purpose, int) else zlib.crc32(purpose.encode("utf-8"))
    return (seed ^ tag) & _SEED_MASK


def rng_for(seed: int, purpose: str | int, /) -> np.random.Generator:
    """Return a fresh generator for the derived seed."""
    return np.random.default_rng(derive_seed(seed, purpose))


def as_hashable(item: Any, /) -> Hashable:
    """Hashable key for configurations, used to detect duplicate experiments.

    Dictionaries compare independently of key order, lists stay distinct from
    tuples and pydantic models include their class name, so two schemas with
    equal fields give different keys.

    >>> as_hashable({"a": 1, "b": [2]}) == as_hashable({"b": [2], "a": 1})
    True
    """
    match item:
        case Hashable():
            return item
        case pydantic.BaseModel():
            fields = {key: getattr(item, key) for key in type(item).model_fields}
            return ("model", type(item).__qualname__, as_hashable(fields))
        case dict():
            return frozenset((key, as_hashable(value)) for key, value in item.items())
        case set():
            return ("set", frozenset(item))
        case list():
            return ("list", tuple(as_hashable(value) for value in item))
        case _:
            raise TypeError(f"Unhashable object of type {type(item)}")


def config_hash(model: pydantic.BaseModel, /) -> str:
    """Stable hash of a configuration, independent of the Python process.

    ``hash(as_hashable(...))`` is salted per process, so reports use the sha256
    digest of the canonical JSON dump instead.
    """
    dump = model.model_dump_json()
    return hashlib.sha256(dump.encode("utf-8")).hexdigest()[:16]


Action = Literal["raise", "warn", "ignore"]
_ACTIONS: tuple[Action, ...] = ("raise", "warn", "ignore")


def raise_warn_ignore(
    message: str,
    *,
    action: Action,
    exception: type[Exception] = ValueError,
    warning: type[Warning] = UserWarning,
) -> None:
    """Raise ``exception``, emit ``warning`` or do nothing, depending on ``action``."""
    if action not in _ACTIONS:
        raise ValueError(
            f"{action} is not a valid action. Options are: {', '.join(_ACTIONS)}"
        )
    if action == "warn":
        warnings.warn(message, category=warning, stacklevel=3)
    elif action == "raise":
        raise exception(message)

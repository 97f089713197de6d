"""Nested configuration dictionaries addressed by dotted paths.

Overrides such as ``{"train.perturb.epsilon": 10.0}`` are expanded to nested
dictionaries here before pydantic validates them.
"""

from __future__ import annotations

import itertools
import re
from collections.abc import Iterable, Iterator
from typing import Any

from advsl.types import Config, FieldValue, FlexibleConfig, Path, StrictPath

__all__ = [
    "flexible_to_nested",
    "merge_nested_dicts",
    "nested_dict_at",
    "nested_dict_from_items",
    "nested_dict_items",
    "normalize_path",
    "path_to_str",
]

_KEY = r"[A-Za-z_][A-Za-z0-9_]*"
_STR_PATH_PATTERN = re.compile(rf"^{_KEY}(\.{_KEY})*$")
_STR_KEY_PATTERN = re.compile(rf"^{_KEY}$")


def path_to_str(p: Path, /) -> str:
    return p if isinstance(p, str) else ".".join(p)


def normalize_path(path: Path, /, *, check_keys: bool = False) -> StrictPath:
    """Normalize a path to a tuple of keys.

    >>> normalize_path("train.perturb.epsilon")
    ('train', 'perturb', 'epsilon')
    >>> normalize_path(["seed"])
    ('seed',)
    """
    match path:
        case str():
            if not _STR_PATH_PATTERN.fullmatch(path):
                raise ValueError(
                    "A string path must consist of dot-separated identifiers such "
                    f"as 'train.epochs'. Got '{path}'."
                )
            return tuple(path.split("."))
        case tuple():
            pass
        case Iterable():
            path = tuple(path)
        case _:
            raise ValueError(f"Expected a path, got {path}")

    if check_keys:
        for key in path:
            if not _STR_KEY_PATTERN.fullmatch(key):
                raise ValueError(f"Invalid key '{key}' in path {path_to_str(path)}.")
    return path


def nested_dict_from_items(
    items: Iterable[tuple[StrictPath, FieldValue | Config]], /
) -> Config:
    """Build a nested dictionary from (path, value) pairs.

    Assigning two different values to one path, or a value to a path that also
    has children, is an error.

    >>> nested_dict_from_items([(("a", "b"), 1), (("c",), 2)])
    {'a': {'b': 1}, 'c': 2}
    """
    result: dict[str, Any] = {}
    for full_path, value in items:
        *parents, key = full_path
        node = result
        for part in parents:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ValueError(
                    f"'{path_to_str(parents)}' has both a value and nested fields "
                    "assigned; one would silently overwrite the other."
                )
        if key in node:
            if isinstance(node[key], dict) or node[key] != value:
                raise ValueError(
                    f"The key '{path_to_str(full_path)}' has conflicting values "
                    f"assigned: {node[key]} and {value}."
                )
        node[key] = value
    return result


def nested_dict_at(path: Path, value: FieldValue) -> Config:
    """Return a nested dictionary holding only ``value`` at ``path``."""
    return nested_dict_from_items([(normalize_path(path), value)])


def _items(d: FlexibleConfig | Config, prefix: StrictPath) -> Iterator[tuple]:
    for subkey, value in d.items():
        path = (*prefix, *normalize_path(subkey))
        if isinstance(value, dict):
            yield from _items(value, path)
        else:
            yield path, value


def nested_dict_items(
    d: FlexibleConfig | Config, /
) -> Iterator[tuple[StrictPath, FieldValue]]:
    """Yield (path, leaf) pairs; dotted keys are expanded.

    >>> list(nested_dict_items({"a": {"b": 3}, "c.d": 2}))
    [(('a', 'b'), 3), (('c', 'd'), 2)]
    """
    if not isinstance(d, dict):
        raise TypeError(f"Expected a dictionary, got {d} of type {type(d)}.")
    return _items(d, ())


def merge_nested_dicts(
    *dicts: FlexibleConfig | Config, overwrite: bool = False
) -> Config:
    """Merge configuration dictionaries.

    Without ``overwrite`` conflicting leaves raise; with it, later dictionaries
    win.

    >>> merge_nested_dicts({"a": {"b": 2}}, {"c": 3})
    {'a': {'b': 2}, 'c': 3}
    >>> merge_nested_dicts({"a": {"b": 2}}, {"a.b": 5}, overwrite=True)
    {'a': {'b': 5}}
    """
    if not overwrite:
        return nested_dict_from_items(
            itertools.chain.from_iterable(nested_dict_items(d) for d in dicts)
        )

    res: Config = {}
    for d in dicts:
        for path, value in nested_dict_items(d):
            node: dict = res
            *parents, final = path
            for key in parents:
                if not isinstance(node.get(key), dict):
                    node[key] = {}
                node = node[key]
            node[final] = value
    return res


def flexible_to_nested(config: FlexibleConfig | Config, /) -> Config:
    """Normalize a config with dotted keys to a purely nested one."""
    return nested_dict_from_items(nested_dict_items(config))

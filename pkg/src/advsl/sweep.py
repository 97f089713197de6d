"""Programmatic sweeps over experiment configurations.

A sweep is a list of partial configuration dictionaries that are combined with
``config_product`` / ``config_zip`` / ``config_chain`` and finally validated
into models with ``initialize``.

>>> from advsl.config import PerturbConfig
>>> configs = config_product(
...     field("mode", ["random", "adversarial"]), field("epsilon", [1.0, 10.0])
... )
>>> [(c.mode, c.epsilon) for c in initialize(PerturbConfig, configs)]
[('random', 1.0), ('random', 10.0), ('adversarial', 1.0), ('adversarial', 10.0)]
"""

from __future__ import annotations

import itertools
from collections.abc import Hashable, Iterable

import pydantic

from advsl._nested_dict import (
    flexible_to_nested,
    merge_nested_dicts,
    nested_dict_at,
    normalize_path,
)
from advsl._utils import as_hashable
from advsl.types import (
    BaseModelT,
    Chainer,
    Combiner,
    Config,
    FieldValue,
    FlexibleConfig,
    Path,
)

__all__ = [
    "check_unique",
    "config_chain",
    "config_combine",
    "config_product",
    "config_zip",
    "field",
    "initialize",
    "model_replace",
]


def field(path: Path, /, values: Iterable[FieldValue]) -> list[Config]:
    """Assign various values to a (nested) field.

    Parameters
    ----------
    path :
        Dot-separated string (``train.perturb.epsilon``) or tuple of keys.
    values :
        The values to assign. They must be hashable or pydantic models so that
        one configuration cannot mutate another.

    >>> field("train.epochs", [5, 6])
    [{'train': {'epochs': 5}}, {'train': {'epochs': 6}}]
    """
    path = normalize_path(path, check_keys=True)
    if isinstance(values, str):
        raise ValueError("values must be iterable, but got a string")

    values = list(values)
    for value in values:
        if not isinstance(value, pydantic.BaseModel | Hashable):
            raise ValueError(
                f"Value {value} of type {type(value)} is not hashable; mutable values "
                "could be shared between configurations."
            )
    return [nested_dict_at(path, value) for value in values]


def config_combine(
    *configs: Iterable[Config],
    combiner: Combiner | None = None,
    chainer: Chainer | None = None,
) -> list[Config]:
    """Combine configurations with a tuple-yielding ``combiner`` or a ``chainer``.

    The output is again a valid input to every combiner.
    """
    if combiner is not None:
        if chainer is not None:
            raise ValueError("Can only provide `combiner` or `chainer`, not both")
        return [merge_nested_dicts(*combo) for combo in combiner(*configs)]
    elif chainer is not None:
        res = list(chainer(*configs))
        if res and not isinstance(res[0], dict):
            raise ValueError(
                f"Chained items are not dictionaries, but {type(res[0])}. Did you "
                "pass a valid chainer function?"
            )
        return res
    else:
        raise ValueError("Must provide one of `combiner` or `chainer`")


def config_product(*configs: Iterable[Config]) -> list[Config]:
    """Cartesian product of configurations.

    >>> config_product(field("a", [1, 2]), field("b", [3]))
    [{'a': 1, 'b': 3}, {'a': 2, 'b': 3}]
    """
    return config_combine(*configs, combiner=itertools.product)


def _safe_zip(*configs: Iterable[Config]) -> Iterable[tuple[Config, ...]]:
    return zip(*configs, strict=True)


def config_zip(*configs: Iterable[Config]) -> list[Config]:
    """Element-wise combination; all inputs must have the same length.

    >>> config_zip(field("a", [1, 2]), field("b", [3, 4]))
    [{'a': 1, 'b': 3}, {'a': 2, 'b': 4}]
    """
    return config_combine(*configs, combiner=_safe_zip)


def config_chain(*configs: Iterable[Config]) -> list[Config]:
    """Concatenate configurations.

    >>> config_chain(field("a", [1]), field("b", [3, 4]))
    [{'a': 1}, {'b': 3}, {'b': 4}]
    """
    return config_combine(*configs, chainer=itertools.chain)


def initialize(
    model: type[BaseModelT],
    configs: Iterable[Config],
    *,
    constant: FlexibleConfig | None = None,
    default: FlexibleConfig | None = None,
) -> list[BaseModelT]:
    """Validate partial configurations into models.

    Parameters
    ----------
    model:
        The pydantic model class to instantiate.
    configs:
        Partial configuration dictionaries.
    constant:
        Values shared by all models; conflicts with ``configs`` are errors.
    default:
        Values shared by all models that ``configs`` may overwrite.
    """
    configs = [flexible_to_nested(config) for config in configs]
    if constant is not None:
        constant = flexible_to_nested(constant)
        configs = config_product(configs, [constant])
    if default is not None:
        if not isinstance(default, dict):
            raise TypeError(
                f"Expected dictionary for input 'default', got '{type(default)}'."
            )
        configs = [
            merge_nested_dicts(default, config, overwrite=True) for config in configs
        ]
    return [model.model_validate(config) for config in configs]


def model_replace(model: BaseModelT, *, values: FlexibleConfig) -> BaseModelT:
    """Copy of ``model`` with (nested) fields replaced and re-validated.

    Values that were explicitly set on ``model`` stay marked as set; the result
    is validated from scratch so that invalid overrides raise.

    >>> from advsl.config import TrainConfig
    >>> model_replace(TrainConfig(), values={"perturb.epsilon": 10.0}).perturb.epsilon
    10.0
    """
    dump = model.model_dump(exclude_unset=True)
    merged = merge_nested_dicts(dump, values, overwrite=True)
    return model.model_validate(merged)


def check_unique(
    *models_: Config | pydantic.BaseModel | Iterable[Config | pydantic.BaseModel],
    raise_exception: bool = True,
) -> bool:
    """Check that no configuration appears twice.

    Raises
    ------
    ValueError
        If a configuration is duplicated and ``raise_exception`` is set.
    """
    seen = set()
    for models in models_:
        if isinstance(models, pydantic.BaseModel | dict):
            models = [models]
        for model in models:
            key = as_hashable(model)
            if key in seen:
                if raise_exception:
                    raise ValueError(f"The following model is not unique: {model}.")
                return False
            seen.add(key)
    return True

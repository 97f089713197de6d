"""Read and write configuration files in json, yaml or toml."""

from __future__ import annotations

import json
import logging
import os
import sys
from pathlib import Path
from typing import Any

import pydantic

from advsl.config import ExperimentConfig
from advsl.errors import FormatError
from advsl.types import BaseModelT

__all__ = ["load", "load_dict", "write"]

logger = logging.getLogger(__name__)

SUFFIXES = (".json", ".yaml", ".yml", ".toml")


def load_dict(source: os.PathLike | str, /) -> dict[str, Any]:
    """Parse a configuration file into a plain dictionary."""
    source = Path(source)
    try:
        if source.suffix == ".json":
            content = json.loads(source.read_text(encoding="utf-8"))
        elif source.suffix in {".yaml", ".yml"}:
            import yaml  # type: ignore[import-untyped]

            try:
                content = yaml.safe_load(source.read_text(encoding="utf-8"))
            except yaml.YAMLError as e:
                msg = f"Cannot parse configuration: {e}"
                raise FormatError(msg, path=source) from e
        elif source.suffix == ".toml":
            if sys.version_info < (3, 11):
                import tomli
            else:
                import tomllib as tomli

            with source.open("rb") as file:
                content = tomli.load(file)
        else:
            raise FormatError(
                f"Unsupported file type '{source.suffix}'. Use one of: "
                f"{', '.join(SUFFIXES)}",
                path=source,
            )
    except FormatError:
        raise
    except ValueError as e:
        # json and toml decode errors derive from ValueError
        raise FormatError(f"Cannot parse configuration: {e}", path=source) from e

    if content is None:
        content = {}
    if not isinstance(content, dict):
        raise FormatError(
            f"Expected a mapping at the top level, got {type(content).__name__}.",
            path=source,
        )
    return content


def load(
    source: os.PathLike | str,
    /,
    *,
    model: type[BaseModelT] = ExperimentConfig,  # type: ignore[assignment]
) -> BaseModelT:
    """Load and validate a configuration file.

    Parameters
    ----------
    source :
        A ``.json``, ``.yaml``, ``.yml`` or ``.toml`` file.
    model :
        The schema to validate against.

    Raises
    ------
    FormatError
        If the file cannot be parsed.
    pydantic.ValidationError
        If the content does not match the schema.
    """
    return model.model_validate(load_dict(source))


def write(
    target: os.PathLike | str,
    /,
    *,
    model: pydantic.BaseModel,
    exclude_unset: bool = False,
    exclude_defaults: bool = False,
    overwrite: bool = False,
) -> None:
    """Write a configuration to a file.

    Parameters
    ----------
    target :
        The file to write to, its suffix selects the format.
    model :
        The configuration to write.
    exclude_unset :
        Exclude fields that were never set.
    exclude_defaults :
        Exclude fields that hold their default value.
    overwrite :
        Replace an existing file instead of raising ``FileExistsError``.
    """
    target = Path(target)
    if target.exists() and not overwrite:
        raise FileExistsError(f"File already exists: {target}")

    # mode="json" runs serializers, e.g. for Path objects
    dump = model.model_dump(
        mode="json", exclude_unset=exclude_unset, exclude_defaults=exclude_defaults
    )
    if target.suffix == ".json":
        target.write_text(json.dumps(dump, indent=2, sort_keys=True) + "\n", "utf-8")
    elif target.suffix in {".yaml", ".yml"}:
        import yaml

        target.write_text(yaml.safe_dump(dump, sort_keys=True), encoding="utf-8")
    elif target.suffix == ".toml":
        import tomli_w

        with target.open("wb") as f:
            tomli_w.dump(_drop_none(dump), f)
    else:
        raise ValueError(f"Unsupported file type: {target.suffix}")
    logger.info("Wrote configuration to %s", target)


def _drop_none(d: dict[str, Any]) -> dict[str, Any]:
    """toml has no null; unset optional fields are left out instead."""
    return {
        k: _drop_none(v) if isinstance(v, dict) else v
        for k, v in d.items()
        if v is not None
    }

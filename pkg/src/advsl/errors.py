"""Exception hierarchy shared by the library and the command line."""

from __future__ import annotations

import contextlib
import os
from collections.abc import Iterator

__all__ = [
    "AdvslError",
    "ConfigError",
    "ContractViolation",
    "FormatError",
    "NonFiniteLossError",
    "utf8_errors",
]


class AdvslError(Exception):
    """Base class for all errors raised on purpose by ``advsl``."""

    exit_code: int = 1


class ContractViolation(AdvslError, ValueError):
    """An operation was called with inputs outside of its contract."""

    exit_code = 1


class FormatError(AdvslError, ValueError):
    """A file could not be parsed.

    Parameters
    ----------
    message :
        Description of the problem.
    path :
        The offending file, if known.
    line :
        The 1-based line number within ``path``, if known.
    """

    exit_code = 2

    def __init__(
        self,
        message: str,
        *,
        path: os.PathLike | str | None = None,
        line: int | None = None,
    ) -> None:
        self.path = None if path is None else str(path)
        self.line = line
        location = ""
        if self.path is not None:
            location = f"{self.path}"
            if line is not None:
                location += f":{line}"
            location += ": "
        elif line is not None:
            location = f"line {line}: "
        super().__init__(f"{location}{message}")


class ConfigError(FormatError):
    """A configuration value or referenced file is invalid."""

    def __init__(
        self,
        message: str,
        *,
        field: str,
        path: os.PathLike | str | None = None,
    ) -> None:
        self.field = field
        super().__init__(f"field `{field}`: {message}", path=path)


class NonFiniteLossError(ContractViolation):
    """Training produced a NaN or infinite loss."""

    def __init__(self, loss: float, *, index: int) -> None:
        self.index = index
        super().__init__(
            f"Non-finite loss {loss} for training example {index}. Lower the "
            f"learning rate or the perturbation budget, and check the input vectors "
            f"for extreme values."
        )


@contextlib.contextmanager
def utf8_errors(path: os.PathLike | str) -> Iterator[None]:
    """Report undecodable bytes while reading ``path`` as a :class:`FormatError`."""
    try:
        yield
    except UnicodeDecodeError as e:
        raise FormatError(f"Not UTF-8 text: {e.reason}.", path=path) from e

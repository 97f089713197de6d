"""Code-switched challenge sets built with a bilingual dictionary.

Every token with a dictionary entry is replaced by one translation, in place and
in a single pass: a translation is never looked up again.
"""

from __future__ import annotations

import logging
import os
from collections import Counter
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import pydantic
from pydantic import Field

from advsl._utils import raise_warn_ignore, rng_for
from advsl.config import BaseModel
from advsl.errors import ContractViolation, FormatError, utf8_errors
from advsl.textdata import Document

__all__ = [
    "BilingualDictionary",
    "SwitchStats",
    "code_switch",
    "load_dictionary",
    "switch_stats",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BilingualDictionary:
    """Source words mapped to their translations in file order.

    Words with several translations get one of them, picked once per word by a
    generator seeded from ``seed`` and the word, so the pick does not depend on
    the corpus or on the other entries.

    >>> d = BilingualDictionary({"cat": ("gato", "felino"), "the": ("el",)}, seed=0)
    >>> d.translate("the"), d.translate("cat") in {"gato", "felino"}
    ('el', True)
    """

    entries: Mapping[str, tuple[str, ...]]
    seed: int = 0
    lowercase: bool = True
    chosen: dict[str, str] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        entries = {}
        for source, targets in self.entries.items():
            key = self.normalize(source)
            if key in entries:
                raise ContractViolation(f"Source word '{key}' appears twice.")
            if not targets:
                raise ContractViolation(f"Source word '{key}' has no translation.")
            entries[key] = tuple(targets)
        object.__setattr__(self, "entries", entries)
        chosen = {}
        for source, targets in entries.items():
            if len(targets) == 1:
                chosen[source] = targets[0]
            else:
                pick = rng_for(self.seed, source).integers(len(targets))
                chosen[source] = targets[int(pick)]
        object.__setattr__(self, "chosen", chosen)

    def normalize(self, word: str) -> str:
        return word.lower() if self.lowercase else word

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, word: object) -> bool:
        return isinstance(word, str) and self.normalize(word) in self.chosen

    def translate(self, word: str) -> str:
        """The fixed translation of ``word``, or ``word`` itself without an entry."""
        return self.chosen.get(self.normalize(word), word)


def load_dictionary(
    path: os.PathLike | str, seed: int = 0, *, lowercase: bool = True
) -> BilingualDictionary:
    """Read a dictionary with one ``source target`` pair per line.

    The target is everything after the first run of whitespace, so multi-word
    translations are kept whole. Repeated source words accumulate translations
    in file order; repeated pairs are kept once.

    Raises
    ------
    FormatError
        For a nonblank line without a target, naming the line.
    """
    path = Path(path)
    entries: dict[str, list[str]] = {}
    with utf8_errors(path), path.open(encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            parts = line.split(maxsplit=1)
            if len(parts) != 2:
                raise FormatError(
                    f"Expected 'source target', got {line.strip()!r}.",
                    path=path,
                    line=lineno,
                )
            source, target = parts[0], parts[1].strip()
            if lowercase:
                source = source.lower()
            targets = entries.setdefault(source, [])
            if target not in targets:
                targets.append(target)
    logger.info("Read %d dictionary entries from %s", len(entries), path)
    return BilingualDictionary(
        {k: tuple(v) for k, v in entries.items()}, seed=seed, lowercase=lowercase
    )


class SwitchStats(BaseModel, frozen=True):
    """How much of a corpus a dictionary replaced."""

    types: int = Field(ge=0)
    replaced_types: int = Field(ge=0)
    tokens: int = Field(ge=0)
    replaced_tokens: int = Field(ge=0)
    vocab_replaced_ratio: float = Field(ge=0.0, le=1.0)
    token_replaced_ratio: float = Field(ge=0.0, le=1.0)

    @pydantic.model_validator(mode="after")
    def _consistent(self) -> SwitchStats:
        if self.replaced_types > self.types or self.replaced_tokens > self.tokens:
            raise ValueError("Replaced counts exceed the totals.")
        return self


def switch_stats(
    corpus: Iterable[Sequence[str]], dictionary: BilingualDictionary
) -> SwitchStats:
    """Type and token replacement ratios of the original corpus.

    >>> d = BilingualDictionary({"the": ("el",), "cat": ("gato",)})
    >>> s = switch_stats([("the cat sat on the mat".split())], d)
    >>> s.vocab_replaced_ratio, s.token_replaced_ratio
    (0.4, 0.5)
    """
    counts = Counter(dictionary.normalize(t) for tokens in corpus for t in tokens)
    replaced = {word: n for word, n in counts.items() if word in dictionary}
    tokens = sum(counts.values())
    replaced_tokens = sum(replaced.values())
    return SwitchStats(
        types=len(counts),
        replaced_types=len(replaced),
        tokens=tokens,
        replaced_tokens=replaced_tokens,
        vocab_replaced_ratio=len(replaced) / len(counts) if counts else 0.0,
        token_replaced_ratio=replaced_tokens / tokens if tokens else 0.0,
    )


def code_switch(
    corpus: Sequence[Document],
    dictionary: BilingualDictionary,
    *,
    on_no_coverage: Literal["raise", "warn", "ignore"] = "warn",
) -> tuple[list[Document], SwitchStats]:
    """Replace every covered token by its translation.

    Labels, order and the number of tokens per document are kept; a multi-word
    translation stays a single token position. Statistics describe the input
    corpus.

    Parameters
    ----------
    corpus :
        Documents to switch.
    dictionary :
        The translations to use.
    on_no_coverage :
        ``"raise"``, ``"warn"`` or ``"ignore"`` when no token was replaced.
    """
    switched = [
        Document(
            tuple(dictionary.translate(t) for t in doc.tokens), doc.label, uid=doc.uid
        )
        for doc in corpus
    ]
    stats = switch_stats((doc.tokens for doc in corpus), dictionary)
    if stats.tokens and not stats.replaced_tokens:
        message = "The dictionary covers none of the corpus tokens."
        if on_no_coverage == "warn":
            logger.warning(message)
        raise_warn_ignore(message, action=on_no_coverage, exception=ContractViolation)
    logger.info(
        "Replaced %.1f%% of types and %.1f%% of tokens",
        100 * stats.vocab_replaced_ratio,
        100 * stats.token_replaced_ratio,
    )
    return switched, stats

"""Corpora, vocabularies and word vectors.

Text is split on whitespace only. Corpora are JSON Lines files with a ``text``
field and an optional ``label`` class name; word vectors use the plain text
format ``<count> <dim>`` followed by one ``<word> <v1> ... <vdim>`` line per word.
"""

from __future__ import annotations

import collections
import dataclasses
import json
import logging
import os
import zlib
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Literal

import numpy as np

from advsl.errors import ContractViolation, FormatError, utf8_errors
from advsl.types import FloatArray, IntArray

__all__ = [
    "PAD",
    "PAD_ID",
    "UNK",
    "UNK_ID",
    "Dataset",
    "Document",
    "EmbeddingTable",
    "Example",
    "Vocabulary",
    "build_vocab",
    "encode_corpus",
    "label_names",
    "load_vectors",
    "pad_batch",
    "random_table",
    "read_corpus",
    "save_vectors",
    "tokenize",
    "truncate_pad",
    "write_corpus",
]

logger = logging.getLogger(__name__)

PAD = "<pad>"
UNK = "<unk>"
PAD_ID = 0
UNK_ID = 1


def tokenize(text: str, *, lowercase: bool = True) -> list[str]:
    """Split on Unicode whitespace.

    >>> tokenize("The cat sat")
    ['the', 'cat', 'sat']
    >>> tokenize("Wetter Morgen", lowercase=False)
    ['Wetter', 'Morgen']
    >>> tokenize("  ")
    ['<unk>']
    """
    tokens = text.split()
    if not tokens:
        return [UNK]
    if lowercase:
        tokens = [token.lower() for token in tokens]
    return tokens


@dataclass(frozen=True)
class Vocabulary:
    """Bijection between tokens and ids; ``<pad>`` is 0 and ``<unk>`` is 1."""

    tokens: tuple[str, ...]
    index: Mapping[str, int] = dataclasses.field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.tokens[:2] != (PAD, UNK):
            raise ContractViolation(f"Vocabulary must start with {PAD} and {UNK}.")
        index = {token: i for i, token in enumerate(self.tokens)}
        if len(index) != len(self.tokens):
            raise ContractViolation("Vocabulary tokens must be unique.")
        object.__setattr__(self, "index", index)

    @classmethod
    def from_words(cls, words: Iterable[str]) -> Vocabulary:
        """Special tokens followed by ``words`` in first-occurrence order."""
        return cls(tuple(dict.fromkeys([PAD, UNK, *words])))

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: object) -> bool:
        return token in self.index

    def encode(self, tokens: Iterable[str]) -> tuple[int, ...]:
        """Map tokens to ids; unknown tokens become ``<unk>``."""
        return tuple(self.index.get(token, UNK_ID) for token in tokens)


def build_vocab(corpora: Iterable[Sequence[str]], *, min_count: int = 1) -> Vocabulary:
    """Collect all tokens seen at least ``min_count`` times.

    >>> build_vocab([["a", "b", "a"]], min_count=2).tokens
    ('<pad>', '<unk>', 'a')
    >>> build_vocab([["x", "y"], ["x"]]).tokens
    ('<pad>', '<unk>', 'x', 'y')
    """
    if min_count < 1:
        raise ContractViolation(f"min_count must be at least 1, got {min_count}.")
    # Counter preserves first-occurrence order
    counts = collections.Counter(token for tokens in corpora for token in tokens)
    return Vocabulary.from_words(w for w, c in counts.items() if c >= min_count)


@dataclass(frozen=True)
class Example:
    """A tokenized text with an optional class id."""

    token_ids: tuple[int, ...]
    label: int | None = None
    weight: float = 1.0
    origin: Literal["gold", "pseudo"] = "gold"
    uid: int = 0
    """Position of the text in its source file (0-based)."""

    def __post_init__(self) -> None:
        if not self.token_ids:
            raise ContractViolation(f"Example {self.uid} has no tokens.")
        if self.origin == "pseudo" and self.label is None:
            raise ContractViolation(f"Pseudo-labeled example {self.uid} has no label.")
        if not self.weight >= 0:
            raise ContractViolation(f"Example {self.uid} has weight {self.weight}.")


@dataclass(frozen=True)
class Dataset:
    """An ordered collection of examples over a fixed label set."""

    examples: tuple[Example, ...]
    num_classes: int
    name: str = ""
    label_names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "examples", tuple(self.examples))
        if self.label_names and len(self.label_names) != self.num_classes:
            raise ContractViolation(
                f"{len(self.label_names)} label names for {self.num_classes} classes."
            )
        for example in self.examples:
            if example.label is not None and not 0 <= example.label < self.num_classes:
                raise ContractViolation(
                    f"Label {example.label} of example {example.uid} in dataset "
                    f"'{self.name}' is outside [0, {self.num_classes})."
                )

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self) -> Iterator[Example]:
        return iter(self.examples)

    def __getitem__(self, i: int) -> Example:
        return self.examples[i]

    def replace(self, examples: Iterable[Example], **kwargs: Any) -> Dataset:
        examples = tuple(examples)
        return dataclasses.replace(self, examples=examples, **kwargs)

    def labels(self) -> IntArray:
        """Gold labels; requires a fully labeled dataset."""
        self.require_labeled()
        return np.array([e.label for e in self.examples], dtype=np.int64)

    def require_labeled(self) -> None:
        """Raise naming the first example without a label."""
        for example in self.examples:
            if example.label is None:
                raise ContractViolation(
                    f"Dataset '{self.name}' must be labeled, but line "
                    f"{example.uid + 1} has no label."
                )

    def require_unlabeled(self) -> None:
        for example in self.examples:
            if example.label is not None and example.origin == "gold":
                raise ContractViolation(
                    f"Dataset '{self.name}' must be unlabeled, but line "
                    f"{example.uid + 1} carries a gold label."
                )


@dataclass(frozen=True)
class Document:
    """A raw corpus line after tokenization."""

    tokens: tuple[str, ...]
    label: str | None = None
    uid: int = 0

    @property
    def text(self) -> str:
        return " ".join(self.tokens)


def read_corpus(path: os.PathLike | str, *, lowercase: bool = True) -> list[Document]:
    """Read a JSON Lines corpus.

    Raises
    ------
    FormatError
        If a line is not a JSON object with a string ``text`` field.
    """
    path = Path(path)
    documents = []
    with utf8_errors(path), path.open(encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise FormatError(f"Invalid JSON: {e.msg}", path=path, line=lineno)
            if not isinstance(record, dict) or not isinstance(record.get("text"), str):
                raise FormatError(
                    "Expected an object with a string field 'text'.",
                    path=path,
                    line=lineno,
                )
            label = record.get("label")
            if label is not None and not isinstance(label, str):
                raise FormatError(
                    "Field 'label' must be a string.", path=path, line=lineno
                )
            tokens = tokenize(record["text"], lowercase=lowercase)
            documents.append(Document(tuple(tokens), label, uid=lineno - 1))
    logger.info("Read %d documents from %s", len(documents), path)
    return documents


def write_corpus(documents: Iterable[Document], path: os.PathLike | str) -> None:
    """Write documents in the corpus JSON Lines schema."""
    with Path(path).open("w", encoding="utf-8") as f:
        for doc in documents:
            record: dict[str, str] = {"text": doc.text}
            if doc.label is not None:
                record["label"] = doc.label
            f.write(json.dumps(record, ensure_ascii=False) + "\n")


def label_names(documents: Iterable[Document]) -> tuple[str, ...]:
    """Class names in sorted order; the position is the class id.

    >>> label_names([Document(("a",), "sports"), Document(("b",), "arts")])
    ('arts', 'sports')
    """
    return tuple(sorted({doc.label for doc in documents if doc.label is not None}))


def encode_corpus(
    documents: Sequence[Document],
    vocab: Vocabulary,
    labels: Sequence[str],
    *,
    name: str = "",
    keep_labels: bool = True,
) -> Dataset:
    """Turn documents into a :class:`Dataset` over ``labels``.

    ``keep_labels=False`` drops labels, e.g. for the unlabeled pool.
    """
    label_ids = {label: i for i, label in enumerate(labels)}
    examples = []
    for doc in documents:
        label = None
        if keep_labels and doc.label is not None:
            if doc.label not in label_ids:
                raise ContractViolation(
                    f"Line {doc.uid + 1} of '{name}' has label '{doc.label}', which is "
                    f"not one of the {len(labels)} known classes: {', '.join(labels)}."
                )
            label = label_ids[doc.label]
        examples.append(Example(vocab.encode(doc.tokens), label, uid=doc.uid))
    return Dataset(tuple(examples), len(labels), name=name, label_names=tuple(labels))


@dataclass(frozen=True)
class EmbeddingTable:
    """Word vectors for a vocabulary; row 0 (``<pad>``) is always zero."""

    vocab: Vocabulary
    matrix: FloatArray
    frozen: bool = False

    def __post_init__(self) -> None:
        matrix = np.array(self.matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != len(self.vocab):
            raise ContractViolation(
                f"Embedding matrix of shape {matrix.shape} does not match a vocabulary "
                f"of {len(self.vocab)} tokens."
            )
        if not np.all(np.isfinite(matrix)):
            raise ContractViolation("Embedding matrix contains non-finite values.")
        if np.any(matrix[PAD_ID] != 0):
            raise ContractViolation("The padding row must be the zero vector.")
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])

    def replace(self, matrix: FloatArray) -> EmbeddingTable:
        return dataclasses.replace(self, matrix=matrix)


def _fallback_row(word: str, dim: int) -> FloatArray:
    """Deterministic per-word uniform initialization in [-0.5/d, 0.5/d]."""
    rng = np.random.default_rng(zlib.crc32(word.encode("utf-8")))
    return rng.uniform(-0.5 / dim, 0.5 / dim, size=dim)


def random_table(
    vocab: Vocabulary, dim: int, *, frozen: bool = False
) -> EmbeddingTable:
    """Embedding table with every row drawn from the per-word fallback scheme."""
    matrix = np.stack([_fallback_row(token, dim) for token in vocab.tokens])
    matrix[PAD_ID] = 0.0
    return EmbeddingTable(vocab, matrix, frozen=frozen)


def _parse_vectors(path: Path) -> tuple[int, dict[str, FloatArray]]:
    rows: dict[str, FloatArray] = {}
    with utf8_errors(path), path.open(encoding="utf-8") as f:
        header = f.readline().split()
        try:
            count, dim = (int(x) for x in header)
        except ValueError:
            raise FormatError(
                "Header must be '<count> <dim>' with two integers.", path=path, line=1
            )
        if count < 0 or dim < 1:
            raise FormatError(f"Invalid header values {header}.", path=path, line=1)

        for lineno, line in enumerate(f, start=2):
            parts = line.rstrip().split(" ")
            if parts == [""]:
                continue
            if len(parts) != dim + 1:
                raise FormatError(
                    f"Expected a word and {dim} values, got {len(parts) - 1} values.",
                    path=path,
                    line=lineno,
                )
            try:
                vector = np.array([float(x) for x in parts[1:]], dtype=np.float64)
            except ValueError as e:
                raise FormatError(f"Invalid number: {e}", path=path, line=lineno)
            if not np.all(np.isfinite(vector)):
                raise FormatError("Non-finite value.", path=path, line=lineno)
            if parts[0] in rows:
                raise FormatError(
                    f"Duplicate word '{parts[0]}'.", path=path, line=lineno
                )
            rows[parts[0]] = vector

    if len(rows) != count:
        raise FormatError(
            f"Header announces {count} vectors but the file holds {len(rows)}.",
            path=path,
            line=1,
        )
    return dim, rows


def load_vectors(
    path: os.PathLike | str,
    vocab: Vocabulary | Literal["induce"] = "induce",
    *,
    frozen: bool = True,
) -> EmbeddingTable:
    """Load a word-vector file.

    Parameters
    ----------
    path :
        File in the word-vector text format.
    vocab :
        Vocabulary to fill. Words missing from the file get the per-word seeded
        fallback initialization. With ``"induce"``, the vocabulary is built from
        the words in the file.
    frozen :
        Whether the embeddings are excluded from training.

    Raises
    ------
    FormatError
        On a malformed header, a line with the wrong number of values, or a
        duplicated word; the message names the line number.
    """
    path = Path(path)
    dim, vectors = _parse_vectors(path)

    if vocab == "induce":
        vocab = Vocabulary.from_words(vectors)

    missing = 0
    matrix = np.empty((len(vocab), dim), dtype=np.float64)
    for i, token in enumerate(vocab.tokens):
        if token in vectors:
            matrix[i] = vectors[token]
        else:
            matrix[i] = _fallback_row(token, dim)
            missing += token not in (PAD, UNK)
    matrix[PAD_ID] = 0.0
    if missing:
        logger.warning(
            "%d of %d vocabulary words have no vector in %s",
            missing,
            len(vocab) - 2,
            path,
        )
    return EmbeddingTable(vocab, matrix, frozen=frozen)


def save_vectors(table: EmbeddingTable, path: os.PathLike | str) -> None:
    """Write all rows except ``<pad>``; values round-trip exactly."""
    tokens = table.vocab.tokens[1:]
    with Path(path).open("w", encoding="utf-8") as f:
        f.write(f"{len(tokens)} {table.dim}\n")
        for token, row in zip(tokens, table.matrix[1:], strict=True):
            f.write(" ".join([token, *map(repr, row.tolist())]) + "\n")


def truncate_pad(ids: Sequence[int], max_len: int) -> tuple[IntArray, IntArray]:
    """Cut to the first ``max_len`` ids or right-pad with ``<pad>``.

    >>> truncate_pad([5, 6, 7], 2)
    (array([5, 6]), array([1, 1]))
    >>> truncate_pad([5], 3)
    (array([5, 0, 0]), array([1, 0, 0]))
    """
    if max_len < 1:
        raise ContractViolation(f"max_len must be at least 1, got {max_len}.")
    n = min(len(ids), max_len)
    out = np.full(max_len, PAD_ID, dtype=np.int64)
    out[:n] = ids[:n]
    mask = np.zeros(max_len, dtype=np.int64)
    mask[:n] = 1
    return out, mask


def pad_batch(
    examples: Iterable[Example], max_len: int
) -> tuple[IntArray, IntArray]:
    """Stack :func:`truncate_pad` results into ``(B, max_len)`` arrays."""
    pairs = [truncate_pad(e.token_ids, max_len) for e in examples]
    if not pairs:
        empty = np.zeros((0, max_len), dtype=np.int64)
        return empty, empty.copy()
    ids, masks = zip(*pairs, strict=True)
    return np.stack(ids), np.stack(masks)

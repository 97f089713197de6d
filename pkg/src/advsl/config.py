"""Configuration schemas.

All experiment settings are ``pydantic`` models built on :class:`BaseModel`, which
forbids unknown fields so that a typo in a config file is an error instead of a
silently ignored setting.
"""

from __future__ import annotations

from pathlib import Path
from typing import Literal

import pydantic
from pydantic import (
    Field,
    NonNegativeFloat,
    NonNegativeInt,
    PositiveFloat,
    PositiveInt,
)

from advsl._utils import derive_seed
from advsl.errors import ConfigError
from advsl.types import (
    Arch,
    LossMode,
    NormScope,
    PerturbMode,
    RetrainMode,
    ValidationSplit,
)

__all__ = [
    "CONDITIONS",
    "BaseModel",
    "ExperimentConfig",
    "ModelConfig",
    "PathsConfig",
    "PerturbConfig",
    "SelfLearnConfig",
    "SyntheticConfig",
    "TrainConfig",
    "clic_config",
    "mldoc_config",
    "synthetic_config",
]


class BaseModel(
    pydantic.BaseModel,
    extra="forbid",
    validate_assignment=True,
    arbitrary_types_allowed=False,
    validate_return=True,
):
    """Base model with validation enabled by default."""


class PerturbConfig(BaseModel):
    """How the additive input perturbation is built."""

    mode: PerturbMode = "adversarial"
    epsilon: NonNegativeFloat = 1.0
    seed: int = 0
    norm_scope: NormScope = "global"

    @property
    def effective_mode(self) -> PerturbMode:
        """A zero budget behaves exactly like no perturbation."""
        return "none" if self.epsilon == 0 else self.mode


class TrainConfig(BaseModel):
    epochs: PositiveInt = 5
    batch_size: PositiveInt = 64
    learning_rate: PositiveFloat = 2e-5
    perturb: PerturbConfig = Field(default_factory=PerturbConfig)
    loss_mode: LossMode = "adv_only"
    shuffle_seed: int = 0
    max_len: PositiveInt = 96
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    adam_eps: PositiveFloat = 1e-8


class SelfLearnConfig(BaseModel):
    """Self-learning loop settings; training itself uses :class:`TrainConfig`."""

    k_t: PositiveInt = 50
    patience: PositiveInt = 2
    max_iterations: PositiveInt = 10
    retrain_mode: RetrainMode = "continue"


class ModelConfig(BaseModel):
    arch: Arch = "linear"
    hidden: PositiveInt = 64
    embeddings: Literal["pretrained", "random"] = "pretrained"
    dim: PositiveInt = 300
    freeze: bool | None = None
    """``None``: loaded vectors are frozen, random ones are trained."""
    lowercase: bool = True
    min_count: PositiveInt = 1


class PathsConfig(BaseModel):
    train: Path | None = None
    unlabeled: Path | None = None
    validation: Path | None = None
    test: Path | None = None
    vectors: Path | None = None
    dictionary: Path | None = None
    checkpoint: Path | None = None
    output_dir: Path = Path("runs/latest")

    def require(self, *names: str) -> tuple[Path, ...]:
        """Check that the named input files are configured and exist.

        >>> PathsConfig().require()
        ()
        """
        found = []
        for name in names:
            value = getattr(self, name)
            if value is None:
                raise ConfigError("is required for this command", field=f"paths.{name}")
            if not Path(value).is_file():
                raise ConfigError(
                    f"file does not exist: {value}", field=f"paths.{name}", path=value
                )
            found.append(Path(value))
        return tuple(found)


CONDITIONS = (
    "none",
    "random",
    "adversarial",
    "adversarial_self_learning",
    "self_learning",
    "random_self_learning",
)
"""Synthetic benchmark conditions in report order."""


class SyntheticConfig(BaseModel):
    """Generator and run settings of the synthetic cross-lingual benchmark.

    Source word vectors have unit spread in ``dim - minor_dims`` major
    coordinates and ``minor_scale`` spread in the ``minor_dims`` minor ones.
    Topic words of a class additionally carry the class direction: length
    ``center_norm`` in the major coordinates and ``minor_signal`` in the minor
    ones. The minor class signal separates source documents well but sits
    below the perturbation budget of a pooled document, and the target noise
    buries it.
    """

    num_classes: PositiveInt = 4
    words_per_class: PositiveInt = 8
    background_words: PositiveInt = 80
    dim: PositiveInt = 24
    minor_dims: NonNegativeInt = 16
    center_norm: NonNegativeFloat = 1.8
    minor_scale: NonNegativeFloat = 0.01
    minor_signal: NonNegativeFloat = 0.16
    noise: NonNegativeFloat = 0.3
    noise_scale: Literal["coordinate", "vector"] = "coordinate"
    """``"coordinate"``: each coordinate of a target word's displacement has
    standard deviation ``noise`` times the mean source norm. ``"vector"``
    divides that by ``sqrt(dim)``, so the displacement norm is about ``noise``
    times the mean source norm."""
    topic_prob: float = Field(default=0.4, gt=0.0, le=1.0)
    switch_coverage: float = Field(default=0.5, ge=0.0, le=1.0)
    """Share of source words the code-switching dictionary translates."""
    min_len: PositiveInt = 20
    max_len: PositiveInt = 40
    n_train: PositiveInt = 500
    n_validation: PositiveInt = 500
    n_unlabeled: PositiveInt = 1000
    n_test: PositiveInt = 1000
    num_seeds: PositiveInt = 5
    seeds: tuple[int, ...] | None = None
    conditions: tuple[str, ...] = CONDITIONS[:4]
    validation: ValidationSplit = "switched"
    """Model selection split: source validation, source validation code-switched
    with the dictionary, or the labeled target validation split."""

    @pydantic.field_validator("conditions")
    @classmethod
    def _known_conditions(cls, value: tuple[str, ...]) -> tuple[str, ...]:
        unknown = set(value) - set(CONDITIONS)
        if unknown:
            raise ValueError(
                f"Unknown conditions {sorted(unknown)}. "
                f"Options: {', '.join(CONDITIONS)}"
            )
        if len(set(value)) != len(value):
            raise ValueError("Conditions must be unique.")
        return tuple(c for c in CONDITIONS if c in value)

    @pydantic.model_validator(mode="after")
    def _ranges(self) -> SyntheticConfig:
        if self.min_len > self.max_len:
            raise ValueError("min_len must not exceed max_len.")
        if self.minor_dims >= self.dim:
            raise ValueError("minor_dims must be smaller than dim.")
        return self


class ExperimentConfig(BaseModel):
    """Everything a command needs; its resolved form is written next to outputs."""

    seed: int = 0
    threads: PositiveInt = 1
    paths: PathsConfig = Field(default_factory=PathsConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    selflearn: SelfLearnConfig = Field(default_factory=SelfLearnConfig)
    synthetic: SyntheticConfig = Field(default_factory=SyntheticConfig)

    def resolved(self) -> ExperimentConfig:
        """Fill seeds that were not set explicitly from the global seed.

        >>> cfg = ExperimentConfig(seed=3).resolved()
        >>> cfg.train.shuffle_seed == derive_seed(3, "shuffle")
        True
        >>> cfg.resolved() == cfg
        True
        """
        res = self.model_copy(deep=True)
        train = res.train
        if "shuffle_seed" not in train.model_fields_set:
            train.shuffle_seed = derive_seed(self.seed, "shuffle")
        if "seed" not in train.perturb.model_fields_set:
            train.perturb.seed = derive_seed(self.seed, "perturb")
            train.perturb = train.perturb
        # reassigning marks the nested models as set, so that dumps with
        # exclude_unset keep the derived seeds
        res.train = train
        return res


def mldoc_config(**kwargs: object) -> ExperimentConfig:
    """Document classification hyper-parameters."""
    base = ExperimentConfig(
        train=TrainConfig(
            max_len=96,
            batch_size=64,
            learning_rate=2e-5,
            epochs=5,
            perturb=PerturbConfig(epsilon=1.0),
        ),
        selflearn=SelfLearnConfig(k_t=50),
    )
    return base.model_copy(update=kwargs)


def clic_config(**kwargs: object) -> ExperimentConfig:
    """Intent classification hyper-parameters."""
    base = ExperimentConfig(
        train=TrainConfig(
            max_len=32,
            batch_size=128,
            learning_rate=2e-6,
            epochs=6,
            perturb=PerturbConfig(epsilon=1.0),
        ),
        selflearn=SelfLearnConfig(k_t=30),
    )
    return base.model_copy(update=kwargs)


def synthetic_config(**kwargs: object) -> ExperimentConfig:
    """Defaults for the synthetic benchmark.

    Budget and selection size follow the document-classification setting; step
    size and epochs are scaled to a bag-of-embeddings model trained from scratch.
    """
    base = ExperimentConfig(
        model=ModelConfig(arch="linear"),
        train=TrainConfig(
            max_len=40,
            batch_size=32,
            learning_rate=0.05,
            epochs=10,
            perturb=PerturbConfig(epsilon=1.0),
        ),
        selflearn=SelfLearnConfig(k_t=50, patience=2, max_iterations=10),
        paths=PathsConfig(output_dir=Path("runs/synthetic")),
    )
    return base.model_copy(update=kwargs)

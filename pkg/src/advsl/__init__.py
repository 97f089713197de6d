from importlib.metadata import version

from . import types
from ._model_diff import model_diff
from ._utils import as_hashable, config_hash, derive_seed
from .config import (
    BaseModel,
    ExperimentConfig,
    ModelConfig,
    PathsConfig,
    PerturbConfig,
    SelfLearnConfig,
    SyntheticConfig,
    TrainConfig,
    clic_config,
    mldoc_config,
    synthetic_config,
)
from .errors import (
    AdvslError,
    ConfigError,
    ContractViolation,
    FormatError,
    NonFiniteLossError,
)
from .sweep import (
    check_unique,
    config_chain,
    config_combine,
    config_product,
    config_zip,
    field,
    initialize,
    model_replace,
)

__version__ = version("advsl")
del version

__all__ = [
    "AdvslError",
    "BaseModel",
    "ConfigError",
    "ContractViolation",
    "ExperimentConfig",
    "FormatError",
    "ModelConfig",
    "NonFiniteLossError",
    "PathsConfig",
    "PerturbConfig",
    "SelfLearnConfig",
    "SyntheticConfig",
    "TrainConfig",
    "__version__",
    "as_hashable",
    "check_unique",
    "clic_config",
    "config_chain",
    "config_combine",
    "config_hash",
    "config_product",
    "config_zip",
    "derive_seed",
    "field",
    "initialize",
    "mldoc_config",
    "model_diff",
    "model_replace",
    "synthetic_config",
    "types",
]

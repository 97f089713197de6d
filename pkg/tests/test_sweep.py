import pydantic
import pytest
from pydantic import ValidationError

from advsl.config import (
    CONDITIONS,
    BaseModel,
    ExperimentConfig,
    PathsConfig,
    PerturbConfig,
    SyntheticConfig,
    TrainConfig,
    clic_config,
    mldoc_config,
    synthetic_config,
)
from advsl.errors import ConfigError
from advsl.sweep import (
    check_unique,
    config_chain,
    config_product,
    config_zip,
    field,
    initialize,
    model_replace,
)


class TestBaseModel:
    def test_config(self):
        class Model(BaseModel):
            x: int | float

        assert Model(x=5).x == 5
        with pytest.raises(ValidationError):
            Model(x=None)

        model = Model(x=5)
        with pytest.raises(ValidationError):
            model.x = None

        with pytest.raises(ValidationError):
            Model(x=5, y=5)

    def test_typo_in_nested_config(self):
        with pytest.raises(ValidationError, match="epsilno"):
            ExperimentConfig.model_validate({"train": {"perturb": {"epsilno": 1}}})


class TestField:
    def test_invalid_path(self):
        with pytest.raises(ValueError):
            field("a-b", [1])

    def test_basic(self):
        assert field("a", []) == []
        assert field("a", [1, 2]) == [dict(a=1), dict(a=2)]
        assert field("a.b", [1]) == [dict(a=dict(b=1))]
        assert field(("a", "b"), [1]) == [dict(a=dict(b=1))]

    def test_mutable_values(self):
        with pytest.raises(ValueError):
            field("a", [dict(a=1)])
        with pytest.raises(ValueError):
            field("a", "abc")
        assert field("perturb", [PerturbConfig()]) == [dict(perturb=PerturbConfig())]

    def test_iterator_values(self):
        assert field("a", iter(range(2))) == [dict(a=0), dict(a=1)]


class TestCombine:
    def test_product(self):
        res = config_product(field("a", [1, 2]), field("b", [3, 4]))
        assert res == [
            dict(a=1, b=3),
            dict(a=1, b=4),
            dict(a=2, b=3),
            dict(a=2, b=4),
        ]
        with pytest.raises(ValueError):
            config_product(field("a", [1]), field("a", [2]))

    def test_zip(self):
        res = config_zip(field("a", [1, 2]), field("b.c", [3, 4]))
        assert res == [dict(a=1, b=dict(c=3)), dict(a=2, b=dict(c=4))]
        with pytest.raises(ValueError):
            config_zip(field("a", [1, 2]), field("b", [3]))

    def test_chain(self):
        res = config_chain(field("a", [1]), field("b", [2, 3]))
        assert res == [dict(a=1), dict(b=2), dict(b=3)]

    def test_sweep_over_budgets(self):
        configs = config_product(
            field("train.perturb.mode", ["random", "adversarial"]),
            field("train.perturb.epsilon", [0.1, 1.0, 10.0]),
        )
        models = initialize(ExperimentConfig, configs, constant={"seed": 4})
        assert len(models) == 6
        assert all(m.seed == 4 for m in models)
        assert [m.train.perturb.epsilon for m in models[:3]] == [0.1, 1.0, 10.0]
        check_unique(models)


class TestInitialize:
    def test_partial(self):
        class Model(BaseModel):
            x: int
            y: int = 6

        m1, m2 = initialize(Model, [{"x": 10}, {"x": 11}])
        assert m1 == Model(x=10, y=6)
        assert m2 == Model(x=11, y=6)
        m1.y = 10
        assert m2.y == 6

    def test_copy(self):
        class Sub(BaseModel):
            x: int = 5

        class Model(BaseModel):
            x: int
            sub: Sub = Sub()

        m1, m2 = initialize(Model, [{"x": 5}, {"x": 6}], default=dict(x=10))
        assert m1.sub is not m2.sub
        m1.sub.x = 10
        assert m2.sub.x == 5

    def test_default_and_constant(self):
        class Sub(BaseModel):
            x: int

        class Model(BaseModel):
            sub: Sub
            y: int = 0

        res = initialize(Model, field("sub.x", [1]), default=dict(y=10))
        assert res == [Model(sub=Sub(x=1), y=10)]
        res = initialize(Model, field("sub.x", [1]), default={"sub.x": 99, "y": 3})
        assert res == [Model(sub=Sub(x=1), y=3)]
        with pytest.raises(ValueError):
            initialize(Model, field("y", [1]), constant={"y": 2})
        with pytest.raises(TypeError):
            initialize(Model, field("y", [1]), default=[("y", 2)])


class TestModelReplace:
    def test_nested(self):
        config = ExperimentConfig(seed=2)
        res = model_replace(config, values={"train.perturb.epsilon": 10.0})
        assert res.train.perturb.epsilon == 10.0
        assert res.seed == 2
        assert config.train.perturb.epsilon == 1.0

    def test_invalid(self):
        with pytest.raises(ValidationError):
            model_replace(ExperimentConfig(), values={"train.epochs": 0})
        with pytest.raises(ValidationError):
            model_replace(ExperimentConfig(), values={"train.epoch": 3})


def test_check_unique():
    assert check_unique(field("a", [1, 2]))
    with pytest.raises(ValueError):
        check_unique(field("a", [1, 1]))
    assert not check_unique([PerturbConfig(), PerturbConfig()], raise_exception=False)
    assert check_unique(PerturbConfig(), PerturbConfig(epsilon=2.0))


class TestConfig:
    def test_zero_epsilon_is_none(self):
        assert PerturbConfig(epsilon=0.0).effective_mode == "none"
        assert PerturbConfig(mode="random").effective_mode == "random"
        with pytest.raises(ValidationError):
            PerturbConfig(epsilon=-1.0)

    def test_resolved_seeds(self):
        config = ExperimentConfig(seed=1).resolved()
        other = ExperimentConfig(seed=2).resolved()
        assert config.train.shuffle_seed != other.train.shuffle_seed
        assert config.train.perturb.seed != config.train.shuffle_seed
        assert "shuffle_seed" in config.train.model_fields_set

    def test_resolved_keeps_explicit_seeds(self):
        config = ExperimentConfig(
            seed=1, train=TrainConfig(shuffle_seed=9, perturb=PerturbConfig(seed=8))
        )
        resolved = config.resolved()
        assert resolved.train.shuffle_seed == 9
        assert resolved.train.perturb.seed == 8
        assert config.resolved() == resolved

    def test_resolved_survives_exclude_unset(self):
        config = ExperimentConfig(seed=5).resolved()
        dump = config.model_dump(exclude_unset=True)
        assert dump["train"]["shuffle_seed"] == config.train.shuffle_seed
        assert dump["train"]["perturb"]["seed"] == config.train.perturb.seed

    @pytest.mark.parametrize(
        ("preset", "max_len", "k_t"),
        [(mldoc_config, 96, 50), (clic_config, 32, 30), (synthetic_config, 40, 50)],
    )
    def test_presets(self, preset, max_len, k_t):
        config = preset()
        assert config.train.max_len == max_len
        assert config.selflearn.k_t == k_t
        assert config.train.perturb.mode == "adversarial"
        assert preset(seed=7).seed == 7

    def test_paths_require(self, tmp_path):
        existing = tmp_path / "train.jsonl"
        existing.write_text("", encoding="utf-8")
        paths = PathsConfig(train=existing, test=tmp_path / "missing.jsonl")
        assert paths.require("train") == (existing,)
        with pytest.raises(ConfigError, match="paths.validation") as info:
            paths.require("train", "validation")
        assert info.value.exit_code == 2
        with pytest.raises(ConfigError, match="does not exist"):
            paths.require("test")


class TestSyntheticConfig:
    def test_defaults(self):
        config = SyntheticConfig()
        assert config.conditions == CONDITIONS[:4]
        assert config.validation == "switched"
        assert config.noise_scale == "coordinate"
        assert config.minor_dims < config.dim

    def test_conditions_reordered(self):
        config = SyntheticConfig(conditions=("adversarial", "none"))
        assert config.conditions == ("none", "adversarial")

    @pytest.mark.parametrize(
        "values",
        [
            {"conditions": ("none", "fancy")},
            {"conditions": ("none", "none")},
            {"min_len": 10, "max_len": 5},
            {"topic_prob": 0.0},
            {"switch_coverage": 1.5},
            {"dim": 8, "minor_dims": 8},
            {"validation": "both"},
        ],
    )
    def test_invalid(self, values):
        with pytest.raises(pydantic.ValidationError):
            SyntheticConfig(**values)

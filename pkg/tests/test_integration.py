"""Larger tests that combine sweeps, training and reporting."""

import advsl as ad
from advsl.evalreport import compare_report, evaluate
from advsl.testing import toy_problem
from advsl.train import train


def test_epsilon_sweep(tmp_path):
    """Train one model per perturbation setting and compare them in one report."""
    params, data = toy_problem(60, num_classes=3, dim=4, seed=2)
    train_set = data.replace(data.examples[:30], name="train")
    validation = data.replace(data.examples[30:45], name="validation")
    test = data.replace(data.examples[45:], name="test")

    configs = ad.initialize(
        ad.TrainConfig,
        ad.config_chain(
            ad.field("perturb.mode", ["none"]),
            ad.config_product(
                ad.field("perturb.mode", ["random", "adversarial"]),
                ad.field("perturb.epsilon", [0.1, 1.0]),
            ),
        ),
        default={"epochs": 3, "batch_size": 8, "max_len": 8, "learning_rate": 0.05},
    )
    ad.check_unique(configs)
    assert len(configs) == 5

    results = []
    for config in configs:
        trained, _ = train(params, train_set, validation, config)
        name = f"{config.perturb.mode}-{config.perturb.epsilon}"
        results.append((name, evaluate(trained, test, max_len=config.max_len)))

    metadata = {"configs": [ad.model_diff(configs[0], c) for c in configs]}
    report = compare_report(results, tmp_path / "sweep.json", metadata=metadata)
    assert [row["name"] for row in report["rows"]][0] == "none-1.0"
    assert report["rows"][0]["delta_points"] == 0.0
    assert report["configs"][1] == {
        "perturb": {"mode": ("none", "random"), "epsilon": (1.0, 0.1)}
    }


def test_overrides_on_presets():
    config = ad.model_replace(
        ad.clic_config(seed=3),
        values={"train.perturb.epsilon": 0.0, "selflearn.k_t": 10},
    ).resolved()
    assert config.train.perturb.effective_mode == "none"
    assert config.selflearn.k_t == 10
    assert config.train.max_len == 32
    assert config.train.shuffle_seed == ad.derive_seed(3, "shuffle")

# %% [markdown]
"""
# Introduction

This tutorial runs the whole pipeline on the synthetic benchmark, so it needs no
downloads. A source vocabulary (words starting with `a_`) and a target vocabulary
(`b_`) share one embedding space; labels exist only for source documents. Model
selection uses the source validation split code-switched with the dictionary.
"""

# %%
import advsl as ad
from advsl.evalreport import evaluate
from advsl.model import init_params
from advsl.selflearn import self_learn
from advsl.synthetic import generate_benchmark
from advsl.train import train

config = ad.synthetic_config()
bench = generate_benchmark(config.synthetic, seed=0)
train_set = bench.dataset("a_train")
validation = bench.validation(config.synthetic.validation)
test = bench.dataset("b_test")
print(bench.splits["a_train"][0].text)

# %% [markdown]
"""
## Adversarial training

{any}`advsl.train.train` returns the parameters of the epoch with the best
validation accuracy. The perturbation is configured in `train.perturb`; with
`mode="none"` training is plain cross-entropy.
"""

# %%
results = {}
for mode in ["none", "adversarial"]:
    train_config = ad.model_replace(config.train, values={"perturb.mode": mode})
    params = init_params(bench.table, len(bench.label_names), seed=0)
    params, report = train(params, train_set, validation, train_config)
    results[mode] = evaluate(params, test, max_len=train_config.max_len)
    print(mode, report.best_epoch, results[mode].accuracy)

# %% [markdown]
"""
## Self-learning

The trained model labels the unlabeled target pool and the most confident items of
each predicted class are added to the training set, round after round.
"""

# %%
pool = bench.dataset("b_unlabeled", keep_labels=False)
start = init_params(bench.table, len(bench.label_names), seed=0)
params, history = self_learn(
    start, train_set, pool, validation, config.selflearn, config.train
)
for record in history:
    print(record.iteration, record.labeled_size, record.validation_accuracy)

# %% [markdown]
"""
## Sweeps

Configurations are `pydantic` models, so grids of experiments are built with
{any}`advsl.field` and the combinators. Every configuration gets its own seeds.
"""

# %%
configs = ad.initialize(
    ad.ExperimentConfig,
    ad.config_product(
        ad.field("train.perturb.epsilon", [0.1, 1.0]),
        ad.field("seed", [0, 1]),
    ),
    default=config.model_dump(),
)
ad.check_unique(configs)
ad.model_diff(configs[0], configs[-1])

# /// script
# dependencies = [
#   "advsl~=0.1.0"
# ]
# ///

import argparse
import json
import subprocess
import sys
from pathlib import Path

import advsl as ad
from advsl import convert
from advsl.evalreport import EvalResult, compare_report
from advsl.synthetic import generate_benchmark, write_benchmark

parser = argparse.ArgumentParser()
parser.add_argument("--data", type=Path, default=Path("data"))
parser.add_argument("--output", type=Path, default=Path("runs/sweep"))
args = parser.parse_args()

config = ad.synthetic_config()
if not (args.data / "a_train.jsonl").exists():
    write_benchmark(generate_benchmark(config.synthetic, seed=0), args.data)

paths = {
    "paths.train": args.data / "a_train.jsonl",
    "paths.validation": args.data / "a_validation.jsonl",
    "paths.test": args.data / "b_test.jsonl",
    "paths.vectors": args.data / "vectors.txt",
}
experiments = ad.initialize(
    ad.ExperimentConfig,
    ad.config_product(
        ad.field("train.perturb.mode", ["random", "adversarial"]),
        ad.field("train.perturb.epsilon", [0.1, 1.0, 5.0]),
    ),
    default=ad.model_replace(config, values=paths).model_dump(exclude_unset=True),
)
ad.check_unique(experiments)

script = Path(__file__).parent / "train.py"
results = []
for experiment in experiments:
    perturb = experiment.train.perturb
    name = f"{perturb.mode}-eps{perturb.epsilon}"
    output_dir = args.output / name
    output_dir.mkdir(parents=True, exist_ok=True)
    experiment = ad.model_replace(experiment, values={"paths.output_dir": output_dir})
    config_file = output_dir / "config.json"
    convert.write(config_file, model=experiment, overwrite=True)

    # On a cluster, schedule the run instead.
    subprocess.run([sys.executable, str(script), str(config_file)], check=True)

    report = json.loads((output_dir / "test.report.json").read_text("utf-8"))
    row = report["rows"][0]
    fields = ["accuracy", "n", "confusion", "per_class", "label_names"]
    result = EvalResult.model_validate({k: row[k] for k in fields})
    results.append((name, result))

compare_report(results, args.output / "sweep.json")
print((args.output / "sweep.txt").read_text("utf-8"))

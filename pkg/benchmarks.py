#!/usr/bin/env python3
"""Throughput benchmarks for training steps and prediction."""

import math
import statistics
import time
from typing import Any

import advsl as ad
from advsl.model import init_params, predict_dataset
from advsl.synthetic import generate_benchmark
from advsl.train import make_batch, train_step


def benchmark_steps(n_steps: int = 50, batch_size: int = 64) -> dict[str, Any]:
    """Time training steps per perturbation mode and one pass of prediction."""
    config = ad.synthetic_config()
    bench = generate_benchmark(config.synthetic, seed=0)
    train_set = bench.dataset("a_train")
    test = bench.dataset("b_test")
    params = init_params(bench.table, len(bench.label_names), seed=0)
    max_len = config.train.max_len

    batch = make_batch(train_set, range(batch_size), max_len=max_len)
    results: dict[str, Any] = {"batch_size": batch_size}
    for mode in ["none", "random", "adversarial"]:
        train_config = ad.model_replace(
            config.train, values={"perturb.mode": mode, "batch_size": batch_size}
        )
        start = time.perf_counter()
        current = params
        for _ in range(n_steps):
            current, _, _ = train_step(current, batch, train_config)
        results[f"{mode}_step_time"] = (time.perf_counter() - start) / n_steps

    start = time.perf_counter()
    predict_dataset(params, test, max_len=max_len)
    elapsed = time.perf_counter() - start
    results["predict_time"] = elapsed
    results["predictions_per_second"] = len(test) / elapsed
    return results


if __name__ == "__main__":
    num_runs = 5
    all_results = []

    for i in range(num_runs):
        print(f"Running benchmark {i + 1}/{num_runs}...")
        all_results.append(benchmark_steps())

    mean_results = {}
    stderr_results = {}
    for key in all_results[0]:
        values = [result[key] for result in all_results]
        mean_results[key] = statistics.mean(values)
        if len(values) > 1:
            stderr_results[key] = statistics.stdev(values) / math.sqrt(len(values))
        else:
            stderr_results[key] = 0.0

    print("\nBenchmark Results:")
    print(f"{'Metric':<25} {'Mean':>12} {'Std Error':>12}")
    print("-" * 50)

    for key in mean_results:
        if key == "batch_size":
            print(f"{key:<25} {int(mean_results[key]):>12,d}")
        elif "time" in key:
            print(f"{key:<25} {mean_results[key]:>12.6f} ±{stderr_results[key]:.6f}")
        else:
            print(f"{key:<25} {mean_results[key]:>12.2f} ±{stderr_results[key]:.2f}")

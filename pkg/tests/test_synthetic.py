import json

import numpy as np
import pytest

from advsl._utils import derive_seed
from advsl.config import SyntheticConfig, TrainConfig, synthetic_config
from advsl.synthetic import (
    SPLITS,
    benchmark_checks,
    conditions,
    generate_benchmark,
    run_benchmark,
    run_condition,
    write_benchmark,
)
from advsl.textdata import load_vectors, read_corpus

SMALL = SyntheticConfig(
    num_classes=3,
    words_per_class=6,
    background_words=12,
    dim=6,
    minor_dims=2,
    min_len=4,
    max_len=8,
    n_train=45,
    n_validation=30,
    n_unlabeled=30,
    n_test=30,
    num_seeds=2,
    conditions=("none", "adversarial", "self_learning"),
)


def small_config(**kwargs):
    config = synthetic_config(
        synthetic=SMALL,
        train=TrainConfig(epochs=2, batch_size=16, learning_rate=0.05, max_len=8),
    )
    return config.model_copy(update=kwargs)


class TestGenerate:
    def test_structure(self):
        bench = generate_benchmark(SMALL, seed=0)
        assert set(bench.splits) == set(SPLITS)
        assert len(bench.splits["b_unlabeled"]) == SMALL.n_unlabeled
        assert bench.label_names == ("topic0", "topic1", "topic2")

        a_words = {t for doc in bench.splits["a_train"] for t in doc.tokens}
        b_words = {t for doc in bench.splits["b_test"] for t in doc.tokens}
        assert all(t.startswith("a_") for t in a_words)
        assert all(t.startswith("b_") for t in b_words)
        for doc in bench.splits["a_test"]:
            assert SMALL.min_len <= len(doc.tokens) <= SMALL.max_len

        n_words = SMALL.num_classes * SMALL.words_per_class + SMALL.background_words
        assert len(bench.dictionary) == round(SMALL.switch_coverage * n_words)
        assert all(s.startswith("a_") for s in bench.dictionary.entries)
        assert bench.table.frozen

    def test_target_words_near_source(self):
        bench = generate_benchmark(SMALL.model_copy(update={"noise": 0.0}), seed=1)
        vocab, matrix = bench.table.vocab, bench.table.matrix
        row = vocab.index["a_t1_2"]
        np.testing.assert_array_equal(matrix[row], matrix[vocab.index["b_t1_2"]])

    def test_noise_scale(self):
        def displacement(bench):
            vocab, matrix = bench.table.vocab, bench.table.matrix
            a_rows = [vocab.index[t] for t in vocab.tokens if t.startswith("a_")]
            b_rows = [vocab.index["b" + vocab.tokens[i][1:]] for i in a_rows]
            return matrix[a_rows], matrix[b_rows] - matrix[a_rows]

        a_vectors, per_coordinate = displacement(generate_benchmark(SMALL, seed=2))
        vector = SMALL.model_copy(update={"noise_scale": "vector"})
        _, per_vector = displacement(generate_benchmark(vector, seed=2))

        np.testing.assert_allclose(per_coordinate, per_vector * np.sqrt(SMALL.dim))
        expected = SMALL.noise * np.linalg.norm(a_vectors, axis=1).mean()
        assert per_coordinate.std() == pytest.approx(expected, rel=0.25)

    def test_minor_coordinates(self):
        config = SMALL.model_copy(update={"noise": 0.0, "minor_dims": 3})
        bench = generate_benchmark(config, seed=0)
        vocab, matrix = bench.table.vocab, bench.table.matrix
        major = config.dim - config.minor_dims

        background = matrix[[vocab.index[f"a_bg{i}"] for i in range(12)]]
        assert np.abs(background[:, major:]).max() < 6 * config.minor_scale
        assert background[:, :major].std() > 10 * config.minor_scale

        def topic_mean(k):
            rows = [vocab.index[f"a_t{k}_{i}"] for i in range(config.words_per_class)]
            return matrix[rows, major:].mean(axis=0)

        shift = np.linalg.norm(topic_mean(0) - topic_mean(1))
        assert shift == pytest.approx(np.sqrt(2) * config.minor_signal, rel=0.2)

    def test_validation_splits(self):
        bench = generate_benchmark(SMALL, seed=0)
        assert bench.validation("source").name == "a_validation"
        assert bench.validation("target").name == "b_validation"
        switched = bench.validation("switched")
        assert switched.name == "a_validation_switched"
        assert len(switched) == SMALL.n_validation
        np.testing.assert_array_equal(
            switched.labels(), bench.dataset("a_validation").labels()
        )
        vocab = bench.table.vocab
        b_ids = {vocab.index[t] for (t,) in bench.dictionary.entries.values()}
        assert b_ids & {i for example in switched for i in example.token_ids}

    def test_deterministic(self):
        first = generate_benchmark(SMALL, seed=3)
        second = generate_benchmark(SMALL, seed=3)
        assert first.splits == second.splits
        np.testing.assert_array_equal(first.table.matrix, second.table.matrix)
        other = generate_benchmark(SMALL, seed=4)
        assert other.splits["a_train"] != first.splits["a_train"]

    def test_write(self, tmp_path):
        bench = generate_benchmark(SMALL, seed=0)
        write_benchmark(bench, tmp_path)
        assert read_corpus(tmp_path / "b_test.jsonl") == bench.splits["b_test"]
        table = load_vectors(tmp_path / "vectors.txt")
        np.testing.assert_array_equal(table.matrix, bench.table.matrix)
        lines = (tmp_path / "dictionary.txt").read_text(encoding="utf-8").splitlines()
        assert len(lines) == len(bench.dictionary)


def test_conditions_order():
    names = [c.name for c in conditions(["self_learning", "none"])]
    assert names == ["self_learning", "none"]
    with pytest.raises(KeyError):
        conditions(["fancy"])


def test_benchmark_checks():
    target = {"none": 0.7, "adversarial": 0.71, "random": 0.72}
    checks = benchmark_checks(target, {"none": 0.5, "adversarial": 0.6})
    assert checks == {
        "adversarial_beats_none_by_2_points": False,
        "adversarial_beats_random": False,
        "code_switched_adversarial_beats_none_by_2_points": True,
    }
    assert benchmark_checks({}, {}) == {}


def test_run_condition_seeds():
    bench = generate_benchmark(SMALL, seed=0)
    config = small_config()
    runs = [run_condition(bench, c, config, seed=5) for c in conditions(["none"]) * 2]
    assert runs[0] == runs[1]
    assert runs[0].shuffle_seed == derive_seed(5, "shuffle")
    assert runs[0].perturb_seed == derive_seed(5, "perturb")
    assert runs[0].init_seed == derive_seed(5, "init")
    assert runs[0].target_test.n == SMALL.n_test
    assert runs[0].switched_test.n == SMALL.n_test
    assert runs[0].iterations == 0


def test_run_benchmark(tmp_path):
    report = run_benchmark(small_config(), tmp_path)

    names = [row["name"] for row in report["rows"]]
    assert names == ["none", "adversarial", "self_learning"]
    assert all(row["n"] == 2 * SMALL.n_test for row in report["rows"])
    assert report["seeds"] == [0, 1]
    assert set(report["checks"]) == {
        "adversarial_beats_none_by_2_points",
        "code_switched_adversarial_beats_none_by_2_points",
    }
    assert [r["seed"] for r in report["runs"]["adversarial"]] == [0, 1]
    assert report["condition_diff"]["adversarial"]["condition"]["mode"] == (
        "none",
        "adversarial",
    )
    assert 0 < report["switch_stats"]["token_replaced_ratio"] < 1

    for seed in [0, 1]:
        assert (tmp_path / f"history-self_learning-seed{seed}.jsonl").is_file()
    assert not list(tmp_path.glob("history-none-*"))
    reread = json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))
    assert reread["rows"][1]["accuracy"] == report["rows"][1]["accuracy"]
    assert (tmp_path / "report.txt").is_file()


@pytest.mark.slow
def test_acceptance(tmp_path):
    report = run_benchmark(synthetic_config(), tmp_path)
    assert len(report["seeds"]) == 5
    failed = [name for name, passed in report["checks"].items() if not passed]
    assert not failed

import json
import math

import numpy as np
import pytest

from advsl import selflearn
from advsl.config import SelfLearnConfig, TrainConfig
from advsl.errors import ContractViolation
from advsl.model import params_checksum, predict_dataset
from advsl.selflearn import (
    IterationRecord,
    SelectionRecord,
    apply_selection,
    best_record,
    rank_balanced,
    select_balanced,
    self_learn,
    write_history,
)
from advsl.testing import brute_force_selection, toy_problem
from advsl.textdata import Dataset, Example
from advsl.train import train

TRAIN = TrainConfig(epochs=2, batch_size=8, learning_rate=0.05, max_len=8)


def strip_labels(dataset: Dataset, name: str = "pool") -> Dataset:
    return dataset.replace(
        [Example(e.token_ids, uid=e.uid) for e in dataset], name=name
    )


def setup(n_labeled=12, n_pool=60, n_validation=20, seed=0, num_classes=3):
    params, data = toy_problem(
        n_labeled + n_pool + n_validation,
        num_classes=num_classes,
        dim=num_classes + 1,
        seed=seed,
    )
    labeled = data.replace(data.examples[:n_labeled], name="labeled")
    pool = strip_labels(data.replace(data.examples[n_labeled : n_labeled + n_pool]))
    validation = data.replace(data.examples[n_labeled + n_pool :], name="validation")
    return params, labeled, pool, validation


class TestRankBalanced:
    def test_example(self):
        per_class = rank_balanced([0, 0, 0, 1], [0.9, 0.8, 0.7, 0.95], 2, 2)
        assert per_class == [[(0, 0.9), (1, 0.8)], [(3, 0.95)]]

    def test_everything_fits(self):
        per_class = rank_balanced([1, 0, 1], [0.6, 0.7, 0.8], 3, 10)
        assert per_class == [[(1, 0.7)], [(2, 0.8), (0, 0.6)], []]

    def test_ties_go_to_lower_index(self):
        per_class = rank_balanced([0, 0, 0], [0.5, 0.9, 0.9], 2, 1)
        assert per_class == [[(1, 0.9)], []]

    def test_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            size = int(rng.integers(1, 201))
            num_classes = int(rng.integers(2, 6))
            k_t = int(rng.integers(1, 30))
            predicted = rng.integers(num_classes, size=size)
            # coarse confidences force ties
            confidence = rng.integers(1, 10, size=size) / 10
            expected = brute_force_selection(predicted, confidence, num_classes, k_t)
            assert rank_balanced(predicted, confidence, num_classes, k_t) == expected

    def test_invalid_k(self):
        with pytest.raises(ContractViolation):
            rank_balanced([0], [1.0], 2, 0)


class TestSelect:
    def test_matches_predictions(self):
        params, _, pool, _ = setup()
        selection = select_balanced(params, pool, 4, max_len=8, iteration=2)
        predicted, confidence = predict_dataset(params, pool, max_len=8)
        expected = brute_force_selection(predicted, confidence, 3, 4)
        assert selection.per_class == expected
        assert selection.iteration == 2
        assert all(n <= 4 for n in selection.counts)

    def test_contract(self):
        params, labeled, pool, _ = setup()
        with pytest.raises(ContractViolation, match="empty"):
            select_balanced(params, pool.replace([]), 4, max_len=8)
        with pytest.raises(ContractViolation, match="unlabeled"):
            select_balanced(params, labeled, 4, max_len=8)


class TestApplySelection:
    def test_moves_items(self):
        _, labeled, pool, _ = setup()
        selection = SelectionRecord(per_class=[[(3, 0.9)], [(0, 0.8), (5, 0.7)], []])
        new_labeled, new_pool = apply_selection(labeled, pool, selection)

        assert len(new_labeled) == len(labeled) + 3
        assert len(new_pool) == len(pool) - 3
        added = new_labeled.examples[len(labeled) :]
        assert [e.uid for e in added] == [pool[3].uid, pool[0].uid, pool[5].uid]
        assert [e.label for e in added] == [0, 1, 1]
        assert all(e.origin == "pseudo" and e.weight == 1.0 for e in added)
        remaining = {e.uid for e in new_pool}
        assert not remaining & {e.uid for e in added}

    def test_invalid(self):
        _, labeled, pool, _ = setup()
        twice = SelectionRecord(per_class=[[(1, 0.9)], [(1, 0.9)], []])
        with pytest.raises(ContractViolation):
            apply_selection(labeled, pool, twice)
        outside = SelectionRecord(per_class=[[(len(pool), 0.9)], [], []])
        with pytest.raises(ContractViolation):
            apply_selection(labeled, pool, outside)


class TestSelfLearn:
    def test_structure(self):
        params, labeled, pool, validation = setup()
        k_t = 5
        config = SelfLearnConfig(k_t=k_t, patience=2, max_iterations=10)
        _, history = self_learn(params, labeled, pool, validation, config, TRAIN)

        assert history[0].iteration == 0
        assert history[0].labeled_size == len(labeled)
        total = len(labeled) + len(pool)
        for before, after in zip(history, history[1:]):
            assert after.labeled_size + after.pool_size == total
            assert after.pool_size <= before.pool_size
            gain = after.labeled_size - before.labeled_size
            assert gain == sum(after.selected_per_class)
            assert all(n <= k_t for n in after.selected_per_class)

        rounds = len(history) - 1
        assert rounds <= config.max_iterations
        assert rounds <= math.ceil(len(pool) / k_t) + config.patience

    def test_stops_on_patience(self, monkeypatch):
        def flat_train(params, train_set, validation, config, **kwargs):
            trained, report = train(params, train_set, validation, config, **kwargs)
            return trained, report.model_copy(update={"best_validation_accuracy": 0.5})

        monkeypatch.setattr(selflearn, "train", flat_train)
        params, labeled, pool, validation = setup(n_pool=90)
        config = SelfLearnConfig(k_t=1, patience=2, max_iterations=50)
        _, history = self_learn(params, labeled, pool, validation, config, TRAIN)

        assert len(history) == 1 + config.patience
        assert history[-1].pool_size > 0
        assert [h.improved for h in history] == [True, False, False]

    @pytest.mark.parametrize("retrain_mode", ["continue", "from_scratch"])
    def test_retrain_origin(self, monkeypatch, retrain_mode):
        origins, results = [], []

        def recording_train(params, train_set, validation, config, **kwargs):
            origins.append(params_checksum(params))
            trained, report = train(params, train_set, validation, config, **kwargs)
            results.append(params_checksum(trained))
            return trained, report

        monkeypatch.setattr(selflearn, "train", recording_train)
        params, labeled, pool, validation = setup(seed=2)
        config = SelfLearnConfig(
            k_t=4, patience=10, max_iterations=3, retrain_mode=retrain_mode
        )
        _, history = self_learn(params, labeled, pool, validation, config, TRAIN)

        assert len(origins) == len(history) == 1 + config.max_iterations
        assert origins[0] == params_checksum(params)
        if retrain_mode == "from_scratch":
            assert set(origins) == {params_checksum(params)}
        else:
            assert origins[1:] == results[:-1]

    def test_exhausts_pool(self):
        params, labeled, pool, validation = setup(n_pool=9)
        config = SelfLearnConfig(k_t=50, patience=5, max_iterations=10)
        _, history = self_learn(params, labeled, pool, validation, config, TRAIN)
        assert history[-1].pool_size == 0
        assert len(history) == 2

    def test_empty_pool_is_plain_training(self):
        params, labeled, pool, validation = setup()
        config = SelfLearnConfig(k_t=5)
        best, history = self_learn(
            params, labeled, pool.replace([]), validation, config, TRAIN
        )
        trained, report = train(params, labeled, validation, TRAIN)
        assert len(history) == 1
        assert params_checksum(best) == params_checksum(trained)
        assert history[0].validation_accuracy == report.best_validation_accuracy

    def test_returns_best_round(self):
        params, labeled, pool, validation = setup(seed=3)
        config = SelfLearnConfig(k_t=4, patience=2, max_iterations=4)
        _, history = self_learn(
            params, labeled, pool, validation, config, TRAIN, test=validation
        )
        best = best_record(history)
        assert best.validation_accuracy == max(h.validation_accuracy for h in history)
        assert all(h.test_accuracy is not None for h in history)

    @pytest.mark.parametrize("retrain_mode", ["continue", "from_scratch"])
    def test_deterministic(self, tmp_path, retrain_mode):
        params, labeled, pool, validation = setup(seed=5)
        config = SelfLearnConfig(k_t=6, max_iterations=3, retrain_mode=retrain_mode)
        paths = []
        for run in range(2):
            _, history = self_learn(params, labeled, pool, validation, config, TRAIN)
            path = tmp_path / f"history{run}.jsonl"
            write_history(history, path)
            paths.append(path)
        assert paths[0].read_bytes() == paths[1].read_bytes()

        lines = paths[0].read_text(encoding="utf-8").splitlines()
        first = json.loads(lines[0])
        assert first["iteration"] == 0
        assert first["validation"] == "validation"
        assert {"labeled_size", "pool_size", "selected_per_class"} <= first.keys()

    def test_pool_must_be_unlabeled(self):
        params, labeled, _, validation = setup()
        with pytest.raises(ContractViolation):
            self_learn(params, labeled, labeled, validation, SelfLearnConfig(), TRAIN)


def test_best_record_prefers_earlier():
    history = [
        IterationRecord(
            iteration=i, labeled_size=i + 1, pool_size=3 - i, validation_accuracy=acc
        )
        for i, acc in enumerate([0.5, 0.7, 0.7])
    ]
    assert best_record(history).iteration == 1
    with pytest.raises(ContractViolation):
        best_record([])

import numpy as np
import pytest

from advsl.config import PerturbConfig
from advsl.errors import ContractViolation
from advsl.model import backward, forward
from advsl.perturb import (
    ZERO_GRADIENT,
    adversarial_direction,
    build_perturbation,
    random_direction,
)
from advsl.testing import toy_problem
from advsl.textdata import pad_batch


def random_mask(rng, length):
    mask = np.zeros(length, dtype=np.int64)
    mask[: rng.integers(1, length + 1)] = 1
    return mask


class TestAdversarial:
    def test_example(self):
        r = adversarial_direction(np.array([[3.0, 4.0]]), np.array([1]), 1.0)
        np.testing.assert_allclose(r, [[0.6, 0.8]])

    def test_zero_gradient(self):
        r = adversarial_direction(np.zeros((3, 2)), np.ones(3), 1.0)
        np.testing.assert_array_equal(r, 0.0)
        tiny = np.full((1, 1), ZERO_GRADIENT / 2)
        np.testing.assert_array_equal(adversarial_direction(tiny, [1], 5.0), 0.0)

    def test_norm_contract(self):
        rng = np.random.default_rng(0)
        for _ in range(10_000):
            length, dim = rng.integers(1, 6), rng.integers(1, 4)
            mask = random_mask(rng, length)
            g = rng.standard_normal((length, dim)) * 10 ** rng.uniform(-14, 3)
            g[mask == 0] = 0.0
            epsilon = rng.uniform(0.0, 10.0)
            r = adversarial_direction(g, mask, epsilon)
            if np.linalg.norm(g) > ZERO_GRADIENT:
                assert abs(np.linalg.norm(r) - epsilon) <= 1e-9
            else:
                assert np.all(r == 0)
            assert np.all(r[mask == 0] == 0)

    def test_worst_case(self):
        rng = np.random.default_rng(1)
        g = rng.standard_normal((5, 3))
        mask = np.ones(5)
        epsilon = 2.0
        r_adv = adversarial_direction(g, mask, epsilon)
        best = float(np.sum(g * r_adv))
        assert best == pytest.approx(epsilon * np.linalg.norm(g))

        for _ in range(10_000):
            r = random_direction(g.shape, mask, epsilon, seed=int(rng.integers(2**32)))
            assert float(np.sum(g * r)) <= best + 1e-9
            shrunk = rng.uniform() * r
            assert float(np.sum(g * shrunk)) <= best + 1e-9

    def test_masked_rows_ignored(self):
        g = np.array([[3.0, 4.0], [100.0, 100.0]])
        r = adversarial_direction(g, np.array([1, 0]), 1.0)
        np.testing.assert_allclose(r, [[0.6, 0.8], [0.0, 0.0]])

    def test_token_scope(self):
        g = np.array([[3.0, 4.0], [0.0, 2.0], [1.0, 1.0]])
        r = adversarial_direction(g, np.array([1, 1, 0]), 2.0, norm_scope="token")
        np.testing.assert_allclose(np.linalg.norm(r, axis=1), [2.0, 2.0, 0.0])
        np.testing.assert_allclose(r[1], [0.0, 2.0])

    def test_batched(self):
        g = np.array([[[3.0, 4.0]], [[0.0, 5.0]]])
        r = adversarial_direction(g, np.ones((2, 1)), 1.0)
        np.testing.assert_allclose(r, [[[0.6, 0.8]], [[0.0, 1.0]]])

    def test_negative_epsilon(self):
        with pytest.raises(ContractViolation):
            adversarial_direction(np.ones((1, 1)), [1], -1.0)


class TestRandom:
    @pytest.mark.parametrize("seed", [0, 1, (4, 2)])
    def test_norm_and_determinism(self, seed):
        mask = np.array([1, 1, 1, 0])
        r = random_direction((4, 3), mask, 1.5, seed)
        assert np.linalg.norm(r) == pytest.approx(1.5, abs=1e-9)
        np.testing.assert_array_equal(r, random_direction((4, 3), mask, 1.5, seed))
        np.testing.assert_array_equal(r[3], 0.0)

    def test_seeds_differ(self):
        a = random_direction((3, 2), np.ones(3), 1.0, 0)
        b = random_direction((3, 2), np.ones(3), 1.0, 1)
        assert not np.array_equal(a, b)


class TestBuild:
    def test_none_and_zero_epsilon(self):
        g = np.ones((2, 3, 2))
        mask = np.ones((2, 3))
        assert build_perturbation(PerturbConfig(mode="none"), g, mask) is None
        zero = PerturbConfig(mode="adversarial", epsilon=0.0)
        assert zero.effective_mode == "none"
        assert build_perturbation(zero, g, mask) is None
        noise = PerturbConfig(mode="random", epsilon=0)
        assert build_perturbation(noise, g, mask) is None

    def test_random_per_example_seeds(self):
        config = PerturbConfig(mode="random", epsilon=1.0)
        g = np.zeros((2, 3, 2))
        mask = np.array([[1, 1, 0], [1, 0, 0]])
        r = build_perturbation(config, g, mask, seeds=[(7, 1), (8, 1)])
        alone = build_perturbation(config, g[1:], mask[1:], seeds=[(8, 1)])
        np.testing.assert_array_equal(r[1], alone[0])
        np.testing.assert_allclose(np.linalg.norm(r, axis=(1, 2)), 1.0)

        with pytest.raises(ContractViolation):
            build_perturbation(config, g, mask)

    @pytest.mark.parametrize("epsilon", [0.1, 1.0, 10.0])
    def test_linear_loss_ordering(self, epsilon):
        params, data = toy_problem(20, num_classes=3, dim=4, seed=4)
        ids, mask = pad_batch(data.examples, 8)
        labels = data.labels()
        clean = forward(params, ids, mask, labels)
        g = backward(params, clean).d_input

        r_adv = build_perturbation(PerturbConfig(epsilon=epsilon), g, mask)
        adv = forward(params, ids, mask, labels, perturbation=r_adv)
        assert np.all(adv.loss >= clean.loss)

        config = PerturbConfig(mode="random", epsilon=epsilon)
        seeds = [(3, i) for i in range(len(labels))]
        r_rand = build_perturbation(config, g, mask, seeds)
        first_order_adv = np.sum(g * r_adv, axis=(1, 2))
        first_order_rand = np.sum(g * r_rand, axis=(1, 2))
        assert np.all(first_order_adv >= first_order_rand - 1e-12)

"""Model-pair contracts and the quadratic benchmark family."""

import numpy as np
import pytest

from cvis import (
    HF,
    LF,
    Example1Config,
    ModelPair,
    RngStream,
    example1_distribution,
    example1_pair,
    indicator,
)


class TestIndicator:
    def test_boundary_sides(self):
        assert indicator(-0.001) == 1
        assert indicator(0.0) == 1
        assert indicator(0.001) == 0

    def test_vectorized(self):
        np.testing.assert_array_equal(
            indicator(np.array([-1.0, 0.0, 2.0])), np.array([1, 1, 0])
        )

    def test_requires_finite(self):
        with pytest.raises(ValueError):
            indicator(float("nan"))


class TestModelPairAccounting:
    def _pair(self):
        return ModelPair(
            lambda x: x[:, 0],
            lambda x: x[:, 0] + 1.0,
            cost_hf=1.0,
            cost_lf=0.5,
            dim=1,
        )

    def test_sides_count_independently(self):
        pair = self._pair()
        pair.evaluate(HF, np.array([2.0]))
        pair.evaluate_batch(LF, np.zeros((7, 1)))
        assert (pair.hf_calls, pair.lf_calls) == (1, 7)
        pair.reset_counters()
        assert (pair.hf_calls, pair.lf_calls) == (0, 0)

    def test_counters_monotone(self):
        pair = self._pair()
        seen = []
        for _ in range(5):
            pair.evaluate(HF, np.array([1.0]))
            seen.append(pair.hf_calls)
        assert seen == sorted(seen)

    def test_non_finite_response_carries_point(self):
        pair = ModelPair(lambda x: np.log(x[:, 0]), lambda x: x[:, 0], dim=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            with pytest.raises(FloatingPointError, match="-3"):
                pair.evaluate(HF, np.array([-3.0]))

    def test_bad_side_and_shape(self):
        pair = self._pair()
        with pytest.raises(ValueError):
            pair.evaluate("MF", np.array([0.0]))
        with pytest.raises(ValueError):
            pair.evaluate_batch(HF, np.zeros((3, 2)))


class TestQuadraticBenchmark:
    def test_hf_closed_form_points(self):
        pair = example1_pair(Example1Config())
        assert pair.evaluate(HF, np.array([2.0, 2.0])) == -1.5
        assert pair.evaluate(HF, np.array([0.0, 0.0])) == 10.5

    def test_lf_pure_bias(self):
        pair = example1_pair(Example1Config(delta=1.0, sigma_eps=0.0))
        assert pair.evaluate(LF, np.array([0.0, 0.0])) == 11.5

    def test_identical_models_share_indicators(self):
        pair = example1_pair(Example1Config())
        x = example1_distribution().sample(RngStream(21), 20_000)
        i_h = indicator(pair.evaluate_batch(HF, x))
        i_l = indicator(pair.evaluate_batch(LF, x))
        np.testing.assert_array_equal(i_h, i_l)

    def test_negative_bias_nests_hf_failure_in_lf_failure(self):
        pair = example1_pair(Example1Config(delta=-1.0))
        x = example1_distribution().sample(RngStream(22), 50_000)
        i_h = indicator(pair.evaluate_batch(HF, x))
        i_l = indicator(pair.evaluate_batch(LF, x))
        assert np.all(i_l[i_h == 1] == 1)

    def test_sigma_validation(self):
        with pytest.raises(ValueError):
            Example1Config(sigma_eps=-0.5)


class TestFrozenNoiseField:
    def test_field_is_a_fixed_function_of_x(self):
        cfg = Example1Config(delta=0.0, sigma_eps=2.0, noise_seed=17)
        pair_a, pair_b = example1_pair(cfg), example1_pair(cfg)
        x = example1_distribution().sample(RngStream(23), 128)
        full = pair_a.evaluate_batch(LF, x)
        np.testing.assert_array_equal(full, pair_b.evaluate_batch(LF, x))
        # value at a point does not depend on how the batch was split
        halves = np.concatenate(
            [pair_a.evaluate_batch(LF, x[:64]), pair_a.evaluate_batch(LF, x[64:])]
        )
        np.testing.assert_array_equal(full, halves)
        single = np.array([pair_a.evaluate(LF, xi) for xi in x])
        np.testing.assert_array_equal(full, single)

    def test_noise_seed_changes_field(self):
        x = example1_distribution().sample(RngStream(24), 64)
        a = example1_pair(Example1Config(sigma_eps=1.0, noise_seed=1)).evaluate_batch(LF, x)
        b = example1_pair(Example1Config(sigma_eps=1.0, noise_seed=2)).evaluate_batch(LF, x)
        assert not np.array_equal(a, b)

    def test_noise_is_standard_gaussian_across_points(self):
        """The field marginal over x is N(0, sigma_eps^2): check moments."""
        sigma = 2.0
        pair = example1_pair(Example1Config(delta=0.0, sigma_eps=sigma, noise_seed=3))
        base = example1_pair(Example1Config())
        x = example1_distribution().sample(RngStream(25), 200_000)
        eps = pair.evaluate_batch(LF, x) - base.evaluate_batch(HF, x)
        n = len(eps)
        assert abs(eps.mean()) < 4 * sigma / np.sqrt(n)
        np.testing.assert_allclose(eps.std(), sigma, rtol=0.02)
        # symmetric tails, roughly the right mass beyond one sigma
        np.testing.assert_allclose(np.mean(np.abs(eps) > sigma), 0.3173, atol=0.01)

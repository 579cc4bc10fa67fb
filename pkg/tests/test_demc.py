"""Differential Evolution MCMC checked against tractable targets.

A Gaussian target gives moment oracles; a two-block piecewise-uniform
density checks stationarity of an asymmetric target; degenerate settings
(gamma = 0, jitter = 0) freeze the chains and expose the accept rule.
"""

import numpy as np
import pytest

from cvis import (
    DemcConfig,
    JointInputDistribution,
    Marginal,
    RngStream,
    SmoothedIsd,
    demc_run,
    s_l,
)
from cvis.demc import _pick_pairs


def gaussian_log_density(x):
    return -0.5 * np.sum(np.asarray(x) ** 2, axis=-1)


class TestPartnerPicking:
    def test_partners_distinct_from_chain_and_each_other(self):
        gen = np.random.default_rng(0)
        idx = np.arange(24)
        for _ in range(500):
            r1, r2 = _pick_pairs(gen, 24)
            assert np.all(r1 != idx)
            assert np.all(r2 != idx)
            assert np.all(r1 != r2)

    def test_partners_uniform_over_allowed_indices(self):
        gen = np.random.default_rng(1)
        c = 6
        counts = np.zeros((c, c))
        for _ in range(6000):
            r1, _ = _pick_pairs(gen, c)
            counts[np.arange(c), r1] += 1
        off_diag = counts[~np.eye(c, dtype=bool)]
        # each of the c-1 partners should get ~1/(c-1) of the draws
        assert np.all(np.abs(off_diag / 6000 - 1 / (c - 1)) < 0.03)


class TestGaussianTarget:
    def test_recovers_mean_and_variance(self):
        gen = np.random.default_rng(2)
        seeds = gen.normal(size=(10, 2))
        cfg = DemcConfig(n_chains=10, n_steps=2000, rng=RngStream(seed=11))
        ens = demc_run(gaussian_log_density, seeds, cfg)
        pts = ens.points()
        assert np.abs(pts.mean(axis=0)) == pytest.approx(np.zeros(2), abs=0.05)
        assert pts.var(axis=0) == pytest.approx(np.ones(2), abs=0.1)
        assert 0.1 <= ens.acceptance_rate <= 0.6

    def test_bounded_statistic_agrees_with_direct_sampling(self):
        # P(x1 <= 0) = 1/2 under the target; the ensemble mean of the
        # indicator is an MCMC estimate of it. Averaged over independent
        # replicates the agreement should be within the replication noise.
        estimates = []
        for rep in range(20):
            gen = np.random.default_rng(100 + rep)
            seeds = gen.normal(size=(10, 2))
            cfg = DemcConfig(n_chains=10, n_steps=500, rng=RngStream(seed=200 + rep))
            ens = demc_run(gaussian_log_density, seeds, cfg)
            estimates.append(np.mean(ens.points()[:, 0] <= 0.0))
        se = np.std(estimates, ddof=1) / np.sqrt(len(estimates))
        assert abs(np.mean(estimates) - 0.5) < 4 * se + 1e-3

    def test_deterministic_for_fixed_stream(self):
        gen = np.random.default_rng(3)
        seeds = gen.normal(size=(8, 2))
        cfg = DemcConfig(n_chains=8, n_steps=100, rng=RngStream(seed=77))
        a = demc_run(gaussian_log_density, seeds, cfg)
        b = demc_run(gaussian_log_density, seeds, cfg)
        np.testing.assert_array_equal(a.x, b.x)
        assert a.acceptance_rate == b.acceptance_rate

    def test_different_streams_decorrelate(self):
        gen = np.random.default_rng(4)
        seeds = gen.normal(size=(8, 2))
        a = demc_run(
            gaussian_log_density, seeds, DemcConfig(n_chains=8, n_steps=50, rng=RngStream(seed=1))
        )
        b = demc_run(
            gaussian_log_density, seeds, DemcConfig(n_chains=8, n_steps=50, rng=RngStream(seed=2))
        )
        assert not np.array_equal(a.x, b.x)

    def test_burn_in_discards_early_states(self):
        gen = np.random.default_rng(5)
        seeds = gen.normal(size=(8, 2)) + 20.0  # far from the mode
        cfg = DemcConfig(n_chains=8, n_steps=400, rng=RngStream(seed=9), burn_in=400)
        ens = demc_run(gaussian_log_density, seeds, cfg)
        assert ens.n_steps == 400
        # after burn-in the ensemble should have forgotten the offset start
        assert abs(ens.points().mean()) < 1.0


class TestDegenerateSettings:
    def test_gamma_zero_jitter_zero_never_moves(self):
        gen = np.random.default_rng(6)
        seeds = gen.normal(size=(6, 2))
        cfg = DemcConfig(n_chains=6, n_steps=30, rng=RngStream(seed=13), gamma=0.0, jitter=0.0)
        with pytest.warns(UserWarning, match="acceptance rate"):
            ens = demc_run(gaussian_log_density, seeds, cfg)
        # identical proposals are always accepted but go nowhere
        assert ens.acceptance_rate == 1.0
        for t in range(ens.n_steps):
            np.testing.assert_array_equal(ens.x[:, t], seeds)

    def test_seed_outside_support_rejected_up_front(self):
        def log_target(pts):
            out = np.where(np.all(np.abs(pts) < 1.0, axis=-1), 0.0, -np.inf)
            return out

        seeds = np.array([[0.1, 0.0], [0.2, 0.1], [5.0, 0.0], [0.0, 0.3]])
        cfg = DemcConfig(n_chains=4, n_steps=10, rng=RngStream(seed=21))
        with pytest.raises(ValueError, match="non-finite log target"):
            demc_run(log_target, seeds, cfg)

    def test_seed_count_mismatch(self):
        cfg = DemcConfig(n_chains=6, n_steps=10, rng=RngStream(seed=1))
        with pytest.raises(ValueError, match="seeds"):
            demc_run(gaussian_log_density, np.zeros((4, 2)), cfg)

    def test_few_chains_for_dimension_warns(self):
        seeds = np.zeros((4, 5))
        cfg = DemcConfig(n_chains=4, n_steps=5, rng=RngStream(seed=1))
        with pytest.warns(UserWarning, match="at least 10"):
            demc_run(gaussian_log_density, seeds, cfg)

    def test_config_validation(self):
        with pytest.raises(ValueError, match="at least 4"):
            DemcConfig(n_chains=3, n_steps=10, rng=RngStream(seed=1))
        with pytest.raises(ValueError, match="n_steps"):
            DemcConfig(n_chains=4, n_steps=0, rng=RngStream(seed=1))
        with pytest.raises(ValueError, match="gamma"):
            DemcConfig(n_chains=4, n_steps=1, rng=RngStream(seed=1), gamma=-0.5)
        with pytest.raises(ValueError, match="jitter"):
            DemcConfig(n_chains=4, n_steps=1, rng=RngStream(seed=1), jitter=-1e-3)


class TestTwoBlockTarget:
    def test_stationary_mass_split(self):
        # Piecewise-constant density on [-1, 1]: mass 0.7 on the left half,
        # 0.3 on the right. The fraction of kept states with x <= 0 must
        # match the left mass closely once the total sample count is large.
        def log_target(pts):
            pts = np.asarray(pts)
            x = pts[:, 0]
            inside = np.abs(x) <= 1.0
            left = np.where(x <= 0.0, np.log(0.7), np.log(0.3))
            return np.where(inside, left, -np.inf)

        gen = np.random.default_rng(7)
        seeds = gen.uniform(-1.0, 1.0, size=(20, 1))
        cfg = DemcConfig(n_chains=20, n_steps=5000, rng=RngStream(seed=5), gamma=1.0)
        ens = demc_run(log_target, seeds, cfg)
        frac_left = np.mean(ens.points()[:, 0] <= 0.0)
        assert frac_left == pytest.approx(0.7, abs=0.01)
        assert np.all(np.abs(ens.points()[:, 0]) <= 1.0)


class TestModeJump:
    @staticmethod
    def _two_island_log_density(pts):
        # equal-mass Gaussian islands at 0 and 12, sigma 0.5 each
        x = np.asarray(pts)[:, 0]
        return np.logaddexp(-0.5 * (x / 0.5) ** 2, -0.5 * ((x - 12.0) / 0.5) ** 2)

    def _right_island_occupancy(self, mode_jump_every):
        gen = np.random.default_rng(12)
        seeds = np.concatenate(
            [gen.normal(0.0, 0.3, 14), gen.normal(12.0, 0.3, 2)]
        )[:, None]
        cfg = DemcConfig(
            n_chains=16,
            n_steps=3000,
            rng=RngStream(seed=77),
            mode_jump_every=mode_jump_every,
        )
        ens = demc_run(self._two_island_log_density, seeds, cfg)
        return float(np.mean(ens.x[:, -500:, 0] > 6.0))

    def test_periodic_whole_difference_rebalances_islands(self):
        # Scaled difference vectors land between the islands and die, so a
        # 14:2 seeding stays frozen; whole-difference generations translate
        # chains island-to-island and the occupancy approaches the
        # stationary half-and-half split.
        assert self._right_island_occupancy(0) < 0.2
        assert 0.3 < self._right_island_occupancy(10) < 0.7

    def test_period_zero_is_the_plain_sampler(self):
        gen = np.random.default_rng(14)
        seeds = gen.normal(size=(8, 2))
        runs = []
        for k in (0, None):
            cfg = (
                DemcConfig(n_chains=8, n_steps=60, rng=RngStream(seed=15))
                if k is None
                else DemcConfig(
                    n_chains=8, n_steps=60, rng=RngStream(seed=15), mode_jump_every=k
                )
            )
            runs.append(demc_run(gaussian_log_density, seeds, cfg))
        np.testing.assert_array_equal(runs[0].x, runs[1].x)

    def test_negative_period_rejected(self):
        with pytest.raises(ValueError, match="mode_jump_every"):
            DemcConfig(
                n_chains=4, n_steps=1, rng=RngStream(seed=1), mode_jump_every=-1
            )


class TestIsdTarget:
    def _isd(self, beta=2.0):
        dist = JointInputDistribution(
            [Marginal.uniform(0.0, 1.0), Marginal.uniform(0.0, 1.0)]
        )
        calls = []

        def lf(pts):
            pts = np.asarray(pts)
            calls.append(len(pts))
            return pts[:, 0] - 0.3

        return SmoothedIsd(beta=beta, lf=lf, base=dist), calls

    def test_records_carry_lf_and_smoothed_values(self):
        isd, _ = self._isd()
        gen = np.random.default_rng(8)
        seeds = gen.uniform(0.05, 0.25, size=(10, 2))
        cfg = DemcConfig(n_chains=10, n_steps=300, rng=RngStream(seed=3), gamma=0.8)
        ens = demc_run(isd, seeds, cfg)
        assert ens.beta == 2.0
        np.testing.assert_allclose(ens.s_l_values, s_l(ens.lf, 2.0), rtol=1e-12)
        np.testing.assert_array_equal(ens.i_l, (ens.lf <= 0.0).astype(np.int8))
        # chains never wander outside the base support (zero prior density)
        pts = ens.points()
        assert np.all((pts >= 0.0) & (pts <= 1.0))

    def test_one_lf_call_per_proposal(self):
        isd, calls = self._isd()
        gen = np.random.default_rng(9)
        seeds = gen.uniform(0.05, 0.25, size=(8, 2))
        seed_lf = np.asarray(seeds[:, 0] - 0.3)
        calls.clear()
        cfg = DemcConfig(n_chains=8, n_steps=50, rng=RngStream(seed=4), gamma=0.8)
        demc_run(isd, seeds, cfg, seed_lf_values=seed_lf)
        # in-support proposals cost one call each; seeds cost none
        assert sum(calls) <= 8 * 50
        assert sum(calls) > 0

    def test_seed_lf_values_shortcut_matches_fresh_evaluation(self):
        isd, _ = self._isd()
        gen = np.random.default_rng(10)
        seeds = gen.uniform(0.05, 0.25, size=(8, 2))
        cfg = DemcConfig(n_chains=8, n_steps=40, rng=RngStream(seed=6), gamma=0.8)
        a = demc_run(isd, seeds, cfg, seed_lf_values=np.asarray(seeds[:, 0] - 0.3))
        b = demc_run(isd, seeds, cfg)
        np.testing.assert_array_equal(a.x, b.x)
        np.testing.assert_array_equal(a.lf, b.lf)

    def test_favors_the_failure_side(self):
        # With beta large the smoothed density concentrates where lf <= 0
        # (x1 <= 0.3), which holds 30% of the prior mass but should carry
        # most of the sampled states.
        isd, _ = self._isd(beta=25.0)
        gen = np.random.default_rng(11)
        seeds = gen.uniform(0.05, 0.25, size=(12, 2))
        cfg = DemcConfig(n_chains=12, n_steps=800, rng=RngStream(seed=8), gamma=0.8)
        ens = demc_run(isd, seeds, cfg)
        assert np.mean(ens.i_l) > 0.6
